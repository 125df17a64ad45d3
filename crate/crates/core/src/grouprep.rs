//! Finite subgroups of O(2), their real irreducible representations and the
//! isotypic projectors P_σ acting on vertex functions of an equivariant mesh.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for closed-form group algebra; only rounding enters.
pub const GROUP_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKindName {
    Cyclic,
    Dihedral,
    Klein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKind {
    Cyclic(usize),
    Dihedral(usize),
    Klein,
}

impl GroupKind {
    /// Combine a family name with its order parameter; klein takes no p
    /// (or p = 2).
    pub fn from_parts(name: GroupKindName, p: Option<usize>) -> Result<Self> {
        match (name, p) {
            (GroupKindName::Cyclic, Some(p)) => Ok(GroupKind::Cyclic(p)),
            (GroupKindName::Dihedral, Some(p)) => Ok(GroupKind::Dihedral(p)),
            (GroupKindName::Klein, None | Some(2)) => Ok(GroupKind::Klein),
            (GroupKindName::Klein, Some(p)) => Err(Error::InvalidParameter(format!("klein group has no order parameter p = {p}"))),
            (n, None) => Err(Error::InvalidParameter(format!("{n:?} group needs an order parameter p"))),
        }
    }
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Cyclic(p) => write!(f, "cyclic {p}"),
            GroupKind::Dihedral(p) => write!(f, "dihedral {p}"),
            GroupKind::Klein => write!(f, "klein"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroupElement {
    pub matrix: Matrix2<f64>,
    pub reflection: bool,
    /// Rotation angle for rotations, axis angle for reflections.
    pub angle: f64,
}

impl GroupElement {
    fn rotation(phi: f64) -> Self {
        let (s, c) = phi.sin_cos();
        Self { matrix: Matrix2::new(c, -s, s, c), reflection: false, angle: phi }
    }

    /// Reflection through the line at angle `beta`.
    fn reflection(beta: f64) -> Self {
        let (s, c) = (2.0 * beta).sin_cos();
        Self { matrix: Matrix2::new(c, s, s, -c), reflection: true, angle: beta }
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let m = &self.matrix;
        [m[(0, 0)] * p[0] + m[(0, 1)] * p[1], m[(1, 0)] * p[0] + m[(1, 1)] * p[1]]
    }

    /// Image of the polar angle θ under the element, in [0, 2π).
    pub fn map_angle(&self, theta: f64) -> f64 {
        let out = if self.reflection { 2.0 * self.angle - theta } else { theta + self.angle };
        out.rem_euclid(2.0 * PI)
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }
}

/// Wedge whose images under the group tile the plane, and how its two
/// straight edges are glued.
#[derive(Debug, Clone, Copy)]
pub struct SectorSpec {
    pub angle: f64,
    pub gluing: SectorGluing,
}

#[derive(Debug, Clone, Copy)]
pub enum SectorGluing {
    /// The far ray is the image of ray 0 under `generator` (cyclic groups).
    Rotation { generator: usize },
    /// Ray 0 is fixed by `mirror0`, the far ray by `mirror1`.
    Mirrors { mirror0: usize, mirror1: usize },
}

#[derive(Debug, Clone)]
pub struct FiniteGroup {
    pub kind: GroupKind,
    pub elements: Vec<GroupElement>,
    pub product: Vec<Vec<usize>>,
    pub inverse: Vec<usize>,
}

impl FiniteGroup {
    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.product[a][b]
    }

    pub fn has_reflections(&self) -> bool {
        self.elements.iter().any(|e| e.reflection)
    }

    /// Integer parameter p (2 for klein).
    pub fn p(&self) -> usize {
        match self.kind {
            GroupKind::Cyclic(p) | GroupKind::Dihedral(p) => p,
            GroupKind::Klein => 2,
        }
    }

    /// Whether the Fourier mode (k, a, b) of a radius function is invariant.
    pub fn allows_mode(&self, k: u32, b: f64) -> bool {
        let k = k as usize;
        match self.kind {
            GroupKind::Cyclic(p) => k % p == 0,
            GroupKind::Dihedral(p) => k % p == 0 && b == 0.0,
            GroupKind::Klein => k % 2 == 0 && b == 0.0,
        }
    }

    pub fn sector(&self) -> SectorSpec {
        match self.kind {
            GroupKind::Cyclic(p) => SectorSpec {
                angle: 2.0 * PI / p as f64,
                gluing: SectorGluing::Rotation { generator: 1 },
            },
            GroupKind::Dihedral(p) => SectorSpec {
                angle: PI / p as f64,
                gluing: SectorGluing::Mirrors { mirror0: p, mirror1: p + 1 },
            },
            GroupKind::Klein => SectorSpec {
                angle: PI / 2.0,
                gluing: SectorGluing::Mirrors { mirror0: 1, mirror1: 2 },
            },
        }
    }

    /// Largest entrywise defect of the closure, orthogonality and inverse relations.
    pub fn structure_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (a, ea) in self.elements.iter().enumerate() {
            let gram = ea.matrix.transpose() * ea.matrix - Matrix2::identity();
            worst = worst.max(gram.abs().max());
            let det = ea.determinant();
            let expected = if ea.reflection { -1.0 } else { 1.0 };
            worst = worst.max((det - expected).abs());
            for (b, eb) in self.elements.iter().enumerate() {
                let c = self.product[a][b];
                let d = ea.matrix * eb.matrix - self.elements[c].matrix;
                worst = worst.max(d.abs().max());
            }
            let inv = self.inverse[a];
            if self.product[a][inv] != 0 || self.product[inv][a] != 0 {
                worst = f64::INFINITY;
            }
        }
        worst
    }
}

/// Construct the cyclic, dihedral or klein subgroup of O(2).
///
/// Element order: cyclic `r^j`; dihedral `r^j` then the reflections `s_j`
/// through the axis at angle `jπ/p`; klein `[I, s_x, s_y, -I]` where `s_x`
/// reflects through the x-axis.
pub fn build_group(kind: GroupKind) -> Result<FiniteGroup> {
    let elements: Vec<GroupElement> = match kind {
        GroupKind::Cyclic(p) | GroupKind::Dihedral(p) if p < 2 => {
            return Err(Error::InvalidParameter(format!("{kind}: p must be at least 2")));
        }
        GroupKind::Cyclic(p) => {
            (0..p).map(|j| GroupElement::rotation(2.0 * PI * j as f64 / p as f64)).collect()
        }
        GroupKind::Dihedral(p) => {
            let rot = (0..p).map(|j| GroupElement::rotation(2.0 * PI * j as f64 / p as f64));
            let refl = (0..p).map(|j| GroupElement::reflection(PI * j as f64 / p as f64));
            rot.chain(refl).collect()
        }
        GroupKind::Klein => vec![
            GroupElement::rotation(0.0),
            GroupElement::reflection(0.0),
            GroupElement::reflection(PI / 2.0),
            GroupElement::rotation(PI),
        ],
    };

    let n = elements.len();
    let lookup = |m: &Matrix2<f64>| -> Result<usize> {
        elements
            .iter()
            .position(|e| (e.matrix - m).abs().max() < 1e-9)
            .ok_or_else(|| Error::Numerical(format!("{kind}: product table not closed")))
    };
    let mut product = vec![vec![0usize; n]; n];
    for a in 0..n {
        for b in 0..n {
            product[a][b] = lookup(&(elements[a].matrix * elements[b].matrix))?;
        }
    }
    let inverse = (0..n)
        .map(|a| {
            (0..n)
                .find(|&b| product[a][b] == 0)
                .ok_or_else(|| Error::Numerical(format!("{kind}: element {a} has no inverse")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(FiniteGroup { kind, elements, product, inverse })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frobenius {
    Real,
    /// Realification of a pair of complex-conjugate 1-dim irreps.
    ComplexPair,
}

impl Frobenius {
    /// (1/|G|) Σ χ(g)²
    pub fn indicator(self) -> f64 {
        match self {
            Frobenius::Real => 1.0,
            Frobenius::ComplexPair => 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RealIrrep {
    pub label: String,
    pub dim: usize,
    pub matrices: Vec<DMatrix<f64>>,
    pub character: Vec<f64>,
    pub frobenius: Frobenius,
    /// Angular wavenumber k of a two-dimensional rotation representation.
    pub wavenumber: Option<usize>,
}

impl RealIrrep {
    fn one_dim(label: &str, values: Vec<f64>) -> Self {
        let matrices = values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        Self {
            label: label.to_string(),
            dim: 1,
            matrices,
            character: values,
            frobenius: Frobenius::Real,
            wavenumber: None,
        }
    }

    fn two_dim(label: String, matrices: Vec<DMatrix<f64>>, frobenius: Frobenius, k: usize) -> Self {
        let character = matrices.iter().map(|m| m.trace()).collect();
        Self { label, dim: 2, matrices, character, frobenius, wavenumber: Some(k) }
    }

    /// Weight of Γ_g in P_σ = Σ_g w_g Γ_g.
    pub fn projector_weight(&self, element: usize, order: usize) -> f64 {
        self.dim as f64 / (order as f64 * self.frobenius.indicator()) * self.character[element]
    }
}

fn rot_dm(phi: f64) -> DMatrix<f64> {
    let (s, c) = phi.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

fn flip_dm() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

/// Complete list of inequivalent real irreducible representations.
pub fn real_irreps(group: &FiniteGroup) -> Vec<RealIrrep> {
    match group.kind {
        GroupKind::Cyclic(p) => {
            let mut out = vec![RealIrrep::one_dim("A", vec![1.0; p])];
            if p % 2 == 0 {
                let sign = (0..p).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
                out.push(RealIrrep::one_dim("B", sign));
            }
            for k in 1..=(p - 1) / 2 {
                let mats = (0..p).map(|j| rot_dm(2.0 * PI * (j * k) as f64 / p as f64)).collect();
                out.push(RealIrrep::two_dim(format!("E{k}"), mats, Frobenius::ComplexPair, k));
            }
            out
        }
        GroupKind::Dihedral(p) => {
            let rot_sign = |j: usize| if j % 2 == 0 { 1.0 } else { -1.0 };
            let mut out = vec![
                RealIrrep::one_dim("A1", vec![1.0; 2 * p]),
                RealIrrep::one_dim(
                    "A2",
                    (0..2 * p).map(|i| if i < p { 1.0 } else { -1.0 }).collect(),
                ),
            ];
            if p % 2 == 0 {
                out.push(RealIrrep::one_dim(
                    "B1",
                    (0..2 * p).map(|i| rot_sign(i % p)).collect(),
                ));
                out.push(RealIrrep::one_dim(
                    "B2",
                    (0..2 * p)
                        .map(|i| if i < p { rot_sign(i) } else { -rot_sign(i - p) })
                        .collect(),
                ));
            }
            for k in 1..=(p - 1) / 2 {
                let mats = (0..2 * p)
                    .map(|i| {
                        let j = i % p;
                        let r = rot_dm(2.0 * PI * (j * k) as f64 / p as f64);
                        if i < p { r } else { r * flip_dm() }
                    })
                    .collect();
                out.push(RealIrrep::two_dim(format!("E{k}"), mats, Frobenius::Real, k));
            }
            out
        }
        GroupKind::Klein => vec![
            RealIrrep::one_dim("A", vec![1.0, 1.0, 1.0, 1.0]),
            RealIrrep::one_dim("B1", vec![1.0, 1.0, -1.0, -1.0]),
            RealIrrep::one_dim("B2", vec![1.0, -1.0, 1.0, -1.0]),
            RealIrrep::one_dim("B3", vec![1.0, -1.0, -1.0, 1.0]),
        ],
    }
}

/// Character inner product (1/|G|) Σ_g χ_a(g) χ_b(g).
pub fn character_inner(group: &FiniteGroup, a: &RealIrrep, b: &RealIrrep) -> f64 {
    let s: f64 = a.character.iter().zip(&b.character).map(|(x, y)| x * y).sum();
    s / group.order() as f64
}

/// Σ_σ rank(P_σ) on the regular representation of G; equals |G| for a complete list.
pub fn regular_rank_sum(group: &FiniteGroup, irreps: &[RealIrrep]) -> usize {
    let n = group.order();
    irreps
        .iter()
        .map(|sigma| {
            // (Γ_g f)(h) = f(g⁻¹h): column h of Γ_g has a one in row g·h.
            let mut p = DMatrix::<f64>::zeros(n, n);
            for g in 0..n {
                let w = sigma.projector_weight(g, n);
                for h in 0..n {
                    p[(group.mul(g, h), h)] += w;
                }
            }
            p.singular_values().iter().filter(|&&s| s > 1e-8).count()
        })
        .sum()
}

/// Vertex permutations realizing the quasi-regular action on a mesh:
/// `perms[g][v]` is the vertex located at `g · x_v`.
#[derive(Debug, Clone)]
pub struct VertexPermutations {
    perms: Vec<Vec<usize>>,
}

impl VertexPermutations {
    /// Validate that the permutations form a homomorphic image of `group`.
    pub fn new(group: &FiniteGroup, perms: Vec<Vec<usize>>) -> Result<Self> {
        if perms.len() != group.order() {
            return Err(Error::EquivarianceViolation(format!(
                "{} permutations for a group of order {}",
                perms.len(),
                group.order()
            )));
        }
        let n = perms[0].len();
        for (g, p) in perms.iter().enumerate() {
            let mut seen = vec![false; n];
            if p.len() != n || p.iter().any(|&v| v >= n || std::mem::replace(&mut seen[v], true)) {
                return Err(Error::EquivarianceViolation(format!("element {g} is not a permutation")));
            }
        }
        if perms[0].iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::EquivarianceViolation("identity does not act trivially".into()));
        }
        for g in 0..perms.len() {
            for h in 0..perms.len() {
                let gh = group.mul(g, h);
                if (0..n).any(|v| perms[g][perms[h][v]] != perms[gh][v]) {
                    return Err(Error::EquivarianceViolation(format!(
                        "perm({g}) ∘ perm({h}) differs from perm({gh})"
                    )));
                }
            }
        }
        Ok(Self { perms })
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn vertex_count(&self) -> usize {
        self.perms[0].len()
    }

    pub fn perm(&self, g: usize) -> &[usize] {
        &self.perms[g]
    }

    /// Γ_g u = u ∘ g⁻¹.
    pub fn act(&self, group: &FiniteGroup, g: usize, u: &[f64]) -> Vec<f64> {
        let pinv = &self.perms[group.inverse[g]];
        pinv.iter().map(|&w| u[w]).collect()
    }
}

/// P_σ = (d_σ / (|G| ν_σ)) Σ_g χ_σ(g) Γ_g, with ν_σ the Frobenius indicator.
#[derive(Debug, Clone)]
pub struct IsotypicProjector {
    pub label: String,
    pub dim: usize,
    weights: Vec<f64>,
    group: Arc<FiniteGroup>,
    action: Arc<VertexPermutations>,
}

pub fn isotypic_projector(
    group: &Arc<FiniteGroup>,
    sigma: &RealIrrep,
    action: &Arc<VertexPermutations>,
) -> Result<IsotypicProjector> {
    if action.len() != group.order() {
        return Err(Error::EquivarianceViolation("action does not match group".into()));
    }
    let n = group.order();
    Ok(IsotypicProjector {
        label: sigma.label.clone(),
        dim: sigma.dim,
        weights: (0..n).map(|g| sigma.projector_weight(g, n)).collect(),
        group: Arc::clone(group),
        action: Arc::clone(action),
    })
}

impl IsotypicProjector {
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (g, &w) in self.weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let pinv = self.action.perm(self.group.inverse[g]);
            for (o, &src) in out.iter_mut().zip(pinv) {
                *o += w * u[src];
            }
        }
        out
    }
}

/// Projectors for every irrep of the group, in `real_irreps` order.
pub fn all_projectors(
    group: &Arc<FiniteGroup>,
    action: &Arc<VertexPermutations>,
) -> Result<Vec<IsotypicProjector>> {
    real_irreps(group).iter().map(|s| isotypic_projector(group, s, action)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_kinds() -> Vec<GroupKind> {
        let mut v = vec![GroupKind::Klein];
        for p in 2..=8 {
            v.push(GroupKind::Cyclic(p));
            v.push(GroupKind::Dihedral(p));
        }
        v
    }

    #[test]
    fn orders_and_reflection_counts() {
        let c3 = build_group(GroupKind::Cyclic(3)).unwrap();
        assert_eq!(c3.order(), 3);
        assert!(!c3.has_reflections());
        let d4 = build_group(GroupKind::Dihedral(4)).unwrap();
        assert_eq!(d4.order(), 8);
        assert_eq!(d4.elements.iter().filter(|e| e.reflection).count(), 4);
        let k = build_group(GroupKind::Klein).unwrap();
        assert_eq!(k.order(), 4);
        for g in 1..4 {
            assert_eq!(k.inverse[g], g);
        }
    }

    #[test]
    fn small_p_rejected() {
        assert!(matches!(build_group(GroupKind::Cyclic(1)), Err(Error::InvalidParameter(_))));
        assert!(matches!(build_group(GroupKind::Dihedral(0)), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn group_structure_within_tolerance() {
        for kind in all_kinds() {
            let g = build_group(kind).unwrap();
            assert!(g.structure_defect() <= GROUP_TOL, "{kind}");
            for a in 0..g.order() {
                assert_eq!(g.product[0][a], a);
                assert_eq!(g.product[a][0], a);
            }
        }
    }

    #[test]
    fn dihedral_reflection_axes() {
        let d3 = build_group(GroupKind::Dihedral(3)).unwrap();
        for j in 0..3 {
            let s = &d3.elements[3 + j];
            let beta = PI * j as f64 / 3.0;
            let on_axis = s.apply([beta.cos(), beta.sin()]);
            assert!((on_axis[0] - beta.cos()).abs() < 1e-14);
            assert!((on_axis[1] - beta.sin()).abs() < 1e-14);
        }
    }

    // Brute-force character orthogonality over every group element.
    fn check_irreps(kind: GroupKind) -> Vec<RealIrrep> {
        let g = build_group(kind).unwrap();
        let irreps = real_irreps(&g);
        for s in &irreps {
            for a in 0..g.order() {
                let m = &s.matrices[a];
                let orth = m.transpose() * m - DMatrix::identity(s.dim, s.dim);
                assert!(orth.abs().max() <= GROUP_TOL, "{kind} {} not orthogonal", s.label);
                for b in 0..g.order() {
                    let d = &s.matrices[a] * &s.matrices[b] - &s.matrices[g.mul(a, b)];
                    assert!(d.abs().max() <= GROUP_TOL, "{kind} {} not a homomorphism", s.label);
                }
            }
        }
        for (i, a) in irreps.iter().enumerate() {
            for (j, b) in irreps.iter().enumerate() {
                let ip = character_inner(&g, a, b);
                let expected = if i == j { a.frobenius.indicator() } else { 0.0 };
                assert!((ip - expected).abs() <= GROUP_TOL, "{kind} <{},{}> = {ip}", a.label, b.label);
            }
        }
        assert_eq!(regular_rank_sum(&g, &irreps), g.order(), "{kind} incomplete");
        irreps
    }

    #[test]
    fn dihedral4_has_five_irreps() {
        let dims: Vec<_> = check_irreps(GroupKind::Dihedral(4)).iter().map(|s| s.dim).collect();
        assert_eq!(dims, vec![1, 1, 1, 1, 2]);
    }

    #[test]
    fn cyclic3_two_dim_irrep_is_complex_pair() {
        let irreps = check_irreps(GroupKind::Cyclic(3));
        assert_eq!(irreps.len(), 2);
        let e = &irreps[1];
        assert_eq!(e.dim, 2);
        assert_eq!(e.frobenius, Frobenius::ComplexPair);
        let g = build_group(GroupKind::Cyclic(3)).unwrap();
        let self_ip: f64 = e.character.iter().map(|c| c * c).sum::<f64>() / 3.0;
        assert!((self_ip - 2.0).abs() < 1e-12);
        assert!((character_inner(&g, e, e) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn klein_has_four_one_dim_irreps() {
        let irreps = check_irreps(GroupKind::Klein);
        assert_eq!(irreps.len(), 4);
        assert!(irreps.iter().all(|s| s.dim == 1));
    }

    #[test]
    fn every_small_group_is_complete() {
        for kind in all_kinds() {
            check_irreps(kind);
        }
    }

    #[test]
    fn allowed_modes() {
        let c3 = build_group(GroupKind::Cyclic(3)).unwrap();
        assert!(c3.allows_mode(3, 0.2));
        assert!(!c3.allows_mode(4, 0.0));
        let d3 = build_group(GroupKind::Dihedral(3)).unwrap();
        assert!(!d3.allows_mode(3, 0.2));
        assert!(d3.allows_mode(6, 0.0));
        let k = build_group(GroupKind::Klein).unwrap();
        assert!(k.allows_mode(2, 0.0));
        assert!(!k.allows_mode(3, 0.0));
    }

    #[test]
    fn angle_map_matches_matrix() {
        for kind in all_kinds() {
            let g = build_group(kind).unwrap();
            for e in &g.elements {
                for &theta in &[0.1f64, 1.3, 4.0] {
                    let p = e.apply([theta.cos(), theta.sin()]);
                    let t = e.map_angle(theta);
                    assert!((p[0] - t.cos()).abs() < 1e-13 && (p[1] - t.sin()).abs() < 1e-13);
                }
            }
        }
    }
}
