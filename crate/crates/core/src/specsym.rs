//! Spectral clustering, isotypic decomposition of cluster eigenspaces and
//! multiplicity verdicts.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::exec::{map_indexed, Execution};
use crate::grouprep::{FiniteGroup, IsotypicProjector};
use crate::sparse::CsrMatrix;

/// Default relative cluster tolerance for analytic spectra and for FEM
/// spectra on meshes that carry the symmetry group.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-6;
/// Threshold on normalized singular values when measuring isotypic rank.
pub const RANK_TOL: f64 = 1e-6;

/// Relative tolerance for FEM spectra whose degeneracies are not protected by
/// the mesh: `max(1e-8, 5h²)`.
pub fn fem_cluster_tol(h: f64) -> f64 {
    (5.0 * h * h).max(1e-8)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub id: usize,
    pub mean: f64,
    pub members: Vec<usize>,
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Greedy gap clustering of ascending eigenvalues: a new cluster starts when
/// `λ_{i+1} − λ_i > tol_rel · max(1, |λ_i|)`.
pub fn cluster(eigs: &[f64], tol_rel: f64) -> Vec<Cluster> {
    let mut out: Vec<Cluster> = Vec::new();
    for (i, &lam) in eigs.iter().enumerate() {
        let join = i > 0 && lam - eigs[i - 1] <= tol_rel * eigs[i - 1].abs().max(1.0);
        if join {
            out.last_mut().unwrap().members.push(i);
        } else {
            out.push(Cluster { id: out.len(), mean: 0.0, members: vec![i] });
        }
    }
    for c in &mut out {
        c.mean = c.members.iter().map(|&i| eigs[i]).sum::<f64>() / c.members.len() as f64;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// One irrep, one copy.
    GSimple,
    /// Two or more distinct irreps share the eigenvalue.
    Accidental,
    /// One irrep with several copies.
    Repeated,
    /// Isotypic ranks do not add up to the cluster size.
    Unresolved,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::GSimple => "g-simple",
            Verdict::Accidental => "accidental",
            Verdict::Repeated => "repeated",
            Verdict::Unresolved => "unresolved",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IsotypicComponent {
    pub label: String,
    pub dim: usize,
    /// Rank of the projected cluster basis.
    pub rank: usize,
    /// `rank / dim` (copies of the irrep).
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterClassification {
    pub id: usize,
    pub mean: f64,
    pub members: Vec<usize>,
    pub size: usize,
    /// Irreps with nonzero rank, in character-table order.
    pub isotypic: Vec<IsotypicComponent>,
    pub verdict: Verdict,
    /// Every irrep present occurs at most once.
    pub g_sigma_simple: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralResult {
    pub cluster_tol: f64,
    pub clusters: Vec<ClusterClassification>,
}

fn m_gram(mass: &CsrMatrix, w: &[Vec<f64>]) -> DMatrix<f64> {
    let mw: Vec<Vec<f64>> = w.iter().map(|x| mass.mul_vec(x)).collect();
    let s = w.len();
    let mut g = DMatrix::from_fn(s, s, |i, j| w[i].iter().zip(&mw[j]).map(|(a, b)| a * b).sum());
    g = (&g + g.transpose()) * 0.5;
    g
}

/// Isotypic ranks of the span of the given M-orthonormal vectors.
pub fn classify_isotypic(
    vectors: &[Vec<f64>],
    projectors: &[IsotypicProjector],
    mass: &CsrMatrix,
) -> Vec<IsotypicComponent> {
    projectors
        .iter()
        .map(|p| {
            let w: Vec<Vec<f64>> = vectors.iter().map(|v| p.apply(v)).collect();
            let g = m_gram(mass, &w);
            // eigenvalues of the Gram matrix are squared singular values in the M-norm
            let rank = g.symmetric_eigenvalues().iter().filter(|&&e| e.max(0.0).sqrt() > RANK_TOL).count();
            IsotypicComponent { label: p.label.clone(), dim: p.dim, rank, multiplicity: rank / p.dim }
        })
        .collect()
}

fn verdict_of(size: usize, comps: &[IsotypicComponent]) -> (Verdict, bool) {
    let consistent = comps.iter().all(|c| c.rank % c.dim == 0)
        && comps.iter().map(|c| c.rank).sum::<usize>() == size;
    if !consistent {
        return (Verdict::Unresolved, false);
    }
    let present: Vec<&IsotypicComponent> = comps.iter().filter(|c| c.rank > 0).collect();
    let simple = present.iter().all(|c| c.multiplicity == 1);
    let v = match present.len() {
        0 => Verdict::Unresolved,
        1 if present[0].multiplicity == 1 => Verdict::GSimple,
        1 => Verdict::Repeated,
        _ => Verdict::Accidental,
    };
    (v, simple && v != Verdict::Unresolved)
}

/// Cluster the spectrum and classify each cluster; clusters run through `exec`.
pub fn classify_spectrum(
    values: &[f64],
    vectors: &DMatrix<f64>,
    projectors: &[IsotypicProjector],
    mass: &CsrMatrix,
    cluster_tol: f64,
    exec: Execution,
) -> SpectralResult {
    let clusters = cluster(values, cluster_tol);
    let classified = map_indexed(exec, clusters.len(), |ci| {
        let c = &clusters[ci];
        let vs: Vec<Vec<f64>> = c.members.iter().map(|&j| vectors.column(j).iter().copied().collect()).collect();
        let comps = classify_isotypic(&vs, projectors, mass);
        let (verdict, g_sigma_simple) = verdict_of(c.size(), &comps);
        ClusterClassification {
            id: c.id,
            mean: c.mean,
            members: c.members.clone(),
            size: c.size(),
            isotypic: comps.into_iter().filter(|x| x.rank > 0).collect(),
            verdict,
            g_sigma_simple,
        }
    });
    SpectralResult { cluster_tol, clusters: classified }
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisibilityEntry {
    pub cluster_id: usize,
    pub label: String,
    pub size: usize,
    pub dim: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DivisibilityReport {
    pub cutoff: f64,
    /// One entry per single-irrep cluster below the cutoff.
    pub entries: Vec<DivisibilityEntry>,
    /// Some cluster below the cutoff has size ≥ 2; `None` when the group has
    /// only 1-dimensional irreps and no multiple eigenvalue is forced.
    pub multiple_eigenvalue_found: Option<bool>,
    /// 2-dimensional irreps that no cluster below the cutoff carries.
    pub missing_two_dim: Vec<String>,
    pub violations: usize,
    pub pass: bool,
}

/// Check size divisibility by d_σ for single-irrep clusters and the existence
/// of multiple eigenvalues forced by 2-dimensional irreps.
pub fn divisibility_report(result: &SpectralResult, group: &FiniteGroup, cutoff: f64) -> DivisibilityReport {
    let irreps = crate::grouprep::real_irreps(group);
    let below: Vec<&ClusterClassification> = result.clusters.iter().filter(|c| c.mean < cutoff).collect();
    let entries: Vec<DivisibilityEntry> = below
        .iter()
        .filter(|c| c.isotypic.len() == 1)
        .map(|c| {
            let comp = &c.isotypic[0];
            DivisibilityEntry {
                cluster_id: c.id,
                label: comp.label.clone(),
                size: c.size,
                dim: comp.dim,
                pass: c.size % comp.dim == 0,
            }
        })
        .collect();
    let has_two_dim = irreps.iter().any(|s| s.dim == 2);
    let multiple_eigenvalue_found = has_two_dim.then(|| below.iter().any(|c| c.size >= 2));
    let missing_two_dim: Vec<String> = irreps
        .iter()
        .filter(|s| s.dim == 2)
        .filter(|s| !below.iter().any(|c| c.isotypic.iter().any(|x| x.label == s.label)))
        .map(|s| s.label.clone())
        .collect();
    let violations = entries.iter().filter(|e| !e.pass).count();
    let pass = violations == 0 && multiple_eigenvalue_found != Some(false) && missing_two_dim.is_empty();
    DivisibilityReport { cutoff, entries, multiple_eigenvalue_found, missing_two_dim, violations, pass }
}

/// `cluster_id,lambda_mean,size,sigma_labels,multiplicities,verdict` rows.
pub fn classification_csv(result: &SpectralResult) -> String {
    let mut s = String::from("cluster_id,lambda_mean,size,sigma_labels,multiplicities,verdict\n");
    for c in &result.clusters {
        let labels: Vec<&str> = c.isotypic.iter().map(|x| x.label.as_str()).collect();
        let mults: Vec<String> = c.isotypic.iter().map(|x| x.multiplicity.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{:.15e},{},{},{},{}",
            c.id,
            c.mean,
            c.size,
            labels.join(";"),
            mults.join(";"),
            c.verdict.name()
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_double_is_one_cluster() {
        let c = cluster(&[0.0, 2.5, 2.5, 3.0], 1e-6);
        let sizes: Vec<usize> = c.iter().map(Cluster::size).collect();
        assert_eq!(sizes, vec![1, 2, 1]);
        assert_eq!(c[1].mean, 2.5);
    }

    #[test]
    fn square_spectrum_clusters() {
        let eigs = [0.0, 1.0, 1.0, 2.0, 4.0, 4.0, 5.0, 5.0, 8.0];
        let sizes: Vec<usize> = cluster(&eigs, 1e-6).iter().map(Cluster::size).collect();
        assert_eq!(sizes, vec![1, 2, 1, 2, 2, 1]);
    }

    #[test]
    fn tolerance_is_relative_above_one() {
        let c = cluster(&[100.0, 100.00005], 1e-6);
        assert_eq!(c.len(), 1);
        let c = cluster(&[100.0, 100.0002], 1e-6);
        assert_eq!(c.len(), 2);
    }

    fn comp(label: &str, dim: usize, rank: usize) -> IsotypicComponent {
        IsotypicComponent { label: label.into(), dim, rank, multiplicity: rank / dim }
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(verdict_of(1, &[comp("A", 1, 1)]), (Verdict::GSimple, true));
        assert_eq!(verdict_of(2, &[comp("E1", 2, 2)]), (Verdict::GSimple, true));
        assert_eq!(verdict_of(2, &[comp("B1", 1, 1), comp("B2", 1, 1)]), (Verdict::Accidental, true));
        assert_eq!(verdict_of(2, &[comp("A", 1, 2)]), (Verdict::Repeated, false));
        assert_eq!(verdict_of(2, &[comp("E1", 2, 1), comp("A", 1, 1)]).0, Verdict::Unresolved);
        assert_eq!(verdict_of(3, &[comp("A", 1, 1)]).0, Verdict::Unresolved);
    }

    #[test]
    fn fem_tolerance_floor() {
        assert_eq!(fem_cluster_tol(1e-6), 1e-8);
        assert!((fem_cluster_tol(0.03) - 0.0045).abs() < 1e-15);
    }
}
