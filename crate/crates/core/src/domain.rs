//! Star-shaped G-invariant domains r(θ) = r0 + Σ a_k cos kθ + b_k sin kθ,
//! invariant radial perturbation fields ρ(θ), and the equivariant transport
//! family h(t, x) = x + t V(x).

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouprep::FiniteGroup;

/// Samples used to check the radius margin.
pub const RADIUS_SAMPLES: usize = 4096;
/// Default inner cutoff fraction of the transport blend.
pub const DEFAULT_CUTOFF: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub k: u32,
    pub a: f64,
    #[serde(default)]
    pub b: f64,
}

impl Mode {
    pub fn cos(k: u32, a: f64) -> Self {
        Self { k, a, b: 0.0 }
    }

    pub fn new(k: u32, a: f64, b: f64) -> Self {
        Self { k, a, b }
    }
}

/// Value and first three θ-derivatives of a trigonometric polynomial.
fn eval_modes(constant: f64, modes: &[Mode], theta: f64) -> [f64; 4] {
    let mut out = [constant, 0.0, 0.0, 0.0];
    for m in modes {
        let k = m.k as f64;
        let (s, c) = (k * theta).sin_cos();
        let v = m.a * c + m.b * s;
        let d = k * (-m.a * s + m.b * c);
        out[0] += v;
        out[1] += d;
        out[2] -= k * k * v;
        out[3] -= k * k * d;
    }
    out
}

fn check_modes(group: &FiniteGroup, modes: &[Mode]) -> Result<()> {
    let bad: Vec<u32> = modes
        .iter()
        .filter(|m| !(m.a.is_finite() && m.b.is_finite()) || !mode_allowed(group, m))
        .map(|m| m.k)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::SymmetryViolation(format!(
            "modes k = {bad:?} are not invariant under {}",
            group.kind
        )))
    }
}

fn mode_allowed(group: &FiniteGroup, m: &Mode) -> bool {
    if m.k == 0 {
        m.b == 0.0
    } else {
        group.allows_mode(m.k, m.b)
    }
}

/// Merge equal wavenumbers and drop exact zeros; output sorted by k.
fn combine_modes(lhs: &[Mode], rhs: &[Mode], scale: f64) -> Vec<Mode> {
    let mut all: Vec<Mode> = lhs.to_vec();
    for m in rhs {
        match all.iter_mut().find(|x| x.k == m.k) {
            Some(x) => {
                x.a += scale * m.a;
                x.b += scale * m.b;
            }
            None => all.push(Mode::new(m.k, scale * m.a, scale * m.b)),
        }
    }
    all.retain(|m| m.a != 0.0 || m.b != 0.0);
    all.sort_by_key(|m| m.k);
    all
}

#[derive(Debug, Clone)]
pub struct SymmetricDomain {
    pub group: Arc<FiniteGroup>,
    pub r0: f64,
    pub modes: Vec<Mode>,
}

pub fn make_domain(group: &Arc<FiniteGroup>, r0: f64, modes: &[Mode]) -> Result<SymmetricDomain> {
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Error::InvalidParameter(format!("r0 = {r0} must be positive")));
    }
    check_modes(group, modes)?;
    let domain = SymmetricDomain { group: Arc::clone(group), r0, modes: modes.to_vec() };
    let rmin = domain.min_radius();
    if rmin < 0.1 * r0 {
        return Err(Error::Geometry(format!(
            "min radius {rmin:.4} below the star-shape margin 0.1·r0 = {:.4}",
            0.1 * r0
        )));
    }
    Ok(domain)
}

impl SymmetricDomain {
    /// (r, r′, r″) at θ.
    pub fn radius(&self, theta: f64) -> [f64; 3] {
        let v = eval_modes(self.r0, &self.modes, theta);
        [v[0], v[1], v[2]]
    }

    pub fn min_radius(&self) -> f64 {
        (0..RADIUS_SAMPLES)
            .map(|i| self.radius(2.0 * PI * i as f64 / RADIUS_SAMPLES as f64)[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_radius(&self) -> f64 {
        (0..RADIUS_SAMPLES)
            .map(|i| self.radius(2.0 * PI * i as f64 / RADIUS_SAMPLES as f64)[0])
            .fold(0.0, f64::max)
    }

    /// ∮ √(r² + r′²) dθ between two angles, by composite Simpson on `n` panels.
    pub fn arclength(&self, theta0: f64, theta1: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (theta1 - theta0) / n as f64;
        let f = |t: f64| {
            let [r, dr, _] = self.radius(t);
            (r * r + dr * dr).sqrt()
        };
        let mut s = f(theta0) + f(theta1);
        for i in 1..n {
            s += f(theta0 + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    /// Whether x lies inside (star-shaped test).
    /// Enclosed area ½∮ r(θ)² dθ.
    pub fn area(&self) -> f64 {
        let n = RADIUS_SAMPLES;
        (0..n).map(|i| self.radius(2.0 * PI * i as f64 / n as f64)[0].powi(2)).sum::<f64>() * PI / n as f64
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        let rho = x[0].hypot(x[1]);
        rho < self.radius(x[1].atan2(x[0]))[0]
    }

    pub fn same_group(&self, other: &FiniteGroup) -> bool {
        self.group.kind == other.kind
    }
}

/// Point, outward unit normal and plane curvature of ∂Ω at angle θ.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPoint {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    /// Counter-clockwise unit tangent.
    pub tangent: [f64; 2],
    pub curvature: f64,
    pub ds_dtheta: f64,
}

pub fn boundary_geometry(domain: &SymmetricDomain, theta: f64) -> BoundaryPoint {
    let [r, dr, ddr] = domain.radius(theta);
    let (s, c) = theta.sin_cos();
    let er = [c, s];
    let et = [-s, c];
    let w = (r * r + dr * dr).sqrt();
    let tangent = [(dr * er[0] + r * et[0]) / w, (dr * er[1] + r * et[1]) / w];
    let normal = [tangent[1], -tangent[0]];
    let curvature = (r * r + 2.0 * dr * dr - r * ddr) / (w * w * w);
    BoundaryPoint { point: [r * c, r * s], normal, tangent, curvature, ds_dtheta: w }
}

/// Invariant radial displacement amplitude ρ(θ).
#[derive(Debug, Clone)]
pub struct BoundaryField {
    pub group: Arc<FiniteGroup>,
    pub modes: Vec<Mode>,
}

pub fn make_field(group: &Arc<FiniteGroup>, modes: &[Mode]) -> Result<BoundaryField> {
    check_modes(group, modes)?;
    Ok(BoundaryField { group: Arc::clone(group), modes: modes.to_vec() })
}

impl BoundaryField {
    pub fn zero(group: &Arc<FiniteGroup>) -> Self {
        Self { group: Arc::clone(group), modes: Vec::new() }
    }

    /// ρ ≡ 1 (uniform radial offset; a dilation only for the unit disk).
    pub fn dilation(group: &Arc<FiniteGroup>) -> Self {
        Self { group: Arc::clone(group), modes: vec![Mode::cos(0, 1.0)] }
    }

    /// ρ = r(θ), so that r ↦ (1 + t) r is an exact dilation of the domain.
    pub fn radial_scaling(domain: &SymmetricDomain) -> Self {
        let mut modes = vec![Mode::cos(0, domain.r0)];
        modes.extend_from_slice(&domain.modes);
        Self { group: Arc::clone(&domain.group), modes }
    }

    /// (ρ, ρ′, ρ″) at θ.
    pub fn eval(&self, theta: f64) -> [f64; 3] {
        let v = eval_modes(0.0, &self.modes, theta);
        [v[0], v[1], v[2]]
    }

    pub fn sup_norm(&self) -> f64 {
        (0..RADIUS_SAMPLES)
            .map(|i| self.eval(2.0 * PI * i as f64 / RADIUS_SAMPLES as f64)[0].abs())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            group: Arc::clone(&self.group),
            modes: self.modes.iter().map(|m| Mode::new(m.k, s * m.a, s * m.b)).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.a == 0.0 && m.b == 0.0)
    }
}

/// Normal velocity σ = V·N induced by a radial field on ∂Ω.
#[derive(Debug, Clone)]
pub struct NormalVelocity {
    domain: SymmetricDomain,
    field: BoundaryField,
}

pub fn normal_velocity(domain: &SymmetricDomain, field: &BoundaryField) -> Result<NormalVelocity> {
    if !domain.same_group(&field.group) {
        return Err(Error::SymmetryViolation(format!(
            "field group {} differs from domain group {}",
            field.group.kind, domain.group.kind
        )));
    }
    Ok(NormalVelocity { domain: domain.clone(), field: field.clone() })
}

impl NormalVelocity {
    /// σ(θ) = ρ r / √(r² + r′²).
    pub fn eval(&self, theta: f64) -> f64 {
        let [r, dr, _] = self.domain.radius(theta);
        let rho = self.field.eval(theta)[0];
        rho * r / (r * r + dr * dr).sqrt()
    }

    /// (σ, dσ/dθ).
    pub fn eval_with_derivative(&self, theta: f64) -> (f64, f64) {
        let [r, dr, ddr] = self.domain.radius(theta);
        let [rho, drho, _] = self.field.eval(theta);
        let w2 = r * r + dr * dr;
        let w = w2.sqrt();
        let sigma = rho * r / w;
        let dsigma = (drho * r + rho * dr) / w - rho * r * (r * dr + dr * ddr) / (w2 * w);
        (sigma, dsigma)
    }

    pub fn field(&self) -> &BoundaryField {
        &self.field
    }

    pub fn domain(&self) -> &SymmetricDomain {
        &self.domain
    }
}

/// Quintic smoothstep χ on [c0, 1]: 0 below c0, 1 above 1.
pub fn cutoff(s: f64, c0: f64) -> (f64, f64) {
    if s <= c0 {
        return (0.0, 0.0);
    }
    if s >= 1.0 {
        return (1.0, 0.0);
    }
    let w = 1.0 - c0;
    let u = (s - c0) / w;
    let chi = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    let dchi = 30.0 * u * u * (1.0 - u) * (1.0 - u) / w;
    (chi, dchi)
}

/// h(t, x) = x (1 + t ρ(θ_x) χ(|x|/r(θ_x)) / r(θ_x)).
#[derive(Debug, Clone)]
pub struct TransportMap {
    pub domain: SymmetricDomain,
    pub field: BoundaryField,
    pub cutoff: f64,
    pub t_max: f64,
}

impl TransportMap {
    pub fn new(domain: &SymmetricDomain, field: &BoundaryField, c0: f64) -> Result<Self> {
        if !(c0 > 0.0 && c0 < 1.0) {
            return Err(Error::InvalidParameter(format!("cutoff fraction {c0} not in (0,1)")));
        }
        normal_velocity(domain, field)?;
        let mut map = Self { domain: domain.clone(), field: field.clone(), cutoff: c0, t_max: 0.0 };
        map.t_max = map.estimate_t_max();
        Ok(map)
    }

    /// Largest |t| with t·max‖DV‖ < 1/2, sampled on a polar grid.
    fn estimate_t_max(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..512 {
            let theta = 2.0 * PI * (i as f64 + 0.5) / 512.0;
            let r = self.domain.radius(theta)[0];
            for j in 1..=64 {
                let s = j as f64 / 64.0;
                let x = [s * r * theta.cos(), s * r * theta.sin()];
                worst = worst.max(spectral_norm(&self.jacobian(x)));
            }
        }
        if worst == 0.0 { f64::INFINITY } else { 0.5 / worst }
    }

    /// f(x) with V = x f; plus ∂f/∂|x| and ∂f/∂θ.
    fn scale_factor(&self, x: [f64; 2]) -> (f64, f64, f64) {
        let rad = x[0].hypot(x[1]);
        if rad == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let theta = x[1].atan2(x[0]);
        let [r, dr, _] = self.domain.radius(theta);
        let [rho, drho, _] = self.field.eval(theta);
        let s = rad / r;
        let (chi, dchi) = cutoff(s, self.cutoff);
        let f = rho * chi / r;
        let df_drad = rho * dchi / (r * r);
        let ds_dtheta = -rad * dr / (r * r);
        let df_dtheta = (drho * chi + rho * dchi * ds_dtheta) / r - rho * chi * dr / (r * r);
        (f, df_drad, df_dtheta)
    }

    pub fn velocity(&self, x: [f64; 2]) -> [f64; 2] {
        let (f, _, _) = self.scale_factor(x);
        [x[0] * f, x[1] * f]
    }

    /// DV(x) = f I + x ⊗ ∇f.
    pub fn jacobian(&self, x: [f64; 2]) -> Matrix2<f64> {
        let rad = x[0].hypot(x[1]);
        if rad == 0.0 {
            return Matrix2::zeros();
        }
        let (f, df_drad, df_dtheta) = self.scale_factor(x);
        let er = [x[0] / rad, x[1] / rad];
        let et = [-er[1], er[0]];
        let grad = [df_drad * er[0] + df_dtheta / rad * et[0], df_drad * er[1] + df_dtheta / rad * et[1]];
        Matrix2::new(
            f + x[0] * grad[0],
            x[0] * grad[1],
            x[1] * grad[0],
            f + x[1] * grad[1],
        )
    }

    pub fn apply(&self, t: f64, x: [f64; 2]) -> [f64; 2] {
        if t == 0.0 {
            return x;
        }
        let v = self.velocity(x);
        [x[0] + t * v[0], x[1] + t * v[1]]
    }

    pub fn check_t(&self, t: f64) -> Result<()> {
        if t.abs() > self.t_max {
            Err(Error::Injectivity { t, t_max: self.t_max })
        } else {
            Ok(())
        }
    }

    /// Domain with radius r + tρ.
    pub fn perturbed_domain(&self, t: f64) -> Result<SymmetricDomain> {
        self.check_t(t)?;
        let mut modes = combine_modes(&self.domain.modes, &self.field.modes, t);
        let mut r0 = self.domain.r0;
        if let Some(pos) = modes.iter().position(|m| m.k == 0) {
            r0 += modes[pos].a;
            modes.remove(pos);
        }
        make_domain(&self.domain.group, r0, &modes)
    }

    /// Largest |h(t, g x) − g h(t, x)| over the given sample points.
    pub fn equivariance_defect(&self, t: f64, points: &[[f64; 2]]) -> f64 {
        let mut worst = 0.0f64;
        for &x in points {
            let hx = self.apply(t, x);
            for g in &self.domain.group.elements {
                let lhs = self.apply(t, g.apply(x));
                let rhs = g.apply(hx);
                worst = worst.max((lhs[0] - rhs[0]).abs()).max((lhs[1] - rhs[1]).abs());
            }
        }
        worst
    }
}

/// Transport evaluation and the perturbed domain at parameter t.
pub fn transport_map(
    domain: &SymmetricDomain,
    field: &BoundaryField,
    t: f64,
) -> Result<(TransportMap, SymmetricDomain)> {
    let map = TransportMap::new(domain, field, DEFAULT_CUTOFF)?;
    let perturbed = map.perturbed_domain(t)?;
    Ok((map, perturbed))
}

fn spectral_norm(m: &Matrix2<f64>) -> f64 {
    let ata = m.transpose() * m;
    let tr = ata.trace();
    let det = ata.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 + disc).max(0.0).sqrt()
}
