//! Splitting experiments: search for invariant perturbations that separate a
//! cluster, track eigenvalue branches along a perturbation family, and run
//! randomized genericity sweeps.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{make_domain, BoundaryField, Mode, SymmetricDomain, TransportMap, DEFAULT_CUTOFF};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, try_map_indexed, Execution};
use crate::grouprep::{FiniteGroup, GroupKind};
use crate::mesh::{generate_mesh, transport_mesh};
use crate::problem::SolvedProblem;
use crate::shapederiv::{first_derivative_matrix, match_cluster, perturbed_problem, sorted_eigen, MIN_OVERLAP};
use crate::sparse::dot;
use crate::specsym::{cluster, ClusterClassification, SpectralResult, Verdict};

/// Spread below `SCALAR_TOL · λ̄` counts as a scalar M̊.
pub const SCALAR_TOL: f64 = 1e-8;

/// Default largest wavenumber of candidate fields, 4p.
pub fn default_k_max(group: &FiniteGroup) -> u32 {
    4 * group.p() as u32
}

/// Invariant (k, cos/sin) modes with 1 ≤ k ≤ k_max, each of unit sup-norm.
pub fn invariant_modes(group: &FiniteGroup, k_max: u32) -> Vec<Mode> {
    let mut out = Vec::new();
    for k in 1..=k_max {
        if group.allows_mode(k, 0.0) {
            out.push(Mode::cos(k, 1.0));
        }
        if group.allows_mode(k, 1.0) {
            out.push(Mode::new(k, 0.0, 1.0));
        }
    }
    out
}

/// One field per invariant mode, plus the uniform offset ρ ≡ 1.
pub fn candidate_fields(group: &Arc<FiniteGroup>, k_max: u32) -> Vec<BoundaryField> {
    std::iter::once(BoundaryField::dilation(group))
        .chain(
            invariant_modes(group, k_max)
                .into_iter()
                .map(|m| BoundaryField { group: Arc::clone(group), modes: vec![m] }),
        )
        .collect()
}

/// Random invariant field with coefficients uniform in ±1/(1 + k/p)², scaled
/// to unit sup-norm.
pub fn random_invariant_field(group: &Arc<FiniteGroup>, k_max: u32, rng: &mut impl Rng) -> BoundaryField {
    let p = group.p() as f64;
    let modes: Vec<Mode> = invariant_modes(group, k_max)
        .into_iter()
        .map(|m| {
            let w = 1.0 / (1.0 + m.k as f64 / p).powi(2);
            let c = w * rng.random_range(-1.0..1.0);
            Mode::new(m.k, c * m.a, c * m.b)
        })
        .collect();
    let field = BoundaryField { group: Arc::clone(group), modes };
    let norm = field.sup_norm();
    if norm > 0.0 {
        field.scaled(1.0 / norm)
    } else {
        field
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    pub index: usize,
    pub modes: Vec<Mode>,
    /// Ascending eigenvalues of M̊.
    pub slopes: Vec<f64>,
    /// (max − min slope) / sup-norm of the field.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitSearch {
    pub lambda_mean: f64,
    pub threshold: f64,
    pub candidates: Vec<Candidate>,
    /// Index of the candidate with the largest spread, if above threshold.
    pub best: Option<usize>,
}

impl SplitSearch {
    pub fn best_candidate(&self) -> Option<&Candidate> {
        self.best.map(|i| &self.candidates[i])
    }
}

/// Scan candidate fields for one whose M̊ is not scalar on the cluster.
pub fn find_splitting_direction(
    problem: &SolvedProblem,
    members: &[usize],
    candidates: &[BoundaryField],
    exec: Execution,
) -> Result<SplitSearch> {
    let lambda_mean = members.iter().map(|&j| problem.spectrum.values[j]).sum::<f64>() / members.len() as f64;
    let threshold = SCALAR_TOL * lambda_mean.abs().max(1.0);
    let scored = try_map_indexed(exec, candidates.len(), |i| {
        let f = &candidates[i];
        let map = TransportMap::new(&problem.domain, f, DEFAULT_CUTOFF)?;
        let (slopes, _) = sorted_eigen(&first_derivative_matrix(problem, members, &map)?);
        let norm = f.sup_norm().max(f64::MIN_POSITIVE);
        let spread = (slopes.last().unwrap() - slopes[0]) / norm;
        Ok::<_, Error>(Candidate { index: i, modes: f.modes.clone(), slopes, spread })
    })?;
    let best = scored
        .iter()
        .filter(|c| c.spread > threshold)
        .max_by(|a, b| a.spread.total_cmp(&b.spread).then(b.index.cmp(&a.index)))
        .map(|c| c.index);
    Ok(SplitSearch { lambda_mean, threshold, candidates: scored, best })
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitExperiment {
    pub members: Vec<usize>,
    pub lambda_mean: f64,
    pub field: Vec<Mode>,
    pub t: f64,
    /// Ascending eigenvalues of M̊.
    pub slopes: Vec<f64>,
    pub predicted_gap: f64,
    pub achieved_gap: f64,
    pub gap_rel_error: f64,
    /// Continuation of the cluster at t, ascending.
    pub after_values: Vec<f64>,
    /// Sizes of the clusters the continuation falls into at t.
    pub after_sizes: Vec<usize>,
    /// Sizes add up to the original cluster and no outside eigenvalue joined.
    pub refines: bool,
    pub mesh_equivariance_defect: f64,
    pub before: ClusterClassification,
    pub after: Vec<ClusterClassification>,
}

/// Perturb along a field by `t` and compare the achieved spread of the
/// cluster's continuation with the first-order prediction `t·spread(M̊)`.
pub fn split_experiment(
    problem: &SolvedProblem,
    members: &[usize],
    field: &BoundaryField,
    t: f64,
    cluster_tol: f64,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<SplitExperiment> {
    let before = problem
        .classify(cluster_tol, exec)
        .clusters
        .into_iter()
        .find(|c| c.members == members)
        .ok_or_else(|| Error::InvalidParameter(format!("{members:?} is not a cluster at tolerance {cluster_tol}")))?;
    let map = TransportMap::new(&problem.domain, field, DEFAULT_CUTOFF)?;
    let (slopes, _) = sorted_eigen(&first_derivative_matrix(problem, members, &map)?);
    let solved = perturbed_problem(problem, members, &map, t, opts, exec)?;
    let idx = match_cluster(problem, members, &solved, t)?;
    let after_values: Vec<f64> = idx.iter().map(|&j| solved.spectrum.values[j]).collect();
    let classified = solved.classify(cluster_tol, exec);
    let after: Vec<ClusterClassification> =
        classified.clusters.into_iter().filter(|c| c.members.iter().any(|j| idx.contains(j))).collect();
    let after_sizes: Vec<usize> = after.iter().map(|c| c.size).collect();
    let refines = after_sizes.iter().sum::<usize>() == members.len();
    let predicted_gap = t.abs() * (slopes.last().unwrap() - slopes[0]);
    let achieved_gap = after_values.last().unwrap() - after_values[0];
    Ok(SplitExperiment {
        members: members.to_vec(),
        lambda_mean: before.mean,
        field: field.modes.clone(),
        t,
        slopes,
        predicted_gap,
        achieved_gap,
        gap_rel_error: (achieved_gap - predicted_gap).abs() / predicted_gap.abs().max(f64::MIN_POSITIVE),
        after_values,
        after_sizes,
        refines,
        mesh_equivariance_defect: solved.mesh.equivariance_defect(),
        before,
        after,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchFit {
    /// Polynomial coefficients in t, constant term first.
    pub coefficients: Vec<f64>,
    /// ‖fit − data‖₂ / max(‖data‖₂, √n), so branches near λ = 0 are measured
    /// in absolute terms.
    pub rel_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchCurves {
    pub t_grid: Vec<f64>,
    /// `values[b][i]` is branch b at `t_grid[i]`.
    pub values: Vec<Vec<f64>>,
    pub fits: Vec<BranchFit>,
}

/// Least-squares polynomial of degree `deg` through (t, y).
pub fn polyfit(t: &[f64], y: &[f64], deg: usize) -> BranchFit {
    let deg = deg.min(t.len().saturating_sub(1));
    let a = DMatrix::from_fn(t.len(), deg + 1, |i, j| t[i].powi(j as i32));
    let b = DVector::from_column_slice(y);
    let coef = a.clone().svd(true, true).solve(&b, 1e-14).expect("SVD solve");
    let r = &a * &coef - &b;
    BranchFit { coefficients: coef.iter().copied().collect(), rel_residual: r.norm() / b.norm().max((t.len() as f64).sqrt()) }
}

/// Follow every eigenvalue below `cutoff` along `x ↦ x + tV` over `t_grid`.
///
/// Solves run through `exec`; matching walks outward from t = 0 and pairs
/// degenerate groups as blocks by M-overlap with the previous step.
pub fn track_branches(
    problem: &SolvedProblem,
    field: &BoundaryField,
    t_grid: &[f64],
    cutoff: f64,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<BranchCurves> {
    let map = TransportMap::new(&problem.domain, field, DEFAULT_CUTOFF)?;
    for &t in t_grid {
        map.check_t(t)?;
    }
    let nb = problem.count_below(cutoff);
    if nb == 0 {
        return Err(Error::InvalidParameter(format!("no eigenvalues below cutoff {cutoff}")));
    }
    let count = (nb + 6).min(problem.mesh.vertices.len());
    let mut grid: Vec<f64> = t_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let solved = try_map_indexed(exec, grid.len(), |i| {
        let t = grid[i];
        if t == 0.0 {
            return Ok(None);
        }
        let mesh = transport_mesh(&problem.mesh, &map, t)?;
        let domain = map.perturbed_domain(t)?;
        SolvedProblem::from_mesh(&domain, mesh, count, opts, Execution::Sequential).map(Some)
    })?;
    let mass = &problem.system.mass;
    let spectrum_at = |i: usize| solved[i].as_ref().map_or(&problem.spectrum, |s| &s.spectrum);

    let mut values = vec![vec![0.0; grid.len()]; nb];
    let zero = grid.iter().position(|&t| t >= 0.0).unwrap_or(grid.len());
    for direction in [1isize, -1] {
        let mut prev: Vec<Vec<f64>> = (0..nb).map(|b| problem.spectrum.vector(b)).collect();
        let mut prev_vals: Vec<f64> = problem.spectrum.values[..nb].to_vec();
        let order: Vec<usize> =
            if direction > 0 { (zero..grid.len()).collect() } else { (0..zero).rev().collect() };
        for i in order {
            let sp = spectrum_at(i);
            let t = grid[i];
            let cur: Vec<Vec<f64>> = (0..sp.values.len()).map(|j| sp.vector(j)).collect();
            let mcur: Vec<Vec<f64>> = cur.iter().map(|v| mass.mul_vec(v)).collect();
            let overlap = |a: usize, j: usize| dot(&prev[a], &mcur[j]).powi(2);
            let groups = cluster(&prev_vals, 1e-6);
            let mut taken = vec![false; cur.len()];
            let mut next = prev.clone();
            let mut next_vals = prev_vals.clone();
            for g in groups {
                let mut scores: Vec<(f64, usize)> = (0..cur.len())
                    .filter(|&j| !taken[j])
                    .map(|j| (g.members.iter().map(|&a| overlap(a, j)).sum::<f64>(), j))
                    .collect();
                scores.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                if scores.len() < g.size() {
                    return Err(Error::Tracking { t, message: "ran out of eigenpairs to match".into() });
                }
                let mut chosen: Vec<usize> = scores[..g.size()].iter().map(|s| s.1).collect();
                if let Some(s) = scores[..g.size()].iter().find(|s| s.0 < MIN_OVERLAP) {
                    return Err(Error::Tracking {
                        t,
                        message: format!("branch group at λ ≈ {:.6} matched with overlap {:.3}", g.mean, s.0),
                    });
                }
                chosen.sort_by(|&a, &b| sp.values[a].total_cmp(&sp.values[b]));
                for (&a, &j) in g.members.iter().zip(&chosen) {
                    taken[j] = true;
                    next[a] = cur[j].clone();
                    next_vals[a] = sp.values[j];
                    values[a][i] = sp.values[j];
                }
            }
            prev = next;
            prev_vals = next_vals;
        }
    }
    let deg = 4;
    let fits = values.iter().map(|y| polyfit(&grid, y, deg)).collect();
    Ok(BranchCurves { t_grid: grid, values, fits })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub trial: usize,
    pub cluster: usize,
    pub lambda: f64,
    pub size: usize,
    /// Isotypic rank per σ, aligned with `sigmas`.
    pub sizes: Vec<usize>,
    pub sigmas: Vec<String>,
    pub multiplicities: Vec<usize>,
    pub verdict: Verdict,
    /// Distance to the nearest other cluster below the cutoff.
    pub nearest_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTrial {
    pub trial: usize,
    pub field: Vec<Mode>,
    pub clusters_below_cutoff: usize,
    pub all_g_simple: bool,
    pub all_g_sigma_simple: bool,
    pub no_accidental: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub note: &'static str,
    pub group: String,
    pub seed: u64,
    pub trials: usize,
    pub amplitude: f64,
    pub cutoff: f64,
    pub cluster_tol: f64,
    pub h_target: f64,
    #[serde(rename = "fraction_G_simple")]
    pub fraction_g_simple: f64,
    #[serde(rename = "fraction_G_sigma_simple")]
    pub fraction_g_sigma_simple: f64,
    pub fraction_no_accidental: f64,
    pub per_trial: Vec<SweepTrial>,
    pub failures: Vec<SweepFailure>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepSettings {
    pub h_target: f64,
    pub cutoff: f64,
    pub trials: usize,
    pub seed: u64,
    pub amplitude: f64,
    pub cluster_tol: f64,
    pub k_max: Option<u32>,
}

fn trial_outcome(trial: usize, field: &BoundaryField, result: &SpectralResult, cutoff: f64) -> (SweepTrial, Vec<SweepFailure>) {
    let below: Vec<_> = result.clusters.iter().filter(|c| c.mean < cutoff).collect();
    let mut failures = Vec::new();
    for (i, c) in below.iter().enumerate() {
        if c.verdict == Verdict::GSimple {
            continue;
        }
        let nearest_gap = below
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, o)| (o.mean - c.mean).abs())
            .fold(f64::INFINITY, f64::min);
        failures.push(SweepFailure {
            trial,
            cluster: c.id,
            lambda: c.mean,
            size: c.size,
            sizes: c.isotypic.iter().map(|x| x.rank).collect(),
            sigmas: c.isotypic.iter().map(|x| x.label.clone()).collect(),
            multiplicities: c.isotypic.iter().map(|x| x.multiplicity).collect(),
            verdict: c.verdict,
            nearest_gap,
        });
    }
    let summary = SweepTrial {
        trial,
        field: field.modes.clone(),
        clusters_below_cutoff: below.len(),
        all_g_simple: below.iter().all(|c| c.verdict == Verdict::GSimple),
        all_g_sigma_simple: below.iter().all(|c| c.g_sigma_simple),
        no_accidental: below.iter().all(|c| c.verdict != Verdict::Accidental),
    };
    (summary, failures)
}

/// Perturb `domain` by `amplitude · ρ` for random invariant ρ, re-mesh,
/// solve and classify. Trial i draws from stream i of a generator seeded
/// with `seed`, so results do not depend on scheduling.
pub fn genericity_sweep(
    domain: &SymmetricDomain,
    settings: &SweepSettings,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<SweepReport> {
    if settings.trials == 0 {
        return Err(Error::InvalidParameter("a sweep needs at least one trial".into()));
    }
    let group = Arc::clone(&domain.group);
    let k_max = settings.k_max.unwrap_or_else(|| default_k_max(&group));
    let outcomes = try_map_indexed(exec, settings.trials, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        rng.set_stream(trial as u64);
        let field = random_invariant_field(&group, k_max, &mut rng);
        let modes = perturbed_modes(domain, &field, settings.amplitude);
        let (r0, modes) = modes;
        let perturbed = make_domain(&group, r0, &modes)?;
        let mesh = generate_mesh(&perturbed, settings.h_target)?;
        let solved = SolvedProblem::below_cutoff(&perturbed, mesh, settings.cutoff, opts, Execution::Sequential)?;
        let result = solved.classify(settings.cluster_tol, Execution::Sequential);
        Ok::<_, Error>(trial_outcome(trial, &field, &result, settings.cutoff))
    })?;
    let n = settings.trials as f64;
    let frac = |f: &dyn Fn(&SweepTrial) -> bool| outcomes.iter().filter(|(s, _)| f(s)).count() as f64 / n;
    let fraction_g_simple = frac(&|s| s.all_g_simple);
    let fraction_g_sigma_simple = frac(&|s| s.all_g_sigma_simple);
    let fraction_no_accidental = frac(&|s| s.no_accidental);
    let (per_trial, failures): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    Ok(SweepReport {
        note: "statistical evidence at a fixed finite amplitude; not a proof of genericity",
        group: group.kind.to_string(),
        seed: settings.seed,
        trials: settings.trials,
        amplitude: settings.amplitude,
        cutoff: settings.cutoff,
        cluster_tol: settings.cluster_tol,
        h_target: settings.h_target,
        fraction_g_simple,
        fraction_g_sigma_simple,
        fraction_no_accidental,
        per_trial,
        failures: failures.into_iter().flatten().collect(),
    })
}

/// Radius data of `r + t ρ`, with the constant mode folded into r0.
fn perturbed_modes(domain: &SymmetricDomain, field: &BoundaryField, t: f64) -> (f64, Vec<Mode>) {
    let mut r0 = domain.r0;
    let mut modes = domain.modes.clone();
    for m in &field.modes {
        if m.k == 0 {
            r0 += t * m.a;
            continue;
        }
        match modes.iter_mut().find(|x| x.k == m.k) {
            Some(x) => {
                x.a += t * m.a;
                x.b += t * m.b;
            }
            None => modes.push(Mode::new(m.k, t * m.a, t * m.b)),
        }
    }
    modes.sort_by_key(|m| m.k);
    (r0, modes)
}

/// Groups exercised by the standard genericity sweep.
pub fn sweep_groups() -> [GroupKind; 4] {
    [GroupKind::Cyclic(3), GroupKind::Cyclic(5), GroupKind::Dihedral(3), GroupKind::Klein]
}

/// Per-candidate spreads, parallel over fields; convenience for reports.
pub fn candidate_spreads(search: &SplitSearch, exec: Execution) -> Vec<f64> {
    map_indexed(exec, search.candidates.len(), |i| search.candidates[i].spread)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grouprep::build_group;

    #[test]
    fn invariant_mode_lists() {
        let c3 = build_group(GroupKind::Cyclic(3)).unwrap();
        let ks: Vec<(u32, bool)> = invariant_modes(&c3, 6).iter().map(|m| (m.k, m.b != 0.0)).collect();
        assert_eq!(ks, vec![(3, false), (3, true), (6, false), (6, true)]);
        let d3 = build_group(GroupKind::Dihedral(3)).unwrap();
        assert_eq!(invariant_modes(&d3, 12).len(), 4);
        let k = build_group(GroupKind::Klein).unwrap();
        assert_eq!(invariant_modes(&k, 8).iter().map(|m| m.k).collect::<Vec<_>>(), vec![2, 4, 6, 8]);
    }

    #[test]
    fn random_field_is_normalized_and_reproducible() {
        let g = Arc::new(build_group(GroupKind::Cyclic(5)).unwrap());
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let fa = random_invariant_field(&g, 20, &mut a);
        let fb = random_invariant_field(&g, 20, &mut b);
        assert_eq!(fa.modes, fb.modes);
        assert!((fa.sup_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quartic_fit_is_exact_on_quartics() {
        let t: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|&x| 2.0 - x + 3.0 * x * x + 0.5 * x.powi(4)).collect();
        let f = polyfit(&t, &y, 4);
        assert!(f.rel_residual < 1e-13);
        assert!((f.coefficients[2] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn perturbed_modes_fold_constant() {
        let g = Arc::new(build_group(GroupKind::Klein).unwrap());
        let d = make_domain(&g, 1.0, &[Mode::cos(2, 0.1)]).unwrap();
        let f = BoundaryField { group: Arc::clone(&g), modes: vec![Mode::cos(0, 1.0), Mode::cos(2, 1.0), Mode::cos(4, 1.0)] };
        let (r0, modes) = perturbed_modes(&d, &f, 0.1);
        assert!((r0 - 1.1).abs() < 1e-15);
        assert_eq!(modes.len(), 2);
        assert!((modes[0].a - 0.2).abs() < 1e-15 && (modes[1].a - 0.1).abs() < 1e-15);
    }
}
