//! First and second shape derivatives of a Neumann eigenvalue cluster under
//! an invariant radial perturbation, with finite-difference validation.
//!
//! Conventions: for a cluster {φ_j} at λ₀ and a perturbation with boundary
//! normal velocity σ, the branch slopes are λ̇ = eig(M̊) with
//! M̊_kj = ∮ σ(∂_sφ_k ∂_sφ_j − λ₀ φ_k φ_j), and for a branch c with slope λ̇
//! the curvature is λ̈ = cᵀ M̊̊(λ̇) c.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::domain::{boundary_geometry, normal_velocity, BoundaryField, TransportMap, DEFAULT_CUTOFF};
use crate::eigen::{minres, EigenOptions, ShiftedOperator};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Execution};
use crate::fem::{boundary_tangential_gradient, boundary_weights};
use crate::mesh::transport_mesh;
use crate::problem::SolvedProblem;
use crate::sparse::dot;

/// Largest eigenpair residual accepted as input to the derivative formulas.
pub const MAX_INPUT_RESIDUAL: f64 = 1e-8;
/// Minimum squared overlap for matching a perturbed eigenvector to a cluster.
pub const MIN_OVERLAP: f64 = 0.7;

/// Geometry and normal-velocity data at one boundary node.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundaryNode {
    pub vertex: usize,
    pub theta: f64,
    pub weight: f64,
    pub curvature: f64,
    pub sigma: f64,
    pub dsigma_ds: f64,
    /// N·DV N.
    pub dsigma_dn: f64,
    /// −(DV V)·N − (V·T) ∂_sσ.
    pub dsigma_dt: f64,
}

/// Boundary data of `problem` for the transport generated by `field`.
pub fn boundary_nodes(problem: &SolvedProblem, map: &TransportMap) -> Result<Vec<BoundaryNode>> {
    let nv = normal_velocity(&problem.domain, &map.field)?;
    let weights = boundary_weights(&problem.mesh);
    Ok(problem
        .mesh
        .boundary_loop
        .iter()
        .zip(&problem.mesh.boundary_theta)
        .zip(weights)
        .map(|((&vertex, &theta), weight)| {
            let bp = boundary_geometry(&problem.domain, theta);
            let (sigma, dsigma_dtheta) = nv.eval_with_derivative(theta);
            let dsigma_ds = dsigma_dtheta / bp.ds_dtheta;
            let v = map.velocity(bp.point);
            let dv = map.jacobian(bp.point);
            let n = nalgebra::Vector2::new(bp.normal[0], bp.normal[1]);
            let dvv = dv * nalgebra::Vector2::new(v[0], v[1]);
            let v_t = v[0] * bp.tangent[0] + v[1] * bp.tangent[1];
            BoundaryNode {
                vertex,
                theta,
                weight,
                curvature: bp.curvature,
                sigma,
                dsigma_ds,
                dsigma_dn: n.dot(&(dv * n)),
                dsigma_dt: -dvv.dot(&n) - v_t * dsigma_ds,
            }
        })
        .collect())
}

/// Segment-wise boundary form B(u, w) = ∮ σ(∂_s u ∂_s w − λ₀ u w) with P1
/// traces, σ averaged per segment.
#[derive(Debug, Clone)]
pub struct BoundaryForm {
    segments: Vec<(usize, usize, f64, f64)>,
    lambda0: f64,
}

impl BoundaryForm {
    pub fn new(problem: &SolvedProblem, nodes: &[BoundaryNode], lambda0: f64) -> Self {
        let n = nodes.len();
        let segments = (0..n)
            .map(|i| {
                let (a, b) = (&nodes[i], &nodes[(i + 1) % n]);
                let (p, q) = (problem.mesh.vertices[a.vertex], problem.mesh.vertices[b.vertex]);
                let len = (p[0] - q[0]).hypot(p[1] - q[1]);
                (a.vertex, b.vertex, len, 0.5 * (a.sigma + b.sigma))
            })
            .collect();
        Self { segments, lambda0 }
    }

    /// The vector `B u` (B as a matrix on vertex values).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for &(a, b, len, s) in &self.segments {
            let g = s * (u[b] - u[a]) / len;
            out[a] -= g;
            out[b] += g;
            let c = self.lambda0 * s * len / 6.0;
            out[a] -= c * (2.0 * u[a] + u[b]);
            out[b] -= c * (u[a] + 2.0 * u[b]);
        }
        out
    }

    pub fn eval(&self, u: &[f64], w: &[f64]) -> f64 {
        dot(&self.apply(u), w)
    }
}

fn cluster_vectors(problem: &SolvedProblem, members: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    if members.is_empty() {
        return Err(Error::Precondition("empty cluster".into()));
    }
    for &j in members {
        let r = problem.spectrum.residuals[j];
        if !(r <= MAX_INPUT_RESIDUAL) {
            return Err(Error::UnreliableInput(format!(
                "eigenpair {j} has relative residual {r:e} > {MAX_INPUT_RESIDUAL:e}"
            )));
        }
    }
    let lambda0 = members.iter().map(|&j| problem.spectrum.values[j]).sum::<f64>() / members.len() as f64;
    Ok((lambda0, members.iter().map(|&j| problem.spectrum.vector(j)).collect()))
}

/// Trapezoid rule ∮ f_i g_i h_i over nodes for nodal arrays.
fn nodal_matrix(nodes: &[BoundaryNode], f: impl Fn(usize, usize, usize) -> f64, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |k, j| nodes.iter().enumerate().map(|(i, nd)| nd.weight * f(i, k, j)).sum())
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    (a - a.transpose()).amax() / scale
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigen-decomposition of a symmetric matrix with ascending eigenvalues.
pub fn sorted_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let SymmetricEigen { eigenvalues, eigenvectors } = symmetrize(a).symmetric_eigen();
    let mut idx: Vec<usize> = (0..eigenvalues.len()).collect();
    idx.sort_by(|&x, &y| eigenvalues[x].total_cmp(&eigenvalues[y]));
    let vals = idx.iter().map(|&i| eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| eigenvectors[(r, idx[c])]);
    (vals, vecs)
}

/// Boundary traces of the cluster eigenfunctions and their tangential derivatives.
struct Traces {
    values: Vec<Vec<f64>>,
    ds: Vec<Vec<f64>>,
}

fn traces(problem: &SolvedProblem, nodes: &[BoundaryNode], vectors: &[Vec<f64>]) -> Traces {
    let values = vectors.iter().map(|v| nodes.iter().map(|nd| v[nd.vertex]).collect()).collect();
    let ds = vectors.iter().map(|v| boundary_tangential_gradient(&problem.mesh, v)).collect();
    Traces { values, ds }
}

/// M̊ for the cluster, M̊_kj = B(φ_k, φ_j) with the segment boundary form.
pub fn first_derivative_matrix(problem: &SolvedProblem, members: &[usize], map: &TransportMap) -> Result<DMatrix<f64>> {
    let (lambda0, vectors) = cluster_vectors(problem, members)?;
    let nodes = boundary_nodes(problem, map)?;
    let form = BoundaryForm::new(problem, &nodes, lambda0);
    Ok(first_from_form(&form, &vectors))
}

fn first_from_form(form: &BoundaryForm, vectors: &[Vec<f64>]) -> DMatrix<f64> {
    let applied: Vec<Vec<f64>> = vectors.iter().map(|v| form.apply(v)).collect();
    let m = vectors.len();
    DMatrix::from_fn(m, m, |k, j| dot(&vectors[k], &applied[j]))
}

/// M̊ by nodal trapezoid quadrature of three-point tangential gradients.
pub fn first_derivative_matrix_nodal(
    problem: &SolvedProblem,
    members: &[usize],
    map: &TransportMap,
) -> Result<DMatrix<f64>> {
    let (lambda0, vectors) = cluster_vectors(problem, members)?;
    let nodes = boundary_nodes(problem, map)?;
    let tr = traces(problem, &nodes, &vectors);
    Ok(nodal_matrix(
        &nodes,
        |i, k, j| nodes[i].sigma * (tr.ds[k][i] * tr.ds[j][i] - lambda0 * tr.values[k][i] * tr.values[j][i]),
        members.len(),
    ))
}

#[derive(Debug, Clone)]
pub struct EigenfunctionDerivatives {
    /// φ̇_j as vertex vectors, M-orthogonal to the cluster.
    pub vectors: Vec<Vec<f64>>,
    /// ‖(K − λ₀M)φ̇ − b + MΦμ‖ / ‖b‖ per branch.
    pub residuals: Vec<f64>,
    /// max |φ_iᵀ M φ̇_j|.
    pub orthogonality: f64,
    pub iterations: Vec<usize>,
}

/// Solve the constrained auxiliary problems for φ̇_j:
/// `(K − λ₀M)φ̇ + MΦμ = b_j`, `ΦᵀMφ̇ = 0`, with `b_j = −B φ_j`.
pub fn eigenfunction_derivatives(
    problem: &SolvedProblem,
    members: &[usize],
    form: &BoundaryForm,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<EigenfunctionDerivatives> {
    let (lambda0, phi) = cluster_vectors(problem, members)?;
    let k = &problem.system.stiffness;
    let m = &problem.system.mass;
    let op = ShiftedOperator::new(k, m, opts.shift)?;
    let mphi: Vec<Vec<f64>> = phi.iter().map(|p| m.mul_vec(p)).collect();
    let project = |x: &mut Vec<f64>| {
        // x ← x − Φ Φᵀ M x
        for _ in 0..2 {
            let coeffs: Vec<f64> = mphi.iter().map(|mp| dot(mp, x)).collect();
            for (c, p) in coeffs.iter().zip(&phi) {
                for (a, b) in x.iter_mut().zip(p) {
                    *a -= c * b;
                }
            }
        }
    };
    let apply = |x: &[f64]| {
        let kx = k.mul_vec(x);
        let mx = m.mul_vec(x);
        kx.iter().zip(&mx).map(|(a, b)| a - lambda0 * b).collect::<Vec<f64>>()
    };
    let solved = try_map_indexed(exec, phi.len(), |j| {
        let b: Vec<f64> = form.apply(&phi[j]).into_iter().map(|v| -v).collect();
        // right-hand side in the range of K − λ₀M: b − MΦΦᵀb
        let coeffs: Vec<f64> = phi.iter().map(|p| dot(p, &b)).collect();
        let mut rhs = b.clone();
        for (c, mp) in coeffs.iter().zip(&mphi) {
            for (a, q) in rhs.iter_mut().zip(mp) {
                *a -= c * q;
            }
        }
        let bnorm = dot(&rhs, &rhs).sqrt();
        if bnorm == 0.0 {
            return Ok((vec![0.0; rhs.len()], 0.0, 0usize));
        }
        let out = minres(
            &apply,
            |v| {
                let mut z = op.solve(v);
                project(&mut z);
                z
            },
            &rhs,
            1e-12,
            5000,
        );
        let mut x = out.x;
        project(&mut x);
        let ax = apply(&x);
        let res = ax.iter().zip(&rhs).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt() / bnorm;
        if !(res < 1e-6) {
            return Err(Error::Numerical(format!(
                "auxiliary solve for branch {j} stalled at relative residual {res:e}; the cluster may be mis-specified"
            )));
        }
        Ok((x, res, out.iterations))
    })?;
    let mut orthogonality = 0.0f64;
    for (x, _, _) in &solved {
        for mp in &mphi {
            orthogonality = orthogonality.max(dot(mp, x).abs());
        }
    }
    let mut vectors = Vec::with_capacity(solved.len());
    let mut residuals = Vec::with_capacity(solved.len());
    let mut iterations = Vec::with_capacity(solved.len());
    for (x, r, it) in solved {
        vectors.push(x);
        residuals.push(r);
        iterations.push(it);
    }
    Ok(EigenfunctionDerivatives { vectors, residuals, orthogonality, iterations })
}

/// M̊̊ split as `base − 2 λ̇ S`, where S_kj = ∮ σ φ_k φ_j.
#[derive(Debug, Clone)]
pub struct SecondDerivative {
    pub base: DMatrix<f64>,
    pub sigma_mass: DMatrix<f64>,
    /// Relative asymmetry of `base` before symmetrization.
    pub asymmetry: f64,
}

impl SecondDerivative {
    /// Symmetrized M̊̊ for a branch with slope `lambda_dot`.
    pub fn matrix(&self, lambda_dot: f64) -> DMatrix<f64> {
        symmetrize(&self.base) - &self.sigma_mass * (2.0 * lambda_dot)
    }
}

/// M̊̊ = ∮ 2σQ̇ + σ² ∂_N Q + (∂_tσ + σ ∂_Nσ + κσ²) Q.
///
/// ∂_N Q_jk = −2κ ∂_sφ_j ∂_sφ_k for Neumann eigenfunctions with the normal
/// extended so that ∂_N N = 0. The Q̇ part ∮ σ(∂_sφ_k ∂_sφ̇_j − λ₀ φ_k φ̇_j)
/// uses the same segment form as the auxiliary right-hand side.
pub fn second_derivative_matrix(
    problem: &SolvedProblem,
    members: &[usize],
    nodes: &[BoundaryNode],
    form: &BoundaryForm,
    phi_dot: &EigenfunctionDerivatives,
) -> Result<SecondDerivative> {
    let m = members.len();
    if phi_dot.vectors.len() != m {
        return Err(Error::Precondition(format!(
            "{} eigenfunction derivatives for a cluster of size {m}",
            phi_dot.vectors.len()
        )));
    }
    let (lambda0, vectors) = cluster_vectors(problem, members)?;
    let tr = traces(problem, nodes, &vectors);
    let qdot = DMatrix::from_fn(m, m, |k, j| form.eval(&vectors[k], &phi_dot.vectors[j]));
    let normal = nodal_matrix(
        nodes,
        |i, k, j| {
            let nd = &nodes[i];
            let q = tr.ds[j][i] * tr.ds[k][i] - lambda0 * tr.values[j][i] * tr.values[k][i];
            let dq_dn = -2.0 * nd.curvature * tr.ds[j][i] * tr.ds[k][i];
            let coeff = nd.dsigma_dt + nd.sigma * nd.dsigma_dn + nd.curvature * nd.sigma * nd.sigma;
            nd.sigma * nd.sigma * dq_dn + coeff * q
        },
        m,
    );
    let sigma_mass = nodal_matrix(nodes, |i, k, j| nodes[i].sigma * tr.values[k][i] * tr.values[j][i], m);
    let base = qdot * 2.0 + normal;
    Ok(SecondDerivative { asymmetry: asymmetry(&base), base, sigma_mass: symmetrize(&sigma_mass) })
}

/// Slopes and curvatures of the branches emanating from a cluster.
#[derive(Debug, Clone, Serialize)]
pub struct Branch {
    pub branch: usize,
    pub lambda_dot: f64,
    pub lambda_ddot: Option<f64>,
    /// Coefficients c of the branch in the cluster basis.
    pub coefficients: Vec<f64>,
}

/// λ̈ for each group of equal slopes: eigenvalues of M̊̊(λ̇) restricted to the
/// λ̇-eigenspace of M̊.
pub fn branch_table(first: &DMatrix<f64>, second: Option<&SecondDerivative>, lambda0: f64) -> Vec<Branch> {
    let (vals, vecs) = sorted_eigen(first);
    let m = vals.len();
    let tol = 1e-6 * lambda0.abs().max(vals.iter().map(|v| v.abs()).fold(1.0, f64::max));
    let mut out = Vec::with_capacity(m);
    let mut i = 0;
    while i < m {
        let mut j = i + 1;
        while j < m && vals[j] - vals[j - 1] <= tol {
            j += 1;
        }
        let slope = vals[i..j].iter().sum::<f64>() / (j - i) as f64;
        let block = vecs.columns(i, j - i).into_owned();
        match second {
            Some(sd) => {
                let restricted = block.transpose() * sd.matrix(slope) * &block;
                let (curv, rot) = sorted_eigen(&restricted);
                let coeffs = &block * rot;
                for (b, c) in curv.iter().enumerate() {
                    out.push(Branch {
                        branch: out.len(),
                        lambda_dot: vals[i + b],
                        lambda_ddot: Some(*c),
                        coefficients: coeffs.column(b).iter().copied().collect(),
                    });
                }
            }
            None => {
                for b in i..j {
                    out.push(Branch {
                        branch: out.len(),
                        lambda_dot: vals[b],
                        lambda_ddot: None,
                        coefficients: vecs.column(b).iter().copied().collect(),
                    });
                }
            }
        }
        i = j;
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct FdBranch {
    pub branch: usize,
    pub lambda_dot: f64,
    pub fd_first: f64,
    pub first_rel_error: f64,
    pub lambda_ddot: Option<f64>,
    pub fd_second: f64,
    pub second_rel_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdStep {
    pub t: f64,
    pub branches: Vec<FdBranch>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdValidation {
    pub steps: Vec<FdStep>,
    /// Richardson-extrapolated (fd_first, fd_second) per branch from the two
    /// smallest steps, when at least two steps were given with ratio 2.
    pub richardson: Option<Vec<(f64, f64)>>,
}

/// Indices in `solved` of the continuation of `members`, chosen by largest
/// M-overlap with the unperturbed cluster basis and sorted by eigenvalue.
pub fn match_cluster(problem: &SolvedProblem, members: &[usize], solved: &SolvedProblem, t: f64) -> Result<Vec<usize>> {
    let (_, phi) = cluster_vectors(problem, members)?;
    let mphi: Vec<Vec<f64>> = phi.iter().map(|p| problem.system.mass.mul_vec(p)).collect();
    let mut scored: Vec<(f64, usize)> = (0..solved.spectrum.values.len())
        .map(|j| {
            let v = solved.spectrum.vector(j);
            (mphi.iter().map(|mp| dot(mp, &v).powi(2)).sum::<f64>(), j)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    if scored.len() < members.len() {
        return Err(Error::Tracking { t, message: "perturbed spectrum is shorter than the cluster".into() });
    }
    let picked = &scored[..members.len()];
    if let Some(&(ov, _)) = picked.iter().find(|(ov, _)| *ov < MIN_OVERLAP) {
        return Err(Error::Tracking { t, message: format!("best cluster overlap {ov:.3} < {MIN_OVERLAP}") });
    }
    let mut idx: Vec<usize> = picked.iter().map(|&(_, j)| j).collect();
    idx.sort_by(|&a, &b| solved.spectrum.values[a].total_cmp(&solved.spectrum.values[b]));
    Ok(idx)
}

/// Solve on the mesh transported to `t`, with enough eigenpairs to contain
/// the continuation of `members`.
pub fn perturbed_problem(
    problem: &SolvedProblem,
    members: &[usize],
    map: &TransportMap,
    t: f64,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<SolvedProblem> {
    let mesh_t = transport_mesh(&problem.mesh, map, t)?;
    let domain_t = map.perturbed_domain(t)?;
    let count = (members.iter().max().unwrap() + 1 + members.len() + 2).min(mesh_t.vertices.len());
    SolvedProblem::from_mesh(&domain_t, mesh_t, count, opts, exec)
}

/// Eigenvalues of the cluster's continuation on the transported mesh at `t`,
/// ascending, matched by M-overlap with the unperturbed cluster basis.
pub fn perturbed_cluster_values(
    problem: &SolvedProblem,
    members: &[usize],
    map: &TransportMap,
    t: f64,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<Vec<f64>> {
    if t == 0.0 {
        return Ok(members.iter().map(|&j| problem.spectrum.values[j]).collect());
    }
    let solved = perturbed_problem(problem, members, map, t, opts, exec)?;
    let idx = match_cluster(problem, members, &solved, t)?;
    Ok(idx.iter().map(|&j| solved.spectrum.values[j]).collect())
}

/// Central finite differences of the perturbed cluster eigenvalues.
///
/// Branches are matched in sorted order: ascending at +t pairs with
/// descending at −t, which follows the branch slopes for small t.
pub fn fd_validate(
    problem: &SolvedProblem,
    members: &[usize],
    field: &BoundaryField,
    steps: &[f64],
    branches: &[Branch],
    opts: &EigenOptions,
    exec: Execution,
) -> Result<FdValidation> {
    let map = TransportMap::new(&problem.domain, field, DEFAULT_CUTOFF)?;
    for &t in steps {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("finite-difference step {t} must be positive")));
        }
        map.check_t(t)?;
    }
    let m = members.len();
    let signed: Vec<f64> = steps.iter().flat_map(|&t| [t, -t]).collect();
    let values = try_map_indexed(exec, signed.len(), |i| {
        perturbed_cluster_values(problem, members, &map, signed[i], opts, Execution::Sequential)
    })?;
    let base: Vec<f64> = {
        let lam: Vec<f64> = members.iter().map(|&j| problem.spectrum.values[j]).collect();
        // Rayleigh value of every branch in the unperturbed cluster
        branches
            .iter()
            .map(|b| b.coefficients.iter().zip(&lam).map(|(c, l)| c * c * l).sum())
            .collect()
    };
    let mut fd_steps = Vec::with_capacity(steps.len());
    for (s, &t) in steps.iter().enumerate() {
        let (plus, minus) = (&values[2 * s], &values[2 * s + 1]);
        let rows = (0..m)
            .map(|b| {
                let (lp, lm) = (plus[b], minus[m - 1 - b]);
                let fd_first = (lp - lm) / (2.0 * t);
                let fd_second = (lp - 2.0 * base[b] + lm) / (t * t);
                let br = &branches[b];
                FdBranch {
                    branch: b,
                    lambda_dot: br.lambda_dot,
                    fd_first,
                    first_rel_error: rel_err(br.lambda_dot, fd_first),
                    lambda_ddot: br.lambda_ddot,
                    fd_second,
                    second_rel_error: br.lambda_ddot.map(|p| rel_err(p, fd_second)),
                }
            })
            .collect();
        fd_steps.push(FdStep { t, branches: rows });
    }
    let richardson = (steps.len() >= 2 && (steps[0] / steps[1] - 2.0).abs() < 1e-12).then(|| {
        (0..m)
            .map(|b| {
                let (big, small) = (&fd_steps[0].branches[b], &fd_steps[1].branches[b]);
                ((4.0 * small.fd_first - big.fd_first) / 3.0, (4.0 * small.fd_second - big.fd_second) / 3.0)
            })
            .collect()
    });
    Ok(FdValidation { steps: fd_steps, richardson })
}

/// |pred − fd| / max(|fd|, 1e-12).
pub fn rel_err(pred: f64, fd: f64) -> f64 {
    (pred - fd).abs() / fd.abs().max(1e-12)
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub cluster_members: Vec<usize>,
    pub lambda0: f64,
    pub field_modes: Vec<crate::domain::Mode>,
    /// M̊ row-major.
    pub first: Vec<Vec<f64>>,
    pub first_asymmetry: f64,
    /// M̊̊ at the first branch slope, row-major.
    pub second: Option<Vec<Vec<f64>>>,
    pub second_asymmetry: Option<f64>,
    pub phi_dot_residuals: Vec<f64>,
    pub phi_dot_orthogonality: Option<f64>,
    pub branches: Vec<Branch>,
    pub validation: Option<FdValidation>,
}

fn rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Full first/second derivative pipeline for one cluster and field.
pub fn derivative_report(
    problem: &SolvedProblem,
    members: &[usize],
    field: &BoundaryField,
    with_second: bool,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<DerivativeReport> {
    let map = TransportMap::new(&problem.domain, field, DEFAULT_CUTOFF)?;
    let (lambda0, vectors) = cluster_vectors(problem, members)?;
    let nodes = boundary_nodes(problem, &map)?;
    let form = BoundaryForm::new(problem, &nodes, lambda0);
    let first = first_from_form(&form, &vectors);
    let first_asymmetry = asymmetry(&first);
    let (second, phi_dot) = if with_second {
        let pd = eigenfunction_derivatives(problem, members, &form, opts, exec)?;
        (Some(second_derivative_matrix(problem, members, &nodes, &form, &pd)?), Some(pd))
    } else {
        (None, None)
    };
    let branches = branch_table(&first, second.as_ref(), lambda0);
    Ok(DerivativeReport {
        cluster_members: members.to_vec(),
        lambda0,
        field_modes: field.modes.clone(),
        first: rows(&symmetrize(&first)),
        first_asymmetry,
        second: second.as_ref().map(|s| rows(&s.matrix(branches[0].lambda_dot))),
        second_asymmetry: second.as_ref().map(|s| s.asymmetry),
        phi_dot_residuals: phi_dot.as_ref().map(|p| p.residuals.clone()).unwrap_or_default(),
        phi_dot_orthogonality: phi_dot.as_ref().map(|p| p.orthogonality),
        branches,
        validation: None,
    })
}
