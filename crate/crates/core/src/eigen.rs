//! Generalized symmetric eigensolvers for `K x = λ M x` and a preconditioned
//! MINRES for symmetric indefinite systems.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::sparse::{dot, CsrMatrix, SkylineCholesky};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigenOptions {
    /// Shift `s` of the factored operator `K + s M` (must be positive).
    pub shift: f64,
    /// Extra block columns beyond the requested count.
    pub extra: usize,
    /// Target relative residual `‖Kx − λMx‖ / ((‖K‖ + |λ|‖M‖)‖x‖)`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Problems up to this size are solved densely.
    pub dense_limit: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { shift: 1.0, extra: 8, tol: 1e-10, max_iter: 60, seed: 0x5eed, dense_limit: 600 }
    }
}

/// Ascending eigenvalues with M-orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
}

/// Relative residual of every pair.
pub fn relative_residuals(k: &CsrMatrix, m: &CsrMatrix, values: &[f64], vectors: &DMatrix<f64>) -> Vec<f64> {
    let (nk, nm) = (k.norm_inf(), m.norm_inf());
    values
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let x: Vec<f64> = vectors.column(j).iter().copied().collect();
            let kx = k.mul_vec(&x);
            let mx = m.mul_vec(&x);
            let r: f64 = kx.iter().zip(&mx).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            let xn = dot(&x, &x).sqrt();
            r / ((nk + lam.abs() * nm) * xn)
        })
        .collect()
}

/// Dense reference solver through the Cholesky factor of M.
pub fn dense_generalized(k: &DMatrix<f64>, m: &DMatrix<f64>, count: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("mass matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let mut c = &linv * k * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let count = count.min(n);
    let values = idx[..count].iter().map(|&i| eig.eigenvalues[i]).collect();
    let q = DMatrix::from_fn(n, count, |r, j| eig.eigenvectors[(r, idx[j])]);
    let x = linv.transpose() * q;
    Ok((values, x))
}

/// Factored `K + s M`, shared by the eigensolver and linear solves.
#[derive(Debug, Clone)]
pub struct ShiftedOperator {
    pub shift: f64,
    chol: SkylineCholesky,
}

impl ShiftedOperator {
    pub fn new(k: &CsrMatrix, m: &CsrMatrix, shift: f64) -> Result<Self> {
        if !(shift > 0.0) {
            return Err(Error::InvalidParameter(format!("shift {shift} must be positive")));
        }
        Ok(Self { shift, chol: SkylineCholesky::factor(&k.add_scaled(shift, m))? })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve(b)
    }
}

fn m_orthonormalize(m: &CsrMatrix, candidates: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut mq: Vec<Vec<f64>> = Vec::new();
    for mut v in candidates {
        let norm0 = dot(&v, &m.mul_vec(&v)).sqrt();
        if !(norm0 > 0.0) {
            continue;
        }
        for _ in 0..2 {
            for (qj, mqj) in q.iter().zip(&mq) {
                let c = dot(mqj, &v);
                for (a, b) in v.iter_mut().zip(qj) {
                    *a -= c * b;
                }
            }
        }
        let mv = m.mul_vec(&v);
        let nv = dot(&v, &mv).sqrt();
        if nv <= 1e-10 * norm0 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        q.push(v);
        mq.push(mv.into_iter().map(|a| a / nv).collect());
    }
    q
}

/// Lowest `count` eigenpairs of the Neumann pencil `(K, M)`.
///
/// Small problems go to the dense solver; larger ones use block Krylov
/// iteration on `(K + sM)⁻¹ M` with Rayleigh–Ritz on K.
pub fn lowest_eigenpairs(
    k: &CsrMatrix,
    m: &CsrMatrix,
    count: usize,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<EigenPairs> {
    let n = k.dim();
    if count == 0 || count > n {
        return Err(Error::InvalidParameter(format!("cannot compute {count} eigenpairs of a size-{n} pencil")));
    }
    let block = count + opts.extra.max(1);
    if n <= opts.dense_limit || 3 * block > n / 2 {
        let (values, vectors) = dense_generalized(&k.to_dense(), &m.to_dense(), count)?;
        let residuals = relative_residuals(k, m, &values, &vectors);
        return Ok(EigenPairs { values, vectors, residuals });
    }
    let op = ShiftedOperator::new(k, m, opts.shift)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<f64>> = (0..block).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let (nk, nm) = (k.norm_inf(), m.norm_inf());
    let apply = |v: &Vec<f64>| op.solve(&m.mul_vec(v));

    let mut last_worst = f64::INFINITY;
    for _ in 0..opts.max_iter {
        let ax = map_indexed(exec, x.len(), |j| apply(&x[j]));
        let aax = map_indexed(exec, ax.len(), |j| apply(&ax[j]));
        let mut cands = x.clone();
        cands.extend(ax);
        cands.extend(aax);
        let q = m_orthonormalize(m, cands);
        let c = q.len();
        if c < count {
            return Err(Error::Numerical("Krylov basis collapsed".into()));
        }
        let kq = map_indexed(exec, c, |j| k.mul_vec(&q[j]));
        let qm = DMatrix::from_fn(n, c, |r, j| q[j][r]);
        let kqm = DMatrix::from_fn(n, c, |r, j| kq[j][r]);
        let mut kr = qm.transpose() * &kqm;
        kr = (&kr + kr.transpose()) * 0.5;
        let eig = kr.symmetric_eigen();
        let mut idx: Vec<usize> = (0..c).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let keep = block.min(c);
        let y = DMatrix::from_fn(c, keep, |r, j| eig.eigenvectors[(r, idx[j])]);
        let xs = &qm * &y;
        let kxs = &kqm * &y;
        let values: Vec<f64> = idx[..keep].iter().map(|&i| eig.eigenvalues[i]).collect();

        let residuals: Vec<f64> = map_indexed(exec, count, |j| {
            let xj: Vec<f64> = xs.column(j).iter().copied().collect();
            let mx = m.mul_vec(&xj);
            let r: f64 =
                kxs.column(j).iter().zip(&mx).map(|(a, b)| (a - values[j] * b).powi(2)).sum::<f64>().sqrt();
            r / ((nk + values[j].abs() * nm) * dot(&xj, &xj).sqrt())
        });
        let worst = residuals.iter().copied().fold(0.0, f64::max);
        if worst < opts.tol {
            let vectors = xs.columns(0, count).into_owned();
            return Ok(EigenPairs { values: values[..count].to_vec(), vectors, residuals });
        }
        last_worst = worst;
        x = (0..keep).map(|j| xs.column(j).iter().copied().collect()).collect();
    }
    Err(Error::Numerical(format!(
        "eigensolver did not converge in {} iterations (worst relative residual {last_worst:e})",
        opts.max_iter
    )))
}

#[derive(Debug, Clone)]
pub struct MinresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned residual estimate relative to the initial one.
    pub relative_residual: f64,
}

/// Preconditioned MINRES for `A x = b`, A symmetric, `precond` symmetric
/// positive (semi)definite. Starts from x = 0.
pub fn minres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> MinresOutcome {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut v_prev = vec![0.0; n];
    let mut v = b.to_vec();
    let mut z = precond(&v);
    let mut gamma = dot(&z, &v).max(0.0).sqrt();
    if gamma == 0.0 {
        return MinresOutcome { x, iterations: 0, relative_residual: 0.0 };
    }
    let gamma1 = gamma;
    let mut gamma_prev = 1.0;
    let mut eta = gamma;
    let (mut s_prev, mut s) = (0.0, 0.0);
    let (mut c_prev, mut c) = (1.0, 1.0);
    let mut w_prev = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        z.iter_mut().for_each(|a| *a /= gamma);
        let az = apply(&z);
        let delta = dot(&az, &z);
        let v_next: Vec<f64> = (0..n)
            .map(|i| az[i] - delta / gamma * v[i] - gamma / gamma_prev * v_prev[i])
            .collect();
        let z_next = precond(&v_next);
        let gamma_next = dot(&z_next, &v_next).max(0.0).sqrt();
        let a0 = c * delta - c_prev * s * gamma;
        let a1 = a0.hypot(gamma_next);
        let a2 = s * delta + c_prev * c * gamma;
        let a3 = s_prev * gamma;
        let c_next = a0 / a1;
        let s_next = gamma_next / a1;
        let w_next: Vec<f64> = (0..n).map(|i| (z[i] - a3 * w_prev[i] - a2 * w[i]) / a1).collect();
        for i in 0..n {
            x[i] += c_next * eta * w_next[i];
        }
        eta = -s_next * eta;
        w_prev = std::mem::replace(&mut w, w_next);
        v_prev = std::mem::replace(&mut v, v_next);
        z = z_next;
        gamma_prev = gamma;
        gamma = gamma_next;
        s_prev = s;
        s = s_next;
        c_prev = c;
        c = c_next;
        if eta.abs() <= tol * gamma1 || gamma == 0.0 {
            break;
        }
    }
    MinresOutcome { x, iterations, relative_residual: eta.abs() / gamma1 }
}

/// `true` when every column pair is M-orthonormal to `tol`.
pub fn is_m_orthonormal(m: &CsrMatrix, vectors: &DMatrix<f64>, tol: f64) -> bool {
    let mut mx = DMatrix::zeros(vectors.nrows(), vectors.ncols());
    for j in 0..vectors.ncols() {
        let col: Vec<f64> = vectors.column(j).iter().copied().collect();
        mx.set_column(j, &DVector::from_vec(m.mul_vec(&col)));
    }
    let g = vectors.transpose() * mx;
    (g - DMatrix::identity(vectors.ncols(), vectors.ncols())).amax() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Neumann P1 pencil on [0, 1] with n elements.
    fn neumann_1d(n: usize) -> (CsrMatrix, CsrMatrix) {
        let rows: Vec<Vec<usize>> =
            (0..=n).map(|i| (i.saturating_sub(1)..=(i + 1).min(n)).collect()).collect();
        let mut k = CsrMatrix::from_pattern(rows.clone());
        let mut m = CsrMatrix::from_pattern(rows);
        let h = 1.0 / n as f64;
        for e in 0..n {
            let (a, b) = (e, e + 1);
            for (i, j, kv, mv) in [(a, a, 1.0, 2.0), (b, b, 1.0, 2.0), (a, b, -1.0, 1.0), (b, a, -1.0, 1.0)] {
                k.add(i, j, kv / h);
                m.add(i, j, mv * h / 6.0);
            }
        }
        (k, m)
    }

    #[test]
    fn krylov_matches_dense_on_1d_neumann() {
        let (k, m) = neumann_1d(900);
        let opts = EigenOptions::default();
        let pairs = lowest_eigenpairs(&k, &m, 10, &opts, Execution::available()).unwrap();
        let (dv, _) = dense_generalized(&k.to_dense(), &m.to_dense(), 10).unwrap();
        for j in 0..10 {
            assert!((pairs.values[j] - dv[j]).abs() < 1e-8 * (1.0 + dv[j]), "{j}");
            let exact = (std::f64::consts::PI * j as f64).powi(2);
            assert!((pairs.values[j] - exact).abs() < 1e-3 * (1.0 + exact));
        }
        assert!(pairs.residuals.iter().all(|&r| r < opts.tol));
        assert!(is_m_orthonormal(&m, &pairs.vectors, 1e-9));
    }

    #[test]
    fn dense_vectors_are_m_orthonormal() {
        let (k, m) = neumann_1d(40);
        let (vals, vecs) = dense_generalized(&k.to_dense(), &m.to_dense(), 6).unwrap();
        assert!(vals[0].abs() < 1e-10);
        assert!(is_m_orthonormal(&m, &vecs, 1e-10));
    }

    #[test]
    fn minres_solves_indefinite_system() {
        let n = 50;
        let diag: Vec<f64> = (0..n).map(|i| i as f64 - 20.5).collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).cos()).collect();
        let out = minres(
            |x| x.iter().zip(&diag).map(|(a, d)| a * d).collect(),
            |x| x.to_vec(),
            &b,
            1e-13,
            500,
        );
        for i in 0..n {
            assert!((out.x[i] - b[i] / diag[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn minres_with_preconditioner() {
        let n = 60;
        let diag: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 + i as f64 } else { -(2.0 + i as f64) }).collect();
        let b = vec![1.0; n];
        let out = minres(
            |x| x.iter().zip(&diag).map(|(a, d)| a * d).collect(),
            |x| x.iter().zip(&diag).map(|(a, d)| a / d.abs()).collect(),
            &b,
            1e-13,
            200,
        );
        assert!(out.iterations < 10);
        for i in 0..n {
            assert!((out.x[i] * diag[i] - 1.0).abs() < 1e-10);
        }
    }
}
