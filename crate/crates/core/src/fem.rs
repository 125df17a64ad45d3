//! P1 finite elements for the Neumann Laplacian on a symmetric mesh.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::eigen::{lowest_eigenpairs, EigenOptions};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::mesh::SymmetricMesh;
use crate::sparse::CsrMatrix;

/// Stiffness and mass matrices sharing one sparsity pattern.
#[derive(Debug, Clone)]
pub struct FemSystem {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
}

type ElementMatrices = ([[f64; 3]; 3], [[f64; 3]; 3]);

fn element_matrices(p: [[f64; 2]; 3]) -> std::result::Result<ElementMatrices, f64> {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0]));
    if !(area > 0.0) {
        return Err(area);
    }
    // ∇λ_i = (y_j − y_k, x_k − x_j) / 2A with (i, j, k) cyclic
    let mut grad = [[0.0; 2]; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        grad[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
    }
    let mut ke = [[0.0; 3]; 3];
    let mut me = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            if i != j {
                ke[i][j] = area * (grad[i][0] * grad[j][0] + grad[i][1] * grad[j][1]);
            }
            me[i][j] = area / 12.0 * if i == j { 2.0 } else { 1.0 };
        }
    }
    // zero row sums keep constants in the kernel exactly
    for i in 0..3 {
        ke[i][i] = -(0..3).filter(|&j| j != i).map(|j| ke[i][j]).sum::<f64>();
    }
    Ok((ke, me))
}

/// Assemble K and M. Element work runs through `exec`; the scatter is
/// sequential so results do not depend on scheduling.
pub fn assemble(mesh: &SymmetricMesh, exec: Execution) -> Result<FemSystem> {
    let n = mesh.vertices.len();
    let elems = map_indexed(exec, mesh.triangles.len(), |t| {
        let tri = mesh.triangles[t];
        element_matrices([mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]])
    });
    let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for t in &mesh.triangles {
        for &a in t {
            rows[a].extend_from_slice(t);
        }
    }
    let mut k = CsrMatrix::from_pattern(rows);
    let mut m = k.clone();
    for (index, (tri, e)) in mesh.triangles.iter().zip(elems).enumerate() {
        let (ke, me) = e.map_err(|area| Error::DegenerateTriangle { index, area })?;
        for i in 0..3 {
            for j in 0..3 {
                k.add(tri[i], tri[j], ke[i][j]);
                m.add(tri[i], tri[j], me[i][j]);
            }
        }
    }
    Ok(FemSystem { stiffness: k, mass: m })
}

#[derive(Debug, Clone)]
pub struct NeumannSpectrum {
    pub values: Vec<f64>,
    /// M-orthonormal eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub h: f64,
}

impl NeumannSpectrum {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j).iter().copied().collect()
    }
}

/// Lowest `count` Neumann eigenpairs; vectors are sign-normalized so their
/// first entry of largest magnitude is positive.
pub fn solve_neumann_eigs(
    system: &FemSystem,
    mesh: &SymmetricMesh,
    count: usize,
    opts: &EigenOptions,
    exec: Execution,
) -> Result<NeumannSpectrum> {
    let pairs = lowest_eigenpairs(&system.stiffness, &system.mass, count, opts, exec)?;
    let scale = pairs.values.last().copied().unwrap_or(1.0).abs().max(1.0);
    if pairs.values[0] < -1e-8 * scale {
        return Err(Error::Numerical(format!("negative eigenvalue {:e}", pairs.values[0])));
    }
    let mut vectors = pairs.vectors;
    for mut col in vectors.column_iter_mut() {
        let mut best = 0usize;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() * (1.0 + 1e-9) {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
    Ok(NeumannSpectrum { values: pairs.values, vectors, residuals: pairs.residuals, h: mesh.h_target })
}

/// Chord lengths from each boundary node to its predecessor and successor.
pub fn boundary_spacings(mesh: &SymmetricMesh) -> Vec<(f64, f64)> {
    let b = &mesh.boundary_loop;
    let n = b.len();
    let dist = |a: usize, c: usize| {
        let (p, q) = (mesh.vertices[a], mesh.vertices[c]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    };
    (0..n).map(|i| (dist(b[(i + n - 1) % n], b[i]), dist(b[i], b[(i + 1) % n]))).collect()
}

/// Trapezoidal quadrature weights at the boundary nodes.
pub fn boundary_weights(mesh: &SymmetricMesh) -> Vec<f64> {
    boundary_spacings(mesh).into_iter().map(|(a, b)| 0.5 * (a + b)).collect()
}

/// ∂_s u at every boundary node by the non-uniform three-point formula.
pub fn boundary_tangential_gradient(mesh: &SymmetricMesh, u: &[f64]) -> Vec<f64> {
    let b = &mesh.boundary_loop;
    let n = b.len();
    boundary_spacings(mesh)
        .into_iter()
        .enumerate()
        .map(|(i, (hm, hp))| {
            let (um, u0, up) = (u[b[(i + n - 1) % n]], u[b[i]], u[b[(i + 1) % n]]);
            -hp / (hm * (hm + hp)) * um + (hp - hm) / (hm * hp) * u0 + hm / (hp * (hm + hp)) * up
        })
        .collect()
}

/// `index,lambda,residual` rows.
pub fn spectrum_csv(spectrum: &NeumannSpectrum) -> String {
    let mut s = String::from("index,lambda,residual\n");
    for (i, (v, r)) in spectrum.values.iter().zip(&spectrum.residuals).enumerate() {
        let _ = writeln!(s, "{i},{v:.15e},{r:.3e}");
    }
    s
}
