//! Compressed sparse row matrices, reverse Cuthill–McKee ordering and a
//! skyline (profile) Cholesky factorization.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Square CSR matrix with sorted column indices in every row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the given sparsity rows (each row is sorted and deduplicated).
    pub fn from_pattern(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self { n, row_ptr, col_idx, values: vec![0.0; nnz] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (cols, _) = self.row(i);
        cols.binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Add `v` at (i, j); the entry must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j).expect("entry outside sparsity pattern");
        self.values[p] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum();
        }
    }

    /// `self + alpha · other`; both matrices must share a pattern.
    pub fn add_scaled(&self, alpha: f64, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.col_idx, other.col_idx, "pattern mismatch");
        let mut out = self.clone();
        for (a, b) in out.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        out
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Largest |a_ij − a_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                worst = worst.max((a - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                d[(i, j)] = a;
            }
        }
        d
    }
}

/// Reverse Cuthill–McKee ordering; `order[k]` is the original index placed at k.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).unwrap();
        let start = pseudo_peripheral(a, seed, &degree);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = a.row(v).0.iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(a: &CsrMatrix, start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; a.dim()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in a.row(v).0 {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(a: &CsrMatrix, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..10 {
        let level = bfs_levels(a, current);
        let depth = level.iter().filter(|&&l| l != usize::MAX).copied().max().unwrap_or(0);
        if depth <= ecc && current != seed {
            break;
        }
        ecc = depth;
        let far = (0..a.dim())
            .filter(|&i| level[i] == depth)
            .min_by_key(|&i| (degree[i], i))
            .unwrap_or(current);
        if far == current {
            break;
        }
        current = far;
    }
    current
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` stored by rows within the envelope.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    order: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factor a symmetric positive definite matrix after RCM reordering.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let order = reverse_cuthill_mckee(a);
        let mut pos = vec![0usize; n];
        for (k, &i) in order.iter().enumerate() {
            pos[i] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (k, &i) in order.iter().enumerate() {
            for &j in a.row(i).0 {
                first[k] = first[k].min(pos[j]);
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for k in 0..n {
            start.push(start[k] + (k - first[k] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for (k, &i) in order.iter().enumerate() {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let c = pos[j];
                if c <= k {
                    data[start[k] + (c - first[k])] = v;
                }
            }
        }

        for i in 0..n {
            let (fi, si) = (first[i], start[i]);
            for j in fi..i {
                let (fj, sj) = (first[j], start[j]);
                let lo = fi.max(fj);
                let mut acc = data[si + (j - fi)];
                let ri = &data[si + (lo - fi)..si + (j - fi)];
                let rj = &data[sj + (lo - fj)..sj + (j - fj)];
                acc -= dot(ri, rj);
                data[si + (j - fi)] = acc / data[sj + (j - fj)];
            }
            let row = &data[si..si + (i - fi)];
            let d = data[si + (i - fi)] - dot(row, row);
            if !(d > 0.0) {
                return Err(Error::Numerical(format!(
                    "matrix not positive definite at pivot {i} (value {d:e})"
                )));
            }
            data[si + (i - fi)] = d.sqrt();
        }
        Ok(Self { order, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    /// Number of stored factor entries.
    pub fn profile(&self) -> usize {
        self.data.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y: Vec<f64> = self.order.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let (fi, si) = (self.first[i], self.start[i]);
            let row = &self.data[si..si + (i - fi)];
            let s = dot(row, &y[fi..i]);
            y[i] = (y[i] - s) / self.data[si + (i - fi)];
        }
        for i in (0..n).rev() {
            let (fi, si) = (self.first[i], self.start[i]);
            y[i] /= self.data[si + (i - fi)];
            let yi = y[i];
            let row = &self.data[si..si + (i - fi)];
            for (yk, &l) in y[fi..i].iter_mut().zip(row) {
                *yk -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (k, &i) in self.order.iter().enumerate() {
            x[i] = y[k];
        }
        x
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
