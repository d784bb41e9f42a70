//! Symmetric sparse matrices and an envelope (profile) Cholesky factorization
//! under reverse Cuthill-McKee ordering.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Symmetric matrix in CSR layout with both triangles stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Assembles from `(row, col, value)` triplets, summing duplicates. Each
    /// off-diagonal triplet is mirrored, so pass only one of `(i, j)`/`(j, i)`.
    pub fn from_upper_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len() * 2);
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("triplet ({i}, {j}) outside {n}x{n}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    op: "sparse assembly".into(),
                });
            }
            entries.push((i, j, v));
            if i != j {
                entries.push((j, i, v));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseSym {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(column, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `self * X` for a dense `X` with `n` rows.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            for i in 0..self.n {
                out[(i, c)] = self.row(i).map(|(j, v)| v * col[j]).sum();
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// `self + shift * diag(d)`.
    pub fn add_diagonal(&self, shift: f64, d: &[f64]) -> SparseSym {
        let mut out = self.clone();
        for (i, &di) in d.iter().enumerate().take(self.n) {
            let r = out.row_ptr[i]..out.row_ptr[i + 1];
            match out.col_idx[r.clone()].binary_search(&i) {
                Ok(p) => out.values[r.start + p] += shift * di,
                Err(_) => {
                    // every operator built here has a stored diagonal
                    panic!("add_diagonal: row {i} has no diagonal entry");
                }
            }
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (self.get(j, i) - v).abs() <= tol))
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph. `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &SparseSym) -> Vec<usize> {
    let n = m.n();
    let degree: Vec<usize> = (0..n).map(|i| m.row(i).filter(|&(j, _)| j != i).count()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .unwrap();
        let start = pseudo_peripheral(m, seed, &degree);
        let begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = begin;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = m
                .row(v)
                .map(|(j, _)| j)
                .filter(|&j| !visited[j])
                .collect();
            nbrs.sort_by_key(|&j| (degree[j], j));
            for j in nbrs {
                visited[j] = true;
                order.push(j);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(m: &SparseSym, start: usize) -> (usize, Vec<usize>) {
    let mut level = vec![usize::MAX; m.n()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for (j, _) in m.row(v) {
            if level[j] == usize::MAX {
                level[j] = level[v] + 1;
                if level[j] > depth {
                    depth = level[j];
                    last.clear();
                }
                if level[j] == depth {
                    last.push(j);
                }
                queue.push_back(j);
            }
        }
    }
    (depth, last)
}

fn pseudo_peripheral(m: &SparseSym, seed: usize, degree: &[usize]) -> usize {
    let mut current = seed;
    let (mut depth, mut last) = bfs_levels(m, current);
    for _ in 0..8 {
        let candidate = *last.iter().min_by_key(|&&j| (degree[j], j)).unwrap();
        let (d, l) = bfs_levels(m, candidate);
        if d <= depth {
            break;
        }
        current = candidate;
        depth = d;
        last = l;
    }
    current
}

/// Lower-triangular Cholesky factor stored by rows over each row's envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors a symmetric positive-definite matrix.
    pub fn factor(m: &SparseSym) -> Result<Self> {
        let n = m.n();
        let perm = reverse_cuthill_mckee(m);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first = vec![0usize; n];
        for (i, f) in first.iter_mut().enumerate() {
            *f = m.row(perm[i]).map(|(j, _)| inv[j]).filter(|&j| j <= i).min().unwrap_or(i);
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            for (j, v) in m.row(perm[i]) {
                let jn = inv[j];
                if jn <= i {
                    data[offset[i] + jn - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let lo = fi.max(fj);
                let mut s = data[offset[i] + j - fi];
                let ri = &data[offset[i] + lo - fi..offset[i] + j - fi];
                let rj = &data[offset[j] + lo - fj..offset[j] + j - fj];
                s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: perm[i], pivot: s });
                    }
                    data[offset[i] + i - fi] = s.sqrt();
                } else {
                    data[offset[i] + j - fi] = s / data[offset[j] + j - fj];
                }
            }
        }
        Ok(EnvelopeCholesky {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    /// Stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let s: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            y[i] /= row[i - fi];
            let xi = y[i];
            for (yj, a) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yj -= a * xi;
            }
        }
        for (i, &p) in self.perm.iter().enumerate() {
            b[p] = y[i];
        }
    }
}
