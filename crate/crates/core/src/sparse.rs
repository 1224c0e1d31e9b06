//! Compressed sparse row storage and banded direct solvers.
//!
//! The direct solvers reorder the matrix with reverse Cuthill–McKee on the
//! symmetrized pattern and then factor the resulting band, which keeps fill
//! confined to the envelope. This suits the discretized-PDE matrices the
//! solver targets; it is not a general-purpose sparse LU.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseCsr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCsr {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        for &(i, j, v) in &sorted {
            if i >= nrows || j >= ncols {
                return Err(Error::dim(
                    "SparseCsr::from_triplets",
                    format!("indices < {nrows}x{ncols}"),
                    format!("({i}, {j})"),
                ));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse entry"));
            }
        }
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            indices.push(j);
            values.push(v);
            indptr[i + 1] += 1;
            last = Some((i, j));
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Keeps the nonzero entries of a dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    trip.push((i, j, m[(i, j)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).expect("dense entries are in range")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.indptr[i]..self.indptr[i + 1];
        match self.indices[span.clone()].binary_search(&j) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Checks the structural invariants (monotone pointers, sorted in-range
    /// column indices).
    pub fn validate(&self) -> Result<()> {
        if self.indptr.len() != self.nrows + 1 || self.indptr[self.nrows] != self.nnz() {
            return Err(Error::InvalidParameter("CSR row pointers inconsistent with nnz".into()));
        }
        for i in 0..self.nrows {
            if self.indptr[i] > self.indptr[i + 1] {
                return Err(Error::InvalidParameter(format!("CSR row pointer decreases at row {i}")));
            }
            let cols = &self.indices[self.indptr[i]..self.indptr[i + 1]];
            if cols.windows(2).any(|w| w[0] >= w[1]) || cols.iter().any(|&j| j >= self.ncols) {
                return Err(Error::InvalidParameter(format!("CSR column indices unsorted or out of range in row {i}")));
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let trip: Vec<_> = self.triplets().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &trip).expect("transposed indices are in range")
    }

    /// `alpha * self + beta * other`.
    pub fn linear_combination(&self, alpha: f64, other: &SparseCsr, beta: f64) -> Result<Self> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(Error::dim(
                "SparseCsr::linear_combination",
                format!("{}x{}", self.nrows, self.ncols),
                format!("{}x{}", other.nrows, other.ncols),
            ));
        }
        let trip: Vec<_> = self
            .triplets()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.triplets().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &trip)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// `self * B`.
    pub fn apply(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.ncols {
            return Err(Error::dim("SparseCsr::apply", format!("{} rows", self.ncols), format!("{} rows", b.nrows())));
        }
        let exec = if self.nnz() * b.ncols() > 1 << 16 {
            Execution::Parallel
        } else {
            Execution::Sequential
        };
        let cols = par::map_range(0..b.ncols(), exec, |c| {
            let x = b.column(c);
            DVector::from_iterator(self.nrows, (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()))
        });
        if cols.is_empty() {
            return Ok(DMatrix::zeros(self.nrows, 0));
        }
        Ok(DMatrix::from_columns(&cols))
    }

    /// `selfᵀ * B`.
    pub fn apply_transpose(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.nrows {
            return Err(Error::dim(
                "SparseCsr::apply_transpose",
                format!("{} rows", self.nrows),
                format!("{} rows", b.nrows()),
            ));
        }
        let mut out = DMatrix::zeros(self.ncols, b.ncols());
        for c in 0..b.ncols() {
            for i in 0..self.nrows {
                let bi = b[(i, c)];
                if bi == 0.0 {
                    continue;
                }
                for (j, v) in self.row(i) {
                    out[(j, c)] += v * bi;
                }
            }
        }
        Ok(out)
    }

    /// Symmetrized adjacency lists without self loops.
    fn symmetric_pattern(&self) -> Vec<Vec<usize>> {
        let n = self.nrows;
        let mut adj = vec![Vec::new(); n];
        for (i, j, _) in self.triplets() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }
}

/// Reverse Cuthill–McKee ordering; `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseCsr) -> Vec<usize> {
    let adj = a.symmetric_pattern();
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let bfs_levels = |start: usize, mask: &[bool]| -> Vec<usize> {
        // returns last level of the BFS tree from `start`
        let mut seen = mask.to_vec();
        seen[start] = true;
        let mut level = vec![start];
        loop {
            let mut next = Vec::new();
            for &u in &level {
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        next.push(v);
                    }
                }
            }
            if next.is_empty() {
                return level;
            }
            level = next;
        }
    };

    while order.len() < n {
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .expect("unvisited node remains");
        // pseudo-peripheral start: hop to a min-degree node of the last level
        for _ in 0..2 {
            let last = bfs_levels(start, &visited);
            let cand = *last.iter().min_by_key(|&&i| degree[i]).unwrap();
            if cand == start {
                break;
            }
            start = cand;
        }
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut nbrs: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            nbrs.sort_by_key(|&v| degree[v]);
            for v in nbrs {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

/// Lower and upper bandwidth of `P A Pᵀ`.
fn bandwidths(a: &SparseCsr, inv: &[usize]) -> (usize, usize) {
    let (mut kl, mut ku) = (0, 0);
    for (i, j, _) in a.triplets() {
        let (pi, pj) = (inv[i], inv[j]);
        if pi > pj {
            kl = kl.max(pi - pj);
        } else {
            ku = ku.max(pj - pi);
        }
    }
    (kl, ku)
}

/// Banded LU with partial pivoting on an RCM-reordered matrix.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    perm: Vec<usize>,
}

impl BandLu {
    pub fn factor(a: &SparseCsr) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::dim("BandLu::factor", "square matrix", format!("{}x{}", n, a.ncols())));
        }
        let perm = reverse_cuthill_mckee(a);
        let inv = inverse_perm(&perm);
        let (kl, ku) = bandwidths(a, &inv);
        let kv = kl + ku;
        let ldab = 2 * kl + ku + 1;
        let mut ab = vec![0.0; ldab * n.max(1)];
        let idx = |r: usize, c: usize| c * ldab + r;
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            ab[idx(kv + pi - pj, pj)] += v;
        }
        let tiny = 1e-14 * a.max_abs().max(f64::MIN_POSITIVE);

        let mut ipiv = vec![0; n];
        let mut ju = 0usize;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut jp = 0;
            let mut best = ab[idx(kv, j)].abs();
            for p in 1..=km {
                let v = ab[idx(kv + p, j)].abs();
                if v > best {
                    best = v;
                    jp = p;
                }
            }
            ipiv[j] = j + jp;
            if best <= tiny {
                return Err(Error::Singular("banded LU pivot vanished"));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    ab.swap(idx(kv + j - c, c), idx(kv + j + jp - c, c));
                }
            }
            let piv = ab[idx(kv, j)];
            for p in 1..=km {
                ab[idx(kv + p, j)] /= piv;
            }
            for c in j + 1..=ju {
                let x = ab[idx(kv + j - c, c)];
                if x != 0.0 {
                    for p in 1..=km {
                        ab[idx(kv + j + p - c, c)] -= ab[idx(kv + p, j)] * x;
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            ldab,
            ab,
            ipiv,
            perm,
        })
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn solve_permuted(&self, b: &mut [f64]) {
        let n = self.n;
        let kv = self.kl + self.ku;
        let ab = &self.ab;
        let idx = |r: usize, c: usize| c * self.ldab + r;
        for j in 0..n {
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            for p in 1..=km {
                b[j + p] -= ab[idx(kv + p, j)] * bj;
            }
        }
        for j in (0..n).rev() {
            b[j] /= ab[idx(kv, j)];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= ab[idx(kv + i - j, j)] * bj;
            }
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        solve_columns(self.n, &self.perm, b, |x| self.solve_permuted(x))
    }
}

fn solve_columns(n: usize, perm: &[usize], b: &DMatrix<f64>, solve: impl Fn(&mut [f64])) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, b.ncols());
    let mut work = vec![0.0; n];
    for c in 0..b.ncols() {
        for (new, &old) in perm.iter().enumerate() {
            work[new] = b[(old, c)];
        }
        solve(&mut work);
        for (new, &old) in perm.iter().enumerate() {
            out[(old, c)] = work[new];
        }
    }
    out
}

/// Banded Cholesky on an RCM-reordered symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct BandCholesky {
    n: usize,
    kb: usize,
    l: Vec<f64>, // (kb+1) x n, entry (i, j), i >= j, stored at (i - j, j)
    perm: Vec<usize>,
}

impl BandCholesky {
    pub fn factor(a: &SparseCsr) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::dim("BandCholesky::factor", "square matrix", format!("{}x{}", n, a.ncols())));
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        if a.asymmetry() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric"));
        }
        let perm = reverse_cuthill_mckee(a);
        let inv = inverse_perm(&perm);
        let (kb, _) = bandwidths(a, &inv);
        let ld = kb + 1;
        let mut l = vec![0.0; ld * n.max(1)];
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pi >= pj {
                l[pj * ld + (pi - pj)] = v;
            }
        }
        let at = |l: &Vec<f64>, i: usize, j: usize| l[j * ld + (i - j)];
        for j in 0..n {
            let lo = j.saturating_sub(kb);
            let mut s = at(&l, j, j);
            for k in lo..j {
                s -= at(&l, j, k).powi(2);
            }
            if s <= 0.0 || !s.is_finite() {
                return Err(Error::NotPositiveDefinite("banded Cholesky pivot is not positive"));
            }
            let d = s.sqrt();
            l[j * ld] = d;
            for i in j + 1..(j + kb + 1).min(n) {
                let lo_i = i.saturating_sub(kb);
                let mut s = at(&l, i, j);
                for k in lo_i.max(lo)..j {
                    s -= at(&l, i, k) * at(&l, j, k);
                }
                l[j * ld + (i - j)] = s / d;
            }
        }
        Ok(Self { n, kb, l, perm })
    }

    fn solve_permuted(&self, b: &mut [f64]) {
        let ld = self.kb + 1;
        let n = self.n;
        for j in 0..n {
            b[j] /= self.l[j * ld];
            let bj = b[j];
            let end = (j + self.kb + 1).min(n);
            for (bi, lij) in b[j + 1..end].iter_mut().zip(&self.l[j * ld + 1..]) {
                *bi -= lij * bj;
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            let end = (j + self.kb + 1).min(n);
            for (bi, lij) in b[j + 1..end].iter().zip(&self.l[j * ld + 1..]) {
                s -= lij * bi;
            }
            b[j] = s / self.l[j * ld];
        }
    }

    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        solve_columns(self.n, &self.perm, b, |x| self.solve_permuted(x))
    }
}
