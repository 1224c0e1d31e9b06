//! Block Krylov decompositions `A V = V H + U_next H_next E_kᵀ`, polynomial
//! and rational.

use crate::error::{Error, Result};
use crate::linalg::{self, orthonormalize_against, DenseMatrix, QR_DEFLATION_TOL};
use crate::operators::LinearOperator;

#[derive(Clone, Debug, PartialEq)]
pub enum KrylovKind {
    Polynomial,
    Rational { poles: Vec<f64> },
}

/// Orthonormal basis of a block Krylov space plus its projection.
///
/// Blocks can shrink when a new block is (partially) linearly dependent;
/// `deflated` lists `(block index, dropped columns)` with 1-based block
/// indices, so a block Krylov space that becomes invariant after the first
/// block records `(2, ℓ)`.
#[derive(Clone, Debug)]
pub struct BlockKrylovDecomp {
    pub v: DenseMatrix,
    pub h: DenseMatrix,
    /// Coupling `H_{k+1,k}`: `ℓ' × (width of the last block)`.
    pub h_next: DenseMatrix,
    pub u_next: DenseMatrix,
    /// Triangular factor of the starting block, `B = U_1 R_1`.
    pub r1: DenseMatrix,
    pub block_sizes: Vec<usize>,
    pub steps: usize,
    pub deflated: Vec<(usize, usize)>,
    pub kind: KrylovKind,
}

impl BlockKrylovDecomp {
    pub fn dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn last_block_width(&self) -> usize {
        self.block_sizes.last().copied().unwrap_or(0)
    }

    /// True once a new block deflated completely: the space is invariant.
    pub fn is_exhausted(&self) -> bool {
        self.kind == KrylovKind::Polynomial && self.u_next.ncols() == 0
    }

    pub fn orthogonality_error(&self) -> f64 {
        let d = self.v.ncols();
        (self.v.tr_mul(&self.v) - DenseMatrix::identity(d, d)).amax()
    }

    /// `‖A V − V H − U_next H_next E_kᵀ‖₂`.
    pub fn arnoldi_residual(&self, op: &LinearOperator) -> Result<f64> {
        let mut r = op.apply_block(&self.v)? - &self.v * &self.h;
        let w = self.last_block_width();
        if self.u_next.ncols() > 0 {
            let d = self.dim();
            let tail = &self.u_next * &self.h_next;
            let mut cols = r.columns_mut(d - w, w);
            cols -= tail;
        }
        Ok(linalg::spectral_norm(&r))
    }

    /// The decomposition after the first `k` blocks, as if built with `k`
    /// steps. Values of `k` beyond `steps` return a clone.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("truncate needs k >= 1".into()));
        }
        if k >= self.steps {
            return Ok(self.clone());
        }
        let d: usize = self.block_sizes[..k].iter().sum();
        let (h_next, u_next) = match self.kind {
            KrylovKind::Polynomial => {
                let next = self.block_sizes[k];
                let last = self.block_sizes[k - 1];
                (
                    self.h.view((d, d - last), (next, last)).into_owned(),
                    self.v.columns(d, next).into_owned(),
                )
            }
            KrylovKind::Rational { .. } => (DenseMatrix::zeros(0, 0), DenseMatrix::zeros(self.v.nrows(), 0)),
        };
        Ok(Self {
            v: self.v.columns(0, d).into_owned(),
            h: self.h.view((0, 0), (d, d)).into_owned(),
            h_next,
            u_next,
            r1: self.r1.clone(),
            block_sizes: self.block_sizes[..k].to_vec(),
            steps: k,
            deflated: {
                let limit = if self.kind == KrylovKind::Polynomial { k + 1 } else { k };
                self.deflated.iter().copied().filter(|&(b, _)| b <= limit).collect()
            },
            kind: self.kind.clone(),
        })
    }
}

fn start_block(op: &LinearOperator, b: &DenseMatrix, k: usize) -> Result<linalg::ThinQr> {
    if b.nrows() != op.dim() {
        return Err(Error::dim("block_arnoldi", format!("{} rows", op.dim()), format!("{} rows", b.nrows())));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("Krylov steps k must be >= 1".into()));
    }
    linalg::ensure_finite(b, "starting block")?;
    let qr = linalg::thin_qr(b);
    if qr.rank() == 0 {
        return Err(Error::EmptyBasis);
    }
    Ok(qr)
}

/// Block Arnoldi with `k` steps from the starting block `b`.
pub fn block_arnoldi(op: &LinearOperator, b: &DenseMatrix, k: usize) -> Result<BlockKrylovDecomp> {
    let qr = start_block(op, b, k)?;
    let mut deflated = Vec::new();
    if !qr.deflated.is_empty() {
        deflated.push((1, qr.deflated.len()));
    }
    let n = op.dim();
    let decomp = BlockKrylovDecomp {
        v: DenseMatrix::zeros(n, 0),
        h: DenseMatrix::zeros(0, 0),
        h_next: DenseMatrix::zeros(qr.rank(), 0),
        u_next: qr.q,
        r1: qr.r,
        block_sizes: Vec::new(),
        steps: 0,
        deflated,
        kind: KrylovKind::Polynomial,
    };
    advance(decomp, op, k)
}

/// Continues a polynomial decomposition by `extra_steps` more blocks.
/// Produces the same result as building with `k + extra_steps` from scratch.
pub fn extend(decomp: &BlockKrylovDecomp, op: &LinearOperator, extra_steps: usize) -> Result<BlockKrylovDecomp> {
    if decomp.kind != KrylovKind::Polynomial {
        return Err(Error::InvalidParameter("only polynomial decompositions can be extended".into()));
    }
    if decomp.v.nrows() != op.dim() {
        return Err(Error::dim("extend", format!("{} rows", op.dim()), format!("{} rows", decomp.v.nrows())));
    }
    advance(decomp.clone(), op, extra_steps)
}

fn advance(mut dc: BlockKrylovDecomp, op: &LinearOperator, extra: usize) -> Result<BlockKrylovDecomp> {
    for _ in 0..extra {
        let width = dc.u_next.ncols();
        if width == 0 {
            break;
        }
        // Append U_{j} and its coupling row to V and H.
        let d = dc.v.ncols();
        let last = dc.last_block_width();
        dc.v = dc.v.clone().resize_horizontally(d + width, 0.0);
        dc.v.columns_mut(d, width).copy_from(&dc.u_next);
        let mut h = dc.h.clone().resize(d + width, d + width, 0.0);
        if last > 0 {
            h.view_mut((d, d - last), (width, last)).copy_from(&dc.h_next);
        }
        dc.block_sizes.push(width);
        dc.steps += 1;

        let w = op.apply_block(&dc.u_next)?;
        let scale = w.norm();
        let (coeffs, qr) = orthonormalize_against(&dc.v, &w, scale, QR_DEFLATION_TOL);
        h.view_mut((0, d), (d + width, width)).copy_from(&coeffs);
        dc.h = h;
        if !qr.deflated.is_empty() {
            dc.deflated.push((dc.steps + 1, qr.deflated.len()));
        }
        dc.h_next = qr.r;
        dc.u_next = qr.q;
    }
    Ok(dc)
}

/// Rational block Krylov basis of `span{B, (s₁I−A)⁻¹B, …}` with `k`
/// blocks; pole `j` is `poles[j % poles.len()]`. `H = VᵀAV` is formed
/// explicitly and there is no coupling block.
pub fn rational_block_arnoldi(op: &LinearOperator, b: &DenseMatrix, poles: &[f64], k: usize) -> Result<BlockKrylovDecomp> {
    if poles.is_empty() {
        return Err(Error::InvalidParameter("at least one pole is required".into()));
    }
    let qr = start_block(op, b, k)?;
    let mut deflated = Vec::new();
    if !qr.deflated.is_empty() {
        deflated.push((1, qr.deflated.len()));
    }
    let mut v = qr.q;
    let mut block_sizes = vec![v.ncols()];
    let mut current = v.clone();
    for j in 1..k {
        let w = op.shifted_solve(poles[(j - 1) % poles.len()], &current)?;
        let (_, qr) = orthonormalize_against(&v, &w, w.norm(), QR_DEFLATION_TOL);
        if !qr.deflated.is_empty() {
            deflated.push((j + 1, qr.deflated.len()));
        }
        if qr.rank() == 0 {
            break;
        }
        let d = v.ncols();
        v = v.resize_horizontally(d + qr.rank(), 0.0);
        v.columns_mut(d, qr.rank()).copy_from(&qr.q);
        block_sizes.push(qr.rank());
        current = qr.q;
    }
    let av = op.apply_block(&v)?;
    let h = v.tr_mul(&av);
    Ok(BlockKrylovDecomp {
        steps: block_sizes.len(),
        h_next: DenseMatrix::zeros(0, 0),
        u_next: DenseMatrix::zeros(v.nrows(), 0),
        v,
        h,
        r1: qr.r,
        block_sizes,
        deflated,
        kind: KrylovKind::Rational { poles: poles.to_vec() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;
    use crate::sparse::SparseCsr;

    fn random_sparse(n: usize, seed: u64) -> LinearOperator {
        let mut rng = NormalStream::new(seed);
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, -2.0 + rng.normal()));
            for _ in 0..4 {
                let j = (rng.uniform() * n as f64) as usize;
                trip.push((i, j, rng.normal()));
            }
        }
        LinearOperator::sparse(SparseCsr::from_triplets(n, n, &trip).unwrap()).unwrap()
    }

    #[test]
    fn invariant_subspace_deflates() {
        let a = LinearOperator::sparse(SparseCsr::from_diagonal(&[1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        let mut e1 = DenseMatrix::zeros(5, 1);
        e1[0] = 1.0;
        let dc = block_arnoldi(&a, &e1, 3).unwrap();
        assert_eq!(dc.steps, 1);
        assert_eq!(dc.v, e1);
        assert_eq!(dc.h, DenseMatrix::from_element(1, 1, 1.0));
        assert_eq!(dc.deflated, vec![(2, 1)]);
        assert!(dc.is_exhausted());
        assert_eq!(dc.arnoldi_residual(&a).unwrap(), 0.0);
    }

    #[test]
    fn arnoldi_relation_on_random_sparse() {
        let a = random_sparse(50, 5);
        let b = NormalStream::new(5).matrix(50, 2);
        let dc = block_arnoldi(&a, &b, 4).unwrap();
        let norm_a = linalg::spectral_norm(&a.to_dense().unwrap());
        assert_eq!(dc.dim(), 8);
        assert!(dc.orthogonality_error() <= 1e-10);
        assert!(dc.arnoldi_residual(&a).unwrap() <= 1e-10 * norm_a);
        // B = U_1 R_1
        let u1 = dc.v.columns(0, 2);
        assert!((u1 * &dc.r1 - &b).amax() <= 1e-13 * b.amax());
        // block Hessenberg: zero below the first subdiagonal block
        for i in 4..8 {
            for j in 0..2 {
                assert_eq!(dc.h[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn full_space_reproduces_spectrum() {
        let n = 12;
        let g = NormalStream::new(21).matrix(n, n);
        let sym = (&g + g.transpose()) * 0.5;
        let a = LinearOperator::dense(sym.clone()).unwrap();
        let b = NormalStream::new(22).matrix(n, 3);
        let dc = block_arnoldi(&a, &b, 4).unwrap();
        assert_eq!(dc.dim(), n);
        let got = linalg::sym_eig(&dc.h).eigenvalues;
        let want = linalg::sym_eig(&sym).eigenvalues;
        assert!((got - want).amax() <= 1e-8);
    }

    #[test]
    fn extend_matches_recomputation() {
        let a = random_sparse(40, 7);
        let b = NormalStream::new(8).matrix(40, 2);
        let two = block_arnoldi(&a, &b, 2).unwrap();
        let three = block_arnoldi(&a, &b, 3).unwrap();
        let ext = extend(&two, &a, 1).unwrap();
        assert_eq!(ext.steps, 3);
        // align column signs before comparing
        let signs: Vec<f64> = (0..ext.dim())
            .map(|j| ext.v.column(j).dot(&three.v.column(j)).signum())
            .collect();
        let d = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(signs));
        assert!((&d * &ext.h * &d - &three.h).amax() <= 1e-12);
        assert!((&ext.v * &d - &three.v).amax() <= 1e-12);

        let same = extend(&two, &a, 0).unwrap();
        assert_eq!(same.v, two.v);
        assert_eq!(same.h, two.h);
    }

    #[test]
    fn extend_past_exhaustion_is_noop() {
        let a = LinearOperator::sparse(SparseCsr::from_diagonal(&[1.0, 2.0, 3.0])).unwrap();
        let b = DenseMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let dc = block_arnoldi(&a, &b, 5).unwrap();
        assert_eq!(dc.steps, 2);
        assert!(dc.is_exhausted());
        let more = extend(&dc, &a, 3).unwrap();
        assert_eq!(more.steps, 2);
        assert_eq!(more.deflated, dc.deflated);
    }

    #[test]
    fn truncate_matches_shorter_build() {
        let a = random_sparse(30, 3);
        let b = NormalStream::new(4).matrix(30, 3);
        let long = block_arnoldi(&a, &b, 5).unwrap();
        for k in 1..=5 {
            let short = block_arnoldi(&a, &b, k).unwrap();
            let cut = long.truncate(k).unwrap();
            assert_eq!(cut.v, short.v);
            assert_eq!(cut.h, short.h);
            assert_eq!(cut.h_next, short.h_next);
            assert_eq!(cut.u_next, short.u_next);
        }
    }

    #[test]
    fn rank_zero_block_errors() {
        let a = LinearOperator::identity(4);
        assert!(matches!(block_arnoldi(&a, &DenseMatrix::zeros(4, 2), 2), Err(Error::EmptyBasis)));
    }

    #[test]
    fn rational_examples() {
        let zero = LinearOperator::dense(DenseMatrix::zeros(6, 6)).unwrap();
        let b = NormalStream::new(1).matrix(6, 1);
        let dc = rational_block_arnoldi(&zero, &b, &[1.0], 4).unwrap();
        assert_eq!(dc.dim(), 1);
        assert_eq!(dc.deflated, vec![(2, 1)]);

        let a = random_sparse(60, 9);
        let b = NormalStream::new(9).matrix(60, 2);
        let dc = rational_block_arnoldi(&a, &b, &[1.0], 6).unwrap();
        assert!(dc.orthogonality_error() <= 1e-10);
        assert_eq!(dc.h_next.nrows(), 0);
        let want = dc.v.transpose() * a.to_dense().unwrap() * &dc.v;
        assert!((&dc.h - want).amax() <= 1e-12 * dc.h.amax());
    }

    #[test]
    fn rational_space_contains_shifted_solves() {
        let a = random_sparse(40, 13);
        let b = NormalStream::new(14).matrix(40, 1);
        let poles = [1.0, 2.0];
        let dc = rational_block_arnoldi(&a, &b, &poles, 3).unwrap();
        let x1 = a.shifted_solve(1.0, &b).unwrap();
        let x2 = a.shifted_solve(2.0, &x1).unwrap();
        for x in [&b, &x1, &x2] {
            let r = x - &dc.v * dc.v.tr_mul(x);
            assert!(r.norm() <= 1e-10 * x.norm());
        }
    }

    #[test]
    fn exponential_error_bound_holds() {
        let n = 60;
        for seed in 0..5 {
            let g = NormalStream::new(100 + seed).matrix(n, n) * (1.0 / (n as f64).sqrt());
            let mu = linalg::dense_log_norm(&g);
            let a = &g - DenseMatrix::identity(n, n) * mu.max(0.0);
            let op = LinearOperator::dense(a.clone()).unwrap();
            let b = NormalStream::new(200 + seed).matrix(n, 2);
            let t = 0.1;
            let exact = linalg::expm(&(&a * t)).unwrap() * &b;
            let norm_a = linalg::spectral_norm(&a);
            let mu_a = linalg::dense_log_norm(&a);
            for k in 1..=8 {
                let dc = block_arnoldi(&op, &b, k).unwrap();
                let approx = &dc.v * linalg::expm(&(&dc.h * t)).unwrap() * dc.v.tr_mul(&b);
                let err = linalg::spectral_norm(&(&exact - approx));
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                let bound = 2.0 * (t * mu_a).exp().max(1.0) * (t * norm_a).powi(k as i32) / fact * linalg::spectral_norm(&b);
                assert!(err <= bound + 1e-13, "seed {seed} k {k}: {err} > {bound}");
            }
        }
    }

    #[test]
    fn containment_and_field_of_values() {
        let a = random_sparse(50, 17);
        let ad = a.to_dense().unwrap();
        let b = NormalStream::new(18).matrix(50, 2);
        let dc = block_arnoldi(&a, &b, 5).unwrap();
        let norm_a = linalg::spectral_norm(&ad);
        let mut apow = b.clone();
        for j in 0..5 {
            let r = &apow - &dc.v * dc.v.tr_mul(&apow);
            assert!(linalg::spectral_norm(&r) <= 1e-8 * norm_a.powi(j) * linalg::spectral_norm(&b));
            apow = &ad * apow;
        }
        assert!(linalg::dense_log_norm(&dc.h) <= linalg::dense_log_norm(&ad) + 1e-8);
        assert!(linalg::spectral_norm(&dc.h) <= norm_a + 1e-8);
        let next = extend(&dc, &a, 1).unwrap();
        let r = &dc.v - &next.v * next.v.tr_mul(&dc.v);
        assert!(r.amax() <= 1e-12);
    }
}
