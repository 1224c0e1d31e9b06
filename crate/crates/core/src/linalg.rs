//! Dense kernels shared by every solver stage: the Padé-13 matrix
//! exponential, `phi1`, thin QR with deflation, symmetric eigensolves,
//! spectral and logarithmic norms.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::operators::LinearOperator;
use crate::rng::NormalStream;

pub type DenseMatrix = DMatrix<f64>;

/// Relative threshold below which a column is treated as linearly dependent.
pub const QR_DEFLATION_TOL: f64 = 1e-12;

/// Operators up to this dimension are materialized for norm computations.
pub const DENSE_THRESHOLD: usize = 1000;

pub const LANCZOS_MAX_ITER: usize = 60;
pub const LANCZOS_TOL: f64 = 1e-6;

pub fn ensure_finite(m: &DenseMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn norm_one(m: &DenseMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `M - Mᵀ`.
pub fn asymmetry(m: &DenseMatrix) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..j {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

// Coefficients of the [13/13] Padé approximant to exp.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Largest 1-norm for which the unscaled [13/13] approximant meets unit roundoff.
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with the diagonal [13/13]
/// Padé approximant.
pub fn expm(m: &DenseMatrix) -> Result<DenseMatrix> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::dim("expm", "square matrix", format!("{}x{}", n, m.ncols())));
    }
    ensure_finite(m, "expm input")?;
    if n == 0 {
        return Ok(DenseMatrix::zeros(0, 0));
    }

    let nrm = norm_one(m);
    let squarings = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let a = m * 2f64.powi(-(squarings as i32));

    let ident = DenseMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .ok_or(Error::Singular("Padé denominator in expm"))?;

    for _ in 0..squarings {
        r = &r * &r;
    }
    if !r.iter().all(|x| x.is_finite()) {
        return Err(Error::Overflow {
            squarings,
            norm_one: nrm,
        });
    }
    Ok(r)
}

/// `(e^z - 1) / z`, continuous at zero.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-2 {
        // 10-term Taylor series, Horner form: sum_{l<10} z^l / (l+1)!
        let mut acc = 1.0 / 3628800.0; // 1/10!
        for l in (0..9).rev() {
            acc = acc * z + 1.0 / factorial(l + 1);
        }
        acc
    } else {
        z.exp_m1() / z
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

/// Thin QR factorization with column-wise deflation.
///
/// Columns whose orthogonal remainder falls below
/// `QR_DEFLATION_TOL * ‖B‖_F` are dropped from `q` and listed in
/// `deflated`; `r` then has one row per kept column (staircase form). For
/// full-rank input `r` is square upper triangular with nonnegative diagonal.
#[derive(Clone, Debug)]
pub struct ThinQr {
    pub q: DenseMatrix,
    pub r: DenseMatrix,
    /// Input column that produced each column of `q`.
    pub kept: Vec<usize>,
    pub deflated: Vec<usize>,
}

impl ThinQr {
    pub fn rank(&self) -> usize {
        self.kept.len()
    }
}

pub fn thin_qr(b: &DenseMatrix) -> ThinQr {
    let scale = b.norm();
    let empty = DenseMatrix::zeros(b.nrows(), 0);
    orthonormalize_against(&empty, b, scale, QR_DEFLATION_TOL).1
}

/// Orthonormalizes the columns of `w` against the orthonormal columns of
/// `basis` and against each other (classical Gram–Schmidt, two passes, a
/// third when the second still removes more than half the norm).
///
/// Returns the coefficients on `basis` (`basis.ncols() × w.ncols()`) and
/// the QR of the remainder. Deflation is judged against `scale`, not the
/// remainder's own size, so a block that is pure cancellation noise is
/// recognized as dependent.
pub fn orthonormalize_against(
    basis: &DenseMatrix,
    w: &DenseMatrix,
    scale: f64,
    tol: f64,
) -> (DenseMatrix, ThinQr) {
    let n = w.nrows();
    let cols = w.ncols();
    let d = basis.ncols();
    let mut basis_coeffs = DenseMatrix::zeros(d, cols);
    let mut q_cols: Vec<DVector<f64>> = Vec::new();
    let mut r_entries: Vec<Vec<f64>> = Vec::new(); // per column of w: coeffs on q_cols
    let mut kept = Vec::new();
    let mut deflated = Vec::new();
    let threshold = tol * scale;

    for j in 0..cols {
        let mut v: DVector<f64> = w.column(j).into_owned();
        let mut local = vec![0.0; q_cols.len()];
        let mut prev_norm = v.norm();
        for pass in 0..3 {
            if d > 0 {
                let c = basis.tr_mul(&v);
                v -= basis * &c;
                for i in 0..d {
                    basis_coeffs[(i, j)] += c[i];
                }
            }
            for (i, q) in q_cols.iter().enumerate() {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
                local[i] += c;
            }
            let now = v.norm();
            if pass >= 1 && now > 0.5 * prev_norm {
                break;
            }
            prev_norm = now;
        }
        let norm = v.norm();
        if norm <= threshold || norm == 0.0 {
            deflated.push(j);
        } else {
            q_cols.push(v / norm);
            local.push(norm);
            kept.push(j);
        }
        r_entries.push(local);
    }

    let rank = q_cols.len();
    let mut q = DenseMatrix::zeros(n, rank);
    for (i, c) in q_cols.iter().enumerate() {
        q.set_column(i, c);
    }
    let mut r = DenseMatrix::zeros(rank, cols);
    for (j, entries) in r_entries.iter().enumerate() {
        for (i, &x) in entries.iter().enumerate() {
            r[(i, j)] = x;
        }
    }
    (
        basis_coeffs,
        ThinQr {
            q,
            r,
            kept,
            deflated,
        },
    )
}

/// Eigendecomposition of a symmetric matrix, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct SymEigDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DenseMatrix,
}

impl SymEigDecomp {
    pub fn reconstruct(&self) -> DenseMatrix {
        let v = &self.eigenvectors;
        v * DenseMatrix::from_diagonal(&self.eigenvalues) * v.transpose()
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.get(0).copied().unwrap_or(0.0)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues
            .get(self.eigenvalues.len().wrapping_sub(1))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Symmetric eigendecomposition of `(M + Mᵀ)/2`.
pub fn sym_eig(m: &DenseMatrix) -> SymEigDecomp {
    let n = m.nrows();
    if n == 0 {
        return SymEigDecomp {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DenseMatrix::zeros(0, 0),
        };
    }
    let SymmetricEigen {
        eigenvalues,
        eigenvectors,
    } = symmetrize(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eigenvalues[i]));
    let mut vecs = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eigenvectors.column(src));
    }
    SymEigDecomp {
        eigenvalues: vals,
        eigenvectors: vecs,
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &DenseMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Spectral norm of a symmetric matrix via its eigenvalues.
pub fn sym_spectral_norm(m: &DenseMatrix) -> f64 {
    let e = sym_eig(m);
    e.max().abs().max(e.min().abs())
}

pub fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    sym_eig(m).min()
}

/// `μ(M) = λ_max((M + Mᵀ)/2)` for a dense matrix.
pub fn dense_log_norm(m: &DenseMatrix) -> f64 {
    sym_eig(m).max()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogNorm {
    pub value: f64,
    /// False when the Lanczos estimate hit the iteration cap.
    pub converged: bool,
}

/// Logarithmic (2-)norm of an operator.
///
/// Dense eigensolve up to [`DENSE_THRESHOLD`], symmetric Lanczos on
/// `(A + Aᵀ)/2` beyond.
pub fn log_norm(op: &LinearOperator) -> Result<LogNorm> {
    if op.dim() <= DENSE_THRESHOLD {
        let a = op.to_dense()?;
        return Ok(LogNorm {
            value: dense_log_norm(&a),
            converged: true,
        });
    }
    let ext = lanczos_extremes(
        |x| {
            let x = DenseMatrix::from_column_slice(x.len(), 1, x.as_slice());
            let y = (op.apply_block(&x)? + op.apply_transpose_block(&x)?) * 0.5;
            Ok(DVector::from_column_slice(y.as_slice()))
        },
        op.dim(),
        LANCZOS_MAX_ITER,
        LANCZOS_TOL,
    )?;
    Ok(LogNorm {
        value: ext.max,
        converged: ext.max_converged,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct LanczosExtremes {
    pub max: f64,
    pub min: f64,
    pub max_converged: bool,
    pub min_converged: bool,
    pub iterations: usize,
}

/// Extreme eigenvalues of a symmetric operator by Lanczos with full
/// reorthogonalization. Convergence: Ritz residual `β_j |s_j|` at most
/// `tol · |θ|`.
pub fn lanczos_extremes<F>(apply: F, n: usize, max_iter: usize, tol: f64) -> Result<LanczosExtremes>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut start = NormalStream::new(0x5eed_1a2c);
    let mut q = DVector::from_iterator(n, (0..n).map(|_| start.normal()));
    q /= q.norm();
    let mut basis: Vec<DVector<f64>> = vec![q];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let steps = max_iter.min(n).max(1);
    let mut out = LanczosExtremes {
        max: 0.0,
        min: 0.0,
        max_converged: false,
        min_converged: false,
        iterations: 0,
    };

    for j in 0..steps {
        let mut w = apply(&basis[j])?;
        let alpha = basis[j].dot(&w);
        alphas.push(alpha);
        for _ in 0..2 {
            for v in &basis {
                let c = v.dot(&w);
                w.axpy(-c, v, 1.0);
            }
        }
        let beta = w.norm();

        let m = alphas.len();
        let mut t = DenseMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let e = sym_eig(&t);
        let last = m - 1;
        let res_max = beta * e.eigenvectors[(last, 0)].abs();
        let res_min = beta * e.eigenvectors[(last, m - 1)].abs();
        out.max = e.max();
        out.min = e.min();
        out.iterations = m;
        out.max_converged = res_max <= tol * out.max.abs().max(f64::MIN_POSITIVE);
        out.min_converged = res_min <= tol * out.min.abs().max(f64::MIN_POSITIVE);
        if (out.max_converged && out.min_converged) || beta <= 1e-14 * out.max.abs().max(out.min.abs()) {
            out.max_converged = true;
            out.min_converged = true;
            break;
        }
        if j + 1 == steps {
            break;
        }
        betas.push(beta);
        basis.push(w / beta);
    }
    Ok(out)
}
