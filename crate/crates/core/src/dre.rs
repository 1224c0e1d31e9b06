//! Krylov projection solver for `Ẋ = AX + XAᵀ + Q − XSX`, `X(0) = ZZᵀ`,
//! `Q = CCᵀ`: project onto `K_k(A, [Z C])`, solve the small system, lift.

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::dm::{self, SmallDre, SmallTrajectory};
use crate::error::{Error, Result};
use crate::krylov::{self, BlockKrylovDecomp, KrylovKind};
use crate::linalg::{self, DenseMatrix};
use crate::operators::LinearOperator;
use crate::par::{self, Execution};

/// The quadratic coefficient `S`.
#[derive(Clone, Debug)]
pub enum QuadraticTerm {
    /// Lyapunov mode.
    Zero,
    /// `S = BBᵀ` with `B` of size `n × r`.
    Factor(DenseMatrix),
    Dense(DenseMatrix),
}

#[derive(Clone, Debug)]
pub struct DreProblem {
    a: Arc<LinearOperator>,
    z: DenseMatrix,
    c: DenseMatrix,
    s: QuadraticTerm,
}

impl DreProblem {
    pub fn new(a: impl Into<Arc<LinearOperator>>, z: DenseMatrix, c: DenseMatrix, s: QuadraticTerm) -> Result<Self> {
        let a = a.into();
        let n = a.dim();
        for (what, m) in [("Z", &z), ("C", &c)] {
            if m.nrows() != n {
                return Err(Error::dim("DreProblem::new", format!("{what} with {n} rows"), format!("{} rows", m.nrows())));
            }
            linalg::ensure_finite(m, what)?;
        }
        match &s {
            QuadraticTerm::Zero => {}
            QuadraticTerm::Factor(b) => {
                if b.nrows() != n {
                    return Err(Error::dim("DreProblem::new", format!("B with {n} rows"), format!("{} rows", b.nrows())));
                }
                linalg::ensure_finite(b, "B")?;
            }
            QuadraticTerm::Dense(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::dim("DreProblem::new", format!("S {n}x{n}"), format!("{}x{}", m.nrows(), m.ncols())));
                }
                dm::check_sym_psd(m, "S")?;
            }
        }
        Ok(Self { a, z, c, s })
    }

    pub fn operator(&self) -> &LinearOperator {
        &self.a
    }

    pub fn operator_arc(&self) -> Arc<LinearOperator> {
        Arc::clone(&self.a)
    }

    pub fn z(&self) -> &DenseMatrix {
        &self.z
    }

    pub fn c(&self) -> &DenseMatrix {
        &self.c
    }

    pub fn s(&self) -> &QuadraticTerm {
        &self.s
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn is_lyapunov(&self) -> bool {
        matches!(self.s, QuadraticTerm::Zero)
    }

    /// Same `A`, `C`, `S` with a new initial factor.
    pub fn with_initial_factor(&self, z: DenseMatrix) -> Result<Self> {
        Self::new(Arc::clone(&self.a), z, self.c.clone(), self.s.clone())
    }

    pub fn with_quadratic(&self, s: QuadraticTerm) -> Result<Self> {
        Self::new(Arc::clone(&self.a), self.z.clone(), self.c.clone(), s)
    }

    /// The Krylov starting block `[Z C]`.
    pub fn start_block(&self) -> DenseMatrix {
        let n = self.dim();
        let (p, q) = (self.z.ncols(), self.c.ncols());
        let mut b = DenseMatrix::zeros(n, p + q);
        b.columns_mut(0, p).copy_from(&self.z);
        b.columns_mut(p, q).copy_from(&self.c);
        b
    }

    pub fn s_dense(&self) -> DenseMatrix {
        let n = self.dim();
        match &self.s {
            QuadraticTerm::Zero => DenseMatrix::zeros(n, n),
            QuadraticTerm::Factor(b) => b * b.transpose(),
            QuadraticTerm::Dense(m) => m.clone(),
        }
    }

    pub fn s_norm(&self) -> f64 {
        match &self.s {
            QuadraticTerm::Zero => 0.0,
            QuadraticTerm::Factor(b) => linalg::spectral_norm(b).powi(2),
            QuadraticTerm::Dense(m) => linalg::sym_spectral_norm(m),
        }
    }

    fn project_s(&self, v: &DenseMatrix) -> DenseMatrix {
        let d = v.ncols();
        match &self.s {
            QuadraticTerm::Zero => DenseMatrix::zeros(d, d),
            QuadraticTerm::Factor(b) => gram(&v.tr_mul(b)),
            QuadraticTerm::Dense(m) => linalg::symmetrize(&(v.tr_mul(m) * v)),
        }
    }
}

/// `F Fᵀ`, exactly symmetric.
fn gram(f: &DenseMatrix) -> DenseMatrix {
    linalg::symmetrize(&(f * f.transpose()))
}

/// `X = V Y Vᵀ` with orthonormal `V`.
#[derive(Clone, Debug)]
pub struct LowRankSym {
    pub v: DenseMatrix,
    pub y: DenseMatrix,
}

impl LowRankSym {
    pub fn new(v: DenseMatrix, y: DenseMatrix) -> Result<Self> {
        if y.nrows() != v.ncols() || y.ncols() != v.ncols() {
            return Err(Error::dim("LowRankSym::new", format!("Y {0}x{0}", v.ncols()), format!("{}x{}", y.nrows(), y.ncols())));
        }
        let asym = linalg::asymmetry(&y);
        if asym > 1e-12 * y.amax().max(1.0) {
            return Err(Error::NotSymmetric { what: "Y", asym });
        }
        Ok(Self { v, y })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            v: DenseMatrix::zeros(n, 0),
            y: DenseMatrix::zeros(0, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn inner_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        &self.v * &self.y * self.v.transpose()
    }

    /// `‖X‖₂ = ‖Y‖₂`.
    pub fn norm(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        linalg::sym_spectral_norm(&self.y)
    }

    /// A factor `F` with `X = FFᵀ`; negative eigenvalues of `Y` are dropped.
    pub fn factor(&self) -> DenseMatrix {
        if self.y.is_empty() {
            return DenseMatrix::zeros(self.dim(), 0);
        }
        let e = linalg::sym_eig(&self.y);
        let keep: Vec<usize> = (0..e.eigenvalues.len()).filter(|&i| e.eigenvalues[i] > 0.0).collect();
        let mut f = DenseMatrix::zeros(self.v.ncols(), keep.len());
        for (c, &i) in keep.iter().enumerate() {
            f.set_column(c, &(e.eigenvectors.column(i) * e.eigenvalues[i].sqrt()));
        }
        &self.v * f
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Timings {
    pub arnoldi: Duration,
    pub small_solve: Duration,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub state: LowRankSym,
    /// A posteriori estimate; `None` for rational bases.
    pub est: Option<f64>,
    /// Set when `μ(H) > 0`, where the estimate is only a heuristic.
    pub estimate_heuristic: bool,
    pub k_used: usize,
    pub basis_cols: usize,
    pub trajectory: Option<SmallTrajectory>,
    pub timings: Timings,
}

impl SolveOutcome {
    pub fn without_trajectory(mut self) -> Self {
        self.trajectory = None;
        self
    }
}

/// The projected system with `H = VᵀAV`, `S_k = VᵀSV`, `Q_k = (VᵀC)(VᵀC)ᵀ`
/// and `Y0 = (VᵀZ)(VᵀZ)ᵀ`. Fails if `[Z C]` is not inside `range(V)`.
pub fn project_problem(p: &DreProblem, decomp: &BlockKrylovDecomp) -> Result<SmallDre> {
    let v = &decomp.v;
    if v.nrows() != p.dim() {
        return Err(Error::dim("project_problem", format!("basis with {} rows", p.dim()), format!("{} rows", v.nrows())));
    }
    let b = p.start_block();
    let vb = v.tr_mul(&b);
    let rest = &b - v * &vb;
    let scale = linalg::spectral_norm(&b);
    let residual = if scale > 0.0 { linalg::spectral_norm(&rest) / scale } else { 0.0 };
    if !(residual <= 1e-8) {
        return Err(Error::ProjectionInvalid { residual });
    }
    let p_cols = p.z.ncols();
    let vz = vb.columns(0, p_cols).into_owned();
    let vc = vb.columns(p_cols, p.c.ncols()).into_owned();
    Ok(SmallDre::from_parts(decomp.h.clone(), p.project_s(v), gram(&vc), gram(&vz)))
}

/// Projected solve on a given decomposition.
pub fn solve_projected(p: &DreProblem, decomp: &BlockKrylovDecomp, t: f64, m: usize) -> Result<SolveOutcome> {
    let small = project_problem(p, decomp)?;
    let start = Instant::now();
    let traj = dm::solve_small_dre(&small, t, m)?;
    let small_solve = start.elapsed();
    let est = match decomp.kind {
        KrylovKind::Polynomial => Some(aposteriori_estimate(decomp, &traj)?),
        KrylovKind::Rational { .. } => None,
    };
    let estimate_heuristic = decomp.dim() > 0 && linalg::dense_log_norm(&decomp.h) > 0.0;
    Ok(SolveOutcome {
        state: LowRankSym {
            v: decomp.v.clone(),
            y: traj.last().clone(),
        },
        est,
        estimate_heuristic,
        k_used: decomp.steps,
        basis_cols: decomp.dim(),
        trajectory: Some(traj),
        timings: Timings {
            arnoldi: Duration::ZERO,
            small_solve,
        },
    })
}

/// One projection solve with `k` block Arnoldi steps.
pub fn solve_single(p: &DreProblem, t: f64, k: usize, m: usize) -> Result<SolveOutcome> {
    let start = Instant::now();
    let decomp = krylov::block_arnoldi(p.operator(), &p.start_block(), k)?;
    let arnoldi = start.elapsed();
    let mut out = solve_projected(p, &decomp, t, m)?;
    out.timings.arnoldi = arnoldi;
    Ok(out)
}

/// `‖H_{k+1,k} E_kᵀ Σ_{ℓ=1}^{m} Δt Y(ℓΔt)‖₂`.
pub fn aposteriori_estimate(decomp: &BlockKrylovDecomp, traj: &SmallTrajectory) -> Result<f64> {
    if decomp.kind != KrylovKind::Polynomial {
        return Err(Error::UnsupportedEstimate);
    }
    let d = decomp.dim();
    if traj.ys[0].nrows() != d {
        return Err(Error::dim("aposteriori_estimate", format!("trajectory of size {d}"), traj.ys[0].nrows()));
    }
    if decomp.u_next.ncols() == 0 {
        return Ok(0.0);
    }
    let w = decomp.last_block_width();
    let sum = traj.right_riemann_sum();
    let tail = sum.rows(d - w, w);
    Ok(linalg::spectral_norm(&(&decomp.h_next * tail)))
}

/// Grows the basis two block steps at a time (starting at `k = 2`, capped
/// at `k_max`) until the a posteriori estimate drops to `tol`.
pub fn solve_adaptive(p: &DreProblem, t: f64, tol: f64, m: usize, k_max: usize) -> Result<SolveOutcome> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    if k_max == 0 {
        return Err(Error::InvalidParameter("k_max must be >= 1".into()));
    }
    let op = p.operator();
    let mut k = 2.min(k_max);
    let start = Instant::now();
    let mut decomp = krylov::block_arnoldi(op, &p.start_block(), k)?;
    let mut arnoldi = start.elapsed();
    let mut best: Option<SolveOutcome> = None;
    loop {
        let mut out = solve_projected(p, &decomp, t, m)?;
        out.timings.arnoldi = arnoldi;
        let est = out.est.expect("polynomial basis");
        if est <= tol || decomp.is_exhausted() {
            return Ok(out);
        }
        if best.as_ref().is_none_or(|b| est < b.est.expect("polynomial basis")) {
            best = Some(out);
        }
        if k >= k_max {
            return Err(Error::ToleranceNotMet {
                tol,
                best: Box::new(best.expect("at least one evaluation")),
            });
        }
        let next = (k + 2).min(k_max);
        let start = Instant::now();
        decomp = krylov::extend(&decomp, op, next - k)?;
        arnoldi += start.elapsed();
        k = next;
    }
}

/// Solves for every `k` in `ks` from one decomposition built to the
/// largest `k`. Results follow the order of `ks`.
pub fn sweep_k(p: &DreProblem, t: f64, ks: &[usize], m: usize, exec: Execution) -> Result<Vec<SolveOutcome>> {
    let Some(&k_max) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let start = Instant::now();
    let full = krylov::block_arnoldi(p.operator(), &p.start_block(), k_max)?;
    let arnoldi = start.elapsed();
    par::map(ks, exec, |&k| {
        let decomp = full.truncate(k)?;
        let mut out = solve_projected(p, &decomp, t, m)?.without_trajectory();
        out.timings.arnoldi = arnoldi;
        Ok(out)
    })
    .into_iter()
    .collect()
}

/// `R_k = U G Vᵀ + V Gᵀ Uᵀ` with `G = H_{k+1,k} E_kᵀ Y`.
#[derive(Clone, Debug)]
pub struct Residual {
    pub u: DenseMatrix,
    pub g: DenseMatrix,
    pub v: DenseMatrix,
}

impl Residual {
    /// `‖R_k‖₂ = ‖G‖₂` because `U ⟂ V`.
    pub fn norm(&self) -> f64 {
        if self.g.is_empty() {
            return 0.0;
        }
        linalg::spectral_norm(&self.g)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let ugv = &self.u * &self.g * self.v.transpose();
        &ugv + ugv.transpose()
    }
}

pub fn residual(decomp: &BlockKrylovDecomp, y: &DenseMatrix) -> Result<Residual> {
    if decomp.kind != KrylovKind::Polynomial {
        return Err(Error::UnsupportedEstimate);
    }
    let d = decomp.dim();
    if y.nrows() != d || y.ncols() != d {
        return Err(Error::dim("residual", format!("Y {d}x{d}"), format!("{}x{}", y.nrows(), y.ncols())));
    }
    let w = decomp.last_block_width();
    let g = if decomp.u_next.ncols() == 0 {
        DenseMatrix::zeros(0, d)
    } else {
        &decomp.h_next * y.rows(d - w, w)
    };
    Ok(Residual {
        u: decomp.u_next.clone(),
        g,
        v: decomp.v.clone(),
    })
}
