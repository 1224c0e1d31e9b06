//! A priori bounds: solution norms, exponential and projection errors, and
//! the rank-cut error budget.

use crate::dre::DreProblem;
use crate::error::{Error, Result};
use crate::linalg::{self, phi1, DENSE_THRESHOLD, LANCZOS_MAX_ITER, LANCZOS_TOL};

/// Scalars of a problem that enter the bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProblemScalars {
    pub norm_a: f64,
    pub mu: f64,
    pub norm_x0: f64,
    pub norm_q: f64,
    pub norm_s: f64,
    /// `−λ_min(A)/4` for symmetric `A`, so the spectrum lies in `[−4ρ, 0]`
    /// when `A` is negative semidefinite.
    pub rho: Option<f64>,
}

impl ProblemScalars {
    pub fn from_problem(p: &DreProblem) -> Result<Self> {
        let op = p.operator();
        let norm_a = op.norm_estimate()?;
        let mu = linalg::log_norm(op)?.value;
        let rho = if let Some(spec) = op.spectrum() {
            Some(-spec.iter().copied().fold(f64::INFINITY, f64::min) / 4.0)
        } else if op.is_symmetric() {
            let min = if op.dim() <= DENSE_THRESHOLD {
                linalg::min_eigenvalue(&op.to_dense()?)
            } else {
                linalg::lanczos_extremes(
                    |x| {
                        let b = nalgebra::DMatrix::from_column_slice(x.len(), 1, x.as_slice());
                        Ok(nalgebra::DVector::from_column_slice(op.apply_block(&b)?.as_slice()))
                    },
                    op.dim(),
                    LANCZOS_MAX_ITER,
                    LANCZOS_TOL,
                )?
                .min
            };
            Some(-min / 4.0)
        } else {
            None
        };
        let sq = |m: &linalg::DenseMatrix| if m.is_empty() { 0.0 } else { linalg::spectral_norm(m).powi(2) };
        Ok(Self {
            norm_a,
            mu,
            norm_x0: sq(p.z()),
            norm_q: sq(p.c()),
            norm_s: p.s_norm(),
            rho,
        })
    }
}

/// `x^k / k!`, in log space for `k > 150`.
pub fn power_over_factorial(x: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if x == 0.0 {
        return 0.0;
    }
    if k <= 150 {
        return (1..=k).map(|i| x / i as f64).product();
    }
    let ln_fact: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
    (k as f64 * x.ln() - ln_fact).exp()
}

/// `‖X(t)‖ ≤ e^{2tμ}‖X₀‖ + t·φ₁(2tμ)‖Q‖`.
pub fn exact_solution_bound(t: f64, s: &ProblemScalars) -> f64 {
    let z = 2.0 * t * s.mu;
    z.exp() * s.norm_x0 + t * phi1(z) * s.norm_q
}

/// `max(1, e^{2tμ})‖X₀‖ + t·max(1, φ₁(2tμ))‖Q‖`, a bound on `‖X(s)‖` for
/// all `s ≤ t`.
pub fn max_solution_bound(t: f64, s: &ProblemScalars) -> f64 {
    let z = 2.0 * t * s.mu;
    z.exp().max(1.0) * s.norm_x0 + t * phi1(z).max(1.0) * s.norm_q
}

/// `2·max(1, e^{tμ})·(t‖A‖)^k/k!`, relative to `‖B‖`.
pub fn exp_error_bound(k: usize, t: f64, s: &ProblemScalars) -> f64 {
    2.0 * (t * s.mu).exp().max(1.0) * power_over_factorial(t * s.norm_a, k)
}

/// `‖A‖^k (t^k/k!·‖X₀‖ + t^{k+1}/(k+1)!·‖Q‖)`.
fn krylov_term(k: usize, t: f64, s: &ProblemScalars) -> f64 {
    let x = t * s.norm_a;
    let a = power_over_factorial(x, k) * s.norm_x0;
    let b = if s.norm_q == 0.0 {
        0.0
    } else {
        t * power_over_factorial(x, k) / (k as f64 + 1.0) * s.norm_q
    };
    a + b
}

/// Lyapunov projection error bound.
pub fn lyapunov_apriori(k: usize, t: f64, s: &ProblemScalars) -> f64 {
    4.0 * (2.0 * t * s.mu).exp().max(1.0) * krylov_term(k, t, s)
}

/// Refined bound for symmetric negative semidefinite `A` with spectrum in
/// `[−4ρ, 0]`. Each branch is present only inside its regime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefinedBound {
    /// `√(4ρt) ≤ k ≤ 2ρt`: `20 e^{−k²/(5ρt)}(‖X₀‖ + t‖Q‖)`.
    pub moderate: Option<f64>,
    /// `k ≥ 2ρt`: `20 (ρt)⁻¹ e^{−ρt} (eρt/k)^k (‖X₀‖ + t‖Q‖)`.
    pub large: Option<f64>,
}

impl RefinedBound {
    pub fn best(&self) -> Option<f64> {
        match (self.moderate, self.large) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

pub fn refined_symmetric_bound(k: usize, t: f64, rho: f64, norm_x0: f64, norm_q: f64) -> Result<RefinedBound> {
    if !(rho > 0.0) {
        return Err(Error::InvalidParameter(format!("rho = {rho} must be positive")));
    }
    let rt = rho * t;
    let kf = k as f64;
    let data = norm_x0 + t * norm_q;
    let moderate = (kf >= (4.0 * rt).sqrt() && kf <= 2.0 * rt).then(|| 20.0 * (-kf * kf / (5.0 * rt)).exp() * data);
    let large = (kf >= 2.0 * rt && k > 0).then(|| {
        let ln = -rt.ln() - rt + kf * (std::f64::consts::E * rt / kf).ln();
        20.0 * ln.exp() * data
    });
    Ok(RefinedBound { moderate, large })
}

/// Riccati projection error bound `c(t)‖A‖^k(t^k/k!‖X₀‖ + t^{k+1}/(k+1)!‖Q‖)`.
pub fn riccati_apriori(k: usize, t: f64, s: &ProblemScalars) -> f64 {
    let alpha = max_solution_bound(t, s);
    let g = t * s.norm_s * alpha;
    let em = (t * s.mu).exp().max(1.0);
    let c2 = 1.0 + g * phi1(g * em);
    let c = 4.0 * (1.0 + 2.0 * s.norm_s * alpha * em * c2) * g.exp();
    c * krylov_term(k, t, s)
}

/// `Σ_{ℓ=1}^{N} ε_ℓ e^{2(N−ℓ)hμ}`; with `μ = 0` the plain sum of the cuts.
pub fn rank_cut_budget(cuts: &[f64], h: f64, mu: f64) -> f64 {
    let n = cuts.len();
    cuts.iter()
        .enumerate()
        .map(|(i, eps)| eps * (2.0 * (n - 1 - i) as f64 * h * mu).exp())
        .sum()
}
