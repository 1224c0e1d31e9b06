//! Multiple time stepping with a rank cut after every step. Each step
//! restarts the Krylov space from the truncated factor.

use std::time::{Duration, Instant};

use crate::bounds::rank_cut_budget;
use crate::dre::{self, DreProblem, LowRankSym, SolveOutcome};
use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Truncation {
    /// Drop eigenvalues `≤ ε`.
    Threshold(f64),
    /// Keep the `r` largest eigenvalues.
    Rank(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KPolicy {
    Fixed(usize),
    Adaptive { tol: f64, k_max: usize },
}

#[derive(Clone, Debug)]
pub struct StepPlan {
    pub h: f64,
    pub steps: usize,
    pub truncation: Truncation,
    pub m: usize,
    pub k_policy: KPolicy,
    /// Krylov steps for the first time step only (fixed policy).
    pub k_first: Option<usize>,
}

impl StepPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(format!("step size h = {} must be positive", self.h)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("step count N must be >= 1".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidParameter("substep count m must be >= 1".into()));
        }
        if let Truncation::Threshold(eps) = self.truncation {
            if !(eps >= 0.0) {
                return Err(Error::InvalidParameter(format!("eps_cut = {eps} must be >= 0")));
            }
        }
        match self.k_policy {
            KPolicy::Fixed(0) => return Err(Error::InvalidParameter("k must be >= 1".into())),
            KPolicy::Adaptive { tol, k_max } if !(tol > 0.0) || k_max == 0 => {
                return Err(Error::InvalidParameter("adaptive policy needs tol > 0 and k_max >= 1".into()))
            }
            _ => {}
        }
        if self.k_first == Some(0) {
            return Err(Error::InvalidParameter("k_first must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RankCut {
    pub state: LowRankSym,
    /// `Z'` with `state = Z' Z'ᵀ`.
    pub factor: DenseMatrix,
    /// Largest dropped eigenvalue, 0 if nothing was dropped.
    pub discarded: f64,
}

fn cut_with(x: &LowRankSym, keep: impl Fn(usize, f64) -> bool) -> RankCut {
    let n = x.dim();
    if x.inner_dim() == 0 {
        return RankCut {
            state: LowRankSym::zero(n),
            factor: DenseMatrix::zeros(n, 0),
            discarded: 0.0,
        };
    }
    let e = linalg::sym_eig(&x.y);
    let mut kept = Vec::new();
    let mut discarded = 0.0f64;
    for (i, &lambda) in e.eigenvalues.iter().enumerate() {
        let lambda = lambda.max(0.0);
        if lambda > 0.0 && keep(i, lambda) {
            kept.push((i, lambda));
        } else {
            discarded = discarded.max(lambda);
        }
    }
    let mut u = DenseMatrix::zeros(x.inner_dim(), kept.len());
    for (c, &(i, _)) in kept.iter().enumerate() {
        u.set_column(c, &e.eigenvectors.column(i));
    }
    let v = &x.v * u;
    let lambdas: Vec<f64> = kept.iter().map(|k| k.1).collect();
    let y = DenseMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas.clone()));
    let roots = DenseMatrix::from_diagonal(&nalgebra::DVector::from_iterator(lambdas.len(), lambdas.iter().map(|l| l.sqrt())));
    RankCut {
        factor: &v * roots,
        state: LowRankSym { v, y },
        discarded,
    }
}

/// Keeps eigenpairs of `Y` above `eps` (negative eigenvalues count as 0).
pub fn rank_cut(x: &LowRankSym, eps: f64) -> Result<RankCut> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must be >= 0")));
    }
    Ok(cut_with(x, |_, lambda| lambda > eps))
}

/// Keeps the `r` largest eigenpairs of `Y`.
pub fn rank_cut_to_rank(x: &LowRankSym, r: usize) -> RankCut {
    cut_with(x, |i, _| i < r)
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: usize,
    pub k_used: usize,
    pub est: f64,
    pub rank_before: usize,
    pub rank_after: usize,
    /// `ε_ℓ`, the largest eigenvalue dropped in this step.
    pub sigma_cut: f64,
    /// `Σ_{j≤ℓ} ε_j e^{2(ℓ−j)hμ}`.
    pub budget_mu: f64,
    /// `Σ_{j≤ℓ} ε_j`.
    pub budget_sum: f64,
    /// The adaptive policy hit `k_max` without meeting the tolerance.
    pub tolerance_missed: bool,
    pub elapsed: Duration,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub h: f64,
    pub mu: f64,
    pub steps: Vec<StepRecord>,
}

impl StepReport {
    pub fn cuts(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.sigma_cut).collect()
    }

    pub fn final_budget_mu(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.budget_mu)
    }

    pub fn final_budget_sum(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.budget_sum)
    }

    pub fn elapsed(&self) -> Duration {
        self.steps.iter().map(|s| s.elapsed).sum()
    }
}

/// Advances `plan.steps` steps of length `plan.h`, cutting the rank after
/// each. Returns the cut state after every step.
pub fn integrate(p: &DreProblem, plan: &StepPlan) -> Result<(Vec<LowRankSym>, StepReport)> {
    plan.validate()?;
    let mu = linalg::log_norm(p.operator())?.value;
    let mut z = p.z().clone();
    let mut states = Vec::with_capacity(plan.steps);
    let mut records: Vec<StepRecord> = Vec::with_capacity(plan.steps);
    let mut cuts = Vec::with_capacity(plan.steps);

    for step in 1..=plan.steps {
        let start = Instant::now();
        let current = p.with_initial_factor(z)?;
        let mut tolerance_missed = false;
        let outcome: SolveOutcome = match plan.k_policy {
            KPolicy::Fixed(k) => {
                let k = if step == 1 { plan.k_first.unwrap_or(k) } else { k };
                dre::solve_single(&current, plan.h, k, plan.m)?
            }
            KPolicy::Adaptive { tol, k_max } => match dre::solve_adaptive(&current, plan.h, tol, plan.m, k_max) {
                Ok(out) => out,
                Err(Error::ToleranceNotMet { best, .. }) => {
                    tolerance_missed = true;
                    *best
                }
                Err(e) => return Err(e),
            },
        };
        let rank_before = outcome.state.inner_dim();
        let cut = match plan.truncation {
            Truncation::Threshold(eps) => rank_cut(&outcome.state, eps)?,
            Truncation::Rank(r) => rank_cut_to_rank(&outcome.state, r),
        };
        cuts.push(cut.discarded);
        records.push(StepRecord {
            step,
            k_used: outcome.k_used,
            est: outcome.est.unwrap_or(f64::NAN),
            rank_before,
            rank_after: cut.state.inner_dim(),
            sigma_cut: cut.discarded,
            budget_mu: rank_cut_budget(&cuts, plan.h, mu),
            budget_sum: cuts.iter().sum(),
            tolerance_missed,
            elapsed: start.elapsed(),
        });
        z = cut.factor;
        states.push(cut.state);
    }
    Ok((
        states,
        StepReport {
            h: plan.h,
            mu,
            steps: records,
        },
    ))
}
