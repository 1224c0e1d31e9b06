use std::collections::BTreeMap;

use dre_krylov::bounds::{self, ProblemScalars};
use dre_krylov::dm::DEFAULT_SUBSTEPS;
use dre_krylov::dre::{self, DreProblem, SolveOutcome};
use dre_krylov::krylov;
use dre_krylov::linalg::{self, DenseMatrix};
use dre_krylov::oracle::{self, DenseDre, ORACLE_LIMIT};
use dre_krylov::par::Execution;
use dre_krylov::problems::ProblemSpec;
use dre_krylov::stepping::{self, KPolicy, StepPlan, Truncation};
use dre_krylov::Error;

use crate::config::{resolve, BoundsArgs, Command, CompareArgs, OracleArgs, Resolved, RunConfig, SolveArgs, SweepArgs, TimestepArgs};
use crate::table::{Cell, Table};
use crate::Failure;

const DEFAULT_K: usize = 10;
const DEFAULT_K_MAX: usize = 30;
const DEFAULT_STEPS: usize = 10;
const DEFAULT_ORACLE_TOL: f64 = 1e-7;
const TIMING_COLUMNS: [&str; 3] = ["arnoldi_s", "small_solve_s", "elapsed"];

pub fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Solve(a) => solve(a),
        Command::SweepK(a) => sweep(a),
        Command::Timestep(a) => timestep(a),
        Command::CompareRational(a) => compare_rational(a),
        Command::Bounds(a) => bounds_table(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

fn build(spec: &ProblemSpec) -> Result<DreProblem, Failure> {
    spec.build().map_err(|e| Failure::Usage(format!("problem: {e}")))
}

struct Run {
    cfg: RunConfig,
    problem: DreProblem,
    t: f64,
    m: usize,
}

impl Run {
    fn new(r: Resolved) -> Result<Self, Failure> {
        let problem = build(&r.problem)?;
        let t = r.cfg.t.unwrap_or_else(|| r.problem.default_horizon());
        let m = r.cfg.m.unwrap_or(DEFAULT_SUBSTEPS);
        Ok(Self { cfg: r.cfg, problem, t, m })
    }

    fn oracle_check(&self) -> bool {
        self.cfg.oracle_check.unwrap_or(false)
    }

    fn finish(&self, mut table: Table) -> Result<(), Failure> {
        if self.cfg.no_timings.unwrap_or(false) {
            table.drop_columns(&TIMING_COLUMNS);
        }
        table.write(self.cfg.output.as_deref())
    }
}

fn dense_of(p: &DreProblem) -> Result<DenseDre, Failure> {
    if p.dim() > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge { n: p.dim(), limit: ORACLE_LIMIT }.into());
    }
    Ok(DenseDre::from_problem(p)?)
}

/// Substeps for the dense oracle: at least `m`, and enough that each
/// substep has `Δt·(‖A‖ + ‖S‖ + ‖Q‖) ≤ 4`.
fn oracle_substeps(d: &DenseDre, t: f64, m: usize) -> usize {
    let scale = linalg::spectral_norm(&d.a) + linalg::sym_spectral_norm(&d.s) + linalg::sym_spectral_norm(&d.q);
    m.max((t * scale / 4.0).ceil() as usize)
}

fn oracle_solution(p: &DreProblem, t: f64, m: usize) -> Result<DenseMatrix, Failure> {
    let d = dense_of(p)?;
    Ok(oracle::dense_dre_solve(&d, t, oracle_substeps(&d, t, m))?)
}

fn err_norm(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    linalg::sym_spectral_norm(&linalg::symmetrize(&(a - b)))
}

/// Eigenvalues of `Y` above `d·ε·λ_max`.
fn numerical_rank(y: &DenseMatrix) -> usize {
    let ev = linalg::sym_eig(y).eigenvalues;
    let Some(&top) = ev.iter().next() else { return 0 };
    let cut = top.max(0.0) * y.nrows() as f64 * f64::EPSILON;
    ev.iter().filter(|&&l| l > cut).count()
}

fn solve(a: SolveArgs) -> Result<(), Failure> {
    let flags = RunConfig {
        t: a.t,
        k: a.k,
        tol: a.tol,
        k_max: a.k_max,
        oracle_check: a.oracle.oracle_check,
        ..Default::default()
    };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let (p, t, m) = (&run.problem, run.t, run.m);
    let (out, missed) = match run.cfg.tol {
        Some(tol) => match dre::solve_adaptive(p, t, tol, m, run.cfg.k_max.unwrap_or(DEFAULT_K_MAX)) {
            Ok(out) => (out, None),
            Err(Error::ToleranceNotMet { tol, best }) => {
                let msg = format!("tolerance {tol:e} not met by k = {}", best.k_used);
                (*best, Some(msg))
            }
            Err(e) => return Err(e.into()),
        },
        None => (dre::solve_single(p, t, run.cfg.k.unwrap_or(DEFAULT_K), m)?, None),
    };
    let mut header = vec!["k_used", "basis_cols", "est", "rank", "norm_X", "arnoldi_s", "small_solve_s"];
    let mut row = solve_row(&out);
    if run.oracle_check() {
        header.push("error");
        row.push(err_norm(&out.state.to_dense(), &oracle_solution(p, t, m)?).into());
    }
    let mut table = Table::new(header);
    table.push(row);
    run.finish(table)?;
    match missed {
        Some(msg) => Err(Failure::Numerical(msg)),
        None => Ok(()),
    }
}

fn solve_row(out: &SolveOutcome) -> Vec<Cell> {
    vec![
        out.k_used.into(),
        out.basis_cols.into(),
        out.est.into(),
        numerical_rank(&out.state.y).into(),
        out.state.norm().into(),
        out.timings.arnoldi.as_secs_f64().into(),
        out.timings.small_solve.as_secs_f64().into(),
    ]
}

fn in_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce(Execution) -> R + Send) -> Result<R, Failure> {
    match jobs {
        Some(0) => Err(Failure::Usage("jobs must be >= 1".into())),
        Some(1) => Ok(f(Execution::Sequential)),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Io(e.to_string()))?;
            Ok(pool.install(|| f(Execution::Parallel)))
        }
        None => Ok(f(Execution::Parallel)),
    }
}

struct BoundRow {
    lyapunov: Option<f64>,
    refined: Option<f64>,
    riccati: f64,
}

fn bound_row(p: &DreProblem, sc: &ProblemScalars, k: usize, t: f64) -> Result<BoundRow, Failure> {
    let lyap = p.is_lyapunov();
    let refined = match sc.rho {
        Some(rho) if lyap && rho > 0.0 => bounds::refined_symmetric_bound(k, t, rho, sc.norm_x0, sc.norm_q)?.best(),
        _ => None,
    };
    Ok(BoundRow {
        lyapunov: lyap.then(|| bounds::lyapunov_apriori(k, t, sc)),
        refined,
        riccati: bounds::riccati_apriori(k, t, sc),
    })
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let flags = RunConfig {
        t: a.t,
        k_max: a.k_max,
        jobs: a.jobs,
        emit_bounds: a.emit_bounds,
        emit_estimate: a.emit_estimate,
        oracle_check: a.oracle.oracle_check,
        ..Default::default()
    };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let (p, t, m) = (&run.problem, run.t, run.m);
    let k_max = run.cfg.k_max.unwrap_or(DEFAULT_K_MAX);
    if k_max == 0 {
        return Err(Failure::Usage("k_max must be >= 1".into()));
    }
    let ks: Vec<usize> = (1..=k_max).collect();
    let outs = in_pool(run.cfg.jobs, |exec| dre::sweep_k(p, t, &ks, m, exec))??;
    let oracle = if run.oracle_check() { Some(oracle_solution(p, t, m)?) } else { None };
    let scalars = if run.cfg.emit_bounds.unwrap_or(true) { Some(ProblemScalars::from_problem(p)?) } else { None };
    let emit_est = run.cfg.emit_estimate.unwrap_or(true);

    let mut header = vec!["k"];
    if oracle.is_some() {
        header.push("error");
    }
    header.extend(["est", "bound_thm41", "bound_eq43", "bound_thm45", "elapsed"]);
    let mut table = Table::new(header);
    for out in &outs {
        let mut row: Vec<Cell> = vec![out.k_used.into()];
        if let Some(x) = &oracle {
            row.push(err_norm(&out.state.to_dense(), x).into());
        }
        row.push(if emit_est { out.est.into() } else { Cell::Empty });
        match &scalars {
            Some(sc) => {
                let b = bound_row(p, sc, out.k_used, t)?;
                row.extend([b.lyapunov.into(), b.refined.into(), b.riccati.into()]);
            }
            None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty]),
        }
        row.push(out.timings.small_solve.as_secs_f64().into());
        table.push(row);
    }
    run.finish(table)
}

fn timestep(a: TimestepArgs) -> Result<(), Failure> {
    let flags = RunConfig {
        h: a.h,
        t: a.t,
        steps: a.steps,
        k: a.k,
        tol: a.tol,
        k_max: a.k_max,
        k_first: a.k_first,
        eps_cut: a.eps_cut,
        rank: a.rank,
        oracle_check: a.oracle.oracle_check,
        ..Default::default()
    };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let cfg = &run.cfg;
    let steps = cfg.steps.unwrap_or(DEFAULT_STEPS);
    if steps == 0 {
        return Err(Failure::Usage("steps must be >= 1".into()));
    }
    let h = match (cfg.h, cfg.t) {
        (Some(h), _) => h,
        (None, Some(t)) => t / steps as f64,
        (None, None) => return Err(Failure::Usage("timestep needs h or t".into())),
    };
    let truncation = match (cfg.eps_cut, cfg.rank) {
        (Some(eps), _) => Truncation::Threshold(eps),
        (None, Some(r)) => Truncation::Rank(r),
        (None, None) => return Err(Failure::Usage("timestep needs eps_cut or rank".into())),
    };
    let k_policy = match cfg.tol {
        Some(tol) => KPolicy::Adaptive { tol, k_max: cfg.k_max.unwrap_or(DEFAULT_K_MAX) },
        None => KPolicy::Fixed(cfg.k.unwrap_or(DEFAULT_K)),
    };
    let plan = StepPlan { h, steps, truncation, m: run.m, k_policy, k_first: cfg.k_first };
    plan.validate()?;
    let p = &run.problem;
    let (states, report) = stepping::integrate(p, &plan)?;

    // Oracle states at the step boundaries: one trajectory with `per` substeps per step.
    let oracle = if run.oracle_check() {
        let d = dense_of(p)?;
        let total = h * steps as f64;
        let per = oracle_substeps(&d, total, run.m).div_ceil(steps).max(1);
        let traj = oracle::dense_dre_trajectory(&d, total, per * steps)?;
        Some((1..=steps).map(|l| traj[l * per].clone()).collect::<Vec<_>>())
    } else {
        None
    };

    let mut header = vec!["step", "k_used", "est", "rank", "eps", "budget_62", "budget_71"];
    if oracle.is_some() {
        header.push("error");
    }
    header.push("elapsed");
    let mut table = Table::new(header);
    let mut errors = Vec::new();
    for (i, rec) in report.steps.iter().enumerate() {
        if rec.tolerance_missed {
            eprintln!("dre-krylov: step {}: tolerance not met at k = {}", rec.step, rec.k_used);
        }
        let mut row: Vec<Cell> = vec![
            rec.step.into(),
            rec.k_used.into(),
            rec.est.into(),
            rec.rank_after.into(),
            rec.sigma_cut.into(),
            rec.budget_mu.into(),
            rec.budget_sum.into(),
        ];
        if let Some(xs) = &oracle {
            let e = err_norm(&states[i].to_dense(), &xs[i]);
            errors.push(e);
            row.push(e.into());
        }
        row.push(rec.elapsed.as_secs_f64().into());
        table.push(row);
    }
    let last = report.steps.last().expect("steps >= 1");
    let mut total: Vec<Cell> = vec![
        "total".into(),
        report.steps.iter().map(|s| s.k_used).sum::<usize>().into(),
        report.steps.iter().map(|s| s.est).sum::<f64>().into(),
        last.rank_after.into(),
        report.final_budget_sum().into(),
        report.final_budget_mu().into(),
        report.final_budget_sum().into(),
    ];
    if oracle.is_some() {
        total.push(errors.last().copied().into());
    }
    total.push(report.elapsed().as_secs_f64().into());
    table.push(total);
    run.finish(table)
}

fn compare_rational(a: CompareArgs) -> Result<(), Failure> {
    let flags = RunConfig { t: a.t, k_max: a.k_max, poles: a.poles, ..Default::default() };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let (p, t, m) = (&run.problem, run.t, run.m);
    let poles = run.cfg.poles.clone().unwrap_or_else(|| vec![1.0]);
    let k_max = run.cfg.k_max.unwrap_or(DEFAULT_K_MAX);
    if k_max == 0 {
        return Err(Failure::Usage("k_max must be >= 1".into()));
    }
    let x = oracle_solution(p, t, m)?;
    let ev = linalg::sym_eig(&x).eigenvalues;

    let full = krylov::block_arnoldi(p.operator(), &p.start_block(), k_max)?;
    let mut poly = BTreeMap::new();
    for k in 1..=full.steps {
        let d = full.truncate(k)?;
        poly.insert(d.dim(), err_norm(&dre::solve_projected(p, &d, t, m)?.state.to_dense(), &x));
    }
    let mut rational = BTreeMap::new();
    for k in 1..=k_max {
        let d = krylov::rational_block_arnoldi(p.operator(), &p.start_block(), &poles, k)?;
        let dim = d.dim();
        if rational.contains_key(&dim) {
            break;
        }
        rational.insert(dim, err_norm(&dre::solve_projected(p, &d, t, m)?.state.to_dense(), &x));
    }

    let mut table = Table::new(vec!["basis_dim", "err_poly", "err_rational", "err_best_svd"]);
    let dims: std::collections::BTreeSet<usize> = poly.keys().chain(rational.keys()).copied().collect();
    for dim in dims {
        let best = if dim < ev.len() { ev[dim].max(0.0) } else { 0.0 };
        table.push(vec![dim.into(), poly.get(&dim).copied().into(), rational.get(&dim).copied().into(), best.into()]);
    }
    run.finish(table)
}

fn bounds_table(a: BoundsArgs) -> Result<(), Failure> {
    let flags = RunConfig { t: a.t, k_max: a.k_max, ..Default::default() };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let (p, t) = (&run.problem, run.t);
    let sc = ProblemScalars::from_problem(p)?;
    let mut table = Table::new(vec!["k", "exp_error", "bound_thm41", "bound_eq43", "bound_thm45"]);
    for k in 1..=run.cfg.k_max.unwrap_or(DEFAULT_K_MAX) {
        let b = bound_row(p, &sc, k, t)?;
        table.push(vec![k.into(), bounds::exp_error_bound(k, t, &sc).into(), b.lyapunov.into(), b.refined.into(), b.riccati.into()]);
    }
    run.finish(table)
}

fn oracle_check(a: OracleArgs) -> Result<(), Failure> {
    let flags = RunConfig { t: a.t, rk_steps: a.rk_steps, oracle_tol: a.oracle_tol, ..Default::default() };
    let run = Run::new(resolve(&a.common, flags)?)?;
    let (p, t, m) = (&run.problem, run.t, run.m);
    let d = dense_of(p)?;
    let m = oracle_substeps(&d, t, m);
    let x_dm = oracle::dense_dre_solve(&d, t, m)?;
    // RK4 is stable for h‖A‖ up to about 2.8; keep a wide margin.
    let rk_steps = run.cfg.rk_steps.unwrap_or_else(|| 1000.max((2.0 * t * linalg::spectral_norm(&d.a)).ceil() as usize));
    let x_rk = oracle::rk_dre_solve(&d, t, rk_steps)?;
    let diff = err_norm(&x_dm, &x_rk);
    let tol = run.cfg.oracle_tol.unwrap_or(DEFAULT_ORACLE_TOL);
    let mut table = Table::new(vec!["n", "t", "substeps", "rk_steps", "norm_dense", "norm_rk", "difference"]);
    table.push(vec![
        p.dim().into(),
        t.into(),
        m.into(),
        rk_steps.into(),
        linalg::sym_spectral_norm(&x_dm).into(),
        linalg::sym_spectral_norm(&x_rk).into(),
        diff.into(),
    ]);
    run.finish(table)?;
    if diff > tol {
        return Err(Failure::Numerical(format!("oracles differ by {diff:e} > {tol:e}")));
    }
    Ok(())
}
