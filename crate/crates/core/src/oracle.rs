//! Dense reference solutions for small problems: Davison–Maki on the full
//! system, classical Runge–Kutta on the matrix ODE, and closed forms.

use crate::dm::{self, SmallDre};
use crate::dre::DreProblem;
use crate::error::{Error, Result};
use crate::linalg::{self, phi1, DenseMatrix};

/// Largest dimension the dense oracles accept.
pub const ORACLE_LIMIT: usize = 500;

/// Full-size data `(A, Q, S, X0)`.
#[derive(Clone, Debug)]
pub struct DenseDre {
    pub a: DenseMatrix,
    pub q: DenseMatrix,
    pub s: DenseMatrix,
    pub x0: DenseMatrix,
}

impl DenseDre {
    pub fn new(a: DenseMatrix, q: DenseMatrix, s: DenseMatrix, x0: DenseMatrix) -> Result<Self> {
        let n = a.nrows();
        if n > ORACLE_LIMIT {
            return Err(Error::OracleTooLarge { n, limit: ORACLE_LIMIT });
        }
        // validates shapes, symmetry and definiteness
        let small = SmallDre::new(a, s, q, x0)?;
        Ok(Self {
            a: small.h().clone(),
            q: small.q().clone(),
            s: small.s().clone(),
            x0: small.y0().clone(),
        })
    }

    pub fn from_problem(p: &DreProblem) -> Result<Self> {
        let n = p.dim();
        if n > ORACLE_LIMIT {
            return Err(Error::OracleTooLarge { n, limit: ORACLE_LIMIT });
        }
        Self::new(
            p.operator().to_dense()?,
            p.c() * p.c().transpose(),
            p.s_dense(),
            p.z() * p.z().transpose(),
        )
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn rhs(&self, x: &DenseMatrix) -> DenseMatrix {
        let ax = &self.a * x;
        &ax + ax.transpose() + &self.q - x * &self.s * x
    }

    fn as_small(&self) -> SmallDre {
        SmallDre::new(self.a.clone(), self.s.clone(), self.q.clone(), self.x0.clone()).expect("validated on construction")
    }
}

/// `X(t)` by substepped Davison–Maki at full dimension.
pub fn dense_dre_solve(p: &DenseDre, t: f64, m: usize) -> Result<DenseMatrix> {
    Ok(dense_dre_trajectory(p, t, m)?.pop().expect("nonempty"))
}

/// `X(jt/m)` for `j = 0..=m`.
pub fn dense_dre_trajectory(p: &DenseDre, t: f64, m: usize) -> Result<Vec<DenseMatrix>> {
    Ok(dm::solve_small_dre(&p.as_small(), t, m)?.ys)
}

/// Classical fourth-order Runge–Kutta with `steps` equal steps,
/// symmetrizing after each.
pub fn rk_dre_solve(p: &DenseDre, t: f64, steps: usize) -> Result<DenseMatrix> {
    if steps == 0 {
        return Err(Error::InvalidParameter("RK step count must be >= 1".into()));
    }
    let h = t / steps as f64;
    let mut x = p.x0.clone();
    for j in 0..steps {
        let k1 = p.rhs(&x);
        let k2 = p.rhs(&(&x + &k1 * (h / 2.0)));
        let k3 = p.rhs(&(&x + &k2 * (h / 2.0)));
        let k4 = p.rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        x = linalg::symmetrize(&x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Instability(format!("non-finite state after step {} of {steps}", j + 1)));
        }
    }
    Ok(x)
}

/// `y(t) = 1/(1/y₀ + st)` for `ẏ = −s y²`.
pub fn scalar_riccati_decay(y0: f64, s: f64, t: f64) -> f64 {
    y0 / (1.0 + y0 * s * t)
}

/// `y(t) = √(q/s)·tanh(√(qs)·t)` for `ẏ = q − s y²`, `y(0) = 0`.
pub fn scalar_riccati_tanh(q: f64, s: f64, t: f64) -> f64 {
    if s == 0.0 {
        return q * t;
    }
    (q / s).sqrt() * ((q * s).sqrt() * t).tanh()
}

/// `X(t) = X₀ + tQ` for `A = 0`, `S = 0`.
pub fn lyapunov_zero_a(x0: &DenseMatrix, q: &DenseMatrix, t: f64) -> DenseMatrix {
    x0 + q * t
}

/// Lyapunov solution for `A = scale·tridiag(1, −2, 1)` through the
/// analytic eigenbasis `Φ_ij = √(2/(n+1)) sin(ijπ/(n+1))`: in that basis
/// `X̃_ij(t) = e^{t(λ_i+λ_j)} X̃₀_ij + t φ₁(t(λ_i+λ_j)) Q̃_ij`.
pub fn heat_lyapunov(scale: f64, x0: &DenseMatrix, q: &DenseMatrix, t: f64) -> Result<DenseMatrix> {
    let n = x0.nrows();
    if x0.ncols() != n || q.nrows() != n || q.ncols() != n {
        return Err(Error::dim("heat_lyapunov", format!("{n}x{n} data"), format!("{}x{}", q.nrows(), q.ncols())));
    }
    let h = std::f64::consts::PI / (n as f64 + 1.0);
    let norm = (2.0 / (n as f64 + 1.0)).sqrt();
    let phi = DenseMatrix::from_fn(n, n, |i, j| norm * (((i + 1) * (j + 1)) as f64 * h).sin());
    let lambda: Vec<f64> = (1..=n).map(|j| scale * (-2.0 + 2.0 * (j as f64 * h).cos())).collect();
    let x0t = phi.tr_mul(x0) * &phi;
    let qt = phi.tr_mul(q) * &phi;
    let xt = DenseMatrix::from_fn(n, n, |i, j| {
        let z = t * (lambda[i] + lambda[j]);
        z.exp() * x0t[(i, j)] + t * phi1(z) * qt[(i, j)]
    });
    Ok(linalg::symmetrize(&(&phi * xt * phi.transpose())))
}

/// Inputs for [`closed_form`]; each form reads the fields it needs.
#[derive(Clone, Debug, Default)]
pub struct ClosedFormParams {
    pub y0: f64,
    pub q: f64,
    pub s: f64,
    pub scale: f64,
    pub x0_matrix: Option<DenseMatrix>,
    pub q_matrix: Option<DenseMatrix>,
}

pub const CLOSED_FORMS: [&str; 4] = ["scalar_riccati_decay", "scalar_riccati_tanh", "lyapunov_zero_A", "heat_lyapunov"];

/// Evaluates a named closed form at time `t`; scalar forms return `1×1`.
pub fn closed_form(name: &str, params: &ClosedFormParams, t: f64) -> Result<DenseMatrix> {
    let matrices = || -> Result<(&DenseMatrix, &DenseMatrix)> {
        match (&params.x0_matrix, &params.q_matrix) {
            (Some(x0), Some(q)) => Ok((x0, q)),
            _ => Err(Error::InvalidParameter(format!("closed form `{name}` needs X0 and Q matrices"))),
        }
    };
    let scalar = |v: f64| DenseMatrix::from_element(1, 1, v);
    match name {
        "scalar_riccati_decay" => Ok(scalar(scalar_riccati_decay(params.y0, params.s, t))),
        "scalar_riccati_tanh" => Ok(scalar(scalar_riccati_tanh(params.q, params.s, t))),
        "lyapunov_zero_A" => {
            let (x0, q) = matrices()?;
            Ok(lyapunov_zero_a(x0, q, t))
        }
        "heat_lyapunov" => {
            let (x0, q) = matrices()?;
            heat_lyapunov(params.scale, x0, q, t)
        }
        other => Err(Error::UnknownClosedForm(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NormalStream;

    fn scalar_dre(a: f64, q: f64, s: f64, x0: f64) -> DenseDre {
        let one = |v| DenseMatrix::from_element(1, 1, v);
        DenseDre::new(one(a), one(q), one(s), one(x0)).unwrap()
    }

    pub(crate) fn random_dense(n: usize, seed: u64) -> DenseDre {
        let mut rng = NormalStream::new(seed);
        let a = rng.matrix(n, n) * (1.0 / (n as f64).sqrt()) - DenseMatrix::identity(n, n);
        let c = rng.unit_columns(n, 2);
        let z = rng.unit_columns(n, 2);
        let b = rng.unit_columns(n, 2);
        DenseDre::new(a, &c * c.transpose(), &b * b.transpose(), &z * z.transpose()).unwrap()
    }

    #[test]
    fn tanh_case() {
        let p = scalar_dre(0.0, 1.0, 1.0, 0.0);
        assert!((dense_dre_solve(&p, 1.0, 100).unwrap()[0] - 1f64.tanh()).abs() <= 1e-9);
        assert!((rk_dre_solve(&p, 1.0, 10_000).unwrap()[0] - 1f64.tanh()).abs() <= 1e-10);
    }

    #[test]
    fn zero_a_lyapunov() {
        let mut rng = NormalStream::new(1);
        let c = rng.matrix(5, 2);
        let z = rng.matrix(5, 1);
        let q = &c * c.transpose();
        let x0 = &z * z.transpose();
        let zero = DenseMatrix::zeros(5, 5);
        let p = DenseDre::new(zero.clone(), q.clone(), zero, x0.clone()).unwrap();
        let got = dense_dre_solve(&p, 0.8, 10).unwrap();
        assert!((got - lyapunov_zero_a(&x0, &q, 0.8)).amax() <= 1e-13);
    }

    #[test]
    fn rk_is_fourth_order() {
        let p = random_dense(5, 2);
        let reference = dense_dre_solve(&p, 1.0, 50).unwrap();
        let e1 = (rk_dre_solve(&p, 1.0, 20).unwrap() - &reference).amax();
        let e2 = (rk_dre_solve(&p, 1.0, 40).unwrap() - &reference).amax();
        let ratio = e1 / e2;
        assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn oracles_agree() {
        for seed in 0..5 {
            let p = random_dense(20, 10 + seed);
            let a = dense_dre_solve(&p, 0.5, 10).unwrap();
            let b = rk_dre_solve(&p, 0.5, 400).unwrap();
            assert!(linalg::spectral_norm(&(&a - &b)) <= 1e-7);
        }
    }

    #[test]
    fn integral_representation() {
        let p = random_dense(10, 6);
        let t = 1.0;
        let nq = 200;
        let traj = dense_dre_trajectory(&p, t, nq).unwrap();
        let x = traj[nq].clone();
        let e = |s: f64| linalg::expm(&(&p.a * s)).unwrap();
        // composite Simpson on 200 intervals
        let integrand = |j: usize| {
            let s = j as f64 * t / nq as f64;
            let xs = &traj[j];
            let g = e(t - s);
            &g * (&p.q - xs * &p.s * xs) * g.transpose()
        };
        let mut integral = DenseMatrix::zeros(10, 10);
        for j in 0..=nq {
            let w = if j == 0 || j == nq { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
            integral += integrand(j) * w;
        }
        integral *= t / nq as f64 / 3.0;
        let et = e(t);
        let rebuilt = &et * &p.x0 * et.transpose() + integral;
        assert!((rebuilt - x).amax() <= 1e-5);
    }

    #[test]
    fn positivity_and_monotonicity() {
        for seed in 0..5 {
            let p = random_dense(12, 40 + seed);
            let x = dense_dre_solve(&p, 1.0, 10).unwrap();
            let scale = 1.0 + linalg::sym_spectral_norm(&x);
            assert!(linalg::min_eigenvalue(&x) >= -1e-9 * scale);

            let v = NormalStream::new(90 + seed).unit_columns(12, 1);
            let bigger_x0 = DenseDre::new(p.a.clone(), p.q.clone(), p.s.clone(), &p.x0 + &v * v.transpose()).unwrap();
            let bigger_q = DenseDre::new(p.a.clone(), &p.q + &v * v.transpose(), p.s.clone(), p.x0.clone()).unwrap();
            let no_s = DenseDre::new(p.a.clone(), p.q.clone(), DenseMatrix::zeros(12, 12), p.x0.clone()).unwrap();
            for other in [bigger_x0, bigger_q, no_s] {
                let y = dense_dre_solve(&other, 1.0, 10).unwrap();
                assert!(linalg::min_eigenvalue(&(&y - &x)) >= -1e-9 * scale);
            }
        }
    }

    #[test]
    fn closed_form_dispatch() {
        let params = ClosedFormParams {
            y0: 1.0,
            q: 1.0,
            s: 1.0,
            ..Default::default()
        };
        assert!((closed_form("scalar_riccati_decay", &params, 1.0).unwrap()[0] - 0.5).abs() < 1e-15);
        assert!((closed_form("scalar_riccati_tanh", &params, 1.0).unwrap()[0] - 1f64.tanh()).abs() < 1e-15);
        assert!(matches!(closed_form("nope", &params, 1.0), Err(Error::UnknownClosedForm(_))));
        assert!(closed_form("heat_lyapunov", &params, 1.0).is_err());
    }

    #[test]
    fn heat_lyapunov_matches_integrator() {
        let n = 50;
        let scale = 100.0;
        let mut rng = NormalStream::new(7);
        let z = rng.unit_columns(n, 1);
        let c = rng.unit_columns(n, 1);
        let a = DenseMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => -2.0 * scale,
            1 => scale,
            _ => 0.0,
        });
        let q = &c * c.transpose();
        let x0 = &z * z.transpose();
        let p = DenseDre::new(a, q.clone(), DenseMatrix::zeros(n, n), x0.clone()).unwrap();
        let want = heat_lyapunov(scale, &x0, &q, 0.05).unwrap();
        let got = dense_dre_solve(&p, 0.05, 10).unwrap();
        assert!((want - got).amax() <= 1e-9);
    }

    #[test]
    fn refuses_large_problems() {
        let n = ORACLE_LIMIT + 1;
        let z = DenseMatrix::zeros(n, n);
        assert!(matches!(
            DenseDre::new(z.clone(), z.clone(), z.clone(), z),
            Err(Error::OracleTooLarge { .. })
        ));
    }
}
