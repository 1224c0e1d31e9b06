//! Small dense Riccati solves by the substepped (modified) Davison–Maki
//! method on the Hamiltonian linearization.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};

/// Substep count used when the caller does not choose one.
pub const DEFAULT_SUBSTEPS: usize = 10;
/// Reinversion breakdown threshold on the pivot-ratio condition estimate.
pub const EPS_COND: f64 = 1e13;

const SYM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// `Ẏ = HY + YHᵀ + Q − YSY`, `Y(0) = Y0`, all `d × d`.
#[derive(Clone, Debug)]
pub struct SmallDre {
    h: DenseMatrix,
    s: DenseMatrix,
    q: DenseMatrix,
    y0: DenseMatrix,
}

pub(crate) fn check_sym_psd(m: &DenseMatrix, what: &'static str) -> Result<()> {
    linalg::ensure_finite(m, what)?;
    let scale = m.amax();
    let asym = linalg::asymmetry(m);
    if asym > SYM_TOL * scale.max(1.0) {
        return Err(Error::NotSymmetric { what, asym });
    }
    if m.nrows() > 0 && scale > 0.0 {
        let min_eig = linalg::min_eigenvalue(m);
        if min_eig < -PSD_TOL * linalg::sym_spectral_norm(m) {
            return Err(Error::NotPsd { what, min_eig });
        }
    }
    Ok(())
}

impl SmallDre {
    pub fn new(h: DenseMatrix, s: DenseMatrix, q: DenseMatrix, y0: DenseMatrix) -> Result<Self> {
        let d = h.nrows();
        for (what, m) in [("H", &h), ("S", &s), ("Q", &q), ("Y0", &y0)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::dim("SmallDre::new", format!("{what} {d}x{d}"), format!("{}x{}", m.nrows(), m.ncols())));
            }
        }
        linalg::ensure_finite(&h, "H")?;
        check_sym_psd(&s, "S")?;
        check_sym_psd(&q, "Q")?;
        check_sym_psd(&y0, "Y0")?;
        Ok(Self { h, s, q, y0 })
    }

    /// Skips the symmetry and definiteness checks; for data that is a Gram
    /// matrix or a congruence by construction.
    pub(crate) fn from_parts(h: DenseMatrix, s: DenseMatrix, q: DenseMatrix, y0: DenseMatrix) -> Self {
        Self { h, s, q, y0 }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn h(&self) -> &DenseMatrix {
        &self.h
    }

    pub fn s(&self) -> &DenseMatrix {
        &self.s
    }

    pub fn q(&self) -> &DenseMatrix {
        &self.q
    }

    pub fn y0(&self) -> &DenseMatrix {
        &self.y0
    }

    /// Right-hand side `HY + YHᵀ + Q − YSY`.
    pub fn rhs(&self, y: &DenseMatrix) -> DenseMatrix {
        let hy = &self.h * y;
        &hy + hy.transpose() + &self.q - y * &self.s * y
    }
}

/// `[−Hᵀ, S; Q, H]`: with `[U; W]' = M [U; W]`, `Y = W U⁻¹` solves
/// `Ẏ = HY + YHᵀ + Q − YSY`.
#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    pub m: DenseMatrix,
}

impl HamiltonianMatrix {
    /// `‖(JM)ᵀ − JM‖_max` with `J = [0, I; −I, 0]`.
    pub fn structure_defect(&self) -> f64 {
        let d = self.m.nrows() / 2;
        let mut j = DenseMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            j[(i, d + i)] = 1.0;
            j[(d + i, i)] = -1.0;
        }
        let jm = j * &self.m;
        (jm.transpose() - &jm).amax()
    }
}

pub fn assemble_hamiltonian(p: &SmallDre) -> HamiltonianMatrix {
    let d = p.dim();
    let mut m = DenseMatrix::zeros(2 * d, 2 * d);
    m.view_mut((0, 0), (d, d)).copy_from(&(-p.h.transpose()));
    m.view_mut((0, d), (d, d)).copy_from(&p.s);
    m.view_mut((d, 0), (d, d)).copy_from(&p.q);
    m.view_mut((d, d), (d, d)).copy_from(&p.h);
    HamiltonianMatrix { m }
}

/// Iterates `Y_0, Y(Δt), …, Y(t)` with `Δt = t/m`.
#[derive(Clone, Debug)]
pub struct SmallTrajectory {
    pub dt: f64,
    pub ys: Vec<DenseMatrix>,
}

impl SmallTrajectory {
    pub fn times(&self) -> Vec<f64> {
        (0..self.ys.len()).map(|j| j as f64 * self.dt).collect()
    }

    pub fn last(&self) -> &DenseMatrix {
        self.ys.last().expect("trajectory holds Y0")
    }

    pub fn substeps(&self) -> usize {
        self.ys.len() - 1
    }

    /// `Σ_{ℓ=1}^{m} Δt·Y(ℓΔt)`.
    pub fn right_riemann_sum(&self) -> DenseMatrix {
        let d = self.ys[0].nrows();
        let mut acc = DMatrix::zeros(d, d);
        for y in &self.ys[1..] {
            acc += y;
        }
        acc * self.dt
    }
}

/// Substepped Davison–Maki: `E = exp(Δt·Ham)` once, then for each substep
/// `[U; W] = E [I; Y]`, `Y ← W U⁻¹` (LU solve), symmetrized.
pub fn solve_small_dre(p: &SmallDre, t: f64, m: usize) -> Result<SmallTrajectory> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("time horizon t = {t} must be positive")));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("substep count m must be >= 1".into()));
    }
    let d = p.dim();
    let dt = t / m as f64;
    let e = linalg::expm(&(assemble_hamiltonian(p).m * dt))?;
    let e11 = e.view((0, 0), (d, d)).into_owned();
    let e12 = e.view((0, d), (d, d)).into_owned();
    let e21 = e.view((d, 0), (d, d)).into_owned();
    let e22 = e.view((d, d), (d, d)).into_owned();

    let mut ys = Vec::with_capacity(m + 1);
    ys.push(p.y0.clone());
    for j in 0..m {
        let y = &ys[j];
        let u = &e11 + &e12 * y;
        let w = &e21 + &e22 * y;
        // Y = W U⁻¹  ⇔  Uᵀ Yᵀ = Wᵀ
        let next = solve_right(&u, &w).map_err(|cond| Error::SubstepBreakdown { substep: j + 1, cond })?;
        ys.push(linalg::symmetrize(&next));
    }
    Ok(SmallTrajectory { dt, ys })
}

/// `W U⁻¹` through an LU factorization of `Uᵀ`; `Err(cond)` when the
/// pivot-ratio estimate exceeds [`EPS_COND`].
fn solve_right(u: &DenseMatrix, w: &DenseMatrix) -> std::result::Result<DenseMatrix, f64> {
    if u.nrows() == 0 {
        return Ok(w.clone());
    }
    let lu = u.transpose().lu();
    let diag = lu.u().diagonal();
    let max = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let cond = if min == 0.0 { f64::INFINITY } else { max / min };
    if !(cond <= EPS_COND) {
        return Err(cond);
    }
    let yt = lu.solve(&w.transpose()).ok_or(f64::INFINITY)?;
    Ok(yt.transpose())
}
