//! Seeded problem generators and Matrix Market problem assembly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dre::{DreProblem, QuadraticTerm};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::operators::{load_matrix_market, LinearOperator, StoredMatrix};
use crate::rng::NormalStream;
use crate::sparse::SparseCsr;

/// `scale·tridiag(1, −2, 1)` in CSR with its eigenvalues
/// `scale·(−2 + 2cos(jπ/(n+1)))` attached.
pub fn laplacian_1d(n: usize, scale: f64) -> Result<LinearOperator> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let mut trip = Vec::with_capacity(3 * n);
    for i in 0..n {
        if i > 0 {
            trip.push((i, i - 1, scale));
        }
        trip.push((i, i, -2.0 * scale));
        if i + 1 < n {
            trip.push((i, i + 1, scale));
        }
    }
    let h = std::f64::consts::PI / (n as f64 + 1.0);
    let spectrum = (1..=n).map(|j| scale * (-2.0 + 2.0 * (j as f64 * h).cos())).collect();
    Ok(LinearOperator::sparse(SparseCsr::from_triplets(n, n, &trip)?)?.with_spectrum(spectrum))
}

/// `(Z, C)` with standard normal entries and unit columns, drawn in that
/// order from one stream.
pub fn random_low_rank(n: usize, p: usize, q: usize, seed: u64) -> (DenseMatrix, DenseMatrix) {
    let mut rng = NormalStream::new(seed);
    let z = rng.unit_columns(n, p);
    let c = rng.unit_columns(n, q);
    (z, c)
}

/// `A = G/√n − shift·I` with `G` standard normal, unit-column `Z`, `C`,
/// and `S = BBᵀ` (`r = 0` gives the Lyapunov case). Draw order: `Z, C, B,
/// G`.
pub fn random_dense_problem(n: usize, p: usize, q: usize, r: usize, shift: f64, seed: u64) -> Result<DreProblem> {
    let mut rng = NormalStream::new(seed);
    let z = rng.unit_columns(n, p);
    let c = rng.unit_columns(n, q);
    let b = rng.unit_columns(n, r);
    let a = rng.matrix(n, n) * (1.0 / (n as f64).sqrt()) - DenseMatrix::identity(n, n) * shift;
    let s = if r == 0 { QuadraticTerm::Zero } else { QuadraticTerm::Factor(b) };
    DreProblem::new(LinearOperator::dense(a)?, z, c, s)
}

/// Laplacian problem with seeded unit-column `Z` (`p`), `C` (`q`) and
/// `S = BBᵀ` (`r` columns, `r = 0` for Lyapunov).
pub fn laplacian_problem(n: usize, scale: f64, p: usize, q: usize, r: usize, seed: u64) -> Result<DreProblem> {
    let mut rng = NormalStream::new(seed);
    let z = rng.unit_columns(n, p);
    let c = rng.unit_columns(n, q);
    let b = rng.unit_columns(n, r);
    let s = if r == 0 { QuadraticTerm::Zero } else { QuadraticTerm::Factor(b) };
    DreProblem::new(laplacian_1d(n, scale)?, z, c, s)
}

/// Brings a factor to `n` rows, transposing a short-and-fat input.
fn tall(m: DenseMatrix, n: usize, what: &'static str) -> Result<DenseMatrix> {
    if m.nrows() == n {
        Ok(m)
    } else if m.ncols() == n {
        Ok(m.transpose())
    } else {
        Err(Error::dim("problem assembly", format!("{what} with {n} rows or columns"), format!("{}x{}", m.nrows(), m.ncols())))
    }
}

/// Generalized control problem `M ẋ = A x + B u`, `y = C x`: operator
/// `M⁻¹A`, `S = (M⁻¹B)(M⁻¹B)ᵀ`, `Q = CᵀC`, zero initial value. `C` may be
/// given as `q × n`; it is transposed to the tall convention.
pub fn cooling_style_from(mass: StoredMatrix, a: StoredMatrix, b: DenseMatrix, c: DenseMatrix) -> Result<DreProblem> {
    let op = LinearOperator::mass_pair(mass, a)?;
    let n = op.dim();
    let b = op.mass_solve(&tall(b, n, "B")?)?;
    let c = tall(c, n, "C")?;
    DreProblem::new(op, DenseMatrix::zeros(n, 0), c, QuadraticTerm::Factor(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoolingPaths {
    pub mass: PathBuf,
    pub a: PathBuf,
    pub b: PathBuf,
    pub c: PathBuf,
}

pub fn cooling_style(paths: &CoolingPaths) -> Result<DreProblem> {
    cooling_style_from(
        load_matrix_market(&paths.mass)?,
        load_matrix_market(&paths.a)?,
        load_matrix_market(&paths.b)?.to_dense(),
        load_matrix_market(&paths.c)?.to_dense(),
    )
}

fn default_scale() -> f64 {
    100.0
}

fn one() -> usize {
    1
}

fn default_shift() -> f64 {
    1.0
}

/// JSON-serializable problem description, tagged by `"generator"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum ProblemSpec {
    Laplacian1d {
        n: usize,
        #[serde(default = "default_scale")]
        scale: f64,
        #[serde(default = "one")]
        p: usize,
        #[serde(default = "one")]
        q: usize,
        #[serde(default)]
        r: usize,
        #[serde(default)]
        seed: u64,
    },
    RandomDense {
        n: usize,
        #[serde(default = "one")]
        p: usize,
        #[serde(default = "one")]
        q: usize,
        #[serde(default)]
        r: usize,
        #[serde(default = "default_shift")]
        shift: f64,
        #[serde(default)]
        seed: u64,
    },
    /// `ẋ = 2ax + q − s x²`, `x(0) = x0`.
    Scalar { a: f64, q: f64, s: f64, x0: f64 },
    /// Files in Matrix Market form. With `mass` the operator is `M⁻¹A` and
    /// `S = (M⁻¹B)(M⁻¹B)ᵀ`; without `b` the problem is Lyapunov.
    MatrixMarket {
        a: PathBuf,
        #[serde(default)]
        mass: Option<PathBuf>,
        #[serde(default)]
        b: Option<PathBuf>,
        c: PathBuf,
        #[serde(default)]
        z: Option<PathBuf>,
    },
}

impl ProblemSpec {
    pub fn build(&self) -> Result<DreProblem> {
        match self {
            ProblemSpec::Laplacian1d { n, scale, p, q, r, seed } => laplacian_problem(*n, *scale, *p, *q, *r, *seed),
            ProblemSpec::RandomDense { n, p, q, r, shift, seed } => random_dense_problem(*n, *p, *q, *r, *shift, *seed),
            ProblemSpec::Scalar { a, q, s, x0 } => {
                let one = |v: f64| DenseMatrix::from_element(1, 1, v);
                let nonneg = |v: f64, what: &str| {
                    if v < 0.0 {
                        Err(Error::InvalidParameter(format!("{what} = {v} must be >= 0")))
                    } else {
                        Ok(v)
                    }
                };
                let (q, s, x0) = (nonneg(*q, "q")?, nonneg(*s, "s")?, nonneg(*x0, "x0")?);
                let z = if x0 > 0.0 { one(x0.sqrt()) } else { DenseMatrix::zeros(1, 0) };
                let c = if q > 0.0 { one(q.sqrt()) } else { DenseMatrix::zeros(1, 0) };
                let sq = if s > 0.0 { QuadraticTerm::Factor(one(s.sqrt())) } else { QuadraticTerm::Zero };
                DreProblem::new(LinearOperator::dense(one(*a))?, z, c, sq)
            }
            ProblemSpec::MatrixMarket { a, mass, b, c, z } => {
                let load = |p: &Path| load_matrix_market(p);
                let stiffness = load(a)?;
                let op = match mass {
                    Some(m) => LinearOperator::mass_pair(load(m)?, stiffness)?,
                    None => LinearOperator::from_stored(stiffness)?,
                };
                let n = op.dim();
                let c = tall(load(c)?.to_dense(), n, "C")?;
                let z = match z {
                    Some(path) => tall(load(path)?.to_dense(), n, "Z")?,
                    None => DenseMatrix::zeros(n, 0),
                };
                let s = match b {
                    Some(path) => QuadraticTerm::Factor(op.mass_solve(&tall(load(path)?.to_dense(), n, "B")?)?),
                    None => QuadraticTerm::Zero,
                };
                DreProblem::new(op, z, c, s)
            }
        }
    }

    /// Replaces the seed of seeded generators.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        match &mut self {
            ProblemSpec::Laplacian1d { seed, .. } | ProblemSpec::RandomDense { seed, .. } => *seed = new_seed,
            ProblemSpec::Scalar { .. } | ProblemSpec::MatrixMarket { .. } => {}
        }
        self
    }

    /// Time horizon used when none is given.
    pub fn default_horizon(&self) -> f64 {
        match self {
            ProblemSpec::Laplacian1d { .. } => 0.05,
            ProblemSpec::RandomDense { .. } => 0.5,
            ProblemSpec::Scalar { .. } | ProblemSpec::MatrixMarket { .. } => 1.0,
        }
    }
}
