#![allow(dead_code)]

use dre_krylov::dre::DreProblem;
use dre_krylov::krylov::BlockKrylovDecomp;
use dre_krylov::linalg::{self, DenseMatrix};
use dre_krylov::oracle::DenseDre;
use dre_krylov::problems::random_dense_problem;

pub fn gram(m: &DenseMatrix) -> DenseMatrix {
    m * m.transpose()
}

/// Spectral norm of a symmetric difference.
pub fn sym_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    linalg::sym_spectral_norm(&linalg::symmetrize(&(a - b)))
}

pub fn oracle_of(p: &DreProblem) -> DenseDre {
    DenseDre::from_problem(p).expect("desk-scale problem")
}

/// Orthonormality and Arnoldi-relation residual, relative to `‖A‖`.
pub fn arnoldi_defects(p: &DreProblem, d: &BlockKrylovDecomp) -> (f64, f64) {
    let norm_a = p.operator().norm_estimate().unwrap().max(f64::MIN_POSITIVE);
    (d.orthogonality_error(), d.arnoldi_residual(p.operator()).unwrap() / norm_a)
}

/// One entry of the dense desk corpus.
#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub label: String,
    pub n: usize,
    pub riccati: bool,
    pub problem: DreProblem,
}

/// Random dense problems with `n ≤ 60`, stable and mildly unstable `A`,
/// Lyapunov and Riccati variants.
pub fn desk_corpus() -> Vec<CorpusEntry> {
    let shapes = [
        (20, 1, 1, 0, 1.0),
        (20, 2, 1, 1, 0.0),
        (30, 2, 2, 2, 1.0),
        (30, 1, 2, 0, 0.5),
        (45, 2, 1, 1, 2.0),
        (45, 3, 1, 0, 0.0),
        (60, 2, 2, 2, 1.0),
        (60, 1, 1, 0, 1.5),
    ];
    shapes
        .iter()
        .enumerate()
        .map(|(i, &(n, p, q, r, shift))| CorpusEntry {
            label: format!("n={n} p={p} q={q} r={r} shift={shift}"),
            n,
            riccati: r > 0,
            problem: random_dense_problem(n, p, q, r, shift, 100 + i as u64).unwrap(),
        })
        .collect()
}

/// Aligns the column signs of `b` to `a` and returns the max entry gap.
pub fn aligned_gap(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut gap: f64 = 0.0;
    for j in 0..a.ncols() {
        let s = if a.column(j).dot(&b.column(j)) < 0.0 { -1.0 } else { 1.0 };
        gap = gap.max((a.column(j) - b.column(j) * s).amax());
    }
    gap
}
