//! Moment relaxations: assembling semidefinite programs whose variables are
//! truncated moment sequences.
//!
//! A relaxation of order `k` for polynomial sets `Phi` (equalities) and
//! `Psi` (inequalities) over `n` variables optimizes a linear objective
//! `<theta, y>` over sequences `y` indexed by the monomials of degree at
//! most `2k`, subject to `y_0 = 1`, the localizing rows of every equality,
//! a positive semidefinite moment matrix, and positive semidefinite
//! localizing matrices of every inequality.

use crate::poly::{basis_size, monomial_basis, MultiIndex, Polynomial};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, HashSet};

/// One linear equality `sum_j coef_j * y_{idx_j} = rhs`.
#[derive(Clone, Debug)]
pub struct SparseRow {
    pub entries: Vec<(usize, f64)>,
    pub rhs: f64,
}

/// One PSD constraint: the symmetric matrix with upper-triangle entries
/// given by sparse linear functionals of `y` must be positive semidefinite.
#[derive(Clone, Debug)]
pub struct PsdBlock {
    pub dim: usize,
    /// Row-major upper triangle, `dim * (dim + 1) / 2` functionals.
    pub entries: Vec<Vec<(usize, f64)>>,
}

impl PsdBlock {
    pub fn entry(&self, r: usize, c: usize) -> &[(usize, f64)] {
        assert!(r <= c && c < self.dim);
        // Row-major upper triangle offset.
        let off = r * self.dim - r * (r + 1) / 2 + c;
        &self.entries[off]
    }

    /// Evaluate the block at a moment vector.
    pub fn value(&self, y: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for c in r..self.dim {
                let v: f64 = self.entry(r, c).iter().map(|&(i, w)| w * y[i]).sum();
                m[(r, c)] = v;
                m[(c, r)] = v;
            }
        }
        m
    }
}

/// A linear SDP over a moment vector `y`.
#[derive(Clone, Debug)]
pub struct SdpProblem {
    /// Number of scalar variables (moments).
    pub nvars: usize,
    /// Problem dimension `n` and relaxation order `k` behind `y`.
    pub base_nvars: usize,
    pub order: u32,
    /// Linear objective: minimize `cost . y`.
    pub cost: Vec<f64>,
    /// Equality rows; the first is always the normalization `y_0 = 1`.
    pub eq: Vec<SparseRow>,
    /// PSD blocks; the first is always the order-`k` moment matrix.
    pub blocks: Vec<PsdBlock>,
}

/// `ceil(deg / 2)` of a polynomial.
fn half_degree(p: &Polynomial) -> u32 {
    p.degree().div_ceil(2)
}

/// Smallest admissible relaxation order for the given sets and objective.
pub fn min_order(phi: &[&Polynomial], psi: &[&Polynomial], theta: &Polynomial) -> u32 {
    phi.iter()
        .chain(psi.iter())
        .chain(std::iter::once(&theta))
        .map(|p| half_degree(p))
        .max()
        .unwrap_or(1)
        .max(1)
}

fn functional(
    p: &Polynomial,
    shift: &MultiIndex,
    shift2: &MultiIndex,
) -> Vec<(usize, f64)> {
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (alpha, coef) in p.terms() {
        let idx = crate::poly::basis_position(&alpha.mul(shift).mul(shift2));
        *acc.entry(idx).or_insert(0.0) += coef;
    }
    acc.into_iter().filter(|&(_, v)| v != 0.0).collect()
}

/// Moment matrix block of order `t` over `n` variables.
pub fn moment_block(n: usize, t: u32) -> PsdBlock {
    let basis = monomial_basis(n, t);
    let dim = basis.len();
    let one = Polynomial::constant(vec![n], 1.0);
    let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
    for r in 0..dim {
        for c in r..dim {
            entries.push(functional(&one, &basis[r], &basis[c]));
        }
    }
    PsdBlock { dim, entries }
}

/// Localizing matrix block of `q` at relaxation order `k`.
pub fn localizing_block(q: &Polynomial, n: usize, k: u32) -> PsdBlock {
    let t = k
        .checked_sub(half_degree(q))
        .expect("relaxation order below constraint half-degree");
    let basis = monomial_basis(n, t);
    let dim = basis.len();
    let mut entries = Vec::with_capacity(dim * (dim + 1) / 2);
    for r in 0..dim {
        for c in r..dim {
            entries.push(functional(q, &basis[r], &basis[c]));
        }
    }
    PsdBlock { dim, entries }
}

fn row_key(row: &SparseRow) -> (Vec<(usize, u64)>, u64) {
    (
        row.entries.iter().map(|&(i, v)| (i, v.to_bits())).collect(),
        row.rhs.to_bits(),
    )
}

/// Assemble the order-`k` relaxation of `min theta` over `Phi = 0`,
/// `Psi >= 0`. Equality rows appear as: normalization, then for each
/// member of `Phi` the upper-triangle rows of its localizing matrix in
/// row-major order. Structurally identical rows are emitted once.
pub fn assemble_relaxation(
    phi: &[&Polynomial],
    psi: &[&Polynomial],
    theta: &Polynomial,
    k: u32,
) -> SdpProblem {
    let n = theta.nvars();
    assert!(k >= min_order(phi, psi, theta), "order below minimum");
    let nvars = basis_size(n, 2 * k);

    let mut cost = vec![0.0; nvars];
    for (alpha, coef) in theta.terms() {
        cost[crate::poly::basis_position(alpha)] += coef;
    }

    let mut eq = Vec::new();
    let mut seen = HashSet::new();
    let norm = SparseRow { entries: vec![(0, 1.0)], rhs: 1.0 };
    seen.insert(row_key(&norm));
    eq.push(norm);
    for p in phi {
        if p.is_zero() {
            continue;
        }
        let t = k - half_degree(p);
        let basis = monomial_basis(n, t);
        for r in 0..basis.len() {
            for c in r..basis.len() {
                let entries = functional(p, &basis[r], &basis[c]);
                if entries.is_empty() {
                    continue;
                }
                let row = SparseRow { entries, rhs: 0.0 };
                if seen.insert(row_key(&row)) {
                    eq.push(row);
                }
            }
        }
    }

    let mut blocks = vec![moment_block(n, k)];
    for q in psi {
        if q.is_zero() {
            continue;
        }
        blocks.push(localizing_block(q, n, k));
    }

    SdpProblem { nvars, base_nvars: n, order: k, cost, eq, blocks }
}

/// Random positive definite quadratic objective
/// `theta(x) = [x]_1^T (R^T R + 1e-6 I) [x]_1` with `R` uniform in
/// `(-1, 1)`, seeded. Returns the polynomial and the Gram matrix.
pub fn gen_theta(n: usize, seed: u64) -> (Polynomial, DMatrix<f64>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = n + 1;
    let r = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let mut gram = r.transpose() * &r;
    for i in 0..d {
        gram[(i, i)] += 1e-6;
    }
    let basis = monomial_basis(n, 1);
    let mut theta = Polynomial::zero(vec![n]);
    for a in 0..d {
        for b in 0..d {
            let alpha = basis[a].mul(&basis[b]);
            theta.add_term(alpha, gram[(a, b)]);
        }
    }
    (theta, gram)
}
