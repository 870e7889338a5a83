//! Flat truncation and minimizer extraction from moment-matrix solutions.
//!
//! A truncated moment sequence that is flat at order `t` (the moment
//! matrices at orders `t` and `t - d0` share the same numeric rank `r`)
//! carries an `r`-atomic representing measure. The atoms are recovered by
//! factorizing the order-`t` moment matrix, selecting a monomial basis by
//! column echelon reduction, forming per-variable multiplication matrices,
//! and reading joint eigenvalues off a real Schur basis of a random convex
//! combination.

use crate::moment::moment_block;
use crate::poly::{basis_size, monomial_basis, MultiIndex, Polynomial};
use crate::tms::Tms;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Relative singular-value threshold declaring rank.
pub const RANK_TOL: f64 = 1e-6;
/// Largest acceptable re-lift residual for an extracted atomic measure.
pub const EXTRACTION_TOL: f64 = 1e-6;
/// Singular values within this factor of the rank threshold make the rank
/// call ambiguous.
const RANK_AMBIGUITY: f64 = 10.0;

/// Outcome of the flat-truncation scan.
#[derive(Clone, Debug)]
pub struct FlatReport {
    /// First order at which the rank condition holds, if any.
    pub t: Option<u32>,
    /// Shared rank at the reported order (0 when none).
    pub rank: usize,
    /// Singular values of the order-`t` moment matrix.
    pub sv_t: Vec<f64>,
    /// Singular values of the order-`t - d0` moment matrix.
    pub sv_prev: Vec<f64>,
    pub rank_tol: f64,
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    // Defensive symmetrization before the decomposition.
    let sym = (m + m.transpose()) * 0.5;
    let mut sv: Vec<f64> = sym.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

fn rank_of(sv: &[f64], rank_tol: f64) -> usize {
    let top = sv.first().copied().unwrap_or(0.0).max(1.0);
    sv.iter().filter(|&&s| s > rank_tol * top).count()
}

/// True when some singular value sits too close to the threshold for the
/// rank call to be trusted.
fn rank_ambiguous(sv: &[f64], rank_tol: f64) -> bool {
    let top = sv.first().copied().unwrap_or(0.0).max(1.0);
    sv.iter().any(|&s| {
        let rel = s / top;
        rel > rank_tol / RANK_AMBIGUITY && rel < rank_tol * RANK_AMBIGUITY
    })
}

/// Count of singular values above `rank_tol` relative to the largest
/// (clamped at one so zero matrices have rank zero).
pub fn numeric_rank(m: &DMatrix<f64>, rank_tol: f64) -> usize {
    rank_of(&singular_values(m), rank_tol)
}

/// Moment matrix of order `t` evaluated at `y`.
pub fn moment_matrix(y: &Tms, t: u32) -> DMatrix<f64> {
    assert!(t <= y.order() / 2, "moment matrix order exceeds y");
    moment_block(y.nvars(), t).value(y.values())
}

/// Scan `t = d0, ..., k` for the first order where the moment matrices at
/// `t` and `t - d0` have equal, unambiguous numeric rank.
pub fn flat_truncation(y: &Tms, d0: u32, k: u32, rank_tol: f64) -> FlatReport {
    assert!(d0 >= 1 && d0 <= k);
    let mut last = FlatReport {
        t: None,
        rank: 0,
        sv_t: Vec::new(),
        sv_prev: Vec::new(),
        rank_tol,
    };
    for t in d0..=k {
        let sv_t = singular_values(&moment_matrix(y, t));
        let sv_prev = singular_values(&moment_matrix(y, t - d0));
        let rt = rank_of(&sv_t, rank_tol);
        let rp = rank_of(&sv_prev, rank_tol);
        let ambiguous =
            rank_ambiguous(&sv_t, rank_tol) || rank_ambiguous(&sv_prev, rank_tol);
        last = FlatReport { t: None, rank: 0, sv_t, sv_prev, rank_tol };
        if rt == rp && !ambiguous {
            last.t = Some(t);
            last.rank = rt;
            return last;
        }
    }
    last
}

/// An extracted atomic measure: points, their weights, and the re-lift
/// residual against the source moments.
#[derive(Clone, Debug)]
pub struct Extraction {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub residual: f64,
}

/// Recover the `r` support points of a flat moment sequence at order `t`.
/// `None` when basis selection, the eigenvalue step, or the re-lift
/// consistency check fails; such failures are inconclusive, not certificates.
pub fn extract_minimizers(y: &Tms, t: u32, r: usize, seed: u64) -> Option<Extraction> {
    let n = y.nvars();
    if r == 0 {
        return None;
    }
    let m = moment_matrix(y, t);
    let dim = m.nrows();
    if r > dim {
        return None;
    }
    let basis = monomial_basis(n, t);

    // Rank-r factor V (dim x r) from the eigendecomposition.
    let eig = ((&m + m.transpose()) * 0.5).symmetric_eigen();
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut v = DMatrix::zeros(dim, r);
    for (col, &e) in idx.iter().take(r).enumerate() {
        let lam = eig.eigenvalues[e];
        if lam <= 0.0 {
            return None;
        }
        v.column_mut(col)
            .copy_from(&(eig.eigenvectors.column(e) * lam.sqrt()));
    }

    // Greedy graded pivot rows of degree <= t - 1: eliminate column by
    // column, taking the earliest monomial row with a usable pivot.
    let scale = v.amax();
    let mut work = v.clone();
    let mut pivots: Vec<usize> = Vec::new();
    for row in 0..dim {
        let col = pivots.len();
        if col == r {
            break;
        }
        if basis[row].degree() > t.saturating_sub(1) {
            continue;
        }
        // Pick the largest remaining column at this row for stability.
        let mut best = col;
        for c in col..r {
            if work[(row, c)].abs() > work[(row, best)].abs() {
                best = c;
            }
        }
        if work[(row, best)].abs() <= 1e-7 * scale {
            continue;
        }
        work.swap_columns(col, best);
        let piv = work[(row, col)];
        for c in 0..r {
            if c != col {
                let f = work[(row, c)] / piv;
                for rr in 0..dim {
                    let delta = f * work[(rr, col)];
                    work[(rr, c)] -= delta;
                }
            }
        }
        pivots.push(row);
    }
    if pivots.len() < r {
        return None;
    }

    // W = V (V[B, :])^{-1} has identity on the basis rows B.
    let mut vb = DMatrix::zeros(r, r);
    for (l, &row) in pivots.iter().enumerate() {
        vb.row_mut(l).copy_from(&v.row(row));
    }
    let lu = nalgebra::LU::new(vb.transpose());
    let w_t = lu.solve(&v.transpose())?;
    let w = w_t.transpose();

    // Multiplication matrices: row l of N_j is the W-row of x_j * beta_l.
    let mut mul = Vec::with_capacity(n);
    for j in 0..n {
        let mut nj = DMatrix::zeros(r, r);
        for (l, &row) in pivots.iter().enumerate() {
            let shifted = basis[row].mul(&MultiIndex::unit(n, j));
            let pos = crate::poly::basis_position(&shifted);
            debug_assert!(pos < dim);
            nj.row_mut(l).copy_from(&w.row(pos));
        }
        mul.push(nj);
    }

    // Joint eigenvalues via the Schur basis of a random convex combination.
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut coef: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = coef.iter().sum();
    for c in &mut coef {
        *c /= total.max(1e-300);
    }
    let mut comb = DMatrix::zeros(r, r);
    for (j, nj) in mul.iter().enumerate() {
        comb += nj * coef[j];
    }
    let q = nalgebra::Schur::new(comb).unpack().0;
    let mut points = Vec::with_capacity(r);
    for l in 0..r {
        let ql = q.column(l);
        let mut x = Vec::with_capacity(n);
        for nj in &mul {
            x.push((ql.transpose() * nj * ql)[(0, 0)]);
        }
        points.push(x);
    }

    // Weights from a least-squares fit of the re-lifted mixture.
    let nmoments = basis_size(n, 2 * t);
    let mut a = DMatrix::zeros(nmoments, r);
    for (l, x) in points.iter().enumerate() {
        let lift = Tms::lift(x, 2 * t);
        a.column_mut(l)
            .copy_from(&DVector::from_column_slice(lift.values()));
    }
    let target = DVector::from_column_slice(&y.values()[..nmoments]);
    let weights = a.clone().svd(true, true).solve(&target, 1e-12).ok()?;
    let residual = (a * &weights - &target).amax();
    if residual > EXTRACTION_TOL {
        return None;
    }
    Some(Extraction {
        points,
        weights: weights.iter().copied().collect(),
        residual,
    })
}

/// Gauss-Newton refinement of `x0` against `system = 0`, with the step
/// from an SVD pseudoinverse of the Jacobian. Steps are accepted only when
/// the residual decreases; returns the best point seen.
pub fn refine(system: &[Polynomial], x0: &[f64], max_steps: usize) -> Vec<f64> {
    let n = x0.len();
    let grads: Vec<Vec<Polynomial>> = system
        .iter()
        .map(|p| (0..n).map(|j| p.differentiate(j)).collect())
        .collect();
    let value = |x: &[f64]| -> DVector<f64> {
        DVector::from_iterator(system.len(), system.iter().map(|p| p.evaluate(x)))
    };
    let mut x = x0.to_vec();
    let mut best = value(&x).norm();
    for _ in 0..max_steps {
        if best <= 1e-15 {
            break;
        }
        let f = value(&x);
        let mut jac = DMatrix::zeros(system.len(), n);
        for (row, g) in grads.iter().enumerate() {
            for (col, gp) in g.iter().enumerate() {
                jac[(row, col)] = gp.evaluate(&x);
            }
        }
        let Ok(step) = jac.svd(true, true).solve(&(-f), 1e-12) else {
            break;
        };
        let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
        let tn = value(&trial).norm();
        if tn < best {
            best = tn;
            x = trial;
        } else {
            break;
        }
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mixture(points: &[(&[f64], f64)], order: u32) -> Tms {
        let n = points[0].0.len();
        let mut vals = vec![0.0; basis_size(n, order)];
        for &(x, w) in points {
            let lift = Tms::lift(x, order);
            for (acc, v) in vals.iter_mut().zip(lift.values()) {
                *acc += w * v;
            }
        }
        Tms::new(n, order, vals)
    }

    #[test]
    fn numeric_rank_on_known_matrices() {
        assert_eq!(numeric_rank(&DMatrix::identity(3, 3), RANK_TOL), 3);
        let u = DVector::from_column_slice(&[1.0, 0.5, 0.25]);
        let outer = &u * u.transpose();
        assert_eq!(numeric_rank(&outer, RANK_TOL), 1);
        let v = DVector::from_column_slice(&[1.0, -1.0, 2.0]);
        let two = &outer * 0.5 + (&v * v.transpose()) * 0.5;
        assert_eq!(numeric_rank(&two, RANK_TOL), 2);
        assert_eq!(numeric_rank(&DMatrix::zeros(2, 2), RANK_TOL), 0);
    }

    #[test]
    fn flat_truncation_on_single_lift() {
        let y = Tms::lift(&[0.3, -0.8], 4);
        let rep = flat_truncation(&y, 1, 2, RANK_TOL);
        assert_eq!(rep.t, Some(1));
        assert_eq!(rep.rank, 1);
    }

    #[test]
    fn flat_truncation_on_two_point_mixture() {
        let y = mixture(&[(&[1.0, 0.0], 0.5), (&[0.0, 1.0], 0.5)], 4);
        let rep = flat_truncation(&y, 1, 2, RANK_TOL);
        assert_eq!(rep.t, Some(2));
        assert_eq!(rep.rank, 2);
    }

    #[test]
    fn flat_truncation_rejects_increasing_ranks() {
        // Mixture of four generic points in one variable: ranks of M_0,
        // M_1, M_2 are 1, 2, 3, never equal one step apart.
        let y = mixture(
            &[
                (&[0.2], 0.25),
                (&[-0.9], 0.25),
                (&[1.3], 0.25),
                (&[0.6], 0.25),
            ],
            4,
        );
        let rep = flat_truncation(&y, 1, 2, RANK_TOL);
        assert_eq!(rep.t, None);
    }

    #[test]
    fn extracts_single_lifted_point() {
        let u = [0.4, -0.2, 0.9];
        let y = Tms::lift(&u, 4);
        let ext = extract_minimizers(&y, 2, 1, 0).unwrap();
        assert_eq!(ext.points.len(), 1);
        for (a, b) in ext.points[0].iter().zip(&u) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!((ext.weights[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn extracts_two_point_mixture() {
        let y = mixture(&[(&[1.0, 0.0], 0.5), (&[0.0, 1.0], 0.5)], 4);
        let ext = extract_minimizers(&y, 2, 2, 0).unwrap();
        let mut pts = ext.points.clone();
        pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert!((pts[0][0]).abs() < 1e-6 && (pts[0][1] - 1.0).abs() < 1e-6);
        assert!((pts[1][0] - 1.0).abs() < 1e-6 && (pts[1][1]).abs() < 1e-6);
        for w in &ext.weights {
            assert!((w - 0.5).abs() < 1e-6);
        }
        assert!(ext.residual <= EXTRACTION_TOL);
    }

    #[test]
    fn extraction_is_seed_invariant() {
        let y = mixture(&[(&[0.7, -0.3], 0.3), (&[-0.5, 0.2], 0.7)], 4);
        let sort = |mut pts: Vec<Vec<f64>>| {
            pts.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
            pts
        };
        let base = sort(extract_minimizers(&y, 2, 2, 0).unwrap().points);
        for seed in 1..5u64 {
            let pts = sort(extract_minimizers(&y, 2, 2, seed).unwrap().points);
            for (p, q) in base.iter().zip(&pts) {
                for (a, b) in p.iter().zip(q) {
                    assert!((a - b).abs() < 1e-8, "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn extraction_reports_unequal_weights() {
        let y = mixture(&[(&[0.25], 0.3), (&[-0.75], 0.7)], 6);
        let ext = extract_minimizers(&y, 3, 2, 1).unwrap();
        let mut pw: Vec<(f64, f64)> = ext
            .points
            .iter()
            .zip(&ext.weights)
            .map(|(p, &w)| (p[0], w))
            .collect();
        pw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((pw[0].0 + 0.75).abs() < 1e-7 && (pw[0].1 - 0.7).abs() < 1e-7);
        assert!((pw[1].0 - 0.25).abs() < 1e-7 && (pw[1].1 - 0.3).abs() < 1e-7);
    }

    #[test]
    fn refine_recovers_square_system_root() {
        // x^2 + y^2 = 1 and x = y meet at (1/sqrt2, 1/sqrt2).
        let x = Polynomial::var(vec![2], 0);
        let y = Polynomial::var(vec![2], 1);
        let one = Polynomial::constant(vec![2], 1.0);
        let circle = x.mul(&x).add(&y.mul(&y)).sub(&one);
        let diag = x.sub(&y);
        let s = 0.5_f64.sqrt();
        let refined = refine(&[circle.clone(), diag.clone()], &[s + 1e-3, s - 2e-3], 20);
        assert!((refined[0] - s).abs() < 1e-12);
        assert!((refined[1] - s).abs() < 1e-12);
        // A non-decreasing step is rejected: already-exact input is fixed.
        let fixed = refine(&[circle, diag], &[s, s], 20);
        assert!((fixed[0] - s).abs() < 1e-15);
    }
}
