//! Embedded primal-dual interior-point solver for linear SDPs.
//!
//! Solves the conic program `min c'x  s.t.  Ax = b, Gx + s = h, s psd`
//! coming from a moment relaxation, via a homogeneous self-dual embedding
//! with Nesterov-Todd scaling and a Mehrotra predictor-corrector. The cone
//! is a product of dense symmetric blocks in scaled-vector (svec) form;
//! equalities are deduplicated, row-scaled, and rank-filtered before the
//! iteration. Infeasibility is reported through normalized certificates.

use crate::moment::SdpProblem;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Fraction of the distance to the cone boundary taken each step.
const STEP_FRAC: f64 = 0.99;
/// Relative pivot threshold of the equality-row rank filter. Rows below
/// it add nothing at working precision and only poison conditioning.
const ROW_RANK_TOL: f64 = 1e-8;
/// Residual above which a dependent unit-scaled row contradicts the rows
/// kept before it.
const ROW_INCONSISTENT_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug)]
pub struct ConicOptions {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for ConicOptions {
    fn default() -> Self {
        ConicOptions { feas_tol: 1e-8, gap_tol: 1e-8, max_iters: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    /// Stopped early but with residuals within 100x of the tolerances.
    Inaccurate,
    IterationLimit,
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: ConicStatus,
    /// Normalized primal point (moment vector).
    pub y: Vec<f64>,
    /// Primal objective value; infinite for infeasible statuses.
    pub obj: f64,
    pub iters: usize,
    pub pres: f64,
    pub dres: f64,
    pub relgap: f64,
}

pub trait SdpBackend {
    fn solve(&self, sdp: &SdpProblem, opts: &ConicOptions) -> ConicSolution;
}

/// The built-in dense interior-point backend.
pub struct EmbeddedIpm;

impl SdpBackend for EmbeddedIpm {
    fn solve(&self, sdp: &SdpProblem, opts: &ConicOptions) -> ConicSolution {
        self.run(sdp, opts)
    }
}

/// Resolve a backend by name; `None` selects the default.
pub fn backend_by_name(name: Option<&str>) -> Result<Box<dyn SdpBackend>, String> {
    match name.unwrap_or("embedded") {
        "embedded" => Ok(Box::new(EmbeddedIpm)),
        other => Err(format!("unknown solver backend '{other}'")),
    }
}

/// Backend selected by the `NASHPOLY_SOLVER` environment variable.
pub fn backend_from_env() -> Result<Box<dyn SdpBackend>, String> {
    let name = std::env::var("NASHPOLY_SOLVER").ok();
    backend_by_name(name.as_deref())
}

/// One PSD block in solver form: per-variable sparse symmetric matrices
/// (upper-triangle entries) defining `mat_k(x) = sum_a x_a B_{k,a}`.
struct BlockData {
    dim: usize,
    svec_off: usize,
    by_var: Vec<(usize, Vec<(usize, usize, f64)>)>,
}

struct ConicData {
    n: usize,
    c: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    blocks: Vec<BlockData>,
    svec_total: usize,
    degree: usize,
    /// The equality rows contradict each other; no primal point exists.
    inconsistent: bool,
}

fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

fn svec_pos(d: usize, r: usize, c: usize) -> usize {
    debug_assert!(r <= c && c < d);
    r * d - r * (r + 1) / 2 + c
}

fn smat(d: usize, v: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for r in 0..d {
        for c in r..d {
            let x = v[svec_pos(d, r, c)];
            if r == c {
                m[(r, r)] = x;
            } else {
                m[(r, c)] = x / SQRT2;
                m[(c, r)] = x / SQRT2;
            }
        }
    }
    m
}

fn svec_write(m: &DMatrix<f64>, out: &mut [f64]) {
    let d = m.nrows();
    for r in 0..d {
        for c in r..d {
            out[svec_pos(d, r, c)] = if r == c { m[(r, r)] } else { SQRT2 * m[(r, c)] };
        }
    }
}

/// Greedy first-come rank filter on unit-scaled rows: keep a row when its
/// component orthogonal to the kept span exceeds the pivot threshold. A
/// dropped row whose right-hand side disagrees with the span marks the
/// equality system as inconsistent (primal infeasible by elimination).
fn rank_filter(rows: &[(Vec<(usize, f64)>, f64)], n: usize) -> (Vec<usize>, bool) {
    // Basis rows carry (direction, projected rhs, rhs noise bound). The
    // noise bound follows the same recursion as the rhs itself, with the
    // 1/pivot amplification made explicit, so a dependent row is declared
    // contradictory only when its residual rhs clears its own error bar.
    let mut basis: Vec<(DVector<f64>, f64, f64)> = Vec::new();
    let mut kept = Vec::new();
    let mut inconsistent = false;
    for (idx, (entries, rhs)) in rows.iter().enumerate() {
        let mut v = DVector::zeros(n);
        for &(i, w) in entries {
            v[i] = w;
        }
        let mut beta = *rhs;
        let mut eta = f64::EPSILON * rhs.abs();
        let orig = v.norm();
        if orig == 0.0 {
            if rhs.abs() > ROW_INCONSISTENT_TOL {
                inconsistent = true;
            }
            continue;
        }
        let project = |v: &mut DVector<f64>, beta: &mut f64, eta: &mut f64| {
            for (q, qb, qe) in &basis {
                let d = q.dot(v);
                v.axpy(-d, q, 1.0);
                *beta -= d * qb;
                *eta += d.abs() * qe + f64::EPSILON * (d * qb).abs();
            }
        };
        project(&mut v, &mut beta, &mut eta);
        // One reorthogonalization pass when cancellation was severe.
        if v.norm() < 1e-3 * orig {
            project(&mut v, &mut beta, &mut eta);
        }
        let r = v.norm();
        if r > ROW_RANK_TOL * orig {
            basis.push((v / r, beta / r, (eta + f64::EPSILON * beta.abs()) / r));
            kept.push(idx);
        } else if beta.abs() > ROW_INCONSISTENT_TOL.max(1e3 * eta) {
            if std::env::var("NASHPOLY_IPM_TRACE").is_ok() {
                eprintln!(
                    "rank_filter: row {idx} inconsistent: beta {beta:.3e} eta {eta:.3e} r/orig {:.3e} rhs {rhs:.3e} entries {:?}",
                    r / orig,
                    &entries[..entries.len().min(8)]
                );
            }
            inconsistent = true;
        }
    }
    (kept, inconsistent)
}

fn build_conic(sdp: &SdpProblem) -> ConicData {
    let n = sdp.nvars;
    let c = DVector::from_column_slice(&sdp.cost);

    // Unit-scale rows, then drop linearly dependent ones.
    let scaled: Vec<(Vec<(usize, f64)>, f64)> = sdp
        .eq
        .iter()
        .filter(|r| !r.entries.is_empty())
        .map(|r| {
            let nrm = r.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
            (
                r.entries.iter().map(|&(i, w)| (i, w / nrm)).collect(),
                r.rhs / nrm,
            )
        })
        .collect();
    let (kept, inconsistent) = rank_filter(&scaled, n);
    let p = kept.len();
    let mut a = DMatrix::zeros(p, n);
    let mut b = DVector::zeros(p);
    for (r, &idx) in kept.iter().enumerate() {
        for &(i, w) in &scaled[idx].0 {
            a[(r, i)] = w;
        }
        b[r] = scaled[idx].1;
    }

    let mut blocks = Vec::with_capacity(sdp.blocks.len());
    let mut off = 0;
    let mut degree = 0;
    for blk in &sdp.blocks {
        let d = blk.dim;
        let mut by_var: BTreeMap<usize, Vec<(usize, usize, f64)>> = BTreeMap::new();
        for r in 0..d {
            for cc in r..d {
                for &(var, w) in blk.entry(r, cc) {
                    by_var.entry(var).or_default().push((r, cc, w));
                }
            }
        }
        blocks.push(BlockData {
            dim: d,
            svec_off: off,
            by_var: by_var.into_iter().collect(),
        });
        off += svec_len(d);
        degree += d;
    }

    ConicData { n, c, a, b, blocks, svec_total: off, degree, inconsistent }
}

/// `svec` image of `x` under the block maps (the negated `G`).
fn s_of_x(data: &ConicData, x: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; data.svec_total];
    for blk in &data.blocks {
        let d = blk.dim;
        let o = blk.svec_off;
        for (var, entries) in &blk.by_var {
            let xv = x[*var];
            if xv == 0.0 {
                continue;
            }
            for &(i, j, w) in entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                out[o + svec_pos(d, i, j)] += scale * w * xv;
            }
        }
    }
    out
}

/// Adjoint of the block maps: variable `a` gets `<svec(B_a), v>`.
fn st_of_v(data: &ConicData, v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(data.n);
    for blk in &data.blocks {
        let d = blk.dim;
        let o = blk.svec_off;
        for (var, entries) in &blk.by_var {
            let mut acc = 0.0;
            for &(i, j, w) in entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                acc += scale * w * v[o + svec_pos(d, i, j)];
            }
            out[*var] += acc;
        }
    }
    out
}

/// Nesterov-Todd scaling of one block: `R` maps the scaled point to the
/// primal side (`s = R Lam R'`), its inverse to the dual side.
struct Scaling {
    r: DMatrix<f64>,
    rinv: DMatrix<f64>,
    /// `q = r r'`; `w w' u = svec(q mat(u) q)`.
    q: DMatrix<f64>,
    qinv: DMatrix<f64>,
    lam: DVector<f64>,
}

impl Scaling {
    fn identity(d: usize) -> Self {
        Scaling {
            r: DMatrix::identity(d, d),
            rinv: DMatrix::identity(d, d),
            q: DMatrix::identity(d, d),
            qinv: DMatrix::identity(d, d),
            lam: DVector::from_element(d, 1.0),
        }
    }

    fn compute(s: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Self> {
        let l1 = nalgebra::Cholesky::new(s.clone())?.l();
        let l2 = nalgebra::Cholesky::new(z.clone())?.l();
        let m = l2.transpose() * &l1;
        let svd = m.svd(true, true);
        let u = svd.u.as_ref()?;
        let vt = svd.v_t.as_ref()?;
        let sig = &svd.singular_values;
        if sig.min() <= 0.0 {
            return None;
        }
        let half_inv: Vec<f64> = sig.iter().map(|v| 1.0 / v.sqrt()).collect();
        // r = L1 V diag(sig^-1/2); rinv = diag(sig^-1/2) U' L2'.
        let mut v = vt.transpose();
        for (j, hv) in half_inv.iter().enumerate() {
            v.column_mut(j).scale_mut(*hv);
        }
        let r = &l1 * v;
        let mut ut = u.transpose();
        for (i, hv) in half_inv.iter().enumerate() {
            ut.row_mut(i).scale_mut(*hv);
        }
        let rinv = ut * l2.transpose();
        let q = &r * r.transpose();
        let qinv = rinv.transpose() * &rinv;
        Some(Scaling { r, rinv, q, qinv, lam: sig.clone_owned() })
    }
}

/// Apply a congruence `m -> A m A'` blockwise to a cone vector, with the
/// per-block matrix `A` chosen by `pick`.
fn apply_blocks<F>(data: &ConicData, scal: &[Scaling], v: &[f64], pick: F) -> Vec<f64>
where
    F: Fn(&Scaling) -> DMatrix<f64>,
{
    let mut out = vec![0.0; data.svec_total];
    for (bi, blk) in data.blocks.iter().enumerate() {
        let d = blk.dim;
        let m = smat(d, &v[blk.svec_off..blk.svec_off + svec_len(d)]);
        let a = pick(&scal[bi]);
        let t = &a * m * a.transpose();
        svec_write(&t, &mut out[blk.svec_off..blk.svec_off + svec_len(d)]);
    }
    out
}

/// Above this dimension the solver switches from the full augmented KKT
/// factorization (numerically strongest) to the cone-eliminated reduced
/// form (smaller but more ill-conditioned near convergence).
const FULL_KKT_DIM_LIMIT: usize = 1600;

struct Kkt {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Symmetric Ruiz equilibration scale: the factored matrix is `D K D`.
    d: DVector<f64>,
    n: usize,
    p: usize,
    /// Cone dimension when the full system was factored; 0 for reduced.
    m: usize,
}

impl Kkt {
    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let scaled = rhs.component_mul(&self.d);
        let sol = self.lu.solve(&scaled)?;
        Some(sol.component_mul(&self.d))
    }
}

/// Symmetric Ruiz equilibration, returning the diagonal scale applied on
/// both sides of `k`.
fn equilibrate(k: &mut DMatrix<f64>) -> DVector<f64> {
    let dim = k.nrows();
    let mut d = DVector::from_element(dim, 1.0);
    for _ in 0..6 {
        let mut done = true;
        for i in 0..dim {
            let m = k.row(i).amax();
            if m > 0.0 {
                let f = 1.0 / m.sqrt();
                if !(0.9..=1.1).contains(&f) {
                    done = false;
                }
                d[i] *= f;
                for j in 0..dim {
                    k[(i, j)] *= f;
                    k[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
    d
}

/// Factor the iteration KKT system. Small problems use the full augmented
/// form `[0 A' G'; A 0 0; G 0 -WW']`, whose conditioning degrades only
/// like `1/mu`; larger ones fall back to the cone-eliminated reduced form
/// `[H A'; A 0]`, which is cheaper but degrades like `1/mu^2`.
fn factor_kkt(data: &ConicData, scal: &[Scaling]) -> Kkt {
    if data.n + data.a.nrows() + data.svec_total <= FULL_KKT_DIM_LIMIT {
        factor_kkt_full(data, scal)
    } else {
        factor_kkt_reduced(data, scal)
    }
}

fn factor_kkt_full(data: &ConicData, scal: &[Scaling]) -> Kkt {
    let n = data.n;
    let p = data.a.nrows();
    let m = data.svec_total;
    let mut k = DMatrix::zeros(n + p + m, n + p + m);
    k.view_mut((n, 0), (p, n)).copy_from(&data.a);
    k.view_mut((0, n), (n, p)).copy_from(&data.a.transpose());
    // G = -S: the negated svec image of the block maps.
    for blk in &data.blocks {
        let d = blk.dim;
        let o = n + p + blk.svec_off;
        for (var, entries) in &blk.by_var {
            for &(i, j, w) in entries {
                let scale = if i == j { 1.0 } else { SQRT2 };
                let row = o + svec_pos(d, i, j);
                k[(row, *var)] -= scale * w;
                k[(*var, row)] -= scale * w;
            }
        }
    }
    // -WW' blockwise: column (a,b) is -svec(Q mat(e_ab) Q).
    for (bi, blk) in data.blocks.iter().enumerate() {
        let d = blk.dim;
        let o = n + p + blk.svec_off;
        let q = &scal[bi].q;
        for a in 0..d {
            for b in a..d {
                let col = o + svec_pos(d, a, b);
                let f = if a == b { 0.5 } else { 1.0 / SQRT2 };
                for r in 0..d {
                    for c in r..d {
                        let s = if r == c { 1.0 } else { SQRT2 };
                        let v = s * f * (q[(r, a)] * q[(c, b)] + q[(r, b)] * q[(c, a)]);
                        k[(o + svec_pos(d, r, c), col)] = -v;
                    }
                }
            }
        }
    }
    let d = equilibrate(&mut k);
    Kkt { lu: nalgebra::LU::new(k), d, n, p, m }
}

/// Reduced form with `H = G' (W W')^{-1} G` built blockwise from sparse
/// entries. The matrix becomes strongly graded as the barrier parameter
/// drops, so it is Ruiz equilibrated before the LU factorization, and if
/// a probe shows that refinement against the factorization diverges, the
/// factorization is retried with quasi-definite regularization
/// `[H + rho I, A'; A, -rho I]`. Refinement in `solve3` runs against the
/// unregularized operators, so the shift costs accuracy only through
/// extra refinement steps.
fn factor_kkt_reduced(data: &ConicData, scal: &[Scaling]) -> Kkt {
    let n = data.n;
    let p = data.a.nrows();
    let mut k = DMatrix::zeros(n + p, n + p);
    for (bi, blk) in data.blocks.iter().enumerate() {
        let d = blk.dim;
        let qinv = &scal[bi].qinv;
        let mut t = DMatrix::zeros(d, d);
        for (beta, entries_b) in &blk.by_var {
            t.fill(0.0);
            for &(i, j, w) in entries_b {
                let qi = qinv.column(i);
                let qj = qinv.column(j);
                t.ger(w, &qi, &qj, 1.0);
                if i != j {
                    t.ger(w, &qj, &qi, 1.0);
                }
            }
            for (alpha, entries_a) in &blk.by_var {
                let mut acc = 0.0;
                for &(i, j, w) in entries_a {
                    acc += w * if i == j { t[(i, i)] } else { 2.0 * t[(i, j)] };
                }
                k[(*alpha, *beta)] += acc;
            }
        }
    }
    k.view_mut((n, 0), (p, n)).copy_from(&data.a);
    k.view_mut((0, n), (n, p)).copy_from(&data.a.transpose());
    let d = equilibrate(&mut k);
    let dim = n + p;
    let mut reg = 0.0_f64;
    loop {
        let lu = if reg == 0.0 {
            nalgebra::LU::new(k.clone())
        } else {
            let mut kr = k.clone();
            for i in 0..n {
                kr[(i, i)] += reg;
            }
            for i in n..dim {
                kr[(i, i)] -= reg;
            }
            nalgebra::LU::new(kr)
        };
        if reg >= REG_MAX || probe_refines(&k, &lu) {
            return Kkt { lu, d, n, p, m: 0 };
        }
        reg = if reg == 0.0 { REG_MIN } else { reg * 1e4 };
    }
}

const REG_MIN: f64 = 1e-10;
const REG_MAX: f64 = 1e-2;

/// True when two refinement steps against `k` contract the solve residual
/// of the factored (possibly shifted) system to near roundoff.
fn probe_refines(
    k: &DMatrix<f64>,
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
) -> bool {
    let dim = k.nrows();
    let r = DVector::from_element(dim, 1.0 / (dim as f64).sqrt());
    let Some(mut x) = lu.solve(&r) else {
        return false;
    };
    let mut e = &r - k * &x;
    for _ in 0..2 {
        let Some(c) = lu.solve(&e) else {
            return false;
        };
        x += c;
        e = &r - k * &x;
    }
    e.norm().is_finite() && e.norm() <= 1e-9
}

fn solve3_once(
    data: &ConicData,
    scal: &[Scaling],
    kkt: &Kkt,
    bx: &DVector<f64>,
    by: &DVector<f64>,
    bz: &[f64],
) -> Option<(DVector<f64>, DVector<f64>, Vec<f64>)> {
    if kkt.m > 0 {
        let mut rhs = DVector::zeros(kkt.n + kkt.p + kkt.m);
        rhs.rows_mut(0, kkt.n).copy_from(bx);
        rhs.rows_mut(kkt.n, kkt.p).copy_from(by);
        for (i, v) in bz.iter().enumerate() {
            rhs[kkt.n + kkt.p + i] = *v;
        }
        let sol = kkt.solve(&rhs)?;
        let ux = sol.rows(0, kkt.n).clone_owned();
        let uy = sol.rows(kkt.n, kkt.p).clone_owned();
        let uz = sol.rows(kkt.n + kkt.p, kkt.m).as_slice().to_vec();
        return Some((ux, uy, uz));
    }
    let wz = apply_blocks(data, scal, bz, |sc| sc.qinv.clone());
    let rhs_top = bx - st_of_v(data, &wz);
    let mut rhs = DVector::zeros(kkt.n + kkt.p);
    rhs.rows_mut(0, kkt.n).copy_from(&rhs_top);
    rhs.rows_mut(kkt.n, kkt.p).copy_from(by);
    let sol = kkt.solve(&rhs)?;
    let ux = sol.rows(0, kkt.n).clone_owned();
    let uy = sol.rows(kkt.n, kkt.p).clone_owned();
    let sx = s_of_x(data, &ux);
    let gz: Vec<f64> = sx.iter().zip(bz).map(|(a, b)| a + b).collect();
    let uz = apply_blocks(data, scal, &gz, |sc| sc.qinv.clone());
    Some((ux, uy, uz.iter().map(|v| -v).collect()))
}

/// Solve `[0 A' G'; A 0 0; G 0 -WW'] (x, y, z) = (bx, by, bz)` with
/// iterative refinement to counter late-stage KKT ill-conditioning. The
/// best iterate is kept; `None` when even refinement leaves the solve
/// residual unusable.
fn solve3(
    data: &ConicData,
    scal: &[Scaling],
    kkt: &Kkt,
    bx: &DVector<f64>,
    by: &DVector<f64>,
    bz: &[f64],
) -> Option<(DVector<f64>, DVector<f64>, Vec<f64>)> {
    let (mut ux, mut uy, mut uz) = solve3_once(data, scal, kkt, bx, by, bz)?;
    let scale = bx.norm().max(by.norm()).max(norm(bz)).max(1.0);
    let residual = |ux: &DVector<f64>, uy: &DVector<f64>, uz: &Vec<f64>| {
        let wwuz = apply_blocks(data, scal, uz, |sc| sc.q.clone());
        let sx = s_of_x(data, ux);
        let r1 = bx - (data.a.transpose() * uy - st_of_v(data, uz));
        let r2 = by - &data.a * ux;
        let r3: Vec<f64> = bz
            .iter()
            .zip(sx.iter().zip(&wwuz))
            .map(|(b, (g, w))| b + g + w)
            .collect();
        let err = r1.norm().max(r2.norm()).max(norm(&r3));
        (r1, r2, r3, err)
    };
    let (mut r1, mut r2, mut r3, mut err) = residual(&ux, &uy, &uz);
    let mut best = (ux.clone(), uy.clone(), uz.clone(), err);
    for _ in 0..12 {
        if err <= 1e-13 * scale {
            break;
        }
        let (cx, cy, cz) = solve3_once(data, scal, kkt, &r1, &r2, &r3)?;
        ux += cx;
        uy += cy;
        for i in 0..uz.len() {
            uz[i] += cz[i];
        }
        let prev = err;
        (r1, r2, r3, err) = residual(&ux, &uy, &uz);
        if err < best.3 {
            best = (ux.clone(), uy.clone(), uz.clone(), err);
        }
        // Diminishing returns: refinement has hit its floor.
        if err > 0.5 * prev {
            break;
        }
    }
    // Inaccurate directions are still usable: the cone line search bounds
    // the step, and the caller recomputes true residuals and tracks its
    // best iterate. Only non-finite solves are rejected.
    let (ux, uy, uz, err) = best;
    if !err.is_finite() {
        return None;
    }
    if err > 1e-3 * scale && std::env::var("NASHPOLY_IPM_TRACE").is_ok() {
        eprintln!("solve3 sloppy: err {err:.2e} scale {scale:.2e}");
    }
    Some((ux, uy, uz))
}

/// Jordan inverse `lam \ v` for the diagonal scaled point.
fn lam_div(data: &ConicData, scal: &[Scaling], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.svec_total];
    for (bi, blk) in data.blocks.iter().enumerate() {
        let d = blk.dim;
        let m = smat(d, &v[blk.svec_off..blk.svec_off + svec_len(d)]);
        let lam = &scal[bi].lam;
        let mut t = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                t[(i, j)] = 2.0 * m[(i, j)] / (lam[i] + lam[j]);
            }
        }
        svec_write(&t, &mut out[blk.svec_off..blk.svec_off + svec_len(d)]);
    }
    out
}

/// Symmetrized Jordan product of two cone vectors.
fn jordan_product(data: &ConicData, a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; data.svec_total];
    for blk in &data.blocks {
        let d = blk.dim;
        let ma = smat(d, &a[blk.svec_off..blk.svec_off + svec_len(d)]);
        let mb = smat(d, &b[blk.svec_off..blk.svec_off + svec_len(d)]);
        let t = (&ma * &mb + &mb * &ma) * 0.5;
        svec_write(&t, &mut out[blk.svec_off..blk.svec_off + svec_len(d)]);
    }
    out
}

/// Largest step keeping `Lam + alpha * mat(v)` positive semidefinite over
/// all blocks; `None` means any step is feasible.
fn max_cone_step(data: &ConicData, scal: &[Scaling], v: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (bi, blk) in data.blocks.iter().enumerate() {
        let d = blk.dim;
        let m = smat(d, &v[blk.svec_off..blk.svec_off + svec_len(d)]);
        let lam = &scal[bi].lam;
        let mut t = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                t[(i, j)] = m[(i, j)] / (lam[i] * lam[j]).sqrt();
            }
        }
        let mn = t.symmetric_eigenvalues().min();
        if mn < 0.0 {
            let step = -1.0 / mn;
            best = Some(best.map_or(step, |b: f64| b.min(step)));
        }
    }
    best
}

fn cone_min_eig(data: &ConicData, v: &[f64]) -> f64 {
    let mut mn = f64::INFINITY;
    for blk in &data.blocks {
        let d = blk.dim;
        let m = smat(d, &v[blk.svec_off..blk.svec_off + svec_len(d)]);
        mn = mn.min(m.symmetric_eigenvalues().min());
    }
    mn
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn shift_diagonal(data: &ConicData, v: &mut [f64], by: f64) {
    for blk in &data.blocks {
        for i in 0..blk.dim {
            v[blk.svec_off + svec_pos(blk.dim, i, i)] += by;
        }
    }
}

impl EmbeddedIpm {
    fn run(&self, sdp: &SdpProblem, opts: &ConicOptions) -> ConicSolution {
        let data = build_conic(sdp);
        if data.inconsistent {
            return ConicSolution {
                status: ConicStatus::PrimalInfeasible,
                y: vec![0.0; data.n],
                obj: f64::INFINITY,
                iters: 0,
                pres: 0.0,
                dres: 0.0,
                relgap: f64::NAN,
            };
        }
        let n = data.n;
        let p = data.a.nrows();
        let resx0 = data.c.norm().max(1.0);
        let resy0 = data.b.norm().max(1.0);
        let resz0 = 1.0_f64;
        let neg_c = -&data.c;
        let zero_cone = vec![0.0; data.svec_total];

        let fail = |iters: usize| ConicSolution {
            status: ConicStatus::IterationLimit,
            y: vec![0.0; n],
            obj: f64::NAN,
            iters,
            pres: f64::INFINITY,
            dres: f64::INFINITY,
            relgap: f64::INFINITY,
        };

        // Initial point from two identity-scaled KKT solves, cone parts
        // shifted to be safely positive definite, tau = kappa = 1.
        let id_scal: Vec<Scaling> =
            data.blocks.iter().map(|b| Scaling::identity(b.dim)).collect();
        let kkt0 = factor_kkt(&data, &id_scal);
        let Some((x0, _, z0)) =
            solve3(&data, &id_scal, &kkt0, &DVector::zeros(n), &data.b.clone(), &zero_cone)
        else {
            return fail(0);
        };
        let mut x = x0;
        let mut s: Vec<f64> = z0.iter().map(|v| -v).collect();
        let Some((_, y0, z1)) =
            solve3(&data, &id_scal, &kkt0, &neg_c, &DVector::zeros(p), &zero_cone)
        else {
            return fail(0);
        };
        let mut y = y0;
        let mut z = z1;
        let ts = -cone_min_eig(&data, &s);
        if ts >= -1e-8 * norm(&s).max(1.0) {
            shift_diagonal(&data, &mut s, 1.0 + ts.max(0.0));
        }
        let tz = -cone_min_eig(&data, &z);
        if tz >= -1e-8 * norm(&z).max(1.0) {
            shift_diagonal(&data, &mut z, 1.0 + tz.max(0.0));
        }
        let mut tau = 1.0_f64;
        let mut kappa = 1.0_f64;

        let mut best = fail(0);
        let mut best_score = f64::INFINITY;
        let mut last_mu = f64::INFINITY;
        let mut no_progress = 0usize;
        let mut tiny_steps = 0usize;

        for iter in 0..opts.max_iters {
            // Residuals of the homogeneous embedding.
            let sx = s_of_x(&data, &x);
            let rx = data.a.transpose() * &y - st_of_v(&data, &z) + &data.c * tau;
            let ry = &data.a * &x - &data.b * tau;
            let rz: Vec<f64> = sx.iter().zip(&s).map(|(g, sv)| sv - g).collect();
            let rtau = kappa + data.c.dot(&x) + data.b.dot(&y);
            let gap = dot(&s, &z);
            let mu = (gap + tau * kappa) / (data.degree as f64 + 1.0);

            let pcost = data.c.dot(&x) / tau;
            let dcost = -data.b.dot(&y) / tau;
            let pres = (ry.norm() / resy0).max(norm(&rz) / resz0) / tau;
            let dres = (rx.norm() / resx0) / tau;
            let relgap = gap / (tau * tau) / pcost.abs().max(dcost.abs()).max(1.0);

            let score = (pres / opts.feas_tol)
                .max(dres / opts.feas_tol)
                .max(relgap / opts.gap_tol);
            if score < best_score {
                best_score = score;
                best = ConicSolution {
                    status: ConicStatus::IterationLimit,
                    y: x.iter().map(|v| v / tau).collect(),
                    obj: pcost,
                    iters: iter,
                    pres,
                    dres,
                    relgap,
                };
            }

            if std::env::var("NASHPOLY_IPM_TRACE").is_ok() {
                eprintln!(
                    "it {iter}: pcost {pcost:.6e} pres {pres:.2e} dres {dres:.2e} relgap {relgap:.2e} mu {mu:.2e} tau {tau:.2e} kappa {kappa:.2e}"
                );
            }
            let current = |status: ConicStatus, obj: f64| ConicSolution {
                status,
                y: x.iter().map(|v| v / tau).collect(),
                obj,
                iters: iter,
                pres,
                dres,
                relgap,
            };
            if pres <= opts.feas_tol && dres <= opts.feas_tol && relgap <= opts.gap_tol {
                return current(ConicStatus::Optimal, pcost);
            }
            let by0 = data.b.dot(&y);
            if by0 < 0.0 {
                let cert = (&rx - &data.c * tau).norm() / resx0 / (-by0);
                if cert <= opts.feas_tol {
                    return current(ConicStatus::PrimalInfeasible, f64::INFINITY);
                }
            }
            let cx = data.c.dot(&x);
            if cx < 0.0 {
                let ax = (&ry + &data.b * tau).norm() / resy0;
                let gxs = norm(&rz) / resz0;
                if ax.max(gxs) / (-cx) <= opts.feas_tol {
                    return current(ConicStatus::DualInfeasible, f64::NEG_INFINITY);
                }
            }

            if mu > 0.999 * last_mu {
                no_progress += 1;
            } else {
                no_progress = 0;
            }
            last_mu = mu;
            if no_progress >= 8 || (tau < 1e-14 && kappa < 1e-14) {
                break;
            }

            // Nesterov-Todd scaling and KKT factorization.
            let mut scal = Vec::with_capacity(data.blocks.len());
            let mut ok = true;
            for blk in &data.blocks {
                let d = blk.dim;
                let sm = smat(d, &s[blk.svec_off..blk.svec_off + svec_len(d)]);
                let zm = smat(d, &z[blk.svec_off..blk.svec_off + svec_len(d)]);
                match Scaling::compute(&sm, &zm) {
                    Some(sc) => scal.push(sc),
                    None => {
                        if std::env::var("NASHPOLY_IPM_TRACE").is_ok() {
                            eprintln!("scaling failure at iter {iter}");
                        }
                        ok = false;
                        break;
                    }
                }
            }
            if !ok {
                break;
            }
            let kkt = factor_kkt(&data, &scal);
            let Some((tx, ty, tz)) =
                solve3(&data, &scal, &kkt, &neg_c, &data.b.clone(), &zero_cone)
            else {
                break;
            };
            let denom = data.c.dot(&tx) + data.b.dot(&ty) - kappa / tau;
            if denom.abs() < 1e-300 || !denom.is_finite() {
                break;
            }

            // Shared direction solve; returns (dx, dy, dz, ds, dtau, dkappa).
            let direction = |bx: &DVector<f64>,
                             by: &DVector<f64>,
                             bz: &[f64],
                             btau: f64,
                             blam: &[f64],
                             bkappa: f64|
             -> Option<(DVector<f64>, DVector<f64>, Vec<f64>, Vec<f64>, f64, f64)> {
                let ld = lam_div(&data, &scal, blam);
                let wld = apply_blocks(&data, &scal, &ld, |sc| sc.r.clone());
                let bz_t: Vec<f64> = bz.iter().zip(&wld).map(|(a, b)| a - b).collect();
                let (x1, y1, z1) = solve3(&data, &scal, &kkt, bx, by, &bz_t)?;
                let dtau =
                    (btau - bkappa / tau - (data.c.dot(&x1) + data.b.dot(&y1))) / denom;
                let dx = &x1 + &tx * dtau;
                let dy = &y1 + &ty * dtau;
                let dz: Vec<f64> = z1.iter().zip(&tz).map(|(a, b)| a + b * dtau).collect();
                let wwdz = apply_blocks(&data, &scal, &dz, |sc| sc.q.clone());
                let ds: Vec<f64> = wld.iter().zip(&wwdz).map(|(a, b)| a - b).collect();
                let dkappa = (bkappa - kappa * dtau) / tau;
                Some((dx, dy, dz, ds, dtau, dkappa))
            };

            // Predictor (affine) direction.
            let mut blam_aff = vec![0.0; data.svec_total];
            for (bi, blk) in data.blocks.iter().enumerate() {
                for i in 0..blk.dim {
                    let l = scal[bi].lam[i];
                    blam_aff[blk.svec_off + svec_pos(blk.dim, i, i)] = -l * l;
                }
            }
            let neg = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| -a).collect() };
            let Some((_dxa, _dya, dza, dsa, dta, dka)) = direction(
                &(-&rx),
                &(-&ry),
                &neg(&rz),
                -rtau,
                &blam_aff,
                -tau * kappa,
            ) else {
                break;
            };
            let dsa_sc = apply_blocks(&data, &scal, &dsa, |sc| sc.rinv.clone());
            let dza_sc = apply_blocks(&data, &scal, &dza, |sc| sc.r.transpose());
            let mut amax = f64::INFINITY;
            if let Some(a) = max_cone_step(&data, &scal, &dsa_sc) {
                amax = amax.min(a);
            }
            if let Some(a) = max_cone_step(&data, &scal, &dza_sc) {
                amax = amax.min(a);
            }
            if dta < 0.0 {
                amax = amax.min(-tau / dta);
            }
            if dka < 0.0 {
                amax = amax.min(-kappa / dka);
            }
            let alpha_aff = amax.min(1.0);
            let gap_aff = gap
                + alpha_aff * (dot(&dsa, &z) + dot(&s, &dza))
                + alpha_aff * alpha_aff * dot(&dsa, &dza);
            let mu_aff = (gap_aff
                + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka))
                / (data.degree as f64 + 1.0);
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector (combined) direction.
            let corr = jordan_product(&data, &dsa_sc, &dza_sc);
            let mut blam = vec![0.0; data.svec_total];
            for i in 0..data.svec_total {
                blam[i] = blam_aff[i] - corr[i];
            }
            shift_diagonal(&data, &mut blam, sigma * mu);
            let f = 1.0 - sigma;
            let Some((dx, dy, dz, ds, dt, dk)) = direction(
                &(-&rx * f),
                &(-&ry * f),
                &rz.iter().map(|v| -v * f).collect::<Vec<_>>(),
                -rtau * f,
                &blam,
                -tau * kappa - dta * dka + sigma * mu,
            ) else {
                break;
            };
            let ds_sc = apply_blocks(&data, &scal, &ds, |sc| sc.rinv.clone());
            let dz_sc = apply_blocks(&data, &scal, &dz, |sc| sc.r.transpose());
            let mut amax = f64::INFINITY;
            if let Some(a) = max_cone_step(&data, &scal, &ds_sc) {
                amax = amax.min(a);
            }
            if let Some(a) = max_cone_step(&data, &scal, &dz_sc) {
                amax = amax.min(a);
            }
            if dt < 0.0 {
                amax = amax.min(-tau / dt);
            }
            if dk < 0.0 {
                amax = amax.min(-kappa / dk);
            }
            let alpha = (STEP_FRAC * amax).min(1.0);
            if !alpha.is_finite() || alpha <= 0.0 {
                break;
            }

            x += &dx * alpha;
            y += &dy * alpha;
            for i in 0..data.svec_total {
                s[i] += alpha * ds[i];
                z[i] += alpha * dz[i];
            }
            tau += alpha * dt;
            kappa += alpha * dk;

            if alpha < 1e-6 {
                tiny_steps += 1;
                if tiny_steps >= 3 {
                    break;
                }
            } else {
                tiny_steps = 0;
            }
        }

        if best.pres <= 100.0 * opts.feas_tol
            && best.dres <= 100.0 * opts.feas_tol
            && best.relgap <= 100.0 * opts.gap_tol
        {
            best.status = ConicStatus::Inaccurate;
        }
        if std::env::var("NASHPOLY_IPM_TRACE").is_ok() {
            eprintln!(
                "ipm return: {:?} iters={} obj={:.6e} pres={:.2e} dres={:.2e} relgap={:.2e}",
                best.status, best.iters, best.obj, best.pres, best.dres, best.relgap
            );
        }
        best
    }
}
