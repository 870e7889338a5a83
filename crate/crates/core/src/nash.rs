//! Equilibrium search: the master relaxation over the joint KKT system,
//! per-player optimality checks, the cut loop, and enumeration through an
//! exclusion gate.
//!
//! The master problem minimizes a generic positive definite quadratic
//! `theta` over the KKT variety; its degree-one moments propose a
//! candidate `u`. Each player then minimizes the best-response gap
//! `f_i(x_i, u_{-i}) - f_i(u)` over their own KKT set: a nonnegative gap
//! for every player certifies `u` as an equilibrium, and a negative gap
//! produces minimizers that are attached as cuts before the master runs
//! again. Enumeration repeats the search above an exclusion level
//! `theta >= upsilon + delta`, with `delta` validated by a gate that
//! maximizes `theta` inside the window.

use crate::extract::{extract_minimizers, flat_truncation, refine};
use crate::model::{ConstraintFamily, ConstraintKind, KktSystem, NepProblem};
use crate::moment::{assemble_relaxation, gen_theta, min_order};
use crate::poly::Polynomial;
use crate::solver::{
    backend_by_name, backend_from_env, ConicOptions, ConicStatus, SdpBackend,
};
use crate::tms::Tms;
use serde::Serialize;

/// Divisor applied to `delta` on every failed gate round.
const DELTA_SHRINK: f64 = 5.0;
/// Gate deltas below this are treated as underflow (likely a
/// non-isolated KKT point).
const DELTA_MIN: f64 = 1e-12;
/// Absolute tolerance for value agreements: the candidate-acceptance test
/// and the gate-closure test.
const VALUE_TOL: f64 = 1e-6;
/// Infinity-norm separation below which two equilibria are the same point.
const DISTINCT_TOL: f64 = 1e-4;
/// Relaxations whose variable count plus row count exceed this are skipped:
/// one factorization would already dwarf the rest of the run, and orders
/// only grow. Keeps runtimes bounded without wall-clock dependence.
const SOLVE_DIM_CAP: usize = 6000;

#[derive(Clone, Debug)]
pub struct SolverOptions {
    /// Seed for the random objective `theta` and the extraction step.
    pub seed: u64,
    /// Hierarchy order cap per subproblem; the default is the minimum
    /// admissible order plus two.
    pub k_max: Option<u32>,
    pub delta_init: f64,
    /// Best-response gaps above `-omega_tol` count as optimal.
    pub omega_tol: f64,
    /// Feasibility tolerance for candidate points.
    pub feas_check_tol: f64,
    pub rank_tol: f64,
    pub max_outer_loops: usize,
    /// Declared-convex mode: accept or give up after a single check round.
    pub convex: bool,
    pub conic: ConicOptions,
    /// Conic backend name; `None` defers to `NASHPOLY_SOLVER`.
    pub backend: Option<String>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            seed: 0,
            k_max: None,
            delta_init: 0.1,
            omega_tol: 1e-6,
            feas_check_tol: 1e-6,
            rank_tol: 1e-6,
            max_outer_loops: 30,
            convex: false,
            conic: ConicOptions::default(),
            backend: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NeStatus {
    FoundAll,
    FoundSome,
    NoneExists,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct Equilibrium {
    pub point: Vec<f64>,
    /// Value of the master objective at the point.
    pub theta: f64,
    pub omega_star: f64,
    pub omegas: Vec<f64>,
    /// Lagrange multipliers per player, evaluated at the point.
    pub multipliers: Vec<Vec<f64>>,
    pub found_in_loop: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TraceRecord {
    /// Enumeration phase: 1 for the first equilibrium, increasing after.
    pub phase: usize,
    pub loop_index: usize,
    /// (order, status) per master hierarchy step.
    pub master_orders: Vec<(u32, String)>,
    pub candidate: Option<Vec<f64>>,
    pub theta_k: Option<f64>,
    pub omegas: Option<Vec<f64>>,
    /// Orders reached by the per-player checks.
    pub check_orders: Vec<u32>,
    /// Cut-set sizes per player after this loop.
    pub cut_sizes: Vec<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NeReport {
    pub status: NeStatus,
    pub equilibria: Vec<Equilibrium>,
    pub trace: Vec<TraceRecord>,
}

/// Master outcome at one cut-loop iteration. `certified` marks candidates
/// whose relaxation bound pinned them as theta-minimal; a stalled solve can
/// still surface a KKT-feasible point, but enumeration completeness claims
/// must then be dropped.
#[derive(Clone, Debug)]
pub enum MasterResult {
    Infeasible,
    Candidate { u: Vec<f64>, theta_k: f64, order: u32, certified: bool },
    Inconclusive,
}

/// Per-player verdict of `check_candidate`.
#[derive(Clone, Debug, Serialize)]
pub struct PlayerCheck {
    /// Best-response gap bound; negative means the candidate is refuted.
    pub omega: f64,
    /// Minimizers of the gap, used as cut points when refuting.
    pub minimizers: Vec<Vec<f64>>,
    /// Highest relaxation order used.
    pub order: u32,
    /// True when the minimizers came from local descent rather than
    /// moment-matrix extraction.
    pub fallback: bool,
    pub inconclusive: bool,
    /// True when the gap problem was certified unbounded twice in a row.
    pub unbounded: bool,
}

fn resolve_backend(opts: &SolverOptions) -> Box<dyn SdpBackend> {
    let r = match &opts.backend {
        Some(name) => backend_by_name(Some(name)),
        None => backend_from_env(),
    };
    r.unwrap_or_else(|e| panic!("{e}"))
}

fn status_str(s: ConicStatus) -> &'static str {
    match s {
        ConicStatus::Optimal => "optimal",
        ConicStatus::PrimalInfeasible => "primal_infeasible",
        ConicStatus::DualInfeasible => "dual_infeasible",
        ConicStatus::Inaccurate => "inaccurate",
        ConicStatus::IterationLimit => "iteration_limit",
    }
}

fn order_cap(opts: &SolverOptions, d0: u32) -> u32 {
    opts.k_max.unwrap_or(d0 + 2).max(d0)
}

/// Minimize `theta` over the KKT system (with cuts), optionally above an
/// exclusion level. A candidate is accepted only when its degree-one
/// moments form a feasible point whose `theta` value meets the relaxation
/// bound; primal infeasibility certifies that no KKT point remains.
pub fn solve_master(
    sys: &KktSystem,
    theta: &Polynomial,
    exclusion: Option<f64>,
    opts: &SolverOptions,
) -> (MasterResult, Vec<(u32, String)>) {
    let backend = resolve_backend(opts);
    let n: usize = sys.layout().iter().sum();
    let phi = sys.phi();
    let excl_poly = exclusion
        .map(|level| theta.sub(&Polynomial::constant(vec![n], level)));
    let mut psi = sys.psi();
    if let Some(p) = &excl_poly {
        psi.push(p);
    }
    let d0 = min_order(&phi, &psi, theta);
    let cap = order_cap(opts, d0);
    let mut log = Vec::new();
    // (theta value, point, reported bound, order) of the best KKT-feasible
    // point salvaged from stalled solves whose bound is untrustworthy.
    let mut salvage: Option<(f64, Vec<f64>, f64, u32)> = None;
    for k in d0..=cap {
        let sdp = assemble_relaxation(&phi, &psi, theta, k);
        if sdp.nvars + sdp.eq.len() > SOLVE_DIM_CAP {
            log.push((k, "skipped_dimension".to_string()));
            break;
        }
        let sol = backend.solve(&sdp, &opts.conic);
        log.push((k, status_str(sol.status).to_string()));
        match sol.status {
            ConicStatus::PrimalInfeasible => {
                return (MasterResult::Infeasible, log);
            }
            // Stalled-but-feasible solves still propose candidates;
            // acceptance rests on the residual and bound tests, with the
            // bound slack widened to the solve's own gap. Equilibrium
            // status is certified later by the player checks, never here.
            ConicStatus::Optimal | ConicStatus::Inaccurate | ConicStatus::IterationLimit => {
                let clean = sol.status != ConicStatus::IterationLimit;
                if !clean && !sol.obj.is_finite() {
                    continue;
                }
                // A stalled solve with small residuals still carries a
                // usable bound; anything sloppier only feeds the salvage
                // path below.
                let trusted = clean || (sol.pres <= 1e-4 && sol.dres <= 1e-4);
                let slack = if clean {
                    VALUE_TOL
                } else {
                    VALUE_TOL.max(10.0 * sol.relgap * (1.0 + sol.obj.abs()))
                };
                let y = Tms::new(n, 2 * k, sol.y);
                let mut proposals = vec![y.first_order_point()];
                let flat = flat_truncation(&y, d0, k, opts.rank_tol);
                if let Some(t) = flat.t {
                    if let Some(ext) = extract_minimizers(&y, t, flat.rank, opts.seed)
                    {
                        proposals.extend(ext.points);
                    }
                }
                let eqs: Vec<Polynomial> = phi.iter().map(|p| (*p).clone()).collect();
                let mut best: Option<(f64, Vec<f64>)> = None;
                for raw in proposals {
                    for u in [refine(&eqs, &raw, 20), raw] {
                        let (eq_res, ineq_min) = sys.residuals(&u);
                        let tv = theta.evaluate(&u);
                        let excl_ok = exclusion
                            .is_none_or(|lvl| tv >= lvl - opts.feas_check_tol);
                        if eq_res > opts.feas_check_tol
                            || ineq_min < -opts.feas_check_tol
                            || !excl_ok
                        {
                            continue;
                        }
                        if trusted {
                            if sol.obj >= tv - slack {
                                if best.as_ref().is_none_or(|(bt, _)| tv < *bt) {
                                    best = Some((tv, u));
                                }
                                break;
                            }
                            // Feasible but theta-inconsistent with a trusted
                            // bound: try the other representative.
                            continue;
                        }
                        if salvage.as_ref().is_none_or(|(bt, ..)| tv < *bt) {
                            salvage = Some((tv, u, sol.obj, k));
                        }
                        break;
                    }
                }
                if let Some((_, u)) = best {
                    return (
                        MasterResult::Candidate {
                            u,
                            theta_k: sol.obj,
                            order: k,
                            certified: true,
                        },
                        log,
                    );
                }
                // Larger orders on a system this degenerate stall the same
                // way at a much higher price, and the player checks decide
                // the salvaged point's fate either way; stop escalating.
                if !trusted && salvage.is_some() {
                    break;
                }
            }
            // Unbounded or failed solve: escalate the order.
            _ => {}
        }
    }
    // No order produced a bound-certified candidate; fall back to the best
    // salvaged KKT point. The player checks still decide whether it is an
    // equilibrium, only its theta-minimality is unknown.
    if let Some((_, u, theta_k, order)) = salvage {
        return (
            MasterResult::Candidate { u, theta_k, order, certified: false },
            log,
        );
    }
    (MasterResult::Inconclusive, log)
}

/// Solve every player's best-response gap problem at `u`.
pub fn check_candidate(
    nep: &NepProblem,
    u: &[f64],
    opts: &SolverOptions,
) -> Vec<PlayerCheck> {
    let backend = resolve_backend(opts);
    let sys = nep.kkt_sets();
    let mut out = Vec::with_capacity(nep.num_players());
    for i in 0..nep.num_players() {
        out.push(check_player(nep, &sys, i, u, opts, backend.as_ref()));
    }
    out
}

fn check_player(
    nep: &NepProblem,
    sys: &KktSystem,
    i: usize,
    u: &[f64],
    opts: &SolverOptions,
    backend: &dyn SdpBackend,
) -> PlayerCheck {
    let (eqs, ineqs, objective) = nep.check_sets(sys, i, u);
    let phi: Vec<&Polynomial> = eqs.iter().collect();
    let psi: Vec<&Polynomial> = ineqs.iter().collect();
    let d0 = min_order(&phi, &psi, &objective);
    let cap = order_cap(opts, d0);
    let ni = nep.layout()[i];
    let mut unbounded_streak = 0;
    let mut refuted: Option<f64> = None;
    let mut last_order = d0;
    for k in d0..=cap {
        last_order = k;
        let sdp = assemble_relaxation(&phi, &psi, &objective, k);
        let sol = backend.solve(&sdp, &opts.conic);
        match sol.status {
            ConicStatus::Optimal | ConicStatus::Inaccurate => {
                unbounded_streak = 0;
                if sol.obj >= -opts.omega_tol {
                    return PlayerCheck {
                        omega: sol.obj,
                        minimizers: Vec::new(),
                        order: k,
                        fallback: false,
                        inconclusive: false,
                        unbounded: false,
                    };
                }
                refuted = Some(sol.obj);
                if let Some(pts) =
                    gap_minimizers(nep, i, u, &eqs, ni, d0, k, sol.y, opts)
                {
                    return PlayerCheck {
                        omega: sol.obj,
                        minimizers: pts,
                        order: k,
                        fallback: false,
                        inconclusive: false,
                        unbounded: false,
                    };
                }
            }
            // A stalled solve with a clearly negative bound still refutes
            // the candidate; a pass always requires a converged bound.
            ConicStatus::IterationLimit
                if sol.obj.is_finite()
                    && sol.pres <= 1e-4
                    && sol.dres <= 1e-4
                    && sol.obj <= -1e-3 =>
            {
                unbounded_streak = 0;
                refuted = Some(sol.obj);
                if let Some(pts) =
                    gap_minimizers(nep, i, u, &eqs, ni, d0, k, sol.y, opts)
                {
                    return PlayerCheck {
                        omega: sol.obj,
                        minimizers: pts,
                        order: k,
                        fallback: false,
                        inconclusive: false,
                        unbounded: false,
                    };
                }
            }
            ConicStatus::DualInfeasible => {
                unbounded_streak += 1;
                if unbounded_streak == 2 {
                    return PlayerCheck {
                        omega: f64::NEG_INFINITY,
                        minimizers: Vec::new(),
                        order: k,
                        fallback: false,
                        inconclusive: true,
                        unbounded: true,
                    };
                }
            }
            // PrimalInfeasible contradicts u's own feasibility; treat it
            // and loose bounds alike as order escalation.
            _ => {
                unbounded_streak = 0;
            }
        }
    }
    if let Some(omega) = refuted {
        // Extraction never became flat; fall back to a locally improved
        // feasible point so the cut loop can progress.
        if let Some(v) = local_descent(nep, i, u, opts) {
            return PlayerCheck {
                omega,
                minimizers: vec![v],
                order: last_order,
                fallback: true,
                inconclusive: false,
                unbounded: false,
            };
        }
    }
    PlayerCheck {
        omega: refuted.unwrap_or(f64::NAN),
        minimizers: Vec::new(),
        order: last_order,
        fallback: false,
        inconclusive: true,
        unbounded: false,
    }
}

/// Extract, polish, and filter best-response gap minimizers from a check
/// solve's moment vector; `None` when extraction fails or nothing stays
/// feasible.
#[allow(clippy::too_many_arguments)]
fn gap_minimizers(
    nep: &NepProblem,
    i: usize,
    u: &[f64],
    eqs: &[Polynomial],
    ni: usize,
    d0: u32,
    k: u32,
    y: Vec<f64>,
    opts: &SolverOptions,
) -> Option<Vec<Vec<f64>>> {
    let y = Tms::new(ni, 2 * k, y);
    let flat = flat_truncation(&y, d0, k, opts.rank_tol);
    let ext = extract_minimizers(&y, flat.t?, flat.rank, opts.seed)?;
    let pts = polish_points(nep, i, u, eqs, ext.points, opts);
    if pts.is_empty() {
        None
    } else {
        Some(pts)
    }
}

/// Gauss-Newton polish of extracted gap minimizers against the restricted
/// KKT equalities, keeping only points that stay feasible for the
/// player's own constraints.
fn polish_points(
    nep: &NepProblem,
    i: usize,
    u: &[f64],
    eqs: &[Polynomial],
    points: Vec<Vec<f64>>,
    opts: &SolverOptions,
) -> Vec<Vec<f64>> {
    let restricted: Vec<(Polynomial, ConstraintKind)> = nep
        .player(i)
        .constraints
        .iter()
        .map(|c| (c.poly.restrict_rivals(i, u), c.kind))
        .collect();
    let feasible = |x: &[f64]| {
        restricted.iter().all(|(p, kind)| {
            let v = p.evaluate(x);
            match kind {
                ConstraintKind::Equality => v.abs() <= opts.feas_check_tol,
                ConstraintKind::Inequality => v >= -opts.feas_check_tol,
            }
        })
    };
    let mut out = Vec::new();
    for p in points {
        let polished = refine(eqs, &p, 20);
        if feasible(&polished) {
            out.push(polished);
        } else if feasible(&p) {
            out.push(p);
        }
    }
    out
}

/// Projected (or penalized, for custom sets) gradient descent on the
/// best-response gap, returning a feasible point that improves on `u_i`
/// by more than the omega tolerance.
fn local_descent(
    nep: &NepProblem,
    i: usize,
    u: &[f64],
    opts: &SolverOptions,
) -> Option<Vec<f64>> {
    let ni = nep.layout()[i];
    let f = nep.player(i).objective.restrict_rivals(i, u);
    let grads: Vec<Polynomial> = (0..ni).map(|j| f.differentiate(j)).collect();
    let restricted: Vec<(Polynomial, ConstraintKind)> = nep
        .player(i)
        .constraints
        .iter()
        .map(|c| (c.poly.restrict_rivals(i, u), c.kind))
        .collect();
    let family = &nep.player(i).family;
    let custom = matches!(family, ConstraintFamily::Custom { .. });

    // Penalized objective for sets without a closed-form projection.
    let rho = 1e4;
    let value = |x: &[f64]| -> f64 {
        let mut v = f.evaluate(x);
        if custom {
            for (p, kind) in &restricted {
                let g = p.evaluate(x);
                let viol = match kind {
                    ConstraintKind::Equality => g,
                    ConstraintKind::Inequality => g.min(0.0),
                };
                v += rho * viol * viol;
            }
        }
        v
    };
    let grad = |x: &[f64]| -> Vec<f64> {
        let mut g: Vec<f64> = grads.iter().map(|p| p.evaluate(x)).collect();
        if custom {
            for (p, kind) in &restricted {
                let gv = p.evaluate(x);
                let active = match kind {
                    ConstraintKind::Equality => gv,
                    ConstraintKind::Inequality => gv.min(0.0),
                };
                if active != 0.0 {
                    for (j, gj) in g.iter_mut().enumerate() {
                        *gj += 2.0 * rho * active * p.differentiate(j).evaluate(x);
                    }
                }
            }
        }
        g
    };

    let start: usize = nep.layout()[..i].iter().sum();
    let mut x: Vec<f64> = u[start..start + ni].to_vec();
    project(family, &mut x);
    let mut best = value(&x);
    let mut step = 0.5;
    for _ in 0..500 {
        let g = grad(&x);
        let mut trial: Vec<f64> =
            x.iter().zip(&g).map(|(a, d)| a - step * d).collect();
        project(family, &mut trial);
        let tv = value(&trial);
        if tv < best - 1e-14 {
            best = tv;
            x = trial;
            step *= 1.25;
        } else {
            step *= 0.5;
            if step < 1e-13 {
                break;
            }
        }
    }
    let feasible = restricted.iter().all(|(p, kind)| {
        let v = p.evaluate(&x);
        match kind {
            ConstraintKind::Equality => v.abs() <= opts.feas_check_tol,
            ConstraintKind::Inequality => v >= -opts.feas_check_tol,
        }
    });
    let gap = f.evaluate(&x) - f.evaluate(&u[start..start + ni]);
    if feasible && gap < -opts.omega_tol {
        Some(x)
    } else {
        None
    }
}

/// In-place Euclidean projection onto the built-in feasible sets; custom
/// sets are left untouched (the descent above penalizes them instead).
fn project(family: &ConstraintFamily, x: &mut [f64]) {
    match family {
        ConstraintFamily::Ball => {
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > 1.0 {
                for v in x.iter_mut() {
                    *v /= nrm;
                }
            }
        }
        ConstraintFamily::Sphere => {
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if nrm > 1e-12 {
                for v in x.iter_mut() {
                    *v /= nrm;
                }
            } else {
                x[0] = 1.0;
                for v in x.iter_mut().skip(1) {
                    *v = 0.0;
                }
            }
        }
        ConstraintFamily::Box { lower, upper } => {
            for (j, v) in x.iter_mut().enumerate() {
                *v = v.clamp(lower[j], upper[j]);
            }
        }
        ConstraintFamily::SimplexLike => {
            for v in x.iter_mut() {
                *v = v.max(0.0);
            }
            let s: f64 = x.iter().sum();
            if s > 1.0 {
                // Project onto the face sum = 1 by the sorted-threshold rule.
                let mut sorted: Vec<f64> = x.to_vec();
                sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
                let mut acc = 0.0;
                let mut tau = 0.0;
                for (m, &v) in sorted.iter().enumerate() {
                    acc += v;
                    let t = (acc - 1.0) / (m as f64 + 1.0);
                    if v - t > 0.0 {
                        tau = t;
                    }
                }
                for v in x.iter_mut() {
                    *v = (*v - tau).max(0.0);
                }
            }
        }
        ConstraintFamily::Unconstrained | ConstraintFamily::Custom { .. } => {}
    }
}

enum LoopOutcome {
    Found(Equilibrium),
    NoneExists,
    Inconclusive,
}

/// The cut loop: alternate master solves and per-player checks, attaching
/// refuting minimizers as cuts, until a candidate passes, the master is
/// certified infeasible, or the loop budget runs out.
fn run_master_loop(
    nep: &NepProblem,
    sys: &mut KktSystem,
    theta: &Polynomial,
    exclusion: Option<f64>,
    opts: &SolverOptions,
    trace: &mut Vec<TraceRecord>,
    phase: usize,
    sloppy: &mut bool,
) -> LoopOutcome {
    for loop_index in 1..=opts.max_outer_loops {
        let (res, master_orders) = solve_master(sys, theta, exclusion, opts);
        let mut rec = TraceRecord {
            phase,
            loop_index,
            master_orders,
            cut_sizes: (0..nep.num_players())
                .map(|i| sys.cut_points(i).len())
                .collect(),
            ..TraceRecord::default()
        };
        let (u, theta_k, certified) = match res {
            MasterResult::Infeasible => {
                rec.notes.push("master certified infeasible".into());
                trace.push(rec);
                return LoopOutcome::NoneExists;
            }
            MasterResult::Inconclusive => {
                rec.notes.push("master hierarchy exhausted".into());
                trace.push(rec);
                return LoopOutcome::Inconclusive;
            }
            MasterResult::Candidate { u, theta_k, certified, .. } => {
                (u, theta_k, certified)
            }
        };
        if !certified {
            rec.notes.push("master bound uncertified".into());
        }
        rec.candidate = Some(u.clone());
        rec.theta_k = Some(theta_k);

        let checks = check_candidate(nep, &u, opts);
        rec.omegas = Some(checks.iter().map(|c| c.omega).collect());
        rec.check_orders = checks.iter().map(|c| c.order).collect();
        if checks.iter().any(|c| c.unbounded) {
            rec.notes.push("best-response gap unbounded below".into());
            trace.push(rec);
            return LoopOutcome::Inconclusive;
        }
        let omega_star = checks.iter().map(|c| c.omega).fold(f64::INFINITY, f64::min);
        if omega_star >= -opts.omega_tol {
            if !certified {
                // An accepted equilibrium without a theta-minimality
                // certificate may have skipped a smaller one; completeness
                // claims are off from here on.
                *sloppy = true;
            }
            let eq = Equilibrium {
                theta: theta.evaluate(&u),
                omega_star,
                omegas: checks.iter().map(|c| c.omega).collect(),
                multipliers: (0..nep.num_players())
                    .map(|i| nep.multiplier_values(i, &u))
                    .collect(),
                point: u,
                found_in_loop: loop_index,
            };
            trace.push(rec);
            return LoopOutcome::Found(eq);
        }
        if opts.convex {
            rec.notes
                .push("declared-convex verification failed".into());
            trace.push(rec);
            return LoopOutcome::Inconclusive;
        }
        if checks.iter().any(|c| c.inconclusive) {
            rec.notes.push("player check inconclusive".into());
            trace.push(rec);
            return LoopOutcome::Inconclusive;
        }
        let mut added = 0;
        for (i, c) in checks.iter().enumerate() {
            if c.omega < -opts.omega_tol {
                added += sys.attach_cuts(nep, i, &c.minimizers);
                if c.fallback {
                    rec.notes
                        .push(format!("player {i}: local-descent cut point"));
                }
            }
        }
        rec.cut_sizes = (0..nep.num_players())
            .map(|i| sys.cut_points(i).len())
            .collect();
        if added == 0 {
            rec.notes.push("no new cut points; stopping".into());
            trace.push(rec);
            return LoopOutcome::Inconclusive;
        }
        trace.push(rec);
    }
    trace.push(TraceRecord {
        phase,
        loop_index: opts.max_outer_loops,
        notes: vec!["outer loop budget exhausted".into()],
        ..TraceRecord::default()
    });
    LoopOutcome::Inconclusive
}

/// Find one Nash equilibrium, or certify that none exists.
pub fn find_one_ne(nep: &NepProblem, opts: &SolverOptions) -> NeReport {
    let (theta, _) = gen_theta(nep.nvars(), opts.seed);
    let mut sys = nep.kkt_sets();
    let mut trace = Vec::new();
    let mut sloppy = false;
    let status = match run_master_loop(
        nep, &mut sys, &theta, None, opts, &mut trace, 1, &mut sloppy,
    ) {
        LoopOutcome::Found(eq) => {
            return NeReport {
                status: NeStatus::FoundSome,
                equilibria: vec![eq],
                trace,
            };
        }
        LoopOutcome::NoneExists => NeStatus::NoneExists,
        LoopOutcome::Inconclusive => NeStatus::Inconclusive,
    };
    NeReport { status, equilibria: Vec::new(), trace }
}

enum GateOutcome {
    Closed(f64),
    Inconclusive(String),
}

/// Shrink `delta` until no KKT point has a `theta` value strictly inside
/// `(upsilon, upsilon + delta]`, so the exclusion level skips nothing.
fn delta_gate(
    sys: &KktSystem,
    theta: &Polynomial,
    upsilon: f64,
    opts: &SolverOptions,
    trace: &mut Vec<TraceRecord>,
    phase: usize,
) -> GateOutcome {
    let backend = resolve_backend(opts);
    let n: usize = sys.layout().iter().sum();
    let neg_theta = theta.scale(-1.0);
    let mut delta = opts.delta_init;
    let mut round = 0;
    loop {
        round += 1;
        let cap_poly =
            Polynomial::constant(vec![n], upsilon + delta).sub(theta);
        let phi = sys.phi();
        let mut psi = sys.psi();
        psi.push(&cap_poly);
        let d0 = min_order(&phi, &psi, &neg_theta);
        let cap = order_cap(opts, d0);
        let mut rec = TraceRecord {
            phase,
            loop_index: round,
            notes: vec![format!("gate delta {delta:.3e}")],
            ..TraceRecord::default()
        };
        let mut best_eta = f64::INFINITY;
        let mut closed = false;
        for k in d0..=cap {
            let sdp = assemble_relaxation(&phi, &psi, &neg_theta, k);
            if sdp.nvars + sdp.eq.len() > SOLVE_DIM_CAP {
                rec.master_orders.push((k, "skipped_dimension".to_string()));
                break;
            }
            let sol = backend.solve(&sdp, &opts.conic);
            rec.master_orders.push((k, status_str(sol.status).to_string()));
            match sol.status {
                ConicStatus::Optimal | ConicStatus::Inaccurate => {
                    let eta = -sol.obj;
                    best_eta = best_eta.min(eta);
                    if eta <= upsilon + VALUE_TOL {
                        closed = true;
                        break;
                    }
                }
                ConicStatus::PrimalInfeasible => {
                    // An empty window also closes the gate.
                    closed = true;
                    break;
                }
                // A badly stalled solve only grows worse with the order;
                // closure needs trusted evidence, so stop escalating.
                ConicStatus::IterationLimit
                    if sol.pres > 1e-4 || sol.dres > 1e-4 =>
                {
                    break;
                }
                _ => {}
            }
        }
        if closed {
            rec.notes.push("gate closed".into());
            trace.push(rec);
            return GateOutcome::Closed(delta);
        }
        if !best_eta.is_finite() {
            rec.notes.push("gate bound untrusted".into());
            trace.push(rec);
            return GateOutcome::Inconclusive("gate relaxations inconclusive".into());
        }
        delta = (delta / DELTA_SHRINK).min(best_eta - upsilon);
        rec.notes.push(format!("gate open, eta {best_eta:.6e}"));
        trace.push(rec);
        if delta < DELTA_MIN {
            return GateOutcome::Inconclusive(
                "delta underflow; the point may be non-isolated".into(),
            );
        }
    }
}

#[derive(Clone, Debug)]
pub enum NextOutcome {
    NextNe(Equilibrium),
    NoMore,
    Inconclusive,
}

fn next_from(
    nep: &NepProblem,
    sys: &mut KktSystem,
    theta: &Polynomial,
    upsilon: f64,
    opts: &SolverOptions,
    trace: &mut Vec<TraceRecord>,
    phase: usize,
    sloppy: &mut bool,
) -> NextOutcome {
    let delta = match delta_gate(sys, theta, upsilon, opts, trace, phase) {
        GateOutcome::Closed(d) => d,
        GateOutcome::Inconclusive(note) => {
            trace.push(TraceRecord {
                phase,
                notes: vec![note],
                ..TraceRecord::default()
            });
            return NextOutcome::Inconclusive;
        }
    };
    match run_master_loop(
        nep,
        sys,
        theta,
        Some(upsilon + delta),
        opts,
        trace,
        phase,
        sloppy,
    ) {
        LoopOutcome::Found(eq) => NextOutcome::NextNe(eq),
        LoopOutcome::NoneExists => NextOutcome::NoMore,
        LoopOutcome::Inconclusive => NextOutcome::Inconclusive,
    }
}

/// Find an equilibrium distinct from `known`, assuming `known` already
/// passed the candidate check.
pub fn find_next_ne(
    nep: &NepProblem,
    known: &[f64],
    opts: &SolverOptions,
) -> NextOutcome {
    let (theta, _) = gen_theta(nep.nvars(), opts.seed);
    let mut sys = nep.kkt_sets();
    let mut trace = Vec::new();
    let mut sloppy = false;
    let upsilon = theta.evaluate(known);
    next_from(nep, &mut sys, &theta, upsilon, opts, &mut trace, 2, &mut sloppy)
}

/// Enumerate all equilibria in increasing `theta` order; cuts accumulate
/// across phases since they exclude no equilibrium.
pub fn enumerate_nes(nep: &NepProblem, opts: &SolverOptions) -> NeReport {
    let (theta, _) = gen_theta(nep.nvars(), opts.seed);
    let mut sys = nep.kkt_sets();
    let mut trace = Vec::new();
    let mut equilibria: Vec<Equilibrium> = Vec::new();
    let mut sloppy = false;

    match run_master_loop(nep, &mut sys, &theta, None, opts, &mut trace, 1, &mut sloppy)
    {
        LoopOutcome::Found(eq) => equilibria.push(eq),
        LoopOutcome::NoneExists => {
            return NeReport {
                status: NeStatus::NoneExists,
                equilibria,
                trace,
            };
        }
        LoopOutcome::Inconclusive => {
            return NeReport {
                status: NeStatus::Inconclusive,
                equilibria,
                trace,
            };
        }
    }

    for phase in 2.. {
        if phase > opts.max_outer_loops {
            trace.push(TraceRecord {
                phase,
                notes: vec!["phase budget exhausted".into()],
                ..TraceRecord::default()
            });
            return NeReport { status: NeStatus::FoundSome, equilibria, trace };
        }
        let upsilon = equilibria.last().expect("nonempty").theta;
        match next_from(
            nep, &mut sys, &theta, upsilon, opts, &mut trace, phase, &mut sloppy,
        ) {
            NextOutcome::NextNe(eq) => {
                let dup = equilibria.iter().any(|e| {
                    e.point
                        .iter()
                        .zip(&eq.point)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max)
                        <= DISTINCT_TOL
                });
                if dup {
                    trace.push(TraceRecord {
                        phase,
                        notes: vec![
                            "duplicate equilibrium candidate discarded".into()
                        ],
                        ..TraceRecord::default()
                    });
                    return NeReport {
                        status: NeStatus::FoundSome,
                        equilibria,
                        trace,
                    };
                }
                equilibria.push(eq);
            }
            NextOutcome::NoMore => {
                // A theta-uncertified acceptance along the way may have
                // skipped a smaller equilibrium; do not claim completeness.
                let status = if sloppy {
                    NeStatus::FoundSome
                } else {
                    NeStatus::FoundAll
                };
                return NeReport { status, equilibria, trace };
            }
            NextOutcome::Inconclusive => {
                let status = if equilibria.is_empty() {
                    NeStatus::Inconclusive
                } else {
                    NeStatus::FoundSome
                };
                return NeReport { status, equilibria, trace };
            }
        }
    }
    unreachable!("phase loop returns internally");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ConstraintFamily, NepProblem, PlayerProblem};
    use crate::poly::Polynomial;

    fn var(layout: Vec<usize>, j: usize) -> Polynomial {
        Polynomial::var(layout, j)
    }

    fn single_player(f: Polynomial, family: ConstraintFamily) -> NepProblem {
        let n = f.nvars();
        NepProblem::new(
            vec![n],
            vec![PlayerProblem { objective: f, family, constraints: vec![] }],
        )
        .unwrap()
    }

    #[test]
    fn unconstrained_quadratic_has_origin_equilibrium() {
        let x = var(vec![1], 0);
        let nep = single_player(x.mul(&x), ConstraintFamily::Unconstrained);
        let report = find_one_ne(&nep, &SolverOptions::default());
        assert_eq!(report.status, NeStatus::FoundSome);
        let eq = &report.equilibria[0];
        assert!(eq.point[0].abs() < 1e-6);
        assert!(eq.omega_star >= -1e-6);
        assert!(eq.multipliers[0].is_empty());
    }

    #[test]
    fn stationarity_without_solutions_reports_none() {
        // f = x has gradient 1: the KKT system is infeasible.
        let x = var(vec![1], 0);
        let nep = single_player(x, ConstraintFamily::Unconstrained);
        let report = find_one_ne(&nep, &SolverOptions::default());
        assert_eq!(report.status, NeStatus::NoneExists);
        assert!(report.equilibria.is_empty());
    }

    #[test]
    fn double_well_enumeration_finds_both_minima() {
        // f = (x^2 - 1)^2 has KKT points {-1, 0, 1}; only the two minima
        // are equilibria. Exercises cuts, the gate, and the final
        // no-more certificate.
        let x = var(vec![1], 0);
        let one = Polynomial::constant(vec![1], 1.0);
        let well = x.mul(&x).sub(&one);
        let f = well.mul(&well);
        let nep = single_player(f, ConstraintFamily::Unconstrained);
        let report = enumerate_nes(&nep, &SolverOptions::default());
        assert_eq!(report.status, NeStatus::FoundAll);
        assert_eq!(report.equilibria.len(), 2);
        let mut pts: Vec<f64> =
            report.equilibria.iter().map(|e| e.point[0]).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((pts[0] + 1.0).abs() < 1e-5, "{pts:?}");
        assert!((pts[1] - 1.0).abs() < 1e-5, "{pts:?}");
        // Reported values increase strictly in theta.
        let thetas: Vec<f64> = report.equilibria.iter().map(|e| e.theta).collect();
        assert!(thetas[1] > thetas[0] + 1e-8);
        for eq in &report.equilibria {
            assert!(eq.omega_star >= -1e-6);
        }
    }

    fn two_ball_game() -> NepProblem {
        let layout = vec![2usize, 2usize];
        let v = |j: usize| Polynomial::var(layout.clone(), j);
        let f1 = v(0)
            .mul(&v(0).add(&v(2)).add(&v(3).scale(4.0)))
            .add(&v(1).mul(&v(1)).scale(2.0));
        let f2 = v(2)
            .mul(&v(0).add(&v(1).scale(2.0)).add(&v(2)))
            .add(&v(3).mul(&v(0).scale(2.0).add(&v(1)).add(&v(3))));
        NepProblem::new(
            layout,
            vec![
                PlayerProblem {
                    objective: f1,
                    family: ConstraintFamily::Ball,
                    constraints: vec![],
                },
                PlayerProblem {
                    objective: f2,
                    family: ConstraintFamily::Ball,
                    constraints: vec![],
                },
            ],
        )
        .unwrap()
    }

    fn known_ball_nes() -> Vec<Vec<f64>> {
        let s5 = 5.0_f64.sqrt();
        vec![
            vec![0.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, -1.0 / s5, -2.0 / s5],
            vec![-1.0, 0.0, 1.0 / s5, 2.0 / s5],
        ]
    }

    #[test]
    fn two_ball_game_finds_a_known_equilibrium() {
        let nep = two_ball_game();
        let report = find_one_ne(&nep, &SolverOptions::default());
        assert_eq!(report.status, NeStatus::FoundSome, "{:?}", report.trace);
        let eq = &report.equilibria[0];
        assert!(eq.omega_star >= -1e-6);
        let close = known_ball_nes().iter().any(|ne| {
            ne.iter()
                .zip(&eq.point)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                < 1e-4
        });
        assert!(close, "unexpected equilibrium {:?}", eq.point);
        // KKT residuals at the reported point.
        let sys = nep.kkt_sets();
        let (eq_res, ineq_min) = sys.residuals(&eq.point);
        assert!(eq_res <= 1e-6 && ineq_min >= -1e-6);
    }

    #[test]
    fn check_rejects_mismatched_point_with_circle_minimizer() {
        let nep = two_ball_game();
        let s5 = 5.0_f64.sqrt();
        let u = vec![1.0, 0.0, 1.0 / s5, 2.0 / s5];
        let checks = check_candidate(&nep, &u, &SolverOptions::default());
        assert!(checks[0].omega < -1e-3, "omega {}", checks[0].omega);
        assert!(!checks[0].minimizers.is_empty());
        for v in &checks[0].minimizers {
            let nrm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            assert!((nrm - 1.0).abs() < 1e-6, "minimizer off circle {v:?}");
        }
        // The true equilibrium passes both checks.
        let star = vec![1.0, 0.0, -1.0 / s5, -2.0 / s5];
        let checks = check_candidate(&nep, &star, &SolverOptions::default());
        for c in &checks {
            assert!(c.omega >= -1e-6);
        }
    }
}
