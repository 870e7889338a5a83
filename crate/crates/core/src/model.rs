//! Game models: players, constraint families, and KKT polynomial systems.
//!
//! Each player `i` minimizes a polynomial objective over a feasible set cut
//! out by polynomials in that player's own variables. For the built-in
//! constraint families the Lagrange multipliers at any KKT point can be
//! written as polynomial expressions `lambda_{i,j}(x)`; these come from a
//! matrix `H_i(x_i)` that is a left inverse of the KKT coefficient matrix
//! `G_i(x_i)` (gradients stacked over the constraint-value diagonal).
//! Custom families carry user-supplied multiplier expressions instead.

use crate::poly::Polynomial;
use nalgebra::DMatrix;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("player {player}: constraint {index} uses variables outside the player's block")]
    RivalVariables { player: usize, index: usize },
    #[error("player {player}: {msg}")]
    FamilyShape { player: usize, msg: String },
    #[error("player {player}: custom family needs one multiplier expression per constraint (expected {expected}, got {got})")]
    MultiplierCount { player: usize, expected: usize, got: usize },
    #[error("player {player}: box bounds must be finite with lower < upper per coordinate")]
    BoxBounds { player: usize },
    #[error("layout mismatch: {0}")]
    Layout(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// One constraining polynomial `g(x_i) = 0` or `g(x_i) >= 0`.
#[derive(Clone, Debug)]
pub struct Constraint {
    pub poly: Polynomial,
    pub kind: ConstraintKind,
}

/// Feasible-set family of one player.
#[derive(Clone, Debug)]
pub enum ConstraintFamily {
    /// `1 - x_i^T x_i >= 0`.
    Ball,
    /// `1 - x_i^T x_i = 0`.
    Sphere,
    /// `1 - sum_j x_{i,j} >= 0` and `x_{i,j} >= 0`.
    SimplexLike,
    /// Per-coordinate bounds `lower_j <= x_{i,j} <= upper_j`, listed as the
    /// pairs `(upper_j - x_{i,j} >= 0, x_{i,j} - lower_j >= 0)`.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// No constraints.
    Unconstrained,
    /// Explicit constraints with user-supplied multiplier expressions
    /// (full-layout polynomials, one per constraint in order).
    Custom { multipliers: Vec<Polynomial> },
}

impl ConstraintFamily {
    pub fn tag(&self) -> &'static str {
        match self {
            ConstraintFamily::Ball => "ball",
            ConstraintFamily::Sphere => "sphere",
            ConstraintFamily::SimplexLike => "simplex",
            ConstraintFamily::Box { .. } => "box",
            ConstraintFamily::Unconstrained => "unconstrained",
            ConstraintFamily::Custom { .. } => "custom",
        }
    }
}

/// One player's optimization problem, in the full variable layout.
#[derive(Clone, Debug)]
pub struct PlayerProblem {
    pub objective: Polynomial,
    pub family: ConstraintFamily,
    pub constraints: Vec<Constraint>,
}

/// A Nash equilibrium problem of polynomials.
#[derive(Clone, Debug)]
pub struct NepProblem {
    layout: Vec<usize>,
    players: Vec<PlayerProblem>,
}

fn uses_only_block(p: &Polynomial, i: usize) -> bool {
    let start = p.block_start(i);
    let width = p.block_width(i);
    p.terms().all(|(m, _)| {
        m.exps()
            .iter()
            .enumerate()
            .all(|(j, &e)| e == 0 || (j >= start && j < start + width))
    })
}

/// Constraints generated by a built-in family for block `i` of `layout`.
pub fn family_constraints(
    family: &ConstraintFamily,
    layout: &[usize],
    i: usize,
) -> Option<Vec<Constraint>> {
    let n = layout[i];
    let start: usize = layout[..i].iter().sum();
    let var = |j: usize| Polynomial::var(layout.to_vec(), start + j);
    let one = || Polynomial::constant(layout.to_vec(), 1.0);
    match family {
        ConstraintFamily::Ball | ConstraintFamily::Sphere => {
            let mut g = one();
            for j in 0..n {
                g = g.sub(&var(j).mul(&var(j)));
            }
            let kind = if matches!(family, ConstraintFamily::Ball) {
                ConstraintKind::Inequality
            } else {
                ConstraintKind::Equality
            };
            Some(vec![Constraint { poly: g, kind }])
        }
        ConstraintFamily::SimplexLike => {
            let mut g0 = one();
            for j in 0..n {
                g0 = g0.sub(&var(j));
            }
            let mut out = vec![Constraint { poly: g0, kind: ConstraintKind::Inequality }];
            for j in 0..n {
                out.push(Constraint { poly: var(j), kind: ConstraintKind::Inequality });
            }
            Some(out)
        }
        ConstraintFamily::Box { lower, upper } => {
            let mut out = Vec::with_capacity(2 * n);
            for j in 0..n {
                let up = Polynomial::constant(layout.to_vec(), upper[j]).sub(&var(j));
                let lo = var(j).sub(&Polynomial::constant(layout.to_vec(), lower[j]));
                out.push(Constraint { poly: up, kind: ConstraintKind::Inequality });
                out.push(Constraint { poly: lo, kind: ConstraintKind::Inequality });
            }
            Some(out)
        }
        ConstraintFamily::Unconstrained => Some(Vec::new()),
        ConstraintFamily::Custom { .. } => None,
    }
}

impl NepProblem {
    /// Build and validate a problem. For built-in families the constraints
    /// are derived from the family; for Custom they must be supplied.
    pub fn new(layout: Vec<usize>, players: Vec<PlayerProblem>) -> Result<Self, ModelError> {
        if players.len() != layout.len() {
            return Err(ModelError::Layout(format!(
                "{} players but layout has {} blocks",
                players.len(),
                layout.len()
            )));
        }
        let mut players = players;
        for (i, pl) in players.iter_mut().enumerate() {
            if pl.objective.layout() != layout.as_slice() {
                return Err(ModelError::Layout(format!(
                    "player {i}: objective layout {:?} differs from {:?}",
                    pl.objective.layout(),
                    layout
                )));
            }
            match &pl.family {
                ConstraintFamily::Box { lower, upper } => {
                    let n = layout[i];
                    if lower.len() != n
                        || upper.len() != n
                        || lower
                            .iter()
                            .zip(upper)
                            .any(|(a, b)| !a.is_finite() || !b.is_finite() || a >= b)
                    {
                        return Err(ModelError::BoxBounds { player: i });
                    }
                }
                ConstraintFamily::Custom { multipliers } => {
                    if multipliers.len() != pl.constraints.len() {
                        return Err(ModelError::MultiplierCount {
                            player: i,
                            expected: pl.constraints.len(),
                            got: multipliers.len(),
                        });
                    }
                    for m in multipliers {
                        if m.layout() != layout.as_slice() {
                            return Err(ModelError::Layout(format!(
                                "player {i}: multiplier layout differs from problem layout"
                            )));
                        }
                    }
                }
                _ => {}
            }
            if let Some(derived) = family_constraints(&pl.family, &layout, i) {
                if pl.constraints.is_empty() {
                    pl.constraints = derived;
                } else if pl.constraints.len() != derived.len()
                    || pl
                        .constraints
                        .iter()
                        .zip(&derived)
                        .any(|(a, b)| a.kind != b.kind || a.poly != b.poly)
                {
                    return Err(ModelError::FamilyShape {
                        player: i,
                        msg: format!(
                            "declared constraints do not match the {} family shape",
                            pl.family.tag()
                        ),
                    });
                }
            }
            for (j, c) in pl.constraints.iter().enumerate() {
                if c.poly.layout() != layout.as_slice() {
                    return Err(ModelError::Layout(format!(
                        "player {i}: constraint {j} layout differs from problem layout"
                    )));
                }
                if !uses_only_block(&c.poly, i) {
                    return Err(ModelError::RivalVariables { player: i, index: j });
                }
            }
        }
        Ok(NepProblem { layout, players })
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn nvars(&self) -> usize {
        self.layout.iter().sum()
    }

    pub fn num_players(&self) -> usize {
        self.players.len()
    }

    pub fn player(&self, i: usize) -> &PlayerProblem {
        &self.players[i]
    }

    pub fn players(&self) -> &[PlayerProblem] {
        &self.players
    }

    /// Lagrange multiplier expressions of player `i`, one full-layout
    /// polynomial per constraint in constraint order.
    pub fn multiplier_expressions(&self, i: usize) -> Vec<Polynomial> {
        let pl = &self.players[i];
        let n = self.layout[i];
        let start: usize = self.layout[..i].iter().sum();
        let grad: Vec<Polynomial> = pl.objective.block_gradient(i);
        let var = |j: usize| Polynomial::var(self.layout.clone(), start + j);
        match &pl.family {
            ConstraintFamily::Ball | ConstraintFamily::Sphere => {
                // lambda = -1/2 x_i^T grad f_i
                let mut lam = Polynomial::zero(self.layout.clone());
                for j in 0..n {
                    lam.add_scaled(&var(j).mul(&grad[j]), -0.5);
                }
                vec![lam]
            }
            ConstraintFamily::SimplexLike => {
                // lambda_0 = -x_i^T grad f_i, lambda_j = df/dx_j + lambda_0
                let mut lam0 = Polynomial::zero(self.layout.clone());
                for j in 0..n {
                    lam0.add_scaled(&var(j).mul(&grad[j]), -1.0);
                }
                let mut out = vec![lam0.clone()];
                for j in 0..n {
                    out.push(grad[j].add(&lam0));
                }
                out
            }
            ConstraintFamily::Box { lower, upper } => {
                // Per coordinate, upper then lower:
                // lambda_up = -df/dx_j (x_j - a_j)/(b_j - a_j),
                // lambda_lo = df/dx_j + lambda_up.
                let mut out = Vec::with_capacity(2 * n);
                for j in 0..n {
                    let s = 1.0 / (upper[j] - lower[j]);
                    let shifted = var(j).sub(&Polynomial::constant(self.layout.clone(), lower[j]));
                    let up = grad[j].mul(&shifted).scale(-s);
                    let lo = grad[j].add(&up);
                    out.push(up);
                    out.push(lo);
                }
                out
            }
            ConstraintFamily::Unconstrained => Vec::new(),
            ConstraintFamily::Custom { multipliers } => multipliers.clone(),
        }
    }

    /// Values of player `i`'s multiplier expressions at `x`.
    pub fn multiplier_values(&self, i: usize, x: &[f64]) -> Vec<f64> {
        self.multiplier_expressions(i)
            .iter()
            .map(|l| l.evaluate(x))
            .collect()
    }

    /// The KKT coefficient matrix `G_i(x_i)`: constraint gradients stacked
    /// over `diag(g_{i,1}, ..., g_{i,m})`, shape `(n_i + m) x m`.
    pub fn g_matrix(&self, i: usize) -> Vec<Vec<Polynomial>> {
        let pl = &self.players[i];
        let n = self.layout[i];
        let m = pl.constraints.len();
        let start: usize = self.layout[..i].iter().sum();
        let zero = || Polynomial::zero(self.layout.clone());
        let mut rows = vec![vec![zero(); m]; n + m];
        for (c, cons) in pl.constraints.iter().enumerate() {
            for r in 0..n {
                rows[r][c] = cons.poly.differentiate(start + r);
            }
            rows[n + c][c] = cons.poly.clone();
        }
        rows
    }

    /// The left inverse `H_i(x_i)` with `H_i G_i = I`, shape `m x (n_i + m)`.
    /// `None` for Custom families, where only multiplier expressions exist.
    pub fn h_matrix(&self, i: usize) -> Option<Vec<Vec<Polynomial>>> {
        let pl = &self.players[i];
        let n = self.layout[i];
        let start: usize = self.layout[..i].iter().sum();
        let var = |j: usize| Polynomial::var(self.layout.clone(), start + j);
        let consts = |c: f64| Polynomial::constant(self.layout.clone(), c);
        let zero = || Polynomial::zero(self.layout.clone());
        match &pl.family {
            ConstraintFamily::Ball | ConstraintFamily::Sphere => {
                // H = [ -x_1/2 ... -x_n/2 | 1 ]
                let mut row = Vec::with_capacity(n + 1);
                for j in 0..n {
                    row.push(var(j).scale(-0.5));
                }
                row.push(consts(1.0));
                Some(vec![row])
            }
            ConstraintFamily::SimplexLike => {
                // Row_0 = (-x^T | 1...1); Row_j = (e_j - x)^T with the same tail.
                let m = n + 1;
                let mut rows = Vec::with_capacity(m);
                let base: Vec<Polynomial> = (0..n)
                    .map(|j| var(j).scale(-1.0))
                    .chain((0..m).map(|_| consts(1.0)))
                    .collect();
                rows.push(base.clone());
                for j in 0..n {
                    let mut row = base.clone();
                    row[j] = row[j].add(&consts(1.0));
                    rows.push(row);
                }
                Some(rows)
            }
            ConstraintFamily::Box { lower, upper } => {
                let m = 2 * n;
                let mut rows = vec![vec![zero(); n + m]; m];
                for j in 0..n {
                    let s = 1.0 / (upper[j] - lower[j]);
                    let shifted = var(j).sub(&consts(lower[j]));
                    // Upper row: gradient slot j, both diagonal slots of the pair.
                    rows[2 * j][j] = shifted.scale(-s);
                    rows[2 * j][n + 2 * j] = consts(s);
                    rows[2 * j][n + 2 * j + 1] = consts(s);
                    // Lower row: e_j plus the upper row.
                    rows[2 * j + 1][j] = rows[2 * j][j].add(&consts(1.0));
                    rows[2 * j + 1][n + 2 * j] = consts(s);
                    rows[2 * j + 1][n + 2 * j + 1] = consts(s);
                }
                Some(rows)
            }
            ConstraintFamily::Unconstrained => Some(Vec::new()),
            ConstraintFamily::Custom { .. } => None,
        }
    }

    /// Max coefficient magnitude over the entries of `H_i G_i - I`.
    /// Zero (exactly, up to coefficient rounding) certifies the identity.
    pub fn identity_residual(&self, i: usize) -> Option<f64> {
        let h = self.h_matrix(i)?;
        let g = self.g_matrix(i);
        let m = h.len();
        let mut worst: f64 = 0.0;
        for (r, hrow) in h.iter().enumerate() {
            for c in 0..m {
                let mut e = Polynomial::zero(self.layout.clone());
                for (k, hk) in hrow.iter().enumerate() {
                    e = e.add(&hk.mul(&g[k][c]));
                }
                if r == c {
                    e = e.sub(&Polynomial::constant(self.layout.clone(), 1.0));
                }
                worst = worst.max(e.max_coeff());
            }
        }
        Some(worst)
    }

    /// Numerical diagnostics on player `i`'s constraint data at seeded
    /// sample points: rank of `G_i(x_i)` and, where the stationarity plus
    /// complementarity system happens to be consistent, agreement of the
    /// multiplier expressions with its least-squares solution.
    pub fn multiplier_diagnostics(&self, i: usize, seed: u64, samples: usize) -> Vec<String> {
        let mut warnings = Vec::new();
        let pl = &self.players[i];
        let m = pl.constraints.len();
        if m == 0 {
            return warnings;
        }
        let n_total = self.nvars();
        let n = self.layout[i];
        let lambdas = self.multiplier_expressions(i);
        let grads: Vec<Polynomial> = pl.objective.block_gradient(i);
        let mut rng = StdRng::seed_from_u64(seed);
        for s in 0..samples {
            let x: Vec<f64> = (0..n_total).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let start: usize = self.layout[..i].iter().sum();
            let mut gmat = DMatrix::zeros(n + m, m);
            for (c, cons) in pl.constraints.iter().enumerate() {
                for r in 0..n {
                    gmat[(r, c)] = cons.poly.differentiate(start + r).evaluate(&x);
                }
                gmat[(n + c, c)] = cons.poly.evaluate(&x);
            }
            let svd = gmat.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let rank = svd
                .singular_values
                .iter()
                .filter(|&&v| v > 1e-9 * smax.max(1.0))
                .count();
            if rank < m {
                warnings.push(format!(
                    "player {}: G_i rank {} < {} at sample {}",
                    i + 1,
                    rank,
                    m,
                    s
                ));
                continue;
            }
            let mut fhat = nalgebra::DVector::zeros(n + m);
            for (r, gp) in grads.iter().enumerate() {
                fhat[r] = gp.evaluate(&x);
            }
            let mu = svd.solve(&fhat, 1e-12).expect("svd solve");
            let residual = (&gmat * &mu - &fhat).norm();
            let scale = 1.0 + fhat.norm();
            if residual <= 1e-8 * scale {
                for (j, lam) in lambdas.iter().enumerate() {
                    let lv = lam.evaluate(&x);
                    if (lv - mu[j]).abs() > 1e-6 * (1.0 + mu[j].abs()) {
                        warnings.push(format!(
                            "player {}: multiplier {} disagrees with the KKT solution at sample {} ({lv} vs {})",
                            i + 1,
                            j + 1,
                            s,
                            mu[j]
                        ));
                    }
                }
            }
        }
        warnings
    }
}

/// KKT polynomial sets of a problem, plus any best-response cuts.
#[derive(Clone, Debug)]
pub struct KktSystem {
    layout: Vec<usize>,
    /// Per player: stationarity, equality constraints, complementarity.
    phi_by_player: Vec<Vec<Polynomial>>,
    /// Per player: inequality constraints and their multiplier expressions.
    psi_by_player: Vec<Vec<Polynomial>>,
    /// Per player: cut polynomials `f_i(v, x_{-i}) - f_i(x_i, x_{-i})`.
    cuts_by_player: Vec<Vec<Polynomial>>,
    /// Per player: the cut points `v` behind `cuts_by_player`.
    cut_points: Vec<Vec<Vec<f64>>>,
    lambdas: Vec<Vec<Polynomial>>,
}

impl NepProblem {
    /// Assemble the KKT equality set `Phi` and inequality set `Psi`.
    pub fn kkt_sets(&self) -> KktSystem {
        let nplayers = self.players.len();
        let mut phi_by_player = Vec::with_capacity(nplayers);
        let mut psi_by_player = Vec::with_capacity(nplayers);
        let mut lambdas = Vec::with_capacity(nplayers);
        for i in 0..nplayers {
            let pl = &self.players[i];
            let lam = self.multiplier_expressions(i);
            let grads = pl.objective.block_gradient(i);
            let start: usize = self.layout[..i].iter().sum();
            let mut phi = Vec::new();
            // Stationarity: grad f_i - sum_j lambda_j grad g_j over block i.
            // Rows that cancel algebraically (multiplier expressions solved
            // from these very equations) leave roundoff residue that row
            // normalization would inflate into a full-strength constraint,
            // so prune relative to the addend scale and drop empty rows.
            for (r, gf) in grads.iter().enumerate() {
                let mut p = gf.clone();
                let mut scale = gf.max_coeff();
                for (j, cons) in pl.constraints.iter().enumerate() {
                    let prod = lam[j].mul(&cons.poly.differentiate(start + r));
                    scale = scale.max(prod.max_coeff());
                    p.add_scaled(&prod, -1.0);
                }
                let p = p.prune(1e-12 * scale);
                if !p.is_zero() {
                    phi.push(p);
                }
            }
            let mut psi = Vec::new();
            for (j, cons) in pl.constraints.iter().enumerate() {
                match cons.kind {
                    ConstraintKind::Equality => phi.push(cons.poly.clone()),
                    ConstraintKind::Inequality => {
                        let scale = lam[j].max_coeff() * cons.poly.max_coeff();
                        let prod = lam[j].mul(&cons.poly).prune(1e-12 * scale);
                        if !prod.is_zero() {
                            phi.push(prod);
                        }
                        psi.push(cons.poly.clone());
                        psi.push(lam[j].clone());
                    }
                }
            }
            phi_by_player.push(phi);
            psi_by_player.push(psi);
            lambdas.push(lam);
        }
        KktSystem {
            layout: self.layout.clone(),
            phi_by_player,
            psi_by_player,
            cuts_by_player: vec![Vec::new(); nplayers],
            cut_points: vec![Vec::new(); nplayers],
            lambdas,
        }
    }

    /// The restricted sets for checking a candidate `u`: equalities
    /// `H_i(u)`, inequalities `G_i(u)`, and the shifted best-response
    /// objective `f_i(x_i, u_{-i}) - f_i(u_i, u_{-i})`, all in `n_i`
    /// variables.
    pub fn check_sets(
        &self,
        sys: &KktSystem,
        i: usize,
        u: &[f64],
    ) -> (Vec<Polynomial>, Vec<Polynomial>, Polynomial) {
        let eqs = sys.phi_by_player[i]
            .iter()
            .map(|p| p.restrict_rivals(i, u))
            .collect();
        let ineqs = sys.psi_by_player[i]
            .iter()
            .map(|p| p.restrict_rivals(i, u))
            .collect();
        let f = &self.players[i].objective;
        let shift = f.evaluate(u);
        let objective = f
            .restrict_rivals(i, u)
            .sub(&Polynomial::constant(vec![self.layout[i]], shift));
        (eqs, ineqs, objective)
    }
}

impl KktSystem {
    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn num_players(&self) -> usize {
        self.phi_by_player.len()
    }

    /// All equality polynomials.
    pub fn phi(&self) -> Vec<&Polynomial> {
        self.phi_by_player.iter().flatten().collect()
    }

    /// All inequality polynomials, cuts included.
    pub fn psi(&self) -> Vec<&Polynomial> {
        self.psi_by_player
            .iter()
            .flatten()
            .chain(self.cuts_by_player.iter().flatten())
            .collect()
    }

    pub fn phi_of(&self, i: usize) -> &[Polynomial] {
        &self.phi_by_player[i]
    }

    pub fn psi_of(&self, i: usize) -> &[Polynomial] {
        &self.psi_by_player[i]
    }

    pub fn lambda_exprs(&self, i: usize) -> &[Polynomial] {
        &self.lambdas[i]
    }

    pub fn cut_points(&self, i: usize) -> &[Vec<f64>] {
        &self.cut_points[i]
    }

    pub fn num_cuts(&self) -> usize {
        self.cut_points.iter().map(Vec::len).sum()
    }

    /// Append best-response cuts `f_i(v, x_{-i}) - f_i(x_i, x_{-i}) >= 0`
    /// for new candidate points `v` of player `i`. Points within `1e-9`
    /// of an existing cut point are skipped; returns how many were added.
    pub fn attach_cuts(&mut self, nep: &NepProblem, i: usize, points: &[Vec<f64>]) -> usize {
        let f = &nep.players[i].objective;
        let mut added = 0;
        for v in points {
            assert_eq!(v.len(), self.layout[i]);
            let known = self.cut_points[i].iter().any(|w| {
                w.iter()
                    .zip(v)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    < 1e-9
            });
            if known {
                continue;
            }
            let fixed = f.fix_block(i, v);
            let scale = fixed.max_coeff().max(f.max_coeff());
            let cut = fixed.sub(f).prune(1e-12 * scale);
            if cut.is_zero() {
                continue;
            }
            self.cuts_by_player[i].push(cut);
            self.cut_points[i].push(v.clone());
            added += 1;
        }
        added
    }

    /// Feasibility margin of `x`: max equality violation and worst
    /// inequality slack (negative when violated).
    pub fn residuals(&self, x: &[f64]) -> (f64, f64) {
        let eq = self
            .phi()
            .iter()
            .map(|p| p.evaluate(x).abs())
            .fold(0.0, f64::max);
        let ineq = self
            .psi()
            .iter()
            .map(|p| p.evaluate(x))
            .fold(f64::INFINITY, f64::min);
        (eq, if ineq == f64::INFINITY { 0.0 } else { ineq })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(layout: &[usize]) -> Vec<Polynomial> {
        let n: usize = layout.iter().sum();
        (0..n).map(|j| Polynomial::var(layout.to_vec(), j)).collect()
    }

    /// Two unit-ball players; objectives from the running two-player game
    /// with three isolated equilibria.
    fn two_ball_game() -> NepProblem {
        let layout = vec![2usize, 2usize];
        let x = vars(&layout);
        // f1 = x0*(x0 + x2 + 4*x3) + 2*x1^2
        let f1 = x[0]
            .mul(&x[0].add(&x[2]).add(&x[3].scale(4.0)))
            .add(&x[1].mul(&x[1]).scale(2.0));
        // f2 = x2*(x0 + 2*x1 + x2) + x3*(2*x0 + x1 + x3)
        let f2 = x[2]
            .mul(&x[0].add(&x[1].scale(2.0)).add(&x[2]))
            .add(&x[3].mul(&x[0].scale(2.0).add(&x[1]).add(&x[3])));
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

    #[test]
    fn builtin_left_inverse_identity_is_exact() {
        let layout = vec![2usize, 3usize];
        let x = vars(&layout);
        let f1 = x[0].mul(&x[3]).add(&x[1].mul(&x[1]));
        let f2 = x[2].mul(&x[2]).add(&x[4].mul(&x[0]));
        for family in [
            ConstraintFamily::Ball,
            ConstraintFamily::Sphere,
            ConstraintFamily::SimplexLike,
            ConstraintFamily::Box { lower: vec![0.0, -1.0], upper: vec![1.0, 3.0] },
        ] {
            let nep = NepProblem::new(
                layout.clone(),
                vec![
                    PlayerProblem {
                        objective: f1.clone(),
                        family: family.clone(),
                        constraints: vec![],
                    },
                    PlayerProblem {
                        objective: f2.clone(),
                        family: ConstraintFamily::SimplexLike,
                        constraints: vec![],
                    },
                ],
            )
            .unwrap();
            assert_eq!(
                nep.identity_residual(0),
                Some(0.0),
                "family {}",
                family.tag()
            );
            assert_eq!(nep.identity_residual(1), Some(0.0));
        }
    }

    #[test]
    fn box_identity_with_uneven_bounds() {
        let layout = vec![2usize];
        let x = vars(&layout);
        let f = x[0].mul(&x[1]);
        let nep = NepProblem::new(
            layout,
            vec![PlayerProblem {
                objective: f,
                family: ConstraintFamily::Box { lower: vec![0.0, 0.0], upper: vec![0.67, 2.5] },
                constraints: vec![],
            }],
        )
        .unwrap();
        let r = nep.identity_residual(0).unwrap();
        assert!(r <= 1e-12, "residual {r}");
    }

    #[test]
    fn known_equilibrium_satisfies_kkt_sets() {
        let nep = two_ball_game();
        let sys = nep.kkt_sets();
        let s5 = 5.0_f64.sqrt();
        // Equilibrium with boundary-active constraints for both players.
        let x = [1.0, 0.0, -1.0 / s5, -2.0 / s5];
        let (eq, ineq) = sys.residuals(&x);
        assert!(eq <= 1e-8, "equality residual {eq}");
        assert!(ineq >= -1e-8, "inequality slack {ineq}");
        // Multipliers at this point match the closed forms.
        let l1 = nep.multiplier_values(0, &x);
        let l2 = nep.multiplier_values(1, &x);
        assert!((l1[0] - (9.0 * s5 / 10.0 - 1.0)).abs() < 1e-12);
        assert!((l2[0] - (s5 / 2.0 - 1.0)).abs() < 1e-12);
        // The zero equilibrium has vanishing multipliers.
        let origin = [0.0; 4];
        let (eq0, _) = sys.residuals(&origin);
        assert!(eq0 <= 1e-15);
        assert!(nep.multiplier_values(0, &origin)[0].abs() <= 1e-15);
    }

    #[test]
    fn check_sets_restrict_to_single_block() {
        let nep = two_ball_game();
        let sys = nep.kkt_sets();
        let u = [0.1, -0.2, 0.3, 0.4];
        let (eqs, ineqs, obj) = nep.check_sets(&sys, 1, &u);
        assert!(eqs.iter().all(|p| p.layout() == [2]));
        assert!(ineqs.iter().all(|p| p.layout() == [2]));
        // The shifted objective vanishes at u's own block.
        assert!(obj.evaluate(&[0.3, 0.4]).abs() < 1e-12);
    }

    #[test]
    fn cuts_append_and_dedupe() {
        let nep = two_ball_game();
        let mut sys = nep.kkt_sets();
        let before = sys.psi().len();
        let added = sys.attach_cuts(&nep, 0, &[vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!(added, 1);
        assert_eq!(sys.psi().len(), before + 1);
        // The cut vanishes at x_1 = v and is nonnegative at better replies.
        let cut = sys.psi()[before].clone();
        let x = [0.5, 0.5, 0.0, 0.0];
        assert!(cut.evaluate(&x).abs() < 1e-12);
    }

    #[test]
    fn rival_variables_rejected() {
        let layout = vec![1usize, 1usize];
        let x = vars(&layout);
        let err = NepProblem::new(
            layout.clone(),
            vec![
                PlayerProblem {
                    objective: x[0].clone(),
                    family: ConstraintFamily::Custom { multipliers: vec![x[0].clone()] },
                    constraints: vec![Constraint {
                        poly: x[1].clone(),
                        kind: ConstraintKind::Inequality,
                    }],
                },
                PlayerProblem {
                    objective: x[1].clone(),
                    family: ConstraintFamily::Unconstrained,
                    constraints: vec![],
                },
            ],
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::RivalVariables { player: 0, index: 0 }));
    }

    #[test]
    fn simplex_multipliers_vanish_appropriately() {
        // One simplex player against a fixed rival; at a vertex KKT point the
        // inactive-coordinate multipliers vanish.
        let layout = vec![2usize, 1usize];
        let x = vars(&layout);
        // f = x0^2 + x1 * x2 (rival x2)
        let f = x[0].mul(&x[0]).add(&x[1].mul(&x[2]));
        let nep = NepProblem::new(
            layout,
            vec![
                PlayerProblem {
                    objective: f,
                    family: ConstraintFamily::SimplexLike,
                    constraints: vec![],
                },
                PlayerProblem {
                    objective: x[2].mul(&x[2]),
                    family: ConstraintFamily::Unconstrained,
                    constraints: vec![],
                },
            ],
        )
        .unwrap();
        // With x2 = 1 the best reply is x = (0, 0): check multipliers there.
        let pt = [0.0, 0.0, 1.0];
        let lams = nep.multiplier_values(0, &pt);
        // lambda_0 (simplex face) vanishes, lambda for x1 >= 0 equals df/dx1 = 1.
        assert!(lams[0].abs() < 1e-12);
        assert!((lams[2] - 1.0).abs() < 1e-12);
        let diag = nep.multiplier_diagnostics(0, 11, 20);
        assert!(diag.is_empty(), "{diag:?}");
    }
}
