//! Problem-file serialization: a versioned JSON document describing a game.
//!
//! Polynomials are lists of `(coefficient, exponent-vector)` records over
//! the full variable layout (all players' blocks concatenated). Built-in
//! constraint families carry no explicit constraint list - the model derives
//! it - while the custom family lists its constraints together with one
//! multiplier expression per constraint. Parsing is strict: unknown fields,
//! rival variables, duplicate equality/inequality polynomials, and malformed
//! exponent vectors are all rejected with precise messages. Serialization is
//! canonical, so `parse(serialize(p)) = p` and serialized bytes are stable.

use crate::model::{
    family_constraints, Constraint, ConstraintFamily, ConstraintKind,
    ModelError, NepProblem, PlayerProblem,
};
use crate::nash::SolverOptions;
use crate::poly::{MultiIndex, Polynomial};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROBLEM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("json error at line {line}, column {column}: {msg}")]
    Syntax { line: usize, column: usize, msg: String },
    #[error("unsupported problem version {0} (expected {PROBLEM_VERSION})")]
    Version(u32),
    #[error("player {player}: {msg}")]
    Player { player: usize, msg: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One `coefficient * x^exps` record; `exps` spans the full layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub exps: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Equality,
    Inequality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: Kind,
    pub terms: Vec<Term>,
}

/// Feasible-set family; `custom` carries one multiplier expression per
/// constraint, everything else derives its constraint list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Ball,
    Sphere,
    Simplex,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Unconstrained,
    Custom { multipliers: Vec<Vec<Term>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    pub nvars: usize,
    pub objective: Vec<Term>,
    #[serde(flatten)]
    pub family: FamilySpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<ConstraintSpec>,
}

/// Solver-option overrides; absent fields keep their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_init: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feas_check_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer_loops: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: u32,
    pub players: Vec<PlayerSpec>,
    #[serde(default, skip_serializing_if = "is_default_options")]
    pub options: OptionsSpec,
}

fn is_default_options(o: &OptionsSpec) -> bool {
    *o == OptionsSpec::default()
}

impl OptionsSpec {
    /// Defaults overlaid with the file's overrides.
    pub fn resolve(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        if let Some(v) = self.seed {
            o.seed = v;
        }
        if let Some(v) = self.k_max {
            o.k_max = Some(v);
        }
        if let Some(v) = self.delta_init {
            o.delta_init = v;
        }
        if let Some(v) = self.omega_tol {
            o.omega_tol = v;
        }
        if let Some(v) = self.feas_check_tol {
            o.feas_check_tol = v;
        }
        if let Some(v) = self.rank_tol {
            o.rank_tol = v;
        }
        if let Some(v) = self.max_outer_loops {
            o.max_outer_loops = v;
        }
        if let Some(v) = self.convex {
            o.convex = v;
        }
        if let Some(v) = &self.backend {
            o.backend = Some(v.clone());
        }
        o
    }
}

fn terms_to_poly(
    terms: &[Term],
    layout: &[usize],
    player: usize,
    what: &str,
) -> Result<Polynomial, ProblemError> {
    let n: usize = layout.iter().sum();
    let mut p = Polynomial::zero(layout.to_vec());
    for (t_idx, t) in terms.iter().enumerate() {
        if t.exps.len() != n {
            return Err(ProblemError::Player {
                player,
                msg: format!(
                    "{what} term {t_idx}: exponent vector has length {} but the layout has {n} variables",
                    t.exps.len()
                ),
            });
        }
        if !t.coeff.is_finite() {
            return Err(ProblemError::Player {
                player,
                msg: format!("{what} term {t_idx}: non-finite coefficient"),
            });
        }
        p.add_term(MultiIndex::new(t.exps.clone()), t.coeff);
    }
    Ok(p)
}

fn poly_to_terms(p: &Polynomial) -> Vec<Term> {
    p.terms()
        .map(|(m, c)| Term { coeff: c, exps: m.exps().to_vec() })
        .collect()
}

/// Build a validated model (plus resolved options) from a parsed file.
pub fn to_nep(file: &ProblemFile) -> Result<(NepProblem, SolverOptions), ProblemError> {
    if file.version != PROBLEM_VERSION {
        return Err(ProblemError::Version(file.version));
    }
    let layout: Vec<usize> = file.players.iter().map(|p| p.nvars).collect();
    let mut players = Vec::with_capacity(file.players.len());
    for (i, spec) in file.players.iter().enumerate() {
        if spec.nvars == 0 {
            return Err(ProblemError::Player {
                player: i,
                msg: "a player needs at least one variable".into(),
            });
        }
        let objective = terms_to_poly(&spec.objective, &layout, i, "objective")?;
        let family = match &spec.family {
            FamilySpec::Ball => ConstraintFamily::Ball,
            FamilySpec::Sphere => ConstraintFamily::Sphere,
            FamilySpec::Simplex => ConstraintFamily::SimplexLike,
            FamilySpec::Box { lower, upper } => {
                ConstraintFamily::Box { lower: lower.clone(), upper: upper.clone() }
            }
            FamilySpec::Unconstrained => ConstraintFamily::Unconstrained,
            FamilySpec::Custom { multipliers } => {
                let exprs = multipliers
                    .iter()
                    .map(|m| terms_to_poly(m, &layout, i, "multiplier"))
                    .collect::<Result<Vec<_>, _>>()?;
                ConstraintFamily::Custom { multipliers: exprs }
            }
        };
        let constraints = if matches!(family, ConstraintFamily::Custom { .. }) {
            let mut out = Vec::with_capacity(spec.constraints.len());
            for c in &spec.constraints {
                let poly = terms_to_poly(&c.terms, &layout, i, "constraint")?;
                let kind = match c.kind {
                    Kind::Equality => ConstraintKind::Equality,
                    Kind::Inequality => ConstraintKind::Inequality,
                };
                out.push(Constraint { poly, kind });
            }
            // The same polynomial cannot be both an equality and an
            // inequality; that makes the multiplier pairing ambiguous.
            for (a, ca) in out.iter().enumerate() {
                for (b, cb) in out.iter().enumerate().skip(a + 1) {
                    if ca.kind != cb.kind && poly_eq(&ca.poly, &cb.poly) {
                        return Err(ProblemError::Player {
                            player: i,
                            msg: format!(
                                "constraints {a} and {b} share one polynomial with conflicting kinds"
                            ),
                        });
                    }
                }
            }
            out
        } else {
            if !spec.constraints.is_empty() {
                return Err(ProblemError::Player {
                    player: i,
                    msg: format!(
                        "family '{}' derives its constraints; remove the explicit list",
                        family.tag()
                    ),
                });
            }
            family_constraints(&family, &layout, i).expect("built-in family")
        };
        players.push(PlayerProblem { objective, family, constraints });
    }
    let nep = NepProblem::new(layout, players)?;
    Ok((nep, file.options.resolve()))
}

fn poly_eq(a: &Polynomial, b: &Polynomial) -> bool {
    a.num_terms() == b.num_terms()
        && a.terms().zip(b.terms()).all(|((ma, ca), (mb, cb))| ma == mb && ca == cb)
}

/// Canonical file form of a model: built-in families omit constraints,
/// custom lists them with its multiplier expressions.
pub fn from_nep(nep: &NepProblem, options: OptionsSpec) -> ProblemFile {
    let players = nep
        .players()
        .iter()
        .enumerate()
        .map(|(i, pl)| {
            let (family, constraints) = match &pl.family {
                ConstraintFamily::Ball => (FamilySpec::Ball, Vec::new()),
                ConstraintFamily::Sphere => (FamilySpec::Sphere, Vec::new()),
                ConstraintFamily::SimplexLike => (FamilySpec::Simplex, Vec::new()),
                ConstraintFamily::Box { lower, upper } => (
                    FamilySpec::Box { lower: lower.clone(), upper: upper.clone() },
                    Vec::new(),
                ),
                ConstraintFamily::Unconstrained => {
                    (FamilySpec::Unconstrained, Vec::new())
                }
                ConstraintFamily::Custom { multipliers } => (
                    FamilySpec::Custom {
                        multipliers: multipliers.iter().map(poly_to_terms).collect(),
                    },
                    pl.constraints
                        .iter()
                        .map(|c| ConstraintSpec {
                            kind: match c.kind {
                                ConstraintKind::Equality => Kind::Equality,
                                ConstraintKind::Inequality => Kind::Inequality,
                            },
                            terms: poly_to_terms(&c.poly),
                        })
                        .collect(),
                ),
            };
            PlayerSpec {
                nvars: nep.layout()[i],
                objective: poly_to_terms(&pl.objective),
                family,
                constraints,
            }
        })
        .collect();
    ProblemFile { version: PROBLEM_VERSION, players, options }
}

/// Parse problem-file text; syntax errors carry line and column.
pub fn parse_problem(text: &str) -> Result<ProblemFile, ProblemError> {
    serde_json::from_str(text).map_err(|e| ProblemError::Syntax {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })
}

/// Canonical serialization (pretty JSON, stable field order).
pub fn serialize_problem(file: &ProblemFile) -> String {
    let mut s = serde_json::to_string_pretty(file).expect("serializable");
    s.push('\n');
    s
}
