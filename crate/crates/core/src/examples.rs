//! Bundled game instances for tests, the CLI, and the reproduction
//! runner. Each builder returns a validated problem; `golden` returns the
//! reference equilibria used by the regression suite.

use crate::model::{
    Constraint, ConstraintFamily, ConstraintKind, NepProblem, PlayerProblem,
};
use crate::poly::Polynomial;

fn var(layout: &[usize], j: usize) -> Polynomial {
    Polynomial::var(layout.to_vec(), j)
}

fn con(layout: &[usize], c: f64) -> Polynomial {
    Polynomial::constant(layout.to_vec(), c)
}

fn sum(terms: impl IntoIterator<Item = Polynomial>) -> Polynomial {
    let mut it = terms.into_iter();
    let first = it.next().expect("nonempty sum");
    it.fold(first, |acc, t| acc.add(&t))
}

/// Two players on unit balls in the plane with bilinear coupling; three
/// equilibria, one interior and two antipodal boundary pairs.
pub fn coupled_balls() -> NepProblem {
    let l = &[2usize, 2];
    let x = |j| var(l, j);
    let f1 = x(0)
        .mul(&x(0).add(&x(2)).add(&x(3).scale(4.0)))
        .add(&x(1).mul(&x(1)).scale(2.0));
    let f2 = x(2)
        .mul(&x(0).add(&x(1).scale(2.0)).add(&x(2)))
        .add(&x(3).mul(&x(0).scale(2.0).add(&x(1)).add(&x(3))));
    NepProblem::new(
        l.to_vec(),
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
    .expect("valid instance")
}

/// Ball player versus simplex player, both strictly convex; two
/// equilibria.
pub fn ball_simplex() -> NepProblem {
    let l = &[2usize, 2];
    let x = |j| var(l, j);
    let f1 = x(0)
        .mul(&x(0).add(&x(2)).add(&x(3).scale(4.0)))
        .add(&x(1).mul(&x(1)).scale(4.0));
    let f2 = x(2)
        .mul(&x(2))
        .scale(2.0)
        .add(&x(3).mul(&x(3)).scale(2.0))
        .add(&x(0).sub(&x(1).scale(2.0)).mul(&x(2)))
        .add(&x(0).scale(4.0).add(&x(1)).mul(&x(3)));
    NepProblem::new(
        l.to_vec(),
        vec![
            PlayerProblem {
                objective: f1,
                family: ConstraintFamily::Ball,
                constraints: vec![],
            },
            PlayerProblem {
                objective: f2,
                family: ConstraintFamily::SimplexLike,
                constraints: vec![],
            },
        ],
    )
    .expect("valid instance")
}

/// Two players in three dimensions: a nonconvex player with bilinear
/// couplings over an unbounded set, against a sphere player with a cubic
/// objective. `negate` flips the sphere player's objective, which removes
/// every equilibrium.
pub fn mixed_cubics(negate: bool) -> NepProblem {
    let l = &[3usize, 3];
    let x = |j| var(l, j);
    // f1 = sum_j x_{1,j} (x_{1,j} - j x_{2,j}).
    let f1 = sum((0..3).map(|j| {
        x(j).mul(&x(j).sub(&x(3 + j).scale(j as f64 + 1.0)))
    }));
    let e1a = sum((0..3).map(&x));
    let sym2a = x(0).mul(&x(1)).add(&x(0).mul(&x(2))).add(&x(1).mul(&x(2)));
    let e1b = sum((3..6).map(&x));
    let sym2b = x(3).mul(&x(4)).add(&x(3).mul(&x(5))).add(&x(4).mul(&x(5)));
    let prod_b = x(3).mul(&x(4)).mul(&x(5));
    let f2 = if negate {
        e1a.mul(&sym2b).sub(&prod_b).sub(&sym2a.mul(&e1b))
    } else {
        prod_b.add(&sym2a.mul(&e1b)).add(&e1a.mul(&sym2b))
    };
    let d0 = f1.differentiate(0);
    let d1 = f1.differentiate(1);
    let multipliers = vec![
        x(0).scale(-1.0).mul(&d0),
        x(0).mul(&d0).sub(&x(1).mul(&d1)),
        con(l, 1.0).sub(&x(0).mul(&x(1))).mul(&d0),
    ];
    let constraints = vec![
        Constraint {
            poly: con(l, 1.0).sub(&x(0).mul(&x(1))),
            kind: ConstraintKind::Inequality,
        },
        Constraint {
            poly: con(l, 1.0).sub(&x(1).mul(&x(2))),
            kind: ConstraintKind::Inequality,
        },
        Constraint { poly: x(0), kind: ConstraintKind::Inequality },
    ];
    NepProblem::new(
        l.to_vec(),
        vec![
            PlayerProblem {
                objective: f1,
                family: ConstraintFamily::Custom { multipliers },
                constraints,
            },
            PlayerProblem {
                objective: f2,
                family: ConstraintFamily::Sphere,
                constraints: vec![],
            },
        ],
    )
    .expect("valid instance")
}

/// Three players with mixed feasible sets: a ball, a sphere arc in the
/// nonnegative quadrant, and a product of intervals written as quadratic
/// constraints. `zero_sum` replaces the third objective by `-f1 - f2`,
/// which removes every equilibrium.
pub fn trio_mixed(zero_sum: bool) -> NepProblem {
    let l = &[2usize, 2, 2];
    let x = |j| var(l, j);
    let f1 = sum([
        x(0).mul(&x(0)).mul(&x(2)).scale(2.0),
        x(0).mul(&x(1)).mul(&x(2)).scale(-1.0),
        x(0).mul(&x(2)).scale(3.0),
        x(1).mul(&x(1)).mul(&x(1)).scale(2.0),
        x(1).mul(&x(5)).mul(&x(5)),
    ]);
    let f2 = sum([
        x(2).mul(&x(2)).mul(&x(2)),
        x(1).mul(&x(2)).scale(-1.0),
        x(3).mul(&x(3)).mul(&x(3)),
        x(3).mul(&x(5)).scale(2.0),
        x(1).mul(&x(3)).mul(&x(4)),
    ]);
    let f3 = if zero_sum {
        Polynomial::zero(l.to_vec()).sub(&f1).sub(&f2)
    } else {
        sum([
            x(0).mul(&x(1)).mul(&x(4)),
            x(4).scale(-1.0),
            x(5).mul(&x(5)).mul(&x(5)).scale(-3.0),
            x(5).scale(-1.0),
            x(4).mul(&x(4)).mul(&x(5)).scale(2.0),
            x(4).mul(&x(5)).mul(&x(5)).scale(2.0),
        ])
    };

    // Sphere arc in the quadrant: lam1 pairs with the sphere, the rest
    // with the sign conditions.
    let d2 = f2.differentiate(2);
    let d3 = f2.differentiate(3);
    let lam1 = x(2).mul(&d2).add(&x(3).mul(&d3)).scale(0.5);
    let p2_mult = vec![
        lam1.clone(),
        d2.sub(&x(2).scale(2.0).mul(&lam1)),
        d3.sub(&x(3).scale(2.0).mul(&lam1)),
    ];
    let p2_cons = vec![
        Constraint {
            poly: x(2).mul(&x(2)).add(&x(3).mul(&x(3))).sub(&con(l, 1.0)),
            kind: ConstraintKind::Equality,
        },
        Constraint { poly: x(2), kind: ConstraintKind::Inequality },
        Constraint { poly: x(3), kind: ConstraintKind::Inequality },
    ];

    let d4 = f3.differentiate(4);
    let d5 = f3.differentiate(5);
    let p3_mult = vec![
        x(4).scale(-0.5).mul(&d4),
        x(5).scale(-0.5).mul(&d5),
    ];
    let p3_cons = vec![
        Constraint {
            poly: con(l, 1.0).sub(&x(4).mul(&x(4))),
            kind: ConstraintKind::Inequality,
        },
        Constraint {
            poly: con(l, 1.0).sub(&x(5).mul(&x(5))),
            kind: ConstraintKind::Inequality,
        },
    ];

    NepProblem::new(
        l.to_vec(),
        vec![
            PlayerProblem {
                objective: f1,
                family: ConstraintFamily::Ball,
                constraints: vec![],
            },
            PlayerProblem {
                objective: f2,
                family: ConstraintFamily::Custom { multipliers: p2_mult },
                constraints: p2_cons,
            },
            PlayerProblem {
                objective: f3,
                family: ConstraintFamily::Custom { multipliers: p3_mult },
                constraints: p3_cons,
            },
        ],
    )
    .expect("valid instance")
}

/// Two players on the annulus `1 <= |x_i|^2 <= 2` with cubic couplings;
/// one equilibrium.
pub fn annulus_duo() -> NepProblem {
    let l = &[2usize, 2];
    let x = |j| var(l, j);
    let f1 = sum([
        x(0).mul(&x(1)).scale(2.0),
        x(0).mul(&x(2)).mul(&x(2)).scale(3.0),
        x(1).mul(&x(1)).mul(&x(3)).scale(3.0),
    ]);
    let f2 = sum([
        x(2).mul(&x(2)).mul(&x(2)),
        x(3).mul(&x(3)).mul(&x(3)),
        x(0).mul(&x(2)).mul(&x(2)),
        x(1).mul(&x(3)).mul(&x(3)),
        x(0).mul(&x(1)).mul(&x(2).add(&x(3))),
    ]);
    let mut players = Vec::new();
    for (i, f) in [f1, f2].into_iter().enumerate() {
        let (a, b) = (2 * i, 2 * i + 1);
        let s = x(a).mul(&x(a)).add(&x(b).mul(&x(b)));
        let xdf = x(a)
            .mul(&f.differentiate(a))
            .add(&x(b).mul(&f.differentiate(b)));
        let multipliers = vec![
            xdf.mul(&con(l, 2.0).sub(&s)).scale(0.5),
            xdf.mul(&con(l, 1.0).sub(&s)).scale(0.25),
        ];
        let constraints = vec![
            Constraint {
                poly: s.sub(&con(l, 1.0)),
                kind: ConstraintKind::Inequality,
            },
            Constraint {
                poly: con(l, 2.0).sub(&s),
                kind: ConstraintKind::Inequality,
            },
        ];
        players.push(PlayerProblem {
            objective: f,
            family: ConstraintFamily::Custom { multipliers },
            constraints,
        });
    }
    NepProblem::new(l.to_vec(), players).expect("valid instance")
}

/// Two sphere players of equal dimension `n` with the symmetric bilinear
/// coupling `sum_{i<=j} x_{1,i} x_{1,j} (x_{2,i} + x_{2,j})` and its
/// mirror image.
pub fn sphere_bilinear(n: usize) -> NepProblem {
    assert!(n >= 1);
    let l = &[n, n];
    let x = |j| var(l, j);
    let coupled = |own: usize, other: usize| {
        sum((0..n).flat_map(|i| {
            (i..n).map(move |j| (i, j))
        })
        .map(|(i, j)| {
            x(own + i)
                .mul(&x(own + j))
                .mul(&x(other + i).add(&x(other + j)))
        }))
    };
    NepProblem::new(
        l.to_vec(),
        vec![
            PlayerProblem {
                objective: coupled(0, n),
                family: ConstraintFamily::Sphere,
                constraints: vec![],
            },
            PlayerProblem {
                objective: coupled(n, 0),
                family: ConstraintFamily::Sphere,
                constraints: vec![],
            },
        ],
    )
    .expect("valid instance")
}

/// Three unconstrained players of dimension `n` with quartic objectives
/// and cyclic cubic couplings; one equilibrium with all blocks equal.
pub fn quartic_trio(n: usize) -> NepProblem {
    assert!(n >= 1);
    let l = &[n, n, n];
    let scale = 1.0 / (n * n) as f64;
    // Index 0 denotes the constant one.
    let lifted = |block: usize, idx: usize| {
        if idx == 0 {
            con(l, 1.0)
        } else {
            var(l, block * n + idx - 1)
        }
    };
    let objective = |p: usize| {
        let own = p;
        let nxt = (p + 1) % 3;
        let aft = (p + 2) % 3;
        let quartic = sum((1..=n).map(|i| {
            let v = lifted(own, i);
            v.mul(&v).mul(&v).mul(&v)
        }));
        let mut cubic = Polynomial::zero(l.to_vec());
        for i in 0..=n {
            for j in i..=n {
                for k in j..=n {
                    let t = lifted(own, i).mul(&lifted(own, j)).mul(
                        &lifted(own, k)
                            .add(&lifted(nxt, i))
                            .add(&lifted(aft, j)),
                    );
                    cubic = cubic.add(&t);
                }
            }
        }
        quartic.add(&cubic.scale(scale))
    };
    NepProblem::new(
        l.to_vec(),
        (0..3)
            .map(|p| PlayerProblem {
                objective: objective(p),
                family: ConstraintFamily::Unconstrained,
                constraints: vec![],
            })
            .collect(),
    )
    .expect("valid instance")
}

/// Emission control between three countries: each chooses gross emissions
/// and abatement investment under revenue, damage, and capacity terms;
/// one interior equilibrium.
pub fn pollution_control() -> NepProblem {
    let l = &[2usize, 2, 2];
    let b = [1.5, 2.0, 1.8];
    let d = [0.8, 1.2, 1.0];
    let e_cap = [3.0, 4.0, 2.0];
    let gam = [0.7, 0.5, 0.9];
    let c = [[0.0, 0.2, 0.3], [0.4, 0.0, 0.2], [0.5, 0.1, 0.0]];
    let x = |j| var(l, j);
    let mut players = Vec::new();
    for i in 0..3 {
        let e = x(2 * i);
        let w = x(2 * i + 1);
        let mut f = sum([
            e.mul(&e).scale(0.5),
            e.scale(-b[i]),
            w.mul(&w).scale(0.5),
            e.scale(d[i]),
            w.scale(-d[i] * gam[i]),
        ]);
        for j in 0..3 {
            if j != i {
                f = f.add(&w.mul(&x(2 * j)).scale(c[i][j]));
            }
        }
        let de = f.differentiate(2 * i);
        let dw = f.differentiate(2 * i + 1);
        let net = e.sub(&w.scale(gam[i]));
        let lam4 = dw
            .mul(&w)
            .mul(&net)
            .sub(&de.mul(&con(l, b[i]).sub(&e)).mul(&net))
            .scale(1.0 / ((b[i] - e_cap[i]) * e_cap[i]));
        let lam3 = con(l, b[i])
            .sub(&e)
            .mul(&de.add(&lam4))
            .sub(&w.mul(&dw.sub(&lam4.scale(gam[i]))))
            .scale(1.0 / b[i]);
        let lam2 = lam3.sub(&lam4).sub(&de);
        let lam1 = dw.add(&lam3.scale(gam[i])).sub(&lam4.scale(gam[i]));
        let constraints = vec![
            Constraint { poly: w.clone(), kind: ConstraintKind::Inequality },
            Constraint {
                poly: con(l, b[i]).sub(&e),
                kind: ConstraintKind::Inequality,
            },
            Constraint { poly: net.clone(), kind: ConstraintKind::Inequality },
            Constraint {
                poly: con(l, e_cap[i]).sub(&net),
                kind: ConstraintKind::Inequality,
            },
        ];
        players.push(PlayerProblem {
            objective: f,
            family: ConstraintFamily::Custom {
                multipliers: vec![lam1, lam2, lam3, lam4],
            },
            constraints,
        });
    }
    NepProblem::new(l.to_vec(), players).expect("valid instance")
}

/// Cournot competition between three generating companies with unit
/// capacities and quadratic costs under a linear inverse-demand price;
/// one equilibrium.
pub fn electricity_market() -> NepProblem {
    let l = &[1usize, 2, 3];
    let c: [&[f64]; 3] = [&[0.4], &[0.35, 0.35], &[0.46, 0.5, 0.5]];
    let d: [&[f64]; 3] = [&[2.0], &[1.25, 1.0], &[2.25, 3.0, 3.0]];
    let e_cap: [&[f64]; 3] = [&[2.0], &[2.5, 0.67], &[1.2, 1.8, 1.6]];
    let x = |j| var(l, j);
    let total = sum((0..6).map(&x));
    let price = con(l, 10.0).sub(&total);
    let start = [0usize, 1, 3];
    let mut players = Vec::new();
    for i in 0..3 {
        let units = l[i];
        let own = sum((0..units).map(|j| x(start[i] + j)));
        let mut f = Polynomial::zero(l.to_vec()).sub(&price.mul(&own));
        for j in 0..units {
            let v = x(start[i] + j);
            f = f
                .add(&v.mul(&v).scale(0.5 * c[i][j]))
                .add(&v.scale(d[i][j]));
        }
        players.push(PlayerProblem {
            objective: f,
            family: ConstraintFamily::Box {
                lower: vec![0.0; units],
                upper: e_cap[i].to_vec(),
            },
            constraints: vec![],
        });
    }
    NepProblem::new(l.to_vec(), players).expect("valid instance")
}

/// Canonical instance names understood by `by_name`.
pub fn names() -> Vec<&'static str> {
    vec![
        "coupled-balls",
        "ball-simplex",
        "mixed-cubics",
        "mixed-cubics-negated",
        "trio-mixed",
        "trio-zero-sum",
        "annulus-duo",
        "sphere-bilinear-3",
        "quartic-trio-2",
        "pollution-control",
        "electricity-market",
    ]
}

pub fn by_name(name: &str) -> Option<NepProblem> {
    if let Some(n) = name.strip_prefix("sphere-bilinear-") {
        return n.parse().ok().filter(|&n| (1..=8).contains(&n)).map(sphere_bilinear);
    }
    if let Some(n) = name.strip_prefix("quartic-trio-") {
        return n.parse().ok().filter(|&n| (1..=8).contains(&n)).map(quartic_trio);
    }
    match name {
        "coupled-balls" => Some(coupled_balls()),
        "ball-simplex" => Some(ball_simplex()),
        "mixed-cubics" => Some(mixed_cubics(false)),
        "mixed-cubics-negated" => Some(mixed_cubics(true)),
        "trio-mixed" => Some(trio_mixed(false)),
        "trio-zero-sum" => Some(trio_mixed(true)),
        "annulus-duo" => Some(annulus_duo()),
        "pollution-control" => Some(pollution_control()),
        "electricity-market" => Some(electricity_market()),
        _ => None,
    }
}

/// Reference results for the regression suite.
pub struct Golden {
    /// Reference equilibria (4-digit coordinates unless exact).
    pub nes: Vec<Vec<f64>>,
    /// True when `nes` is the complete equilibrium set.
    pub complete: bool,
    /// True when the instance has no equilibrium.
    pub none_exists: bool,
}

pub fn golden(name: &str) -> Option<Golden> {
    let s5 = 5.0_f64.sqrt();
    let s3 = 3.0_f64.sqrt();
    let some = |nes: Vec<Vec<f64>>, complete: bool| {
        Some(Golden { nes, complete, none_exists: false })
    };
    match name {
        "coupled-balls" => some(
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![1.0, 0.0, -1.0 / s5, -2.0 / s5],
                vec![-1.0, 0.0, 1.0 / s5, 2.0 / s5],
            ],
            true,
        ),
        "ball-simplex" => some(
            vec![
                vec![0.0, 0.0, 0.0, 0.0],
                vec![-1.0, 0.0, 0.125, 0.875],
            ],
            true,
        ),
        "mixed-cubics" => some(
            vec![
                vec![0.3198, 0.6396, -0.6396, 0.6396, 0.6396, -0.4264],
                vec![0.0, 0.3895, 0.5842, -0.8346, 0.3895, 0.3895],
                vec![0.2934, -0.5578, 0.8803, 0.5869, -0.5578, 0.5869],
                vec![0.0, -0.5774, -0.8660, -0.5774, -0.5774, -0.5774],
            ],
            true,
        ),
        "trio-mixed" => some(
            vec![vec![-0.3558, -0.9346, 1.0, 0.0, -0.3331, 1.0]],
            true,
        ),
        "annulus-duo" => some(
            vec![vec![-1.3339, 0.4698, -1.4118, 0.0820]],
            true,
        ),
        "sphere-bilinear-3" => some(
            vec![vec![
                -1.0 / s3,
                -1.0 / s3,
                -1.0 / s3,
                -1.0 / s3,
                -1.0 / s3,
                -1.0 / s3,
            ]],
            false,
        ),
        "quartic-trio-2" => some(
            vec![vec![
                -0.8410, -0.7125, -0.8410, -0.7125, -0.8410, -0.7125,
            ]],
            true,
        ),
        "pollution-control" => some(
            vec![vec![0.7, 0.16, 0.8, 0.16, 0.8, 0.47]],
            true,
        ),
        "electricity-market" => some(
            vec![vec![1.7184, 1.8413, 0.67, 1.2, 0.0823, 0.0823]],
            true,
        ),
        "mixed-cubics-negated" | "trio-zero-sum" => {
            Some(Golden { nes: vec![], complete: true, none_exists: true })
        }
        _ => None,
    }
}
