//! Sparse multivariate polynomials over a blocked variable layout.
//!
//! Variables are grouped into per-player blocks laid out consecutively:
//! with layout `[n_1, ..., n_N]` the flat variable `x_j` belongs to the
//! player whose block contains position `j`. Monomials are ordered by
//! total degree, then within a degree so that a larger exponent on an
//! earlier variable comes first: for two variables the degree-`3` basis
//! reads `1, z1, z2, z1^2, z1*z2, z2^2, z1^3, z1^2*z2, z1*z2^2, z2^3`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

/// Exponent vector of a monomial.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    exps: Vec<u32>,
}

impl MultiIndex {
    pub fn new(exps: Vec<u32>) -> Self {
        MultiIndex { exps }
    }

    pub fn zero(nvars: usize) -> Self {
        MultiIndex { exps: vec![0; nvars] }
    }

    /// Monomial `x_j`.
    pub fn unit(nvars: usize, j: usize) -> Self {
        let mut exps = vec![0; nvars];
        exps[j] = 1;
        MultiIndex { exps }
    }

    pub fn nvars(&self) -> usize {
        self.exps.len()
    }

    pub fn exps(&self) -> &[u32] {
        &self.exps
    }

    pub fn exp(&self, j: usize) -> u32 {
        self.exps[j]
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().sum()
    }

    /// Product of monomials: componentwise exponent sum.
    pub fn mul(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        MultiIndex {
            exps: self
                .exps
                .iter()
                .zip(&other.exps)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn value_at(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.exps.len());
        let mut v = 1.0;
        for (xi, &e) in x.iter().zip(&self.exps) {
            for _ in 0..e {
                v *= xi;
            }
        }
        v
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        debug_assert_eq!(self.exps.len(), other.exps.len());
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {
                for (a, b) in self.exps.iter().zip(&other.exps) {
                    match a.cmp(b) {
                        Ordering::Equal => continue,
                        // Larger exponent on an earlier variable sorts first.
                        ord => return ord.reverse(),
                    }
                }
                Ordering::Equal
            }
            ord => ord,
        }
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x^{:?}", self.exps)
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num as usize
}

/// Number of monomials in `n` variables of degree at most `d`.
pub fn basis_size(n: usize, d: u32) -> usize {
    binomial(n + d as usize, d as usize)
}

fn push_degree(n: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
    if prefix.len() + 1 == n {
        prefix.push(deg);
        out.push(MultiIndex::new(prefix.clone()));
        prefix.pop();
        return;
    }
    for e in (0..=deg).rev() {
        prefix.push(e);
        push_degree(n, deg - e, prefix, out);
        prefix.pop();
    }
}

/// All monomials in `n` variables of degree at most `d`, in basis order.
pub fn monomial_basis(n: usize, d: u32) -> Vec<MultiIndex> {
    assert!(n >= 1, "monomial basis needs at least one variable");
    let mut out = Vec::with_capacity(basis_size(n, d));
    let mut prefix = Vec::with_capacity(n);
    for deg in 0..=d {
        push_degree(n, deg, &mut prefix, &mut out);
    }
    out
}

/// Position of `alpha` in `monomial_basis(alpha.nvars(), d)` for any `d >= |alpha|`.
pub fn basis_position(alpha: &MultiIndex) -> usize {
    let n = alpha.nvars();
    let deg = alpha.degree() as usize;
    // Monomials of all strictly smaller degrees.
    let mut pos = if deg == 0 { 0 } else { basis_size(n, deg as u32 - 1) };
    // Rank within the degree slice: count monomials of the same degree that
    // precede alpha (larger exponent on an earlier variable first).
    let mut rem_deg = deg;
    for (j, &e) in alpha.exps().iter().enumerate() {
        let rem_vars = n - j - 1;
        if rem_vars == 0 {
            break;
        }
        for larger in (e as usize + 1)..=rem_deg {
            // Count of degree-(rem_deg - larger) monomials in the remaining variables.
            pos += binomial(rem_deg - larger + rem_vars - 1, rem_vars - 1);
        }
        rem_deg -= e as usize;
    }
    pos
}

/// Sparse polynomial with real coefficients over a blocked layout.
#[derive(Clone, PartialEq)]
pub struct Polynomial {
    layout: Vec<usize>,
    terms: BTreeMap<MultiIndex, f64>,
}

impl Polynomial {
    pub fn zero(layout: Vec<usize>) -> Self {
        assert!(!layout.is_empty() && layout.iter().all(|&w| w > 0));
        Polynomial { layout, terms: BTreeMap::new() }
    }

    pub fn constant(layout: Vec<usize>, c: f64) -> Self {
        let mut p = Polynomial::zero(layout);
        if c != 0.0 {
            p.terms.insert(MultiIndex::zero(p.nvars()), c);
        }
        p
    }

    /// The flat variable `x_j`.
    pub fn var(layout: Vec<usize>, j: usize) -> Self {
        let mut p = Polynomial::zero(layout);
        assert!(j < p.nvars());
        p.terms.insert(MultiIndex::unit(p.nvars(), j), 1.0);
        p
    }

    pub fn from_terms<I>(layout: Vec<usize>, terms: I) -> Self
    where
        I: IntoIterator<Item = (MultiIndex, f64)>,
    {
        let mut p = Polynomial::zero(layout);
        for (m, c) in terms {
            assert_eq!(m.nvars(), p.nvars(), "term arity does not match layout");
            p.add_term(m, c);
        }
        p
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn nvars(&self) -> usize {
        self.layout.iter().sum()
    }

    /// Start of player `i`'s block in the flat layout.
    pub fn block_start(&self, i: usize) -> usize {
        self.layout[..i].iter().sum()
    }

    pub fn block_width(&self, i: usize) -> usize {
        self.layout[i]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: MultiIndex, c: f64) {
        debug_assert_eq!(m.nvars(), self.nvars());
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(e) => {
                if c != 0.0 {
                    e.insert(c);
                }
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = e.get_mut();
                *v += c;
                if *v == 0.0 {
                    e.remove();
                }
            }
        }
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        if s == 0.0 {
            return Polynomial::zero(self.layout.clone());
        }
        Polynomial {
            layout: self.layout.clone(),
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        debug_assert_eq!(self.layout, other.layout);
        let mut out = self.clone();
        for (m, c) in other.terms() {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        debug_assert_eq!(self.layout, other.layout);
        let mut out = Polynomial::zero(self.layout.clone());
        for (ma, ca) in self.terms() {
            for (mb, cb) in other.terms() {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Polynomial, s: f64) {
        debug_assert_eq!(self.layout, other.layout);
        for (m, c) in other.terms() {
            self.add_term(m.clone(), c * s);
        }
    }

    /// Partial derivative with respect to flat variable `j`.
    pub fn differentiate(&self, j: usize) -> Polynomial {
        assert!(j < self.nvars());
        let mut out = Polynomial::zero(self.layout.clone());
        for (m, c) in self.terms() {
            let e = m.exp(j);
            if e == 0 {
                continue;
            }
            let mut exps = m.exps().to_vec();
            exps[j] = e - 1;
            out.add_term(MultiIndex::new(exps), c * e as f64);
        }
        out
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nvars());
        self.terms().map(|(m, c)| c * m.value_at(x)).sum()
    }

    /// Gradient with respect to player `i`'s block, in the full layout.
    pub fn block_gradient(&self, i: usize) -> Vec<Polynomial> {
        let start = self.block_start(i);
        (start..start + self.layout[i])
            .map(|j| self.differentiate(j))
            .collect()
    }

    /// Substitute numeric values for a subset of variables.
    ///
    /// `fixed[j] = Some(v)` pins flat variable `j` to `v`; the result keeps
    /// the full layout with those exponents folded into the coefficients.
    pub fn partial_eval(&self, fixed: &[Option<f64>]) -> Polynomial {
        assert_eq!(fixed.len(), self.nvars());
        let mut out = Polynomial::zero(self.layout.clone());
        for (m, c) in self.terms() {
            let mut coef = c;
            let mut exps = m.exps().to_vec();
            for (j, f) in fixed.iter().enumerate() {
                if let Some(v) = f {
                    for _ in 0..exps[j] {
                        coef *= v;
                    }
                    exps[j] = 0;
                }
            }
            if coef != 0.0 {
                out.add_term(MultiIndex::new(exps), coef);
            }
        }
        out
    }

    /// Pin player `i`'s block to `v`, keeping the full layout.
    pub fn fix_block(&self, i: usize, v: &[f64]) -> Polynomial {
        assert_eq!(v.len(), self.layout[i]);
        let start = self.block_start(i);
        let mut fixed = vec![None; self.nvars()];
        for (j, &vj) in v.iter().enumerate() {
            fixed[start + j] = Some(vj);
        }
        self.partial_eval(&fixed)
    }

    /// Substitute the full point `u` for every block except player `i`'s and
    /// re-index onto that block alone: the result is a polynomial in
    /// `n_i` variables with single-block layout.
    pub fn restrict_rivals(&self, i: usize, u: &[f64]) -> Polynomial {
        assert_eq!(u.len(), self.nvars());
        let start = self.block_start(i);
        let width = self.layout[i];
        let mut fixed: Vec<Option<f64>> = u.iter().map(|&v| Some(v)).collect();
        for f in fixed.iter_mut().skip(start).take(width) {
            *f = None;
        }
        let folded = self.partial_eval(&fixed);
        let mut out = Polynomial::zero(vec![width]);
        for (m, c) in folded.terms() {
            let exps = m.exps()[start..start + width].to_vec();
            out.add_term(MultiIndex::new(exps), c);
        }
        out
    }

    /// Reinterpret a single-block polynomial inside a larger layout at block `i`.
    pub fn embed(&self, layout: Vec<usize>, i: usize) -> Polynomial {
        assert_eq!(self.layout.len(), 1, "embed expects a single-block source");
        assert_eq!(self.layout[0], layout[i]);
        let mut out = Polynomial::zero(layout);
        let start = out.block_start(i);
        let n = out.nvars();
        for (m, c) in self.terms() {
            let mut exps = vec![0u32; n];
            exps[start..start + m.nvars()].copy_from_slice(m.exps());
            out.add_term(MultiIndex::new(exps), c);
        }
        out
    }

    /// Largest coefficient magnitude; 0 for the zero polynomial.
    pub fn max_coeff(&self) -> f64 {
        self.terms().map(|(_, c)| c.abs()).fold(0.0, f64::max)
    }

    /// Drop terms with `|coefficient| <= tol`. Sums that cancel
    /// algebraically leave roundoff residue; callers pass a tolerance
    /// scaled to the magnitudes that entered the sum.
    pub fn prune(mut self, tol: f64) -> Polynomial {
        self.terms.retain(|_, c| c.abs() > tol);
        self
    }
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms() {
            if first {
                write!(f, "{c}")?;
                first = false;
            } else if c >= 0.0 {
                write!(f, " + {c}")?;
            } else {
                write!(f, " - {}", -c)?;
            }
            for (j, &e) in m.exps().iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "*x{j}")?,
                    _ => write!(f, "*x{j}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_matches_two_variable_listing() {
        let basis = monomial_basis(2, 3);
        let expected: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
            vec![3, 0],
            vec![2, 1],
            vec![1, 2],
            vec![0, 3],
        ];
        let got: Vec<Vec<u32>> = basis.iter().map(|m| m.exps().to_vec()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn basis_size_is_binomial() {
        for n in 1..=5 {
            for d in 0..=4u32 {
                assert_eq!(monomial_basis(n, d).len(), basis_size(n, d));
            }
        }
    }

    #[test]
    fn basis_position_agrees_with_enumeration() {
        for n in 1..=4 {
            let basis = monomial_basis(n, 5);
            for (pos, m) in basis.iter().enumerate() {
                assert_eq!(basis_position(m), pos, "monomial {m:?}");
            }
        }
    }

    #[test]
    fn zero_polynomial_has_degree_zero() {
        let p = Polynomial::zero(vec![2, 2]);
        assert_eq!(p.degree(), 0);
        assert!(p.is_zero());
    }

    #[test]
    fn arithmetic_and_evaluation() {
        let layout = vec![2];
        let x0 = Polynomial::var(layout.clone(), 0);
        let x1 = Polynomial::var(layout.clone(), 1);
        // (x0 + 2*x1)^2 = x0^2 + 4*x0*x1 + 4*x1^2
        let p = x0.add(&x1.scale(2.0));
        let q = p.mul(&p);
        assert_eq!(q.num_terms(), 3);
        let at = |x: &[f64]| (x[0] + 2.0 * x[1]).powi(2);
        for x in [[0.3, -1.2], [1.0, 0.0], [-0.5, 0.25]] {
            assert!((q.evaluate(&x) - at(&x)).abs() < 1e-12);
        }
        let cancel = q.sub(&q);
        assert!(cancel.is_zero());
    }

    #[test]
    fn differentiate_matches_finite_differences() {
        let layout = vec![2, 1];
        // p = x0^3*x2 - 2*x1*x2^2 + x0
        let x0 = Polynomial::var(layout.clone(), 0);
        let x1 = Polynomial::var(layout.clone(), 1);
        let x2 = Polynomial::var(layout.clone(), 2);
        let p = x0
            .mul(&x0)
            .mul(&x0)
            .mul(&x2)
            .sub(&x1.mul(&x2).mul(&x2).scale(2.0))
            .add(&x0);
        let x = [0.7, -0.4, 1.3];
        let h = 1e-5;
        for j in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.evaluate(&xp) - p.evaluate(&xm)) / (2.0 * h);
            let exact = p.differentiate(j).evaluate(&x);
            assert!(
                (fd - exact).abs() <= 1e-6 * (1.0 + exact.abs()),
                "var {j}: fd {fd} vs exact {exact}"
            );
        }
    }

    #[test]
    fn block_gradient_blocks() {
        let layout = vec![2, 2];
        let x0 = Polynomial::var(layout.clone(), 0);
        let x3 = Polynomial::var(layout.clone(), 3);
        let p = x0.mul(&x3); // d/dx0 = x3, d/dx3 = x0
        let g0 = p.block_gradient(0);
        let g1 = p.block_gradient(1);
        assert_eq!(g0.len(), 2);
        assert_eq!(g1.len(), 2);
        assert_eq!(g0[0], x3);
        assert!(g0[1].is_zero());
        assert_eq!(g1[1], x0);
    }

    #[test]
    fn restrict_rivals_reindexes() {
        let layout = vec![2, 2];
        // p = x0*x2 + x3^2 + x1
        let x0 = Polynomial::var(layout.clone(), 0);
        let x1 = Polynomial::var(layout.clone(), 1);
        let x2 = Polynomial::var(layout.clone(), 2);
        let x3 = Polynomial::var(layout.clone(), 3);
        let p = x0.mul(&x2).add(&x3.mul(&x3)).add(&x1);
        let u = [9.0, 9.0, 0.5, -2.0];
        let r = p.restrict_rivals(0, &u);
        assert_eq!(r.layout(), &[2]);
        // r(x0, x1) = 0.5*x0 + 4 + x1
        assert!((r.evaluate(&[1.0, 0.0]) - 4.5).abs() < 1e-12);
        assert!((r.evaluate(&[0.0, 3.0]) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn fix_block_keeps_layout() {
        let layout = vec![1, 1];
        let x0 = Polynomial::var(layout.clone(), 0);
        let x1 = Polynomial::var(layout.clone(), 1);
        let p = x0.mul(&x1).add(&x0); // x0*x1 + x0
        let q = p.fix_block(0, &[2.0]); // 2*x1 + 2
        assert_eq!(q.layout(), &[1, 1]);
        assert!((q.evaluate(&[7.0, 3.0]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn embed_round_trips_with_restrict() {
        let p = Polynomial::from_terms(
            vec![2],
            [
                (MultiIndex::new(vec![2, 1]), 1.5),
                (MultiIndex::new(vec![0, 1]), -0.5),
            ],
        );
        let e = p.embed(vec![1, 2], 1);
        let u = [0.0; 3];
        let back = e.restrict_rivals(1, &u);
        assert_eq!(back, p);
    }
}
