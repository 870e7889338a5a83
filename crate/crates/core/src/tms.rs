//! Truncated moment sequences.
//!
//! A `Tms` of order `2k` in `n` variables stores one real value per monomial
//! of degree at most `2k`, in the shared basis order of [`crate::poly`].

use crate::poly::{basis_position, basis_size, monomial_basis, MultiIndex, Polynomial};

/// Truncated moment sequence: dense values indexed by basis position.
#[derive(Clone, Debug, PartialEq)]
pub struct Tms {
    nvars: usize,
    order: u32,
    values: Vec<f64>,
}

impl Tms {
    pub fn new(nvars: usize, order: u32, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), basis_size(nvars, order));
        Tms { nvars, order, values }
    }

    pub fn zeros(nvars: usize, order: u32) -> Self {
        Tms {
            nvars,
            order,
            values: vec![0.0; basis_size(nvars, order)],
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, alpha: &MultiIndex) -> f64 {
        debug_assert!(alpha.degree() <= self.order);
        self.values[basis_position(alpha)]
    }

    /// Moments of the Dirac measure at `u`, truncated to order `d`.
    pub fn lift(u: &[f64], d: u32) -> Tms {
        let n = u.len();
        let values = monomial_basis(n, d)
            .iter()
            .map(|m| m.value_at(u))
            .collect();
        Tms { nvars: n, order: d, values }
    }

    /// Pairing `<f, y> = sum_alpha f_alpha y_alpha`.
    pub fn pair(&self, f: &Polynomial) -> f64 {
        assert_eq!(f.nvars(), self.nvars);
        assert!(f.degree() <= self.order, "polynomial degree exceeds tms order");
        f.terms()
            .map(|(m, c)| c * self.values[basis_position(m)])
            .sum()
    }

    /// Degree-one moments, in variable order.
    pub fn first_order_point(&self) -> Vec<f64> {
        (0..self.nvars)
            .map(|j| self.values[basis_position(&MultiIndex::unit(self.nvars, j))])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Polynomial;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn lift_orders_and_values() {
        let y = Tms::lift(&[2.0, 3.0], 2);
        // Basis: 1, x0, x1, x0^2, x0*x1, x1^2
        assert_eq!(y.values(), &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
        assert_eq!(y.first_order_point(), vec![2.0, 3.0]);
    }

    #[test]
    fn pair_of_lift_is_evaluation() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.gen_range(1..=4);
            let d: u32 = rng.gen_range(0..=3);
            let basis = monomial_basis(n, d);
            let mut p = Polynomial::zero(vec![n]);
            for m in &basis {
                if rng.gen_bool(0.5) {
                    p.add_term(m.clone(), rng.gen_range(-2.0..2.0));
                }
            }
            let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let y = Tms::lift(&u, 2 * d);
            let lhs = y.pair(&p);
            let rhs = p.evaluate(&u);
            assert!(
                (lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()),
                "pair {lhs} vs evaluate {rhs}"
            );
        }
    }
}
