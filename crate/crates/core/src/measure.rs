//! Uniform-weight empirical measures on the half line and the 2-Wasserstein
//! distance between them.
//!
//! In one dimension the optimal coupling between two laws is the monotone
//! rearrangement, so pairing sorted atoms (or, for unequal sizes, comparing
//! quantile functions on the merged quantile grid) gives the exact W2.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    atoms: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Build a measure from unsorted samples. Every sample must be a finite
    /// value in `[0, ∞)`.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("atom {bad} is not a finite value in [0, inf)")));
        }
        let mut atoms = values.to_vec();
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().sum::<f64>() / self.atoms.len() as f64
    }

    pub fn second_moment(&self) -> f64 {
        self.atoms.iter().map(|a| a * a).sum::<f64>() / self.atoms.len() as f64
    }

    /// Value of the left-continuous quantile function on the cell
    /// `(i/n, (i+1)/n]`.
    fn quantile_cell(&self, i: usize) -> f64 {
        self.atoms[i]
    }
}

/// Exact 2-Wasserstein distance between two empirical measures.
pub fn w2_distance(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    let (n, m) = (mu.len(), nu.len());
    if n == m {
        let sum: f64 = mu
            .atoms
            .iter()
            .zip(&nu.atoms)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        return (sum / n as f64).sqrt();
    }

    // Walk the merged grid {i/n} ∪ {j/m} using integer arithmetic on the
    // common denominator n*m so that breakpoints are compared exactly.
    let (nn, mm) = (n as u128, m as u128);
    let total = nn * mm;
    let (mut i, mut j) = (0usize, 0usize);
    let mut pos: u128 = 0;
    let mut sum = 0.0;
    while pos < total {
        let next_mu = (i as u128 + 1) * mm;
        let next_nu = (j as u128 + 1) * nn;
        let next = next_mu.min(next_nu);
        let d = mu.quantile_cell(i) - nu.quantile_cell(j);
        sum += (next - pos) as f64 * d * d;
        pos = next;
        if next == next_mu {
            i += 1;
        }
        if next == next_nu {
            j += 1;
        }
    }
    (sum / total as f64).sqrt()
}

pub fn second_moment(mu: &EmpiricalMeasure) -> f64 {
    mu.second_moment()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(v: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_samples(v).unwrap()
    }

    #[test]
    fn from_samples_sorts() {
        assert_eq!(m(&[3.0, 1.0, 2.0]).atoms(), &[1.0, 2.0, 3.0]);
        assert_eq!(m(&[0.0]).atoms(), &[0.0]);
    }

    #[test]
    fn from_samples_rejects_bad_input() {
        assert_eq!(EmpiricalMeasure::from_samples(&[]), Err(Error::EmptyMeasure));
        assert!(matches!(
            EmpiricalMeasure::from_samples(&[1.0, -0.5]),
            Err(Error::DomainViolation(_))
        ));
        assert!(EmpiricalMeasure::from_samples(&[f64::NAN]).is_err());
    }

    #[test]
    fn two_diracs() {
        assert_eq!(w2_distance(&m(&[1.5]), &m(&[4.0])), 2.5);
        let a = m(&[0.3, 1.2, 7.0]);
        assert_eq!(w2_distance(&a, &a), 0.0);
    }

    /// Minimum over every pairing of the atoms: the coupling definition of
    /// W2 restricted to permutation couplings, which contain the optimum.
    fn brute_force_w2(a: &[f64], b: &[f64]) -> f64 {
        fn permute(k: usize, idx: &mut Vec<usize>, a: &[f64], b: &[f64], best: &mut f64) {
            if k == idx.len() {
                let s: f64 = idx.iter().enumerate().map(|(i, &j)| (a[i] - b[j]).powi(2)).sum();
                *best = best.min(s / a.len() as f64);
                return;
            }
            for i in k..idx.len() {
                idx.swap(k, i);
                permute(k + 1, idx, a, b, best);
                idx.swap(k, i);
            }
        }
        let mut idx: Vec<usize> = (0..b.len()).collect();
        let mut best = f64::INFINITY;
        permute(0, &mut idx, a, b, &mut best);
        best.sqrt()
    }

    #[test]
    fn sorted_pairing_is_optimal_on_two_atoms() {
        assert_eq!(brute_force_w2(&[0.0, 2.0], &[1.0, 1.0]), 1.0);
        assert_eq!(w2_distance(&m(&[0.0, 2.0]), &m(&[1.0, 1.0])), 1.0);
    }

    #[test]
    fn unequal_sizes_match_replicated_atoms() {
        // Replicating each atom k times leaves the measure unchanged.
        let mu = m(&[0.0, 1.0, 4.0]);
        let nu = m(&[2.0, 3.0]);
        let mu6 = m(&[0.0, 0.0, 1.0, 1.0, 4.0, 4.0]);
        let nu6 = m(&[2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
        let direct = w2_distance(&mu, &nu);
        let lifted = w2_distance(&mu6, &nu6);
        assert!((direct - lifted).abs() < 1e-15, "{direct} vs {lifted}");
    }

    #[test]
    fn second_moments() {
        assert_eq!(second_moment(&m(&[0.0])), 0.0);
        assert_eq!(second_moment(&m(&[1.0, 1.0])), 1.0);
        assert!((second_moment(&m(&[1.0, 2.0, 3.0])) - 14.0 / 3.0).abs() < 1e-15);
    }

    fn atoms(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..10.0, 1..max_len)
    }

    proptest! {
        #[test]
        fn matches_brute_force_pairing(a in prop::collection::vec(0.0f64..10.0, 1..6).prop_flat_map(|a| {
            let n = a.len();
            (Just(a), prop::collection::vec(0.0f64..10.0, n))
        })) {
            let (a, b) = a;
            let exact = brute_force_w2(&a, &b);
            prop_assert!((w2_distance(&m(&a), &m(&b)) - exact).abs() <= 1e-12);
        }

        #[test]
        fn symmetric(a in atoms(12), b in atoms(12)) {
            let (mu, nu) = (m(&a), m(&b));
            prop_assert_eq!(w2_distance(&mu, &nu), w2_distance(&nu, &mu));
        }

        #[test]
        fn shift_and_scale(a in atoms(8).prop_flat_map(|a| {
            let n = a.len();
            (Just(a), prop::collection::vec(0.0f64..10.0, n))
        }), c in 0.0f64..5.0, lambda in 0.0f64..4.0) {
            let (a, b) = a;
            let base = w2_distance(&m(&a), &m(&b));
            let sa: Vec<f64> = a.iter().map(|x| x + c).collect();
            let sb: Vec<f64> = b.iter().map(|x| x + c).collect();
            prop_assert!((w2_distance(&m(&sa), &m(&sb)) - base).abs() <= 1e-12 * (1.0 + base));
            let la: Vec<f64> = a.iter().map(|x| x * lambda).collect();
            let lb: Vec<f64> = b.iter().map(|x| x * lambda).collect();
            prop_assert!((w2_distance(&m(&la), &m(&lb)) - lambda * base).abs() <= 1e-12 * (1.0 + lambda * base));
        }
    }
}
