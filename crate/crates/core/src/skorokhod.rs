//! Discrete Skorokhod problem on `[0, ∞)`.
//!
//! Given an unreflected grid path `y` with `y[0] >= 0`, the minimal
//! nondecreasing reflection is `k[i] = max(0, max_{j<=i} -y[j])` and the
//! reflected path is `x = y + k`. Wherever `k` moves, it moves to exactly
//! `-y[i]`, so `x[i] = 0` holds bit-for-bit at every increase.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl GridPath {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_times(&times)?;
        if values.len() != times.len() {
            return Err(Error::shape(format!(
                "{} values for {} grid nodes",
                values.len(),
                times.len()
            )));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub(crate) fn validate_times(times: &[f64]) -> Result<()> {
    match times.first() {
        None => return Err(Error::shape("grid needs at least one node")),
        Some(&t0) if t0 != 0.0 => return Err(Error::domain("grid must start at t = 0")),
        _ => {}
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(Error::domain("grid times must be finite and strictly increasing"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    times: Vec<f64>,
    x: Vec<f64>,
    k: Vec<f64>,
}

impl ReflectedPath {
    /// Assemble a path from parts, checking positivity, monotonicity of `k`
    /// and discrete complementarity.
    pub fn new(times: Vec<f64>, x: Vec<f64>, k: Vec<f64>) -> Result<Self> {
        validate_times(&times)?;
        if x.len() != times.len() || k.len() != times.len() {
            return Err(Error::shape("x, k and times must have equal length"));
        }
        check_reflected(&x, &k)?;
        Ok(Self { times, x, k })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn k(&self) -> &[f64] {
        &self.k
    }

    pub fn total_reflection(&self) -> f64 {
        self.k[self.k.len() - 1] - self.k[0]
    }
}

/// Check the invariants of a reflected pair `(x, k)` on one row.
pub fn check_reflected(x: &[f64], k: &[f64]) -> Result<()> {
    if let Some(i) = x.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::domain(format!("x[{i}] = {} is negative", x[i])));
    }
    if k.first().copied() != Some(0.0) {
        return Err(Error::domain("k must start at 0"));
    }
    for i in 1..k.len() {
        if !(k[i] >= k[i - 1]) {
            return Err(Error::domain(format!("k decreases at node {i}")));
        }
        if k[i] > k[i - 1] && x[i] != 0.0 {
            return Err(Error::domain(format!(
                "k increases at node {i} while x = {} > 0",
                x[i]
            )));
        }
    }
    Ok(())
}

pub fn reflect(y: &GridPath) -> Result<ReflectedPath> {
    let v = y.values();
    if !(v[0] >= 0.0) {
        return Err(Error::domain(format!("initial value {} is negative", v[0])));
    }
    let mut k = Vec::with_capacity(v.len());
    let mut x = Vec::with_capacity(v.len());
    let mut running = 0.0f64;
    for &yi in v {
        if -yi > running {
            running = -yi;
        }
        k.push(running);
        x.push(yi + running);
    }
    // The first node always has k = 0 because y[0] >= 0; normalize a -0.0.
    k[0] = 0.0;
    Ok(ReflectedPath {
        times: y.times.clone(),
        x,
        k,
    })
}

/// `Σ values[i] · (k[i] − k[i−1])`, with the integrand taken at the right
/// endpoint of each increment.
pub fn stieltjes(values: &[f64], k: &[f64]) -> Result<f64> {
    if values.len() != k.len() {
        return Err(Error::shape(format!(
            "{} integrand values for {} nodes",
            values.len(),
            k.len()
        )));
    }
    let mut acc = 0.0;
    for i in 1..k.len() {
        let dk = k[i] - k[i - 1];
        if dk != 0.0 {
            acc += values[i] * dk;
        }
    }
    Ok(acc)
}

pub fn stieltjes_against_k(values: &[f64], path: &ReflectedPath) -> Result<f64> {
    stieltjes(values, &path.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(times: &[f64], values: &[f64]) -> GridPath {
        GridPath::new(times.to_vec(), values.to_vec()).unwrap()
    }

    #[test]
    fn downward_drift_is_pinned() {
        let r = reflect(&path(&[0.0, 0.5, 1.0], &[0.0, -0.5, -1.0])).unwrap();
        assert_eq!(r.x(), &[0.0, 0.0, 0.0]);
        assert_eq!(r.k(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn upward_drift_is_untouched() {
        let r = reflect(&path(&[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0])).unwrap();
        assert_eq!(r.x(), &[0.0, 0.5, 1.0]);
        assert_eq!(r.k(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn dip_then_recover() {
        let r = reflect(&path(&[0.0, 1.0, 2.0], &[1.0, -1.0, 0.0])).unwrap();
        assert_eq!(r.k(), &[0.0, 1.0, 1.0]);
        assert_eq!(r.x(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn negative_start_rejected() {
        assert!(matches!(
            reflect(&path(&[0.0, 1.0], &[-0.1, 0.0])),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn stieltjes_examples() {
        let r = reflect(&path(&[0.0, 1.0, 2.0], &[1.0, -1.0, 0.0])).unwrap();
        assert_eq!(stieltjes_against_k(&[0.0, 2.0, 5.0], &r).unwrap(), 2.0);
        assert_eq!(stieltjes_against_k(&[1.0; 3], &r).unwrap(), r.total_reflection());
        assert_eq!(stieltjes_against_k(r.x(), &r).unwrap(), 0.0);
        assert!(matches!(
            stieltjes_against_k(&[1.0], &r),
            Err(Error::ShapeError(_))
        ));
    }

    #[test]
    fn grid_validation() {
        assert!(GridPath::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(GridPath::new(vec![0.1], vec![1.0]).is_err());
        assert!(GridPath::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(ReflectedPath::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0]).is_err());
    }

    fn walk() -> impl Strategy<Value = Vec<f64>> {
        (0.0f64..2.0, prop::collection::vec(-1.0f64..1.0, 1..60)).prop_map(|(y0, steps)| {
            let mut v = vec![y0];
            for s in steps {
                let last = *v.last().unwrap();
                v.push(last + s);
            }
            v
        })
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 0.01).collect()
    }

    proptest! {
        #[test]
        fn invariants_hold(v in walk()) {
            let r = reflect(&path(&grid(v.len()), &v)).unwrap();
            prop_assert!(check_reflected(r.x(), r.k()).is_ok());
            prop_assert_eq!(stieltjes_against_k(r.x(), &r).unwrap(), 0.0);
        }

        #[test]
        fn idempotent_on_nonnegative_paths(v in prop::collection::vec(0.0f64..5.0, 1..40)) {
            let r = reflect(&path(&grid(v.len()), &v)).unwrap();
            prop_assert_eq!(r.x(), &v[..]);
            prop_assert!(r.k().iter().all(|k| *k == 0.0));
        }

        #[test]
        fn monotone_in_input(v in walk(), bumps in prop::collection::vec(0.0f64..1.0, 60)) {
            let lifted: Vec<f64> = v.iter().enumerate()
                .map(|(i, y)| if i == 0 { *y } else { y + bumps[i] })
                .collect();
            let g = grid(v.len());
            let lo = reflect(&path(&g, &v)).unwrap();
            let hi = reflect(&path(&g, &lifted)).unwrap();
            for (k1, k2) in lo.k().iter().zip(hi.k()) {
                prop_assert!(k1 >= k2);
            }
        }
    }
}
