//! Convexity of the drift/cost image set on a finite action grid, and
//! pointwise strict selection of a relaxed measure.
//!
//! For a relaxed weight vector `q` at a point `(t, x, m1, m2)` the barycenter
//! is `(Σ q_j b(a_j), Σ q_j f(a_j))`. When the image set
//! `S = {(b(a), f(a)) : a ∈ A}` is convex the barycenter is itself attained
//! by some action; on a finite grid the best we can do is the nearest image
//! point, whose distance is reported as the residual.

use crate::controls::ActionSet;
use crate::error::{Error, Result};
use crate::model::{CoefficientSet, CostSet, State};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionResult {
    pub action: Option<f64>,
    pub residual: f64,
    pub representable: bool,
}

/// A failed convexity probe: the midpoint of the images of `pair` is farther
/// than the tolerance from every image point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoxinWitness {
    pub probe: State,
    pub pair: (f64, f64),
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoxinReport {
    pub convex: bool,
    pub witness: Option<RoxinWitness>,
}

fn image(coeffs: &CoefficientSet, costs: &CostSet, s: &State, actions: &ActionSet) -> Result<Vec<(f64, f64)>> {
    actions
        .points()
        .iter()
        .map(|a| Ok((coeffs.drift(s, *a)?, costs.running(s, *a)?)))
        .collect()
}

pub fn barycenter(
    coeffs: &CoefficientSet,
    costs: &CostSet,
    actions: &ActionSet,
    weights: &[f64],
    s: &State,
) -> Result<(f64, f64)> {
    if weights.len() != actions.len() {
        return Err(Error::shape(format!(
            "{} weights for {} actions",
            weights.len(),
            actions.len()
        )));
    }
    let (mut b, mut f) = (0.0, 0.0);
    for (w, a) in weights.iter().zip(actions.points()) {
        if *w > 0.0 {
            b += w * coeffs.drift(s, *a)?;
            f += w * costs.running(s, *a)?;
        }
    }
    Ok((b, f))
}

/// Nearest action to the barycenter in the `(b, f)` plane, ties broken
/// toward the smaller action.
pub fn select_strict(
    coeffs: &CoefficientSet,
    costs: &CostSet,
    actions: &ActionSet,
    weights: &[f64],
    s: &State,
    tolerance: f64,
) -> Result<SelectionResult> {
    if !(tolerance > 0.0) {
        return Err(Error::domain("selection tolerance must be > 0"));
    }
    let (bb, fb) = barycenter(coeffs, costs, actions, weights, s)?;
    let mut best: Option<(f64, f64)> = None;
    for (a, (b, f)) in actions.points().iter().zip(image(coeffs, costs, s, actions)?) {
        let d = (b - bb).hypot(f - fb);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((*a, d));
        }
    }
    let (action, residual) = best.expect("action sets are nonempty");
    Ok(SelectionResult {
        action: Some(action),
        residual,
        representable: residual <= tolerance,
    })
}

/// Midpoint convexity probe of the image set at every probe point. Stops at
/// the first failing probe and reports, for it, the pair whose midpoint is
/// farthest from the image set.
pub fn check_roxin_sampled(
    coeffs: &CoefficientSet,
    costs: &CostSet,
    actions: &ActionSet,
    probes: &[State],
    tolerance: f64,
) -> Result<RoxinReport> {
    if probes.is_empty() {
        return Err(Error::domain("convexity check needs at least one probe"));
    }
    let pts = actions.points();
    for s in probes {
        let img = image(coeffs, costs, s, actions)?;
        let mut worst: Option<RoxinWitness> = None;
        for i in 0..img.len() {
            for j in i + 1..img.len() {
                let mid = (0.5 * (img[i].0 + img[j].0), 0.5 * (img[i].1 + img[j].1));
                let gap = img
                    .iter()
                    .map(|(b, f)| (b - mid.0).hypot(f - mid.1))
                    .fold(f64::INFINITY, f64::min);
                if gap > tolerance && worst.is_none_or(|w| gap > w.gap) {
                    worst = Some(RoxinWitness {
                        probe: *s,
                        pair: (pts[i], pts[j]),
                        gap,
                    });
                }
            }
        }
        if worst.is_some() {
            return Ok(RoxinReport {
                convex: false,
                witness: worst,
            });
        }
    }
    Ok(RoxinReport {
        convex: true,
        witness: None,
    })
}
