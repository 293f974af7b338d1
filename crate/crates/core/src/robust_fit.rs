//! Weighted rigid fitting over points and normals, and the iteratively
//! reweighted scheme built on it.
//!
//! For fixed weights `w_c` the objective
//! `Σ w_c (‖R p1 + t − p2‖² + ‖R n1 − n2‖²)` has a closed-form minimizer:
//! `t` aligns the weighted centroids and `R` comes from the SVD of the
//! weighted cross-covariance of centered positions plus (uncentered) normals.

use nalgebra::{Matrix3, Vector3};

use crate::error::FitError;
use crate::matching::CandidateSet;
use crate::types::RigidTransform;

/// Singular-value ratio below which the cross-covariance counts as rank <= 1.
const RANK_TOL: f64 = 1e-12;

/// Minimizer of the weighted point + normal objective over rigid motions.
pub fn closed_form_fit(
    cands: &CandidateSet<'_>,
    weights: &[f64],
) -> Result<RigidTransform, FitError> {
    if weights.len() != cands.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(FitError::BadWeights);
    }
    let positive = weights.iter().filter(|w| **w > 0.0).count();
    if positive < 3 {
        return Err(FitError::TooFewWeighted(positive));
    }
    let (source, target) = (cands.source().points(), cands.target().points());
    let total: f64 = weights.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(FitError::BadWeights);
    }

    let mut c1 = Vector3::zeros();
    let mut c2 = Vector3::zeros();
    for (c, w) in cands.candidates().iter().zip(weights) {
        let w = w / total;
        c1 += w * source[c.source].position();
        c2 += w * target[c.target].position();
    }

    let mut h = Matrix3::zeros();
    for (c, w) in cands.candidates().iter().zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let w = w / total;
        let (k1, k2) = (&source[c.source], &target[c.target]);
        let p1 = k1.position() - c1;
        let p2 = k2.position() - c2;
        h += w * (p2 * p1.transpose() + k2.normal() * k1.normal().transpose());
    }

    let svd = h.svd(true, true);
    let mut sv = svd.singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] {
        return Err(FitError::RankDeficient);
    }
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let s = (u * v_t).determinant().signum();
    let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s)) * v_t;
    let translation = c2 - rotation * c1;
    Ok(RigidTransform::from_parts(rotation, translation))
}

/// Raw reweighting factor `1 / (ε² + r)^(2 − α)` for squared residual `r`.
pub fn robust_weight(residual: f64, alpha: f64, epsilon: f64) -> f64 {
    (epsilon * epsilon + residual).powf(alpha - 2.0)
}

/// The function whose derivative is [`robust_weight`]: `ln(ε² + r)` for
/// `α = 1`, otherwise `(ε² + r)^(α−1) / (α − 1)`. Concave in `r` for `α < 2`,
/// so each reweighted fit cannot increase `Σ a_c ρ(r_c)`.
pub fn robust_penalty(residual: f64, alpha: f64, epsilon: f64) -> f64 {
    let s = epsilon * epsilon + residual;
    if (alpha - 1.0).abs() < 1e-12 {
        s.ln()
    } else {
        s.powf(alpha - 1.0) / (alpha - 1.0)
    }
}

/// `Σ a_c ρ(r_c(T))` for the prior weights `a`.
pub fn robust_objective(
    cands: &CandidateSet<'_>,
    prior: &[f64],
    transform: &RigidTransform,
    alpha: f64,
    epsilon: f64,
) -> f64 {
    cands
        .residuals(transform)
        .iter()
        .zip(prior)
        .filter(|(_, a)| **a > 0.0)
        .map(|(r, a)| a * robust_penalty(*r, alpha, epsilon))
        .sum()
}

/// `Σ w_c r_c(T)`.
pub fn weighted_objective(cands: &CandidateSet<'_>, weights: &[f64], transform: &RigidTransform) -> f64 {
    cands
        .residuals(transform)
        .iter()
        .zip(weights)
        .map(|(r, w)| r * w)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub transform: RigidTransform,
    /// Weights after the last update, `a_c · robust_weight(r_c)`.
    pub weights: Vec<f64>,
    /// Transform after every round, oldest first.
    pub history: Vec<RigidTransform>,
}

/// Iteratively reweighted fit starting from `w⁽⁰⁾ = prior`.
///
/// Each round fits with the current weights and then sets
/// `w_c ← prior_c · robust_weight(r_c)`, so the prior keeps acting after the
/// first round.
pub fn irls_fit(
    cands: &CandidateSet<'_>,
    prior: &[f64],
    alpha: f64,
    epsilon: f64,
    irls_iters: usize,
) -> Result<IrlsFit, FitError> {
    if !(alpha > 0.0 && alpha <= 2.0) || !(epsilon > 0.0) || irls_iters == 0 {
        return Err(FitError::BadWeights);
    }
    let mut weights = prior.to_vec();
    let mut history = Vec::with_capacity(irls_iters);
    for _ in 0..irls_iters {
        let transform = closed_form_fit(cands, &weights)?;
        let residuals = cands.residuals(&transform);
        for ((w, a), r) in weights.iter_mut().zip(prior).zip(&residuals) {
            *w = a * robust_weight(*r, alpha, epsilon);
        }
        history.push(transform);
    }
    Ok(IrlsFit {
        transform: *history.last().expect("at least one round"),
        weights,
        history,
    })
}
