//! Joint correspondence selection and pose fitting.
//!
//! The objective over a relaxed indicator `x` (unit norm) and a pose `T` is
//!
//! ```text
//! Σ_{c ≠ c'} w_γ(c, c') x_c x_c' (δ − r_T(c) − r_T(c'))
//! ```
//!
//! With `T` fixed the best `x` is the leading eigenvector of the affinity
//! matrix; with `x` fixed the best `T` minimizes `Σ a_c r_T(c)` where
//! `a_c = x_c Σ_c' w_γ(c, c') x_c'`. [`solve`] alternates the two.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SolveError;
use crate::matching::{build_candidates, pair_weight_matrix, AffinityMatrix, CandidateSet, PruneStats};
use crate::robust_fit::{closed_form_fit, irls_fit};
use crate::spectral::max_eigenvector;
use crate::types::{Candidate, ConsistencyParams, KeypointSet, Mode, RigidTransform, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub mode: Mode,
    pub transform: RigidTransform,
    /// Surviving candidates; `indicator` is indexed the same way.
    pub candidates: Vec<Candidate>,
    pub indicator: Vec<f64>,
    pub selected: Vec<Candidate>,
    /// Objective value after every outer round.
    pub objective_trace: Vec<f64>,
    /// Some power iteration hit its budget before converging.
    pub low_confidence: bool,
    pub prune: PruneStats,
}

/// `W` matrices keyed by the `γ` they were built with.
struct WeightCache<'c, 'a> {
    cands: &'c CandidateSet<'a>,
    entries: Vec<(ConsistencyParams, DMatrix<f64>)>,
}

impl<'c, 'a> WeightCache<'c, 'a> {
    fn new(cands: &'c CandidateSet<'a>) -> Self {
        Self {
            cands,
            entries: Vec::new(),
        }
    }

    fn get(&mut self, gamma: &ConsistencyParams) -> &DMatrix<f64> {
        let idx = match self.entries.iter().position(|(g, _)| g == gamma) {
            Some(i) => i,
            None => {
                self.entries.push((*gamma, pair_weight_matrix(self.cands, gamma)));
                self.entries.len() - 1
            }
        };
        &self.entries[idx].1
    }
}

pub fn solve(
    q1: &KeypointSet,
    q2: &KeypointSet,
    gamma: &ConsistencyParams,
    config: &SolverConfig,
) -> Result<MatchResult, SolveError> {
    config.validate()?;
    if q1.is_empty() || q2.is_empty() {
        return Err(crate::error::InvalidInput::EmptySet.into());
    }
    let first_gamma = config.gamma_for_round(gamma, 0);
    let cands = build_candidates(
        q1,
        q2,
        first_gamma.gamma1(),
        config.prune_threshold,
        config.max_candidates,
    )?;
    if cands.is_empty() {
        return Err(SolveError::Unmatchable(cands.stats()));
    }
    if cands.len() < 3 {
        return Err(SolveError::Degenerate(format!(
            "only {} candidate(s) survived pruning, at least 3 are needed",
            cands.len()
        )));
    }
    solve_candidates(&cands, gamma, config)
}

/// Runs the configured mode on an already pruned candidate set.
pub fn solve_candidates(
    cands: &CandidateSet<'_>,
    gamma: &ConsistencyParams,
    config: &SolverConfig,
) -> Result<MatchResult, SolveError> {
    config.validate()?;
    let n = cands.len();
    let mut cache = WeightCache::new(cands);
    let uniform = vec![1.0 / (n as f64).sqrt(); n];
    let mut low_confidence = false;
    let mut trace = Vec::new();

    let (transform, indicator) = match config.mode {
        Mode::Nr => {
            let t = closed_form_fit(cands, &vec![1.0; n])?;
            let w = cache.get(&config.gamma_for_round(gamma, 0));
            trace.push(objective_with_weights(&uniform, &t, cands, w, config.delta));
            (t, uniform)
        }
        Mode::R => {
            let fit = irls_fit(cands, &vec![1.0; n], config.alpha, config.epsilon, config.irls_iters)?;
            let x = unit(&fit.weights).unwrap_or(uniform);
            let w = cache.get(&config.gamma_for_round(gamma, 0));
            trace.push(objective_with_weights(&x, &fit.transform, cands, w, config.delta));
            (fit.transform, x)
        }
        Mode::Sm => {
            let w = cache.get(&config.gamma_for_round(gamma, 0));
            let (x, a, converged) = spectral_step(w, &vec![0.0; n], config)?;
            low_confidence |= !converged;
            let t = closed_form_fit(cands, &a)?;
            trace.push(objective_with_weights(&x, &t, cands, w, config.delta));
            (t, x)
        }
        Mode::RSm => {
            let mut current: Option<(RigidTransform, Vec<f64>)> = None;
            for round in 0..config.outer_iters {
                let g = config.gamma_for_round(gamma, round);
                let w = cache.get(&g);
                let residuals = match &current {
                    Some((t, _)) => cands.residuals(t),
                    None => vec![0.0; n],
                };
                let (x, a, converged) = spectral_step(w, &residuals, config)?;
                low_confidence |= !converged;
                let fit = irls_fit(cands, &a, config.alpha, config.epsilon, config.irls_iters)?;
                trace.push(objective_with_weights(&x, &fit.transform, cands, w, config.delta));
                current = Some((fit.transform, x));
            }
            current.expect("outer_iters >= 1")
        }
    };

    let selected = select(cands.candidates(), &indicator, config.select_ratio);
    Ok(MatchResult {
        mode: config.mode,
        transform,
        candidates: cands.candidates().to_vec(),
        indicator,
        selected,
        objective_trace: trace,
        low_confidence,
        prune: cands.stats(),
    })
}

/// Leading eigenvector of the clamped affinity and the derived fit weights
/// `a_c = x_c (W x)_c`.
fn spectral_step(
    weights: &DMatrix<f64>,
    residuals: &[f64],
    config: &SolverConfig,
) -> Result<(Vec<f64>, Vec<f64>, bool), SolveError> {
    let affinity = AffinityMatrix::from_weights(weights, residuals, config.delta);
    let eig = max_eigenvector(&affinity, config.power_iters, config.power_tol)?;
    let x = eig.vector;
    let wx = weights * &x;
    let a = x.iter().zip(wx.iter()).map(|(xc, s)| xc * s).collect();
    Ok((x.iter().copied().collect(), a, eig.converged))
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| v.iter().map(|x| x / norm).collect())
}

fn select(candidates: &[Candidate], indicator: &[f64], ratio: f64) -> Vec<Candidate> {
    let max = indicator.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    candidates
        .iter()
        .zip(indicator)
        .filter(|(_, x)| **x >= ratio * max)
        .map(|(c, _)| *c)
        .collect()
}

/// Unclamped objective value for indicator `x` and pose `transform`.
pub fn objective_value(
    x: &[f64],
    transform: &RigidTransform,
    cands: &CandidateSet<'_>,
    gamma: &ConsistencyParams,
    delta: f64,
) -> f64 {
    let w = pair_weight_matrix(cands, gamma);
    objective_with_weights(x, transform, cands, &w, delta)
}

fn objective_with_weights(
    x: &[f64],
    transform: &RigidTransform,
    cands: &CandidateSet<'_>,
    weights: &DMatrix<f64>,
    delta: f64,
) -> f64 {
    // Σ_{c≠c'} w x x' (δ − r − r') = δ xᵀWx − 2 Σ_c r_c x_c (Wx)_c, W symmetric with zero diagonal
    let x = DVector::from_column_slice(x);
    let wx = weights * &x;
    let residuals = cands.residuals(transform);
    let quad = x.dot(&wx);
    let linear: f64 = residuals
        .iter()
        .zip(x.iter().zip(wx.iter()))
        .map(|(r, (xc, s))| r * xc * s)
        .sum();
    delta * quad - 2.0 * linear
}
