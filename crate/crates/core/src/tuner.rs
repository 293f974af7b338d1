//! Fitting the consistency scales to a training corpus by finite-difference
//! gradient descent in log space with a backtracking line search.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::InvalidInput;
use crate::solver::solve;
use crate::synth::ScenarioPair;
use crate::types::{ConsistencyParams, RigidTransform, SolverConfig};

/// Loss charged to a pair the solver fails on: the largest possible rotation
/// term (8) plus a 10 m translation miss.
pub const FAILURE_LOSS: f64 = 8.0 + 100.0;

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("loss is not finite at the starting point")]
    NonFiniteLoss,
    #[error(transparent)]
    Invalid(#[from] InvalidInput),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    /// Relative decrease fell under the tolerance.
    Converged,
    ZeroLoss,
    ZeroGradient,
    /// The line search could not find sufficient decrease.
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOptions {
    /// Central-difference step in log space.
    pub fd_step: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    pub max_shrinks: usize,
    pub rel_tol: f64,
}

impl Default for TuneOptions {
    fn default() -> Self {
        Self {
            fd_step: 1e-2,
            max_iters: 30,
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_shrinks: 20,
            rel_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogSpaceOutcome {
    pub x: Vec<f64>,
    /// Loss at the start and after every accepted step.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Central-difference gradient of `f ∘ exp` at `theta`.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, theta: &[f64], h: f64) -> Vec<f64> {
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let up = f(&exp_all(&probe));
            probe[i] = theta[i] - h;
            let down = f(&exp_all(&probe));
            probe[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn exp_all(theta: &[f64]) -> Vec<f64> {
    theta.iter().map(|t| t.exp()).collect()
}

/// Minimizes `f` over positive vectors, parametrized as `x = exp(theta)`.
pub fn minimize_log_space<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    opts: &TuneOptions,
) -> Result<LogSpaceOutcome, TuneError> {
    if let Some(bad) = x0.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(InvalidInput::param("x0", format!("entries must be > 0, got {bad}")).into());
    }
    if !(opts.fd_step.is_finite() && opts.fd_step > 0.0) {
        return Err(InvalidInput::param("fd_step", "must be > 0").into());
    }
    let mut theta: Vec<f64> = x0.iter().map(|v| v.ln()).collect();
    // Kept separately so an unmoved start is returned bit for bit.
    let mut x = x0.to_vec();
    let mut loss = f(x0);
    if !loss.is_finite() {
        return Err(TuneError::NonFiniteLoss);
    }
    let mut losses = vec![loss];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIters;
    while iterations < opts.max_iters {
        if loss == 0.0 {
            stop = StopReason::ZeroLoss;
            break;
        }
        let grad = fd_gradient(&mut f, &theta, opts.fd_step);
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if !g2.is_finite() {
            stop = StopReason::LineSearchFailed;
            break;
        }
        if g2 == 0.0 {
            stop = StopReason::ZeroGradient;
            break;
        }
        let mut step = opts.initial_step;
        let mut accepted = None;
        for _ in 0..=opts.max_shrinks {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let l = f(&exp_all(&cand));
            if l.is_finite() && l <= loss - opts.armijo_c * step * g2 {
                accepted = Some((cand, l));
                break;
            }
            step *= opts.shrink;
        }
        let Some((cand, l)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        iterations += 1;
        let rel = (loss - l) / loss;
        x = exp_all(&cand);
        theta = cand;
        loss = l;
        losses.push(loss);
        if rel < opts.rel_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(LogSpaceOutcome {
        x,
        losses,
        iterations,
        stop,
    })
}

/// Pairs with known ground truth.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pairs: Vec<ScenarioPair>,
}

impl TrainingSet {
    pub fn new(pairs: Vec<ScenarioPair>) -> Result<Self, TuneError> {
        if pairs.is_empty() {
            return Err(TuneError::EmptyTrainingSet);
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[ScenarioPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// `‖[R|t] − [R*|t*]‖²_F`.
pub fn pose_loss(estimate: &RigidTransform, truth: &RigidTransform) -> f64 {
    (estimate.to_matrix3x4() - truth.to_matrix3x4()).norm_squared()
}

/// Mean pose loss over the training set.
pub fn training_loss(train: &TrainingSet, gamma: &ConsistencyParams, config: &SolverConfig) -> f64 {
    let total: f64 = train
        .pairs
        .iter()
        .map(|p| match solve(&p.source, &p.target, gamma, config) {
            Ok(r) => pose_loss(&r.transform, &p.gt),
            Err(_) => FAILURE_LOSS,
        })
        .sum();
    total / train.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub gamma: ConsistencyParams,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Result of per-layer tuning: one scale vector per outer round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerwiseOutcome {
    pub gammas: Vec<ConsistencyParams>,
    /// Loss with the shared starting scales in every round.
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: Vec<usize>,
}

/// Scales written by the `tune` command: a single vector and, for layerwise
/// tuning, one per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub gamma: ConsistencyParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_iter_gammas: Option<Vec<ConsistencyParams>>,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Either a bare scale vector or the output of `tune`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaFile {
    Tuned(TunedParams),
    Plain(ConsistencyParams),
}

impl GammaFile {
    pub fn gamma(&self) -> ConsistencyParams {
        match self {
            GammaFile::Tuned(t) => t.gamma,
            GammaFile::Plain(g) => *g,
        }
    }

    pub fn per_iter_gammas(&self) -> Option<&[ConsistencyParams]> {
        match self {
            GammaFile::Tuned(t) => t.per_iter_gammas.as_deref(),
            GammaFile::Plain(_) => None,
        }
    }
}

fn params_from(x: &[f64]) -> Option<ConsistencyParams> {
    let arr: [f64; 5] = x.try_into().ok()?;
    ConsistencyParams::new(arr).ok()
}

fn tune_with(
    train: &TrainingSet,
    initial: &ConsistencyParams,
    mut loss_of: impl FnMut(&ConsistencyParams) -> f64,
    opts: &TuneOptions,
) -> Result<TuneOutcome, TuneError> {
    if train.is_empty() {
        return Err(TuneError::EmptyTrainingSet);
    }
    let out = minimize_log_space(
        |x| params_from(x).map_or(f64::INFINITY, |g| loss_of(&g)),
        &initial.as_array(),
        opts,
    )?;
    let gamma = params_from(&out.x).ok_or(TuneError::NonFiniteLoss)?;
    Ok(TuneOutcome {
        gamma,
        initial_loss: out.losses[0],
        final_loss: *out.losses.last().expect("at least the initial loss"),
        iterations: out.iterations,
        stop: out.stop,
    })
}

/// Tunes one scale vector shared by every outer round.
pub fn tune(
    train: &TrainingSet,
    initial: &ConsistencyParams,
    config: &SolverConfig,
    fd_step: f64,
    max_iters: usize,
) -> Result<TuneOutcome, TuneError> {
    let opts = TuneOptions {
        fd_step,
        max_iters,
        ..TuneOptions::default()
    };
    tune_opts(train, initial, config, &opts)
}

pub fn tune_opts(
    train: &TrainingSet,
    initial: &ConsistencyParams,
    config: &SolverConfig,
    opts: &TuneOptions,
) -> Result<TuneOutcome, TuneError> {
    config.validate()?;
    let config = SolverConfig {
        per_iter_gammas: None,
        ..config.clone()
    };
    tune_with(train, initial, |g| training_loss(train, g, &config), opts)
}

/// Iterations per layer in [`tune_layerwise`].
pub const LAYER_MAX_ITERS: usize = 20;

/// Tunes a separate scale vector for each outer round, one round at a time,
/// holding the others fixed. Every round starts from `initial`.
pub fn tune_layerwise(
    train: &TrainingSet,
    initial: &ConsistencyParams,
    config: &SolverConfig,
) -> Result<LayerwiseOutcome, TuneError> {
    let opts = TuneOptions {
        max_iters: LAYER_MAX_ITERS,
        ..TuneOptions::default()
    };
    tune_layerwise_opts(train, initial, config, &opts)
}

pub fn tune_layerwise_opts(
    train: &TrainingSet,
    initial: &ConsistencyParams,
    config: &SolverConfig,
    opts: &TuneOptions,
) -> Result<LayerwiseOutcome, TuneError> {
    let layers = config.outer_iters;
    let mut gammas = vec![*initial; layers];
    let mut config = config.clone();
    config.per_iter_gammas = Some(gammas.clone());
    config.validate()?;
    let initial_loss = training_loss(train, initial, &config);
    let mut iterations = Vec::with_capacity(layers);
    let mut final_loss = initial_loss;
    for layer in 0..layers {
        let out = tune_with(
            train,
            &gammas[layer],
            |g| {
                let mut per = gammas.clone();
                per[layer] = *g;
                let cfg = SolverConfig {
                    per_iter_gammas: Some(per),
                    ..config.clone()
                };
                training_loss(train, initial, &cfg)
            },
            opts,
        )?;
        gammas[layer] = out.gamma;
        final_loss = out.final_loss;
        iterations.push(out.iterations);
    }
    Ok(LayerwiseOutcome {
        gammas,
        initial_loss,
        final_loss,
        iterations,
    })
}
