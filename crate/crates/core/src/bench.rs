//! Corpus evaluation: per-pair pose errors, grouped by overlap bin into
//! threshold-accuracy tables.

use serde::{Deserialize, Serialize};

use crate::geometry::{barycenter, rotation_error, translation_error, OverlapBin};
use crate::solver::solve;
use crate::synth::ScenarioPair;
use crate::types::{ConsistencyParams, Mode, RigidTransform, SolverConfig};

pub const ROTATION_THRESHOLDS_DEG: [f64; 3] = [3.0, 10.0, 45.0];
pub const TRANSLATION_THRESHOLDS_M: [f64; 3] = [0.1, 0.25, 0.5];
/// Errors charged to a pair the solver could not handle.
pub const FAILURE_ROTATION_DEG: f64 = 180.0;
pub const FAILURE_TRANSLATION_M: f64 = 10.0;

pub const CSV_HEADER: &str =
    "bin,acc@3,acc@10,acc@45,acc@0.1,acc@0.25,acc@0.5,mean_rot,med_rot,mean_t,med_t";

pub const IDENTITY_LABEL: &str = "identity[0,0.1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub index: usize,
    pub overlap: f64,
    pub bin: String,
    pub rotation_error: f64,
    pub translation_error: f64,
    /// Solver error message when the pair failed.
    pub failure: Option<String>,
}

/// Statistics of one row of the report. Accuracies are percentages; every
/// statistic is `None` for an empty bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub label: String,
    pub count: usize,
    pub failures: usize,
    pub acc_rot: [Option<f64>; 3],
    pub acc_t: [Option<f64>; 3],
    pub mean_rot: Option<f64>,
    pub median_rot: Option<f64>,
    pub mean_t: Option<f64>,
    pub median_t: Option<f64>,
}

impl BinStats {
    pub fn from_errors(label: &str, outcomes: &[&PairOutcome]) -> Self {
        let rot: Vec<f64> = outcomes.iter().map(|o| o.rotation_error).collect();
        let t: Vec<f64> = outcomes.iter().map(|o| o.translation_error).collect();
        let acc = |errors: &[f64], thresholds: [f64; 3]| {
            thresholds.map(|th| {
                (!errors.is_empty()).then(|| {
                    100.0 * errors.iter().filter(|e| **e <= th).count() as f64 / errors.len() as f64
                })
            })
        };
        Self {
            label: label.to_string(),
            count: outcomes.len(),
            failures: outcomes.iter().filter(|o| o.failure.is_some()).count(),
            acc_rot: acc(&rot, ROTATION_THRESHOLDS_DEG),
            acc_t: acc(&t, TRANSLATION_THRESHOLDS_M),
            mean_rot: mean(&rot),
            median_rot: median(&rot),
            mean_t: mean(&t),
            median_t: median(&t),
        }
    }

    /// Values in CSV column order, after the label.
    pub fn columns(&self) -> [Option<f64>; 10] {
        [
            self.acc_rot[0],
            self.acc_rot[1],
            self.acc_rot[2],
            self.acc_t[0],
            self.acc_t[1],
            self.acc_t[2],
            self.mean_rot,
            self.median_rot,
            self.mean_t,
            self.median_t,
        ]
    }
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub pairs: Vec<PairOutcome>,
    /// One entry per overlap bin, in `[0.5,1]`, `[0.1,0.5)`, `[0,0.1)` order.
    pub bins: Vec<BinStats>,
    /// Predicting the identity on the non-overlapping pairs.
    pub identity_baseline: BinStats,
    pub failures: usize,
}

impl MetricsReport {
    pub fn from_outcomes(mode: Mode, pairs: Vec<PairOutcome>, identity: Vec<PairOutcome>) -> Self {
        let bins = OverlapBin::ALL
            .iter()
            .map(|b| {
                let members: Vec<&PairOutcome> =
                    pairs.iter().filter(|o| o.bin == b.label()).collect();
                BinStats::from_errors(b.label(), &members)
            })
            .collect();
        let identity_refs: Vec<&PairOutcome> = identity.iter().collect();
        let failures = pairs.iter().filter(|o| o.failure.is_some()).count();
        Self {
            mode,
            identity_baseline: BinStats::from_errors(IDENTITY_LABEL, &identity_refs),
            bins,
            failures,
            pairs,
        }
    }

    pub fn bin(&self, bin: OverlapBin) -> &BinStats {
        self.bins
            .iter()
            .find(|s| s.label == bin.label())
            .expect("every bin is present")
    }

    /// Header plus the three bin rows and the identity-baseline row. Labels
    /// contain commas and are quoted; empty statistics are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let header: Vec<&str> = CSV_HEADER.split(',').collect();
        out.write_record(&header).expect("writing to memory");
        for row in self.bins.iter().chain(std::iter::once(&self.identity_baseline)) {
            let mut record = vec![row.label.clone()];
            record.extend(row.columns().iter().map(|v| v.map_or_else(String::new, |v| v.to_string())));
            out.write_record(&record).expect("writing to memory");
        }
        String::from_utf8(out.into_inner().expect("flushing to memory")).expect("CSV is UTF-8")
    }
}

fn outcome_for(index: usize, pair: &ScenarioPair, estimate: Result<RigidTransform, String>) -> PairOutcome {
    let (rotation_error, translation_error, failure) = match estimate {
        Ok(t) => {
            let c = barycenter(&pair.source).unwrap_or_default();
            match rotation_error(t.rotation(), pair.gt.rotation()) {
                Ok(r) => (r, translation_error(&t, &pair.gt, &c), None),
                Err(e) => (FAILURE_ROTATION_DEG, FAILURE_TRANSLATION_M, Some(e.to_string())),
            }
        }
        Err(msg) => (FAILURE_ROTATION_DEG, FAILURE_TRANSLATION_M, Some(msg)),
    };
    PairOutcome {
        index,
        overlap: pair.overlap,
        bin: pair.bin().label().to_string(),
        rotation_error,
        translation_error,
        failure,
    }
}

/// Solves one pair and scores it; solver failures get the maximal errors.
pub fn evaluate_pair(
    index: usize,
    pair: &ScenarioPair,
    gamma: &ConsistencyParams,
    config: &SolverConfig,
) -> PairOutcome {
    let estimate = solve(&pair.source, &pair.target, gamma, config)
        .map(|r| r.transform)
        .map_err(|e| e.to_string());
    outcome_for(index, pair, estimate)
}

/// Runs the solver on every pair, in order, and builds the report.
pub fn evaluate(pairs: &[ScenarioPair], gamma: &ConsistencyParams, config: &SolverConfig) -> MetricsReport {
    let outcomes = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| evaluate_pair(i, p, gamma, config))
        .collect();
    let identity = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| p.bin() == OverlapBin::NonOverlap)
        .map(|(i, p)| outcome_for(i, p, Ok(RigidTransform::identity())))
        .collect();
    MetricsReport::from_outcomes(config.mode, outcomes, identity)
}
