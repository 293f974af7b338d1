//! Candidate correspondences and the pairwise affinity between them.
//!
//! A candidate `c = (q1, q2)` survives pruning when the descriptor kernel
//! `exp(-|f(q1) - f(q2)|^2 / (2 γ1^2))` is strictly above the pruning threshold.
//! Two candidates are scored by five consistency measures: descriptor
//! distance, edge length and three angles. A rigid motion preserves the last
//! four exactly, so true correspondences agree with each other.

use std::fmt;
use std::io::{self, Read, Write};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::InvalidInput;
use crate::geometry::angle_between;
use crate::types::{Candidate, ConsistencyParams, KeypointSet, RigidTransform};

/// Counts reported by [`build_candidates`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    /// `|Q1| * |Q2|`
    pub total_pairs: usize,
    /// Pairs whose descriptor kernel exceeded the threshold.
    pub survived: usize,
    /// Pairs kept after the `max_candidates` cap.
    pub kept: usize,
}

impl fmt::Display for PruneStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} of {} pairs survived pruning, {} kept",
            self.survived, self.total_pairs, self.kept
        )
    }
}

/// Pruned candidates over a fixed pair of keypoint sets, in `(source, target)` order.
#[derive(Debug, Clone)]
pub struct CandidateSet<'a> {
    source: &'a KeypointSet,
    target: &'a KeypointSet,
    candidates: Vec<Candidate>,
    descriptor_distances: Vec<f64>,
    stats: PruneStats,
}

impl<'a> CandidateSet<'a> {
    /// Builds a set from explicit candidates, bypassing pruning.
    pub fn from_candidates(
        source: &'a KeypointSet,
        target: &'a KeypointSet,
        mut candidates: Vec<Candidate>,
    ) -> Result<Self, InvalidInput> {
        candidates.sort_unstable();
        candidates.dedup();
        for c in &candidates {
            if c.source >= source.len() || c.target >= target.len() {
                return Err(InvalidInput::param(
                    "candidates",
                    format!("({}, {}) out of range", c.source, c.target),
                ));
            }
        }
        if source.descriptor_len() != target.descriptor_len() {
            return Err(InvalidInput::param(
                "descriptor_len",
                "source and target descriptor lengths differ",
            ));
        }
        let descriptor_distances = candidates
            .iter()
            .map(|c| descriptor_distance(source, target, c.source, c.target))
            .collect();
        let n = candidates.len();
        Ok(Self {
            source,
            target,
            candidates,
            descriptor_distances,
            stats: PruneStats {
                total_pairs: source.len() * target.len(),
                survived: n,
                kept: n,
            },
        })
    }

    pub fn source(&self) -> &'a KeypointSet {
        self.source
    }

    pub fn target(&self) -> &'a KeypointSet {
        self.target
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn descriptor_distances(&self) -> &[f64] {
        &self.descriptor_distances
    }

    pub fn stats(&self) -> PruneStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Residuals of every candidate under `transform`.
    pub fn residuals(&self, transform: &RigidTransform) -> Vec<f64> {
        self.candidates
            .iter()
            .map(|c| residual(c, transform, self.source, self.target))
            .collect()
    }
}

fn descriptor_distance(q1: &KeypointSet, q2: &KeypointSet, i: usize, j: usize) -> f64 {
    q1.points()[i]
        .descriptor()
        .iter()
        .zip(q2.points()[j].descriptor())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Keeps the pairs whose descriptor kernel is strictly above `prune_threshold`;
/// when more than `max_candidates` survive, the closest descriptors win, ties
/// broken by `(source, target)`.
///
/// An empty result is not an error; callers check [`CandidateSet::is_empty`].
pub fn build_candidates<'a>(
    q1: &'a KeypointSet,
    q2: &'a KeypointSet,
    gamma1: f64,
    prune_threshold: f64,
    max_candidates: usize,
) -> Result<CandidateSet<'a>, InvalidInput> {
    if q1.is_empty() || q2.is_empty() {
        return Err(InvalidInput::EmptySet);
    }
    if !(gamma1.is_finite() && gamma1 > 0.0) {
        return Err(InvalidInput::param("gamma1", format!("must be > 0, got {gamma1}")));
    }
    if !(prune_threshold > 0.0 && prune_threshold < 1.0) {
        return Err(InvalidInput::param("prune_threshold", "must lie in (0, 1)"));
    }
    if q1.descriptor_len() != q2.descriptor_len() {
        return Err(InvalidInput::param(
            "descriptor_len",
            "source and target descriptor lengths differ",
        ));
    }

    // exp(-d²/(2γ²)) > τ  <=>  d² < 2γ² ln(1/τ). Values within a relative 1e-12
    // of the boundary count as on it, and the boundary itself is pruned.
    let bound = 2.0 * gamma1 * gamma1 * (1.0 / prune_threshold).ln();
    let limit = bound * (1.0 - 1e-12);

    let mut survivors: Vec<(f64, Candidate)> = Vec::new();
    for i in 0..q1.len() {
        for j in 0..q2.len() {
            let d = descriptor_distance(q1, q2, i, j);
            if d * d < limit {
                survivors.push((d, Candidate::new(i, j)));
            }
        }
    }
    let survived = survivors.len();
    if survived > max_candidates {
        survivors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        survivors.truncate(max_candidates);
        survivors.sort_by_key(|s| s.1);
    }
    let (descriptor_distances, candidates): (Vec<f64>, Vec<Candidate>) =
        survivors.into_iter().unzip();
    let kept = candidates.len();
    Ok(CandidateSet {
        source: q1,
        target: q2,
        candidates,
        descriptor_distances,
        stats: PruneStats {
            total_pairs: q1.len() * q2.len(),
            survived,
            kept,
        },
    })
}

/// The five consistency measures `(Δ1, .., Δ5)` of a candidate pair.
///
/// `Δ4`/`Δ5` compare the angle between each endpoint normal and the segment
/// from the first to the second endpoint; they are 0 when either segment has
/// zero length.
pub fn consistency_deltas(
    c: &Candidate,
    c_prime: &Candidate,
    source: &KeypointSet,
    target: &KeypointSet,
) -> [f64; 5] {
    let d = descriptor_distance(source, target, c.source, c.target);
    let d_prime = descriptor_distance(source, target, c_prime.source, c_prime.target);
    let side1 = edge_terms(source, c.source, c_prime.source);
    let side2 = edge_terms(target, c.target, c_prime.target);
    deltas_from_terms(d, d_prime, &side1, &side2)
}

/// `[length, ∠(n, n'), ∠(n, seg), ∠(n', seg), is_zero_length]` of the directed edge a→b.
#[derive(Debug, Clone, Copy, Default)]
struct EdgeTerms {
    length: f64,
    normal_angle: f64,
    first_angle: f64,
    second_angle: f64,
    zero_length: bool,
}

fn edge_terms(set: &KeypointSet, a: usize, b: usize) -> EdgeTerms {
    let (ka, kb) = (&set.points()[a], &set.points()[b]);
    let seg: Vector3<f64> = kb.position() - ka.position();
    let length = seg.norm();
    let normal_angle = angle_between(ka.normal(), kb.normal());
    if length == 0.0 {
        return EdgeTerms {
            length,
            normal_angle,
            zero_length: true,
            ..Default::default()
        };
    }
    EdgeTerms {
        length,
        normal_angle,
        first_angle: angle_between(ka.normal(), &seg),
        second_angle: angle_between(kb.normal(), &seg),
        zero_length: false,
    }
}

fn deltas_from_terms(d: f64, d_prime: f64, e1: &EdgeTerms, e2: &EdgeTerms) -> [f64; 5] {
    let (d4, d5) = if e1.zero_length || e2.zero_length {
        (0.0, 0.0)
    } else {
        (
            e1.first_angle - e2.first_angle,
            e1.second_angle - e2.second_angle,
        )
    };
    [
        (d * d + d_prime * d_prime).sqrt(),
        e1.length - e2.length,
        e1.normal_angle - e2.normal_angle,
        d4,
        d5,
    ]
}

/// `exp(-½ Σ (Δi/γi)²)`, in `(0, 1]`.
pub fn pair_weight(deltas: &[f64; 5], gamma: &ConsistencyParams) -> f64 {
    let g = gamma.as_array();
    let s: f64 = deltas
        .iter()
        .zip(g.iter())
        .map(|(d, g)| (d / g) * (d / g))
        .sum();
    (-0.5 * s).exp()
}

/// `‖R p1 + t − p2‖² + ‖R n1 − n2‖²`.
pub fn residual(
    c: &Candidate,
    transform: &RigidTransform,
    source: &KeypointSet,
    target: &KeypointSet,
) -> f64 {
    let (k1, k2) = (&source.points()[c.source], &target.points()[c.target]);
    (transform.transform_point(k1.position()) - k2.position()).norm_squared()
        + (transform.transform_vector(k1.normal()) - k2.normal()).norm_squared()
}

/// Per-side edge terms restricted to the keypoints that appear in some candidate.
struct SideTable {
    local: Vec<usize>,
    width: usize,
    terms: Vec<EdgeTerms>,
}

impl SideTable {
    fn new(set: &KeypointSet, used: impl Iterator<Item = usize>) -> Self {
        let mut local = vec![usize::MAX; set.len()];
        let mut members = Vec::new();
        for i in used {
            if local[i] == usize::MAX {
                local[i] = members.len();
                members.push(i);
            }
        }
        let width = members.len();
        let mut terms = Vec::with_capacity(width * width);
        for &a in &members {
            for &b in &members {
                terms.push(edge_terms(set, a, b));
            }
        }
        Self {
            local,
            width,
            terms,
        }
    }

    fn get(&self, a: usize, b: usize) -> &EdgeTerms {
        &self.terms[self.local[a] * self.width + self.local[b]]
    }
}

/// The matrix `W = (w_γ(c, c'))` over a candidate set, zero on the diagonal.
///
/// Depends only on geometry and `γ`, so the solver computes it once per
/// distinct `γ` and reuses it across rounds.
pub fn pair_weight_matrix(cands: &CandidateSet<'_>, gamma: &ConsistencyParams) -> DMatrix<f64> {
    let n = cands.len();
    let src = SideTable::new(cands.source, cands.candidates.iter().map(|c| c.source));
    let tgt = SideTable::new(cands.target, cands.candidates.iter().map(|c| c.target));
    let inv = gamma.as_array().map(|g| 1.0 / (g * g));
    let mut w = DMatrix::zeros(n, n);
    for a in 0..n {
        let ca = cands.candidates[a];
        let da = cands.descriptor_distances[a];
        for b in (a + 1)..n {
            let cb = cands.candidates[b];
            let deltas = deltas_from_terms(
                da,
                cands.descriptor_distances[b],
                src.get(ca.source, cb.source),
                tgt.get(ca.target, cb.target),
            );
            let s: f64 = deltas
                .iter()
                .zip(inv.iter())
                .map(|(d, i)| d * d * i)
                .sum();
            let v = (-0.5 * s).exp();
            w[(a, b)] = v;
            w[(b, a)] = v;
        }
    }
    w
}

/// The clamped score matrix `a_cc' = max(0, w_γ(c,c') (δ − r(c) − r(c')))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    matrix: DMatrix<f64>,
    degenerate: bool,
}

impl AffinityMatrix {
    pub fn from_weights(weights: &DMatrix<f64>, residuals: &[f64], delta: f64) -> Self {
        let n = weights.nrows();
        assert_eq!(residuals.len(), n, "one residual per candidate");
        let mut matrix = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in (a + 1)..n {
                let v = (weights[(a, b)] * (delta - residuals[a] - residuals[b])).max(0.0);
                matrix[(a, b)] = v;
                matrix[(b, a)] = v;
            }
        }
        Self {
            matrix,
            degenerate: n < 2,
        }
    }

    /// Wraps an arbitrary symmetric matrix (used by oracles and tests).
    pub fn from_matrix(matrix: DMatrix<f64>) -> Self {
        let degenerate = matrix.nrows() < 2;
        Self { matrix, degenerate }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Fewer than two candidates: no pairwise evidence exists.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Dense dump: `n` as little-endian u64, then `n*n` little-endian f64, row-major.
    pub fn write_dense<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dim();
        out.write_all(&(n as u64).to_le_bytes())?;
        for i in 0..n {
            for j in 0..n {
                out.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dense<R: Read>(mut input: R) -> io::Result<Self> {
        let mut word = [0u8; 8];
        input.read_exact(&mut word)?;
        let n = u64::from_le_bytes(word) as usize;
        let mut matrix = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                input.read_exact(&mut word)?;
                matrix[(i, j)] = f64::from_le_bytes(word);
            }
        }
        Ok(Self::from_matrix(matrix))
    }
}

/// Assembles the affinity matrix. Without a transform all residuals are 0,
/// which leaves pure geometric consistency.
pub fn build_affinity(
    cands: &CandidateSet<'_>,
    gamma: &ConsistencyParams,
    delta: f64,
    transform: Option<&RigidTransform>,
) -> AffinityMatrix {
    let weights = pair_weight_matrix(cands, gamma);
    let residuals = match transform {
        Some(t) => cands.residuals(t),
        None => vec![0.0; cands.len()],
    };
    AffinityMatrix::from_weights(&weights, &residuals, delta)
}
