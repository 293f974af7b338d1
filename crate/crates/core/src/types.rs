//! Domain values shared by every stage of the pipeline.
//!
//! Everything here is validated at construction and immutable afterwards.

use nalgebra::{Matrix3, Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::InvalidInput;

/// Descriptor length used by the synthetic generator when nothing else is asked for.
pub const DEFAULT_DESCRIPTOR_LEN: usize = 32;

const NORMAL_TOL: f64 = 1e-6;
const ROTATION_TOL: f64 = 1e-9;

/// A 3D keypoint with unit normal and feature descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoint {
    position: Vector3<f64>,
    normal: Vector3<f64>,
    descriptor: Vec<f64>,
}

impl Keypoint {
    pub fn new(
        position: Vector3<f64>,
        normal: Vector3<f64>,
        descriptor: Vec<f64>,
    ) -> Result<Self, InvalidInput> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(InvalidInput::NonFinite("position"));
        }
        if !descriptor.iter().all(|v| v.is_finite()) {
            return Err(InvalidInput::NonFinite("descriptor"));
        }
        let norm = normal.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > NORMAL_TOL {
            return Err(InvalidInput::NonUnitNormal { index: 0, norm });
        }
        Ok(Self {
            position,
            normal,
            descriptor,
        })
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn normal(&self) -> &Vector3<f64> {
        &self.normal
    }

    pub fn descriptor(&self) -> &[f64] {
        &self.descriptor
    }

    /// Same descriptor, rigidly moved geometry.
    pub(crate) fn moved(&self, position: Vector3<f64>, normal: Vector3<f64>) -> Self {
        Self {
            position,
            normal,
            descriptor: self.descriptor.clone(),
        }
    }
}

/// An ordered set of keypoints sharing one descriptor length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KeypointSetRepr", into = "KeypointSetRepr")]
pub struct KeypointSet {
    id: String,
    descriptor_len: usize,
    points: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(
        id: impl Into<String>,
        descriptor_len: usize,
        points: Vec<Keypoint>,
    ) -> Result<Self, InvalidInput> {
        if descriptor_len == 0 {
            return Err(InvalidInput::ZeroDescriptorLength);
        }
        for (index, p) in points.iter().enumerate() {
            if p.descriptor.len() != descriptor_len {
                return Err(InvalidInput::DescriptorLength {
                    index,
                    expected: descriptor_len,
                    found: p.descriptor.len(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            descriptor_len,
            points,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn descriptor_len(&self) -> usize {
        self.descriptor_len
    }

    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Keypoint> {
        self.points.get(index)
    }

    pub(crate) fn with_points(&self, points: Vec<Keypoint>) -> Self {
        Self {
            id: self.id.clone(),
            descriptor_len: self.descriptor_len,
            points,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct KeypointRepr {
    p: [f64; 3],
    n: [f64; 3],
    f: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct KeypointSetRepr {
    id: String,
    k: usize,
    points: Vec<KeypointRepr>,
}

impl TryFrom<KeypointSetRepr> for KeypointSet {
    type Error = InvalidInput;

    fn try_from(repr: KeypointSetRepr) -> Result<Self, Self::Error> {
        let points = repr
            .points
            .into_iter()
            .enumerate()
            .map(|(index, kp)| {
                Keypoint::new(kp.p.into(), kp.n.into(), kp.f).map_err(|e| match e {
                    InvalidInput::NonUnitNormal { norm, .. } => {
                        InvalidInput::NonUnitNormal { index, norm }
                    }
                    other => other,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        KeypointSet::new(repr.id, repr.k, points)
    }
}

impl From<KeypointSet> for KeypointSetRepr {
    fn from(set: KeypointSet) -> Self {
        KeypointSetRepr {
            id: set.id,
            k: set.descriptor_len,
            points: set
                .points
                .into_iter()
                .map(|kp| KeypointRepr {
                    p: kp.position.into(),
                    n: kp.normal.into(),
                    f: kp.descriptor,
                })
                .collect(),
        }
    }
}

/// A proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, InvalidInput> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(InvalidInput::NonFinite("translation"));
        }
        check_rotation(&rotation)?;
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Projects an arbitrary matrix onto the closest rotation before building the transform.
    pub fn orthonormalized(
        matrix: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self, InvalidInput> {
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(InvalidInput::NonFinite("rotation"));
        }
        let svd = matrix.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let s = (u * v_t).determinant().signum();
        let rotation = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, s)) * v_t;
        Self::new(rotation, translation)
    }

    /// For rotations produced by exact constructions (SVD, products of rotations).
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(check_rotation(&rotation).is_ok());
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// The 3x4 matrix `[R | t]`.
    pub fn to_matrix3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.set_column(3, &self.translation);
        m
    }
}

/// Checks `RᵀR = I` (Frobenius) and `det R = +1`, both within 1e-9.
pub fn check_rotation(rotation: &Matrix3<f64>) -> Result<(), InvalidInput> {
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err(InvalidInput::NonFinite("rotation"));
    }
    let orthogonality_error = (rotation.transpose() * rotation - Matrix3::identity()).norm();
    let determinant = rotation.determinant();
    if orthogonality_error > ROTATION_TOL || (determinant - 1.0).abs() > ROTATION_TOL {
        return Err(InvalidInput::NotARotation {
            orthogonality_error,
            determinant,
        });
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    rotation: Vec<f64>,
    t: Vec<f64>,
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = InvalidInput;

    fn try_from(repr: TransformRepr) -> Result<Self, Self::Error> {
        if repr.rotation.len() != 9 {
            return Err(InvalidInput::WrongLength {
                field: "R",
                expected: 9,
                found: repr.rotation.len(),
            });
        }
        if repr.t.len() != 3 {
            return Err(InvalidInput::WrongLength {
                field: "t",
                expected: 3,
                found: repr.t.len(),
            });
        }
        RigidTransform::new(
            Matrix3::from_row_slice(&repr.rotation),
            Vector3::from_column_slice(&repr.t),
        )
    }
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = &t.rotation;
        TransformRepr {
            rotation: (0..3)
                .flat_map(|i| (0..3).map(move |j| r[(i, j)]))
                .collect(),
            t: t.translation.iter().copied().collect(),
        }
    }
}

/// Scales of the five pairwise consistency measures: descriptor distance,
/// edge length (meters) and three angles (radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GammaRepr", into = "GammaRepr")]
pub struct ConsistencyParams {
    gammas: [f64; 5],
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        Self {
            gammas: [0.1, 0.1, 0.15, 0.15, 0.15],
        }
    }
}

impl ConsistencyParams {
    pub fn new(gammas: [f64; 5]) -> Result<Self, InvalidInput> {
        if let Some(i) = gammas.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(InvalidInput::param(
                GAMMA_NAMES[i],
                format!("must be finite and > 0, got {}", gammas[i]),
            ));
        }
        Ok(Self { gammas })
    }

    pub fn as_array(&self) -> [f64; 5] {
        self.gammas
    }

    pub fn gamma1(&self) -> f64 {
        self.gammas[0]
    }

    /// Multiplies every scale by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self, InvalidInput> {
        Self::new(self.gammas.map(|g| g * factor))
    }
}

const GAMMA_NAMES: [&str; 5] = ["gamma1", "gamma2", "gamma3", "gamma4", "gamma5"];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GammaRepr {
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
    gamma4: f64,
    gamma5: f64,
}

impl TryFrom<GammaRepr> for ConsistencyParams {
    type Error = InvalidInput;

    fn try_from(r: GammaRepr) -> Result<Self, Self::Error> {
        ConsistencyParams::new([r.gamma1, r.gamma2, r.gamma3, r.gamma4, r.gamma5])
    }
}

impl From<ConsistencyParams> for GammaRepr {
    fn from(p: ConsistencyParams) -> Self {
        let [gamma1, gamma2, gamma3, gamma4, gamma5] = p.gammas;
        GammaRepr {
            gamma1,
            gamma2,
            gamma3,
            gamma4,
            gamma5,
        }
    }
}

/// Which half of the alternating scheme is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One unweighted closed-form fit.
    Nr,
    /// Robust reweighting only.
    R,
    /// One spectral pass followed by a single weighted fit.
    Sm,
    /// Alternating spectral matching and robust reweighting.
    #[default]
    RSm,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Nr, Mode::R, Mode::Sm, Mode::RSm];

    pub fn uses_spectral(self) -> bool {
        matches!(self, Mode::Sm | Mode::RSm)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Nr => "nr",
            Mode::R => "r",
            Mode::Sm => "sm",
            Mode::RSm => "r_sm",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nr" => Ok(Mode::Nr),
            "r" => Ok(Mode::R),
            "sm" => Ok(Mode::Sm),
            "r_sm" | "r+sm" => Ok(Mode::RSm),
            other => Err(format!("unknown mode `{other}` (expected nr, r, sm or r_sm)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Solver knobs. Every field has a default so config files may be partial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Score offset in the affinity `w (delta - r - r')`.
    pub delta: f64,
    /// Robust exponent of the reweighting scheme.
    pub alpha: f64,
    /// Regularizer in the IRLS weight update.
    pub epsilon: f64,
    pub outer_iters: usize,
    pub irls_iters: usize,
    pub power_iters: usize,
    pub power_tol: f64,
    /// Descriptor-kernel value at or below which a candidate is dropped.
    pub prune_threshold: f64,
    pub max_candidates: usize,
    /// Candidates with indicator >= `select_ratio * max` are reported as selected.
    pub select_ratio: f64,
    pub mode: Mode,
    /// Per-round scales; when present overrides the base scales round by round.
    pub per_iter_gammas: Option<Vec<ConsistencyParams>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 50.0,
            alpha: 1.0,
            epsilon: 1e-6,
            outer_iters: 5,
            irls_iters: 5,
            power_iters: 100,
            power_tol: 1e-9,
            prune_threshold: 1e-2,
            max_candidates: 3000,
            select_ratio: 0.5,
            mode: Mode::RSm,
            per_iter_gammas: None,
        }
    }
}

impl SolverConfig {
    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), InvalidInput> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(InvalidInput::param(name, format!("must be > 0, got {v}")))
            }
        };
        positive("delta", self.delta)?;
        positive("epsilon", self.epsilon)?;
        positive("power_tol", self.power_tol)?;
        if !(self.alpha > 0.0 && self.alpha <= 2.0) {
            return Err(InvalidInput::param(
                "alpha",
                format!("must lie in (0, 2], got {}", self.alpha),
            ));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return Err(InvalidInput::param(
                "prune_threshold",
                format!("must lie in (0, 1), got {}", self.prune_threshold),
            ));
        }
        if !(self.select_ratio >= 0.0 && self.select_ratio <= 1.0) {
            return Err(InvalidInput::param("select_ratio", "must lie in [0, 1]"));
        }
        for (name, count) in [
            ("outer_iters", self.outer_iters),
            ("irls_iters", self.irls_iters),
            ("power_iters", self.power_iters),
            ("max_candidates", self.max_candidates),
        ] {
            if count == 0 {
                return Err(InvalidInput::param(name, "must be >= 1"));
            }
        }
        if let Some(per_iter) = &self.per_iter_gammas {
            if per_iter.len() != self.outer_iters {
                return Err(InvalidInput::param(
                    "per_iter_gammas",
                    format!(
                        "has {} entries but outer_iters is {}",
                        per_iter.len(),
                        self.outer_iters
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Scales used in outer round `round`.
    pub fn gamma_for_round(&self, base: &ConsistencyParams, round: usize) -> ConsistencyParams {
        self.per_iter_gammas
            .as_ref()
            .and_then(|g| g.get(round).copied())
            .unwrap_or(*base)
    }
}

/// A hypothesized pairing of source keypoint `source` with target keypoint `target`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Candidate {
    pub source: usize,
    pub target: usize,
}

impl Candidate {
    pub fn new(source: usize, target: usize) -> Self {
        Self { source, target }
    }
}

impl From<(usize, usize)> for Candidate {
    fn from((source, target): (usize, usize)) -> Self {
        Self { source, target }
    }
}

impl From<Candidate> for (usize, usize) {
    fn from(c: Candidate) -> Self {
        (c.source, c.target)
    }
}
