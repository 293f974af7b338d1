//! Rigid-motion helpers and the pose-error metrics used for evaluation.

use nalgebra::{Matrix3, Rotation3, Unit, UnitQuaternion, Vector3, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::InvalidInput;
use crate::types::{check_rotation, KeypointSet, RigidTransform};

/// Maps positions `p -> R p + t` and normals `n -> R n`; descriptors are untouched.
pub fn apply(transform: &RigidTransform, set: &KeypointSet) -> KeypointSet {
    let points = set
        .points()
        .iter()
        .map(|kp| {
            kp.moved(
                transform.transform_point(kp.position()),
                transform.transform_vector(kp.normal()),
            )
        })
        .collect();
    set.with_points(points)
}

/// `a ∘ b`: the result applies `b` first.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Geodesic angle in degrees between two rotations, in `[0, 180]`.
///
/// Evaluated as `atan2(sin θ, cos θ)` of the relative rotation `truthᵀ·estimate`,
/// which is the clamped `acos((tr - 1) / 2)` without its loss of precision near 0°.
pub fn rotation_error(estimate: &Matrix3<f64>, truth: &Matrix3<f64>) -> Result<f64, InvalidInput> {
    check_rotation(estimate)?;
    check_rotation(truth)?;
    Ok(rotation_angle(&(truth.transpose() * estimate)).to_degrees())
}

/// Rotation angle (radians) of a rotation matrix.
pub(crate) fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let sin = (axis.norm() / 2.0).min(1.0);
    sin.atan2(cos)
}

/// `‖t − t* + (R − R*)·c‖` where `c` is the source barycenter.
pub fn translation_error(
    estimate: &RigidTransform,
    truth: &RigidTransform,
    source_barycenter: &Vector3<f64>,
) -> f64 {
    (estimate.translation() - truth.translation()
        + (estimate.rotation() - truth.rotation()) * source_barycenter)
        .norm()
}

/// Fraction of the smaller set covered by the overlap: source points whose
/// ground-truth image lies within `radius` of some target point, divided by
/// `min(|source|, |target|)` and capped at 1.
pub fn overlap_ratio(
    source: &KeypointSet,
    target: &KeypointSet,
    ground_truth: &RigidTransform,
    radius: f64,
) -> Result<f64, InvalidInput> {
    if !(radius > 0.0) {
        return Err(InvalidInput::param("radius", format!("must be > 0, got {radius}")));
    }
    if source.is_empty() || target.is_empty() {
        return Err(InvalidInput::EmptySet);
    }
    let r2 = radius * radius;
    let covered = source
        .points()
        .iter()
        .filter(|kp| {
            let image = ground_truth.transform_point(kp.position());
            target
                .points()
                .iter()
                .any(|q| (q.position() - image).norm_squared() <= r2)
        })
        .count();
    let denom = source.len().min(target.len());
    Ok((covered as f64 / denom as f64).min(1.0))
}

/// Overlap category of a scan pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OverlapBin {
    /// `[0.5, 1]`
    Significant,
    /// `[0.1, 0.5)`
    Small,
    /// `[0, 0.1)`
    NonOverlap,
}

impl OverlapBin {
    pub const ALL: [OverlapBin; 3] = [OverlapBin::Significant, OverlapBin::Small, OverlapBin::NonOverlap];

    pub fn of(overlap: f64) -> Self {
        if overlap >= 0.5 {
            OverlapBin::Significant
        } else if overlap >= 0.1 {
            OverlapBin::Small
        } else {
            OverlapBin::NonOverlap
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            OverlapBin::Significant => "[0.5,1]",
            OverlapBin::Small => "[0.1,0.5)",
            OverlapBin::NonOverlap => "[0,0.1)",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.label() == label)
    }
}

/// Haar-uniform rotation, deterministic per seed.
pub fn random_rotation(seed: u64) -> Matrix3<f64> {
    random_rotation_with(&mut ChaCha8Rng::seed_from_u64(seed))
}

/// Haar-uniform rotation drawn from `rng` (normalized Gaussian quaternion).
pub fn random_rotation_with<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-12 {
            return *UnitQuaternion::from_quaternion(q)
                .to_rotation_matrix()
                .matrix();
        }
    }
}

/// Rotation by `angle` radians about `axis` (normalized internally).
pub fn axis_angle(axis: &Vector3<f64>, angle: f64) -> Matrix3<f64> {
    *Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle).matrix()
}

/// Unweighted mean of the positions.
pub fn barycenter(set: &KeypointSet) -> Result<Vector3<f64>, InvalidInput> {
    if set.is_empty() {
        return Err(InvalidInput::EmptySet);
    }
    let sum = set
        .points()
        .iter()
        .fold(Vector3::zeros(), |acc, kp| acc + kp.position());
    Ok(sum / set.len() as f64)
}

/// Angle in radians between two nonzero vectors, via a clamped `acos`.
pub(crate) fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0).acos()
}
