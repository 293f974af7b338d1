//! Deterministic synthetic scan pairs with known ground truth.
//!
//! A scene is a box-shaped room (floor plus four walls) with a few box-shaped
//! clutter objects. Keypoints are sampled on those surfaces with inward-facing
//! normals, split into a source and a target view with a requested shared
//! fraction, and the target view is moved by a random rigid transform.
//! Descriptors mix a per-point vector with a per-surface-class vector so that
//! points on the same kind of surface look alike.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use nalgebra::{DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{InvalidInput, IoError};
use crate::geometry::{axis_angle, random_rotation_with, OverlapBin};
use crate::io::write_json_compact;
use crate::types::{Keypoint, KeypointSet, RigidTransform, DEFAULT_DESCRIPTOR_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RotationSampling {
    /// Haar-uniform on SO(3).
    Uniform,
    /// Rotation about +z by a yaw uniform in `[-max_deg, max_deg]`.
    Yaw { max_deg: f64 },
}

/// Generation parameters. Angles are in radians unless the name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSpec {
    /// Room extent along x, y, z in meters.
    pub room: [f64; 3],
    /// Square room with centered clutter and descriptors that repeat under
    /// 90° turns about the vertical axis.
    pub symmetric_room: bool,
    pub clutter_boxes: usize,
    pub source_points: usize,
    pub target_points: usize,
    /// Requested `shared / min(source_points, target_points)`.
    pub overlap_target: f64,
    /// Source and target drawn from opposite halves of the room.
    pub disjoint_views: bool,
    pub rotation: RotationSampling,
    /// Translation drawn uniformly from a ball of this radius.
    pub t_max: f64,
    /// Position noise standard deviation (meters, per axis), truncated at 4σ.
    pub sigma_p: f64,
    /// Normal angular noise standard deviation (radians), truncated at 4σ.
    pub sigma_n: f64,
    /// Descriptor noise scale: expected noise norm per descriptor.
    pub sigma_f: f64,
    /// Fraction of target keypoints replaced by random points in the room.
    pub outlier_rate: f64,
    /// Fraction of those outliers that copy the descriptor of a random source
    /// keypoint instead of drawing a fresh one.
    pub decoy_fraction: f64,
    /// When positive, a decoy sits between `min_separation` and this distance
    /// from the true image of the keypoint it imitates, instead of anywhere
    /// in the room.
    pub decoy_radius: f64,
    /// Fraction of the decoys that imitate distinct keypoints through one
    /// common wrong motion (a turn about the room's vertical center line), as
    /// repeated structure would.
    pub decoy_cluster_fraction: f64,
    /// Scale applied about the room center along with that turn; 1 keeps the
    /// imitation rigid, other values mimic similar structure of another size.
    pub decoy_cluster_scale: f64,
    pub descriptor_len: usize,
    /// Weight of the surface-class component in `[0, 1)`.
    pub descriptor_ambiguity: f64,
    /// Cell size used to key descriptors in symmetric rooms.
    pub descriptor_cell: f64,
    /// Radius of the overlap test; recorded with every pair.
    pub overlap_radius: f64,
    /// Minimum distance between any two scene points.
    pub min_separation: f64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            room: [6.0, 5.0, 3.0],
            symmetric_room: false,
            clutter_boxes: 3,
            source_points: 60,
            target_points: 60,
            overlap_target: 0.7,
            disjoint_views: false,
            rotation: RotationSampling::Uniform,
            t_max: 1.0,
            sigma_p: 0.0,
            sigma_n: 0.0,
            sigma_f: 0.0,
            outlier_rate: 0.0,
            decoy_fraction: 0.0,
            decoy_radius: 0.0,
            decoy_cluster_fraction: 0.0,
            decoy_cluster_scale: 1.0,
            descriptor_len: DEFAULT_DESCRIPTOR_LEN,
            descriptor_ambiguity: 0.3,
            descriptor_cell: 0.5,
            overlap_radius: 0.05,
            min_separation: 0.1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("infeasible request: {0}")]
    Infeasible(String),
}

impl GenSpec {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: String| Err(GenError::Spec(m));
        if self.source_points < 4 || self.target_points < 4 {
            return bad("source_points and target_points must be >= 4".into());
        }
        for (name, v) in [
            ("overlap_target", self.overlap_target),
            ("outlier_rate", self.outlier_rate),
            ("decoy_fraction", self.decoy_fraction),
            ("decoy_cluster_fraction", self.decoy_cluster_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [
            ("sigma_p", self.sigma_p),
            ("sigma_n", self.sigma_n),
            ("sigma_f", self.sigma_f),
            ("t_max", self.t_max),
            ("decoy_radius", self.decoy_radius),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        if self.room.iter().any(|v| !(v.is_finite() && *v > 0.5)) {
            return bad("room extents must exceed 0.5 m".into());
        }
        if !(0.0..1.0).contains(&self.descriptor_ambiguity) {
            return bad("descriptor_ambiguity must lie in [0, 1)".into());
        }
        if self.descriptor_len == 0 {
            return bad("descriptor_len must be positive".into());
        }
        if !(self.decoy_cluster_scale.is_finite() && self.decoy_cluster_scale > 0.0) {
            return bad("decoy_cluster_scale must be > 0".into());
        }
        if self.decoy_radius > 0.0 && self.decoy_radius <= self.min_separation {
            return bad("decoy_radius must exceed min_separation".into());
        }
        if !(self.overlap_radius > 0.0 && self.min_separation > 0.0 && self.descriptor_cell > 0.0) {
            return bad("overlap_radius, min_separation and descriptor_cell must be > 0".into());
        }
        if let RotationSampling::Yaw { max_deg } = self.rotation {
            if !(max_deg.is_finite() && max_deg >= 0.0) {
                return bad("yaw max_deg must be >= 0".into());
            }
        }
        Ok(())
    }

    fn extent(&self) -> Vector3<f64> {
        if self.symmetric_room {
            Vector3::new(self.room[0], self.room[0], self.room[2])
        } else {
            Vector3::from(self.room)
        }
    }
}

/// Two keypoint sets with their ground-truth relative pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPair {
    pub source: KeypointSet,
    pub target: KeypointSet,
    /// Maps source coordinates into target coordinates.
    pub gt: RigidTransform,
    /// True correspondences `(source index, target index)`.
    pub inliers: Vec<(usize, usize)>,
    pub overlap: f64,
    pub seed: u64,
    pub gen_spec: GenSpec,
}

impl ScenarioPair {
    pub fn bin(&self) -> OverlapBin {
        OverlapBin::of(self.overlap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SurfaceClass {
    Floor = 0,
    Wall = 1,
    BoxTop = 2,
    BoxSide = 3,
}

/// Position, normal and the surface it was drawn from.
type SurfacePoint = (Vector3<f64>, Vector3<f64>, SurfaceClass);

type Region = Box<dyn Fn(&Vector3<f64>) -> bool>;

#[derive(Debug, Clone)]
struct Patch {
    origin: Vector3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    normal: Vector3<f64>,
    class: SurfaceClass,
}

impl Patch {
    fn area(&self) -> f64 {
        self.u.cross(&self.v).norm()
    }
}

#[derive(Debug, Clone)]
struct ScenePoint {
    position: Vector3<f64>,
    normal: Vector3<f64>,
    descriptor: DVector<f64>,
}

fn room_patches(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Vec<Patch> {
    let e = spec.extent();
    let (x, y, z) = (Vector3::x() * e.x, Vector3::y() * e.y, Vector3::z() * e.z);
    let o = Vector3::zeros();
    let mut patches = vec![
        Patch { origin: o, u: x, v: y, normal: Vector3::z(), class: SurfaceClass::Floor },
        Patch { origin: o, u: y, v: z, normal: Vector3::x(), class: SurfaceClass::Wall },
        Patch { origin: x, u: y, v: z, normal: -Vector3::x(), class: SurfaceClass::Wall },
        Patch { origin: o, u: x, v: z, normal: Vector3::y(), class: SurfaceClass::Wall },
        Patch { origin: y, u: x, v: z, normal: -Vector3::y(), class: SurfaceClass::Wall },
    ];
    let boxes: Vec<(Vector3<f64>, Vector3<f64>)> = if spec.symmetric_room {
        (0..spec.clutter_boxes.min(1))
            .map(|_| {
                let side = 0.25 * e.x;
                let corner = Vector3::new((e.x - side) / 2.0, (e.y - side) / 2.0, 0.0);
                (corner, Vector3::new(side, side, 0.3 * e.z))
            })
            .collect()
    } else {
        (0..spec.clutter_boxes)
            .map(|_| {
                let size = Vector3::new(
                    rng.random_range(0.4..1.2f64).min(0.4 * e.x),
                    rng.random_range(0.4..1.2f64).min(0.4 * e.y),
                    rng.random_range(0.3..1.0f64).min(0.6 * e.z),
                );
                let corner = Vector3::new(
                    rng.random_range(0.2..(e.x - size.x - 0.2).max(0.21)),
                    rng.random_range(0.2..(e.y - size.y - 0.2).max(0.21)),
                    0.0,
                );
                (corner, size)
            })
            .collect()
    };
    for (c, s) in boxes {
        let (sx, sy, sz) = (Vector3::x() * s.x, Vector3::y() * s.y, Vector3::z() * s.z);
        patches.push(Patch { origin: c + sz, u: sx, v: sy, normal: Vector3::z(), class: SurfaceClass::BoxTop });
        patches.push(Patch { origin: c, u: sy, v: sz, normal: -Vector3::x(), class: SurfaceClass::BoxSide });
        patches.push(Patch { origin: c + sx, u: sy, v: sz, normal: Vector3::x(), class: SurfaceClass::BoxSide });
        patches.push(Patch { origin: c, u: sx, v: sz, normal: -Vector3::y(), class: SurfaceClass::BoxSide });
        patches.push(Patch { origin: c + sy, u: sx, v: sz, normal: Vector3::y(), class: SurfaceClass::BoxSide });
    }
    patches
}

fn random_unit(rng: &mut impl Rng, dim: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Descriptor noise with expected norm `sigma`.
fn descriptor_noise(rng: &mut impl Rng, dim: usize, sigma: f64) -> DVector<f64> {
    let s = sigma / (dim as f64).sqrt();
    DVector::from_fn(dim, |_, _| s * rng.sample::<f64, _>(StandardNormal))
}

/// Isotropic Gaussian with per-axis `sigma`, rejected beyond `4 sigma`.
fn truncated_noise(rng: &mut impl Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    loop {
        let v = Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        if v.norm() <= 4.0 * sigma {
            return v;
        }
    }
}

/// Tilts `n` by a half-normal angle (σ, truncated at 4σ) about a random perpendicular axis.
fn perturb_normal(rng: &mut impl Rng, n: &Vector3<f64>, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return *n;
    }
    let angle = loop {
        let a: f64 = sigma * rng.sample::<f64, _>(StandardNormal);
        if a.abs() <= 4.0 * sigma {
            break a.abs();
        }
    };
    let axis = loop {
        let g = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let perp = g - n * n.dot(&g);
        if perp.norm() > 1e-9 {
            break perp.normalize();
        }
    };
    (n * angle.cos() + axis.cross(n) * angle.sin()).normalize()
}

struct DescriptorModel {
    dim: usize,
    ambiguity: f64,
    class_vectors: Vec<DVector<f64>>,
    scene_seed: u64,
}

impl DescriptorModel {
    fn new(spec: &GenSpec, rng: &mut ChaCha8Rng) -> Self {
        let dim = spec.descriptor_len;
        Self {
            dim,
            ambiguity: spec.descriptor_ambiguity,
            class_vectors: (0..4).map(|_| random_unit(rng, dim)).collect(),
            scene_seed: rng.random(),
        }
    }

    /// Unit base descriptor for the surface point identified by `key`.
    fn base(&self, key: u64, class: SurfaceClass) -> DVector<f64> {
        let mut point_rng = ChaCha8Rng::seed_from_u64(self.scene_seed ^ key.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let own = random_unit(&mut point_rng, self.dim);
        let mixed = own * (1.0 - self.ambiguity).sqrt()
            + &self.class_vectors[class as usize] * self.ambiguity.sqrt();
        let n = mixed.norm();
        mixed / n
    }

    fn fresh(&self, rng: &mut impl Rng) -> DVector<f64> {
        let class = self.class_vectors[rng.random_range(0..4)].clone();
        let own = random_unit(rng, self.dim);
        let mixed = own * (1.0 - self.ambiguity).sqrt() + class * self.ambiguity.sqrt();
        let n = mixed.norm();
        mixed / n
    }
}

/// Key of the 90°-symmetry class of the cell containing `p`.
fn symmetric_cell_key(p: &Vector3<f64>, extent: &Vector3<f64>, cell: f64) -> u64 {
    let center = Vector3::new(extent.x / 2.0, extent.y / 2.0, 0.0);
    let d = p - center;
    let quantize = |v: f64| ((v / cell).floor() as i64 + (1 << 20)) as u64;
    (0..4)
        .map(|k| {
            let r = axis_angle(&Vector3::z(), k as f64 * PI / 2.0) * d;
            (quantize(r.x), quantize(r.y), quantize(r.z))
        })
        .min()
        .map(|(a, b, c)| (a << 42) | (b << 21) | c)
        .expect("four rotations")
}

fn sample_on_patches(
    rng: &mut ChaCha8Rng,
    patches: &[Patch],
    count: usize,
    accept: impl Fn(&Vector3<f64>) -> bool,
    taken: &mut Vec<Vector3<f64>>,
    min_sep: f64,
) -> Result<Vec<SurfacePoint>, GenError> {
    let areas: Vec<f64> = patches.iter().map(Patch::area).collect();
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let sep2 = min_sep * min_sep;
    while out.len() < count {
        attempts += 1;
        if attempts > 2000 * (count + 10) {
            return Err(GenError::Infeasible(format!(
                "cannot place {count} keypoints {min_sep} m apart on the scene surfaces"
            )));
        }
        let mut pick = rng.random::<f64>() * total;
        let mut idx = 0;
        while idx + 1 < patches.len() && pick >= areas[idx] {
            pick -= areas[idx];
            idx += 1;
        }
        let patch = &patches[idx];
        let p = patch.origin + patch.u * rng.random::<f64>() + patch.v * rng.random::<f64>();
        if !accept(&p) || taken.iter().any(|q| (q - p).norm_squared() < sep2) {
            continue;
        }
        taken.push(p);
        out.push((p, patch.normal, patch.class));
    }
    Ok(out)
}

/// Generates one scenario pair; identical `(spec, seed)` give identical pairs.
pub fn generate(spec: &GenSpec, seed: u64) -> Result<ScenarioPair, GenError> {
    spec.validate()?;
    let (ns, nt) = (spec.source_points, spec.target_points);
    let m = ns.min(nt);
    let shared = (spec.overlap_target * m as f64).round() as usize;
    if spec.disjoint_views && shared > 0 {
        return Err(GenError::Infeasible(format!(
            "overlap_target {} needs {shared} shared keypoints but disjoint_views shares none",
            spec.overlap_target
        )));
    }
    let outliers = (spec.outlier_rate * nt as f64).round() as usize;
    if outliers > nt - shared {
        return Err(GenError::Infeasible(format!(
            "outlier_rate {} replaces {outliers} target keypoints but only {} are not shared \
             (overlap_target {})",
            spec.outlier_rate,
            nt - shared,
            spec.overlap_target
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extent = spec.extent();
    let patches = room_patches(spec, &mut rng);
    let descriptors = DescriptorModel::new(spec, &mut rng);

    let half = extent.x / 2.0;
    let (src_region, tgt_region): (Region, Region) =
        if spec.disjoint_views {
            (Box::new(move |p| p.x < half), Box::new(move |p| p.x >= half))
        } else {
            (Box::new(|_| true), Box::new(|_| true))
        };

    let mut taken = Vec::new();
    let sep = spec.min_separation;
    let shared_pts = sample_on_patches(&mut rng, &patches, shared, |_| true, &mut taken, sep)?;
    let source_only = sample_on_patches(&mut rng, &patches, ns - shared, &src_region, &mut taken, sep)?;
    let target_only =
        sample_on_patches(&mut rng, &patches, nt - shared - outliers, &tgt_region, &mut taken, sep)?;

    let mut next_key = 0u64;
    let mut scene_point = |(position, normal, class): SurfacePoint| {
        let key = if spec.symmetric_room {
            symmetric_cell_key(&position, &extent, spec.descriptor_cell)
        } else {
            next_key += 1;
            next_key
        };
        ScenePoint { position, normal, descriptor: descriptors.base(key, class) }
    };
    let shared_pts: Vec<ScenePoint> = shared_pts.into_iter().map(&mut scene_point).collect();
    let source_only: Vec<ScenePoint> = source_only.into_iter().map(&mut scene_point).collect();
    let target_only: Vec<ScenePoint> = target_only.into_iter().map(&mut scene_point).collect();

    let rotation = match spec.rotation {
        RotationSampling::Uniform => random_rotation_with(&mut rng),
        RotationSampling::Yaw { max_deg } => {
            let yaw = if max_deg > 0.0 { rng.random_range(-max_deg..=max_deg) } else { 0.0 };
            axis_angle(&Vector3::z(), yaw.to_radians())
        }
    };
    let translation = loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0f64));
        if v.norm() <= 1.0 {
            break v * spec.t_max;
        }
    };
    let gt = RigidTransform::from_parts(rotation, translation);

    let dim = spec.descriptor_len;
    let noisy_descriptor = |rng: &mut ChaCha8Rng, base: &DVector<f64>| -> Vec<f64> {
        (base + descriptor_noise(rng, dim, spec.sigma_f)).iter().copied().collect()
    };
    let keypoint = |p: Vector3<f64>, n: Vector3<f64>, f: Vec<f64>| {
        Keypoint::new(p, n, f).map_err(|e: InvalidInput| GenError::Spec(e.to_string()))
    };

    // (keypoint, scene-point id) where shared points carry Some(id)
    let mut source: Vec<(Keypoint, Option<usize>)> = Vec::with_capacity(ns);
    for (id, sp) in shared_pts.iter().enumerate() {
        let f = noisy_descriptor(&mut rng, &sp.descriptor);
        source.push((keypoint(sp.position, sp.normal, f)?, Some(id)));
    }
    for sp in &source_only {
        let f = noisy_descriptor(&mut rng, &sp.descriptor);
        source.push((keypoint(sp.position, sp.normal, f)?, None));
    }

    let mut target: Vec<(Keypoint, Option<usize>)> = Vec::with_capacity(nt);
    let observed = shared_pts.iter().enumerate().map(|(i, sp)| (Some(i), sp)).chain(target_only.iter().map(|sp| (None, sp)));
    for (id, sp) in observed {
        let p = gt.transform_point(&sp.position) + truncated_noise(&mut rng, spec.sigma_p);
        let n = perturb_normal(&mut rng, &gt.transform_vector(&sp.normal), spec.sigma_n);
        let f = noisy_descriptor(&mut rng, &sp.descriptor);
        target.push((keypoint(p, n, f)?, id));
    }
    let decoy_sources: Vec<&ScenePoint> = shared_pts.iter().chain(&source_only).collect();
    let clustered = (spec.decoy_cluster_fraction * spec.decoy_fraction * outliers as f64).round() as usize;
    let clustered = clustered.min(decoy_sources.len());
    let mut cluster_order: Vec<usize> = (0..decoy_sources.len()).collect();
    cluster_order.shuffle(&mut rng);
    let wrong_turn = axis_angle(&Vector3::z(), rng.random_range(60.0..=180.0f64).to_radians());
    let center = Vector3::new(extent.x / 2.0, extent.y / 2.0, 0.0);
    let sep2 = sep * sep;
    let mut placed = 0;
    let mut attempts = 0usize;
    let mut next_member = 0;
    while placed < outliers {
        if next_member < clustered {
            // members that collide are skipped; ordinary decoys fill in
            let sp = decoy_sources[cluster_order[next_member]];
            next_member += 1;
            let w = wrong_turn * (sp.position - center) * spec.decoy_cluster_scale + center;
            if taken.iter().any(|q| (q - w).norm_squared() < sep2) {
                continue;
            }
            taken.push(w);
            placed += 1;
            let f = noisy_descriptor(&mut rng, &sp.descriptor);
            let n = wrong_turn * sp.normal;
            target.push((keypoint(gt.transform_point(&w), gt.transform_vector(&n), f)?, None));
            continue;
        }
        attempts += 1;
        if attempts > 2000 * (outliers + 10) {
            return Err(GenError::Infeasible(format!(
                "cannot place {outliers} outliers {sep} m away from scene keypoints"
            )));
        }
        let imitated = (rng.random::<f64>() < spec.decoy_fraction)
            .then(|| decoy_sources[rng.random_range(0..decoy_sources.len())]);
        let (w, n) = match imitated {
            Some(sp) if spec.decoy_radius > 0.0 => {
                let dir = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
                let dist = rng.random_range(sep..=spec.decoy_radius);
                (sp.position + dir * dist, sp.normal)
            }
            _ => (
                Vector3::from_fn(|i, _| rng.random::<f64>() * extent[i]),
                Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)).normalize(),
            ),
        };
        if taken.iter().any(|q| (q - w).norm_squared() < sep2) {
            continue;
        }
        taken.push(w);
        placed += 1;
        let base = match imitated {
            Some(sp) => sp.descriptor.clone(),
            None => descriptors.fresh(&mut rng),
        };
        let f = noisy_descriptor(&mut rng, &base);
        target.push((keypoint(gt.transform_point(&w), gt.transform_vector(&n), f)?, None));
    }

    source.shuffle(&mut rng);
    target.shuffle(&mut rng);
    let mut target_index = vec![usize::MAX; shared];
    for (j, (_, id)) in target.iter().enumerate() {
        if let Some(id) = id {
            target_index[*id] = j;
        }
    }
    let inliers: Vec<(usize, usize)> = source
        .iter()
        .enumerate()
        .filter_map(|(i, (_, id))| id.map(|id| (i, target_index[id])))
        .collect();

    let to_set = |id: &str, pts: Vec<(Keypoint, Option<usize>)>| {
        KeypointSet::new(id, dim, pts.into_iter().map(|(k, _)| k).collect())
            .map_err(|e| GenError::Spec(e.to_string()))
    };
    Ok(ScenarioPair {
        source: to_set(&format!("s{seed}-source"), source)?,
        target: to_set(&format!("s{seed}-target"), target)?,
        gt,
        inliers,
        overlap: shared as f64 / m as f64,
        seed,
        gen_spec: spec.clone(),
    })
}

/// One manifest line: pair file path relative to the manifest, and its overlap bin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bin: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Generates every `(spec, seed)` combination into `out_dir` and writes
/// `manifest.json` listing the pair files in grid-major order.
pub fn generate_corpus(
    grid: &[GenSpec],
    seeds: &[u64],
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, IoError> {
    std::fs::create_dir_all(out_dir).map_err(|source| IoError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let mut manifest = Vec::with_capacity(grid.len() * seeds.len());
    for (g, spec) in grid.iter().enumerate() {
        for &seed in seeds {
            let pair = generate(spec, seed)
                .map_err(|e| IoError::Other(format!("grid entry {g}, seed {seed}: {e}")))?;
            let name = format!("pair_g{g:03}_s{seed:06}.json");
            write_json_compact(&out_dir.join(&name), &pair)?;
            manifest.push(ManifestEntry {
                path: name,
                bin: pair.bin().label().to_string(),
            });
        }
    }
    write_json_compact(&out_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Resolves manifest entries relative to the manifest's directory.
pub fn manifest_paths(manifest_path: &Path, entries: &[ManifestEntry]) -> Vec<PathBuf> {
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    entries.iter().map(|e| base.join(&e.path)).collect()
}
