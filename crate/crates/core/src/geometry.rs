//! Pose algebra: relative motion magnitudes, odometry consistency errors,
//! geometric averaging and the VIO-to-world rigid transform.
//!
//! Rotation convention: a [`Pose`] stores the camera centre in world
//! coordinates and a unit quaternion rotating world vectors into the camera
//! frame. Under this convention the reference-pose transform
//! `q_rel = q_apr⁻¹ · q_vio` is exactly the rotation taking VIO coordinates
//! to world coordinates.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Convergence tolerance (metres) for [`weiszfeld_median`].
pub const WEISZFELD_TOL: f64 = 1e-9;
/// Iteration cap for [`weiszfeld_median`].
pub const WEISZFELD_MAX_ITER: usize = 200;
/// Translations shorter than this are treated as sitting at the origin by
/// [`similarity`].
pub const SIMILARITY_EPS: f64 = 1e-9;
/// Smallest quaternion norm accepted before normalisation.
const MIN_QUAT_NORM: f64 = 1e-9;
/// Quaternions this close to unit norm are taken as already normalised.
const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("cannot average an empty set")]
    Empty,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("quaternion norm {0:e} too small to normalise")]
    DegenerateQuaternion(f64),
    #[error("weiszfeld tolerance must be positive, got {0}")]
    BadTolerance(f64),
}

/// A 6-DoF camera pose: camera centre in metres plus world-to-camera rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    translation: Vector3<f64>,
    rotation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn new(
        translation: Vector3<f64>,
        rotation: UnitQuaternion<f64>,
    ) -> Result<Self, GeometryError> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("translation"));
        }
        if !rotation.coords.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        Ok(Self {
            translation,
            rotation,
        })
    }

    /// Builds a pose from a translation and a quaternion in `(w, x, y, z)`
    /// order, normalising the quaternion unless it is within 1e-12 of unit
    /// norm.
    pub fn from_wxyz(translation: [f64; 3], wxyz: [f64; 4]) -> Result<Self, GeometryError> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        if !q.coords.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("rotation"));
        }
        let norm = q.norm();
        if norm < MIN_QUAT_NORM {
            return Err(GeometryError::DegenerateQuaternion(norm));
        }
        // leave already-unit input bit-for-bit alone so parse/print is a fixpoint
        let q = if (norm - 1.0).abs() <= UNIT_SLACK { q } else { q / norm };
        Self::new(Vector3::from(translation), UnitQuaternion::new_unchecked(q))
    }

    pub fn identity() -> Self {
        Self {
            translation: Vector3::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    /// Quaternion components in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }
}

/// Scalar odometry between two frames: how far and how much the camera turned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Odometry {
    /// Translation magnitude in metres.
    pub d_trans: f64,
    /// Rotation angle in degrees, in `[0, 180]`.
    pub d_rot: f64,
}

impl Odometry {
    pub fn between(a: &Pose, b: &Pose) -> Self {
        Self {
            d_trans: relative_translation(a, b),
            d_rot: relative_rotation_deg(a, b),
        }
    }
}

pub fn relative_translation(a: &Pose, b: &Pose) -> f64 {
    (b.translation - a.translation).norm()
}

/// Angle in degrees of the rotation `q_b⁻¹ q_a`, invariant to the sign of
/// either quaternion.
///
/// With the signs aligned, the chord `|q_a − q_b|` and `|q_a + q_b|` give the
/// angle as `4·atan2(|q_a − q_b|, |q_a + q_b|)`. Unlike `2·acos(|w|)` this
/// keeps full precision near zero and is exactly zero for equal inputs.
pub fn relative_rotation_deg(a: &Pose, b: &Pose) -> f64 {
    let (qa, mut qb) = (a.rotation.coords, b.rotation.coords);
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    (4.0 * (qa - qb).norm().atan2((qa + qb).norm()))
        .to_degrees()
        .clamp(0.0, 180.0)
}

/// Relative position error: difference of translation magnitudes.
pub fn rpe(u1: &Odometry, u2: &Odometry) -> f64 {
    (u1.d_trans - u2.d_trans).abs()
}

/// Relative orientation error: difference of rotation angles.
pub fn roe(u1: &Odometry, u2: &Odometry) -> f64 {
    (u1.d_rot - u2.d_rot).abs()
}

/// Geometric median by Weiszfeld iteration, started from the centroid.
///
/// Input points are first tested against the vertex optimality condition
/// `‖Σ_{i≠j} (p_i − p_j)/‖p_i − p_j‖‖ ≤ multiplicity(p_j)`, which resolves the
/// cases where the median is one of the inputs and plain Weiszfeld only
/// creeps towards it. If an iterate lands within `tol` of an input point
/// that point is returned.
pub fn weiszfeld_median(
    points: &[Vector3<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<Vector3<f64>, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::Empty);
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(GeometryError::BadTolerance(tol));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(GeometryError::NonFinite("points"));
    }
    if points.len() == 1 {
        return Ok(points[0]);
    }

    for pj in points {
        let mut pull = Vector3::zeros();
        let mut multiplicity = 0.0;
        for pi in points {
            let d = (pi - pj).norm();
            if d <= tol {
                multiplicity += 1.0;
            } else {
                pull += (pi - pj) / d;
            }
        }
        if pull.norm() <= multiplicity {
            return Ok(*pj);
        }
    }

    let objective = |y: &Vector3<f64>| points.iter().map(|p| (y - p).norm()).sum::<f64>();
    let mut y = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    // Over-relaxation factor along the Weiszfeld direction. Plain Weiszfeld
    // creeps when the median sits close to an input point; doubling the
    // step while the objective keeps falling restores fast convergence.
    let mut relax = 2.0;
    for _ in 0..max_iter {
        let mut num = Vector3::zeros();
        let mut den = 0.0;
        for p in points {
            let d = (y - p).norm();
            if d < tol {
                return Ok(*p);
            }
            num += p / d;
            den += 1.0 / d;
        }
        let plain = num / den;
        let stretched = y + (plain - y) * relax;
        let next = if relax > 1.0 && objective(&stretched) < objective(&plain) {
            relax *= 2.0;
            stretched
        } else {
            relax = (relax / 2.0).max(2.0);
            plain
        };
        let step = (next - y).norm();
        y = next;
        if step < tol {
            break;
        }
    }
    Ok(y)
}

/// Chordal mean of unit quaternions: sign-align to the first, average the
/// components and renormalise.
pub fn quaternion_mean(
    quats: &[UnitQuaternion<f64>],
) -> Result<UnitQuaternion<f64>, GeometryError> {
    let first = quats.first().ok_or(GeometryError::Empty)?;
    let mut acc = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    for q in quats {
        if q.coords.dot(&first.coords) < 0.0 {
            acc -= q.quaternion();
        } else {
            acc += q.quaternion();
        }
    }
    let norm = acc.norm();
    if norm < MIN_QUAT_NORM * quats.len() as f64 {
        return Err(GeometryError::DegenerateQuaternion(norm));
    }
    Ok(UnitQuaternion::new_unchecked(acc / norm))
}

/// Reference pose of a set: geometric median of the centres plus the chordal
/// mean of the rotations.
pub fn average_pose(poses: &[Pose]) -> Result<Pose, GeometryError> {
    let centres: Vec<_> = poses.iter().map(|p| p.translation).collect();
    let rotations: Vec<_> = poses.iter().map(|p| p.rotation).collect();
    let centre = weiszfeld_median(&centres, WEISZFELD_TOL, WEISZFELD_MAX_ITER)?;
    let rotation = quaternion_mean(&rotations)?;
    Pose::new(centre, rotation)
}

/// Rigid map from VIO coordinates to world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// `q_rel`, the rotation taking VIO axes to world axes.
    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rot_inv = self.rotation.inverse();
        Self::new(rot_inv, -(rot_inv * self.translation))
    }

    pub fn apply(&self, p_vio: &Pose) -> Pose {
        apply_transform(self, p_vio)
    }
}

/// Transform that maps `ref_vio` onto `ref_apr`:
/// `q_rel = q̄_apr⁻¹ q̄_vio`, `T = x̄_apr − R(q_rel) x̄_vio`.
pub fn compute_rigid_transform(ref_apr: &Pose, ref_vio: &Pose) -> RigidTransform {
    let q_rel = ref_apr.rotation.inverse() * ref_vio.rotation;
    let q_rel = UnitQuaternion::new_normalize(q_rel.into_inner());
    let translation = ref_apr.translation - q_rel.to_rotation_matrix() * ref_vio.translation;
    RigidTransform::new(q_rel, translation)
}

/// `x = R x_vio + T`, `q = q_vio q_rel⁻¹`.
pub fn apply_transform(t: &RigidTransform, p_vio: &Pose) -> Pose {
    let translation = t.rotation_matrix() * p_vio.translation + t.translation;
    let rotation = UnitQuaternion::new_normalize((p_vio.rotation * t.rotation.inverse()).into_inner());
    Pose {
        translation,
        rotation,
    }
}

/// Similarity score with a flag for the origin-degenerate case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity {
    pub score: f64,
    /// One of the translations was shorter than [`SIMILARITY_EPS`]; the
    /// translation cosine was taken as 1.
    pub degenerate: bool,
}

/// Mean of the translation cosine and the absolute quaternion cosine, in
/// `[-0.5, 1]`.
pub fn similarity_detailed(p_hat: &Pose, p_v2w: &Pose) -> Similarity {
    let (a, b) = (&p_hat.translation, &p_v2w.translation);
    let (na, nb) = (a.norm(), b.norm());
    let degenerate = na < SIMILARITY_EPS || nb < SIMILARITY_EPS;
    let trans_cos = if degenerate {
        1.0
    } else {
        (a.dot(b) / (na * nb)).clamp(-1.0, 1.0)
    };
    let rot_cos = p_hat
        .rotation
        .coords
        .dot(&p_v2w.rotation.coords)
        .abs()
        .min(1.0);
    Similarity {
        score: (trans_cos + rot_cos) / 2.0,
        degenerate,
    }
}

pub fn similarity(p_hat: &Pose, p_v2w: &Pose) -> f64 {
    similarity_detailed(p_hat, p_v2w).score
}
