//! Rigid-body and similarity-transform math: SO(3)/SE(3) representations,
//! exponential/log maps, Sim(3) trajectory alignment and pose-error
//! computation.
//!
//! Poses are camera-to-world throughout, so a camera's center is its
//! translation component. All operations are pure functions on immutable
//! values.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3, SVD};
use num_traits::Float;
use thiserror::Error;

use crate::lie;
use crate::scalar::Scalar;

/// Rotation error above which a pose is flagged as a mirror pose
/// (a ~180-degree degenerate solution that still renders plausibly).
pub const MIRROR_POSE_THRESHOLD_DEG: f64 = 170.0;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("trajectory length mismatch: {estimated} estimated vs {reference} reference")]
    LengthMismatch { estimated: usize, reference: usize },
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("trajectory parse error at line {line}: {message}")]
    TrajectoryParse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---- types -------------------------------------------------------------

/// 3x3 orthonormal matrix with determinant +1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3<T: Scalar>(Matrix3<T>);

impl<T: Scalar> Rotation3<T> {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Validates orthonormality and determinant before accepting.
    pub fn from_matrix(m: Matrix3<T>) -> Result<Self, GeometryError> {
        let tol = Float::max(T::of_f64(1e-9), T::epsilon() * T::of_f64(64.0));
        let gram = m * m.transpose();
        let mut max_dev = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { T::one() } else { T::zero() };
                max_dev = Float::max(max_dev, Float::abs(gram[(i, j)] - target));
            }
        }
        if max_dev > tol {
            return Err(GeometryError::NotARotation(format!(
                "R*R^T deviates from identity by {}",
                max_dev.to_f64_lossy()
            )));
        }
        let det = m.determinant();
        if Float::abs(det - T::one()) > tol {
            return Err(GeometryError::NotARotation(format!(
                "determinant {} != +1",
                det.to_f64_lossy()
            )));
        }
        Ok(Rotation3(m))
    }

    /// For matrices produced by composition of valid rotations.
    pub(crate) fn from_matrix_unchecked(m: Matrix3<T>) -> Self {
        Rotation3(m)
    }

    /// Rodrigues rotation about `omega` (axis times angle in radians).
    pub fn from_axis_angle(omega: Vector3<T>) -> Self {
        Rotation3(exp_so3(omega))
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    pub fn compose(&self, other: &Self) -> Self {
        Rotation3(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        self.0 * v
    }

    /// Geodesic angle to another rotation, in radians:
    /// `acos((trace(R1^T R2) - 1) / 2)`.
    pub fn geodesic_angle(&self, other: &Self) -> T {
        let rel = self.0.transpose() * other.0;
        let tr = rel[(0, 0)] + rel[(1, 1)] + rel[(2, 2)];
        let c = (tr - T::one()) / T::of_f64(2.0);
        Float::acos(Float::min(Float::max(c, -T::one()), T::one()))
    }

    pub fn cast<U: Scalar>(&self) -> Rotation3<U> {
        Rotation3(self.0.map(|x| U::of_f64(x.to_f64_lossy())))
    }
}

/// Rigid camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSE3<T: Scalar> {
    pub rotation: Rotation3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> PoseSE3<T> {
    pub fn identity() -> Self {
        PoseSE3 {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<T>, translation: Vector3<T>) -> Self {
        PoseSE3 {
            rotation,
            translation,
        }
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        self.translation
    }

    pub fn compose(&self, other: &Self) -> Self {
        PoseSE3 {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        PoseSE3 {
            translation: -rt.apply(&self.translation),
            rotation: rt,
        }
    }

    pub fn apply_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(p) + self.translation
    }

    pub fn cast<U: Scalar>(&self) -> PoseSE3<U> {
        PoseSE3 {
            rotation: self.rotation.cast(),
            translation: self.translation.map(|x| U::of_f64(x.to_f64_lossy())),
        }
    }
}

/// se(3) tangent element: axis-angle rotation plus translation part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist6<T: Scalar> {
    pub omega: Vector3<T>,
    pub v: Vector3<T>,
}

impl<T: Scalar> Twist6<T> {
    pub fn zero() -> Self {
        Twist6 {
            omega: Vector3::zeros(),
            v: Vector3::zeros(),
        }
    }

    pub fn new(omega: Vector3<T>, v: Vector3<T>) -> Self {
        Twist6 { omega, v }
    }

    pub fn from_slice(x: &[T]) -> Self {
        assert_eq!(x.len(), 6, "twist needs 6 components");
        Twist6 {
            omega: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_array(&self) -> [T; 6] {
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        ]
    }

    pub fn norm(&self) -> T {
        Float::sqrt(self.omega.norm_squared() + self.v.norm_squared())
    }
}

/// Similarity transform: scale, rotation, translation.
#[derive(Clone, Copy, Debug)]
pub struct Sim3<T: Scalar> {
    scale: T,
    pub rotation: Rotation3<T>,
    pub translation: Vector3<T>,
}

impl<T: Scalar> Sim3<T> {
    pub fn identity() -> Self {
        Sim3 {
            scale: T::one(),
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(
        scale: T,
        rotation: Rotation3<T>,
        translation: Vector3<T>,
    ) -> Result<Self, GeometryError> {
        if !(scale > T::zero()) || !Float::is_finite(scale) {
            return Err(GeometryError::NonPositiveScale(scale.to_f64_lossy()));
        }
        Ok(Sim3 {
            scale,
            rotation,
            translation,
        })
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn apply_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(p) * self.scale + self.translation
    }

    /// Map a camera-to-world pose into this similarity's target frame:
    /// the rotation composes, the center transforms as a point.
    pub fn apply_pose(&self, pose: &PoseSE3<T>) -> PoseSE3<T> {
        PoseSE3 {
            rotation: self.rotation.compose(&pose.rotation),
            translation: self.apply_point(&pose.translation),
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_scale = T::one() / self.scale;
        Sim3 {
            scale: inv_scale,
            translation: -(rt.apply(&self.translation) * inv_scale),
            rotation: rt,
        }
    }
}

// ---- exponential / logarithm maps ---------------------------------------

fn hat<T: Scalar>(w: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -w.z,
        w.y,
        w.z,
        T::zero(),
        -w.x,
        -w.y,
        w.x,
        T::zero(),
    )
}

fn exp_so3<T: Scalar>(omega: Vector3<T>) -> Matrix3<T> {
    let u = omega.norm_squared();
    let omega_hat = hat(&omega);
    Matrix3::identity() + omega_hat * lie::lie_a(u) + omega_hat * omega_hat * lie::lie_b(u)
}

/// SE(3) exponential map (Rodrigues rotation plus the V-matrix
/// translation). The zero twist maps to the identity pose with
/// translation `v`; small angles use series expansions.
pub fn exp_se3<T: Scalar>(t: &Twist6<T>) -> PoseSE3<T> {
    let u = t.omega.norm_squared();
    let omega_hat = hat(&t.omega);
    let omega_hat2 = omega_hat * omega_hat;
    let rot = Matrix3::identity() + omega_hat * lie::lie_a(u) + omega_hat2 * lie::lie_b(u);
    let v_mat = Matrix3::identity() + omega_hat * lie::lie_b(u) + omega_hat2 * lie::lie_c(u);
    PoseSE3 {
        rotation: Rotation3::from_matrix_unchecked(rot),
        translation: v_mat * t.v,
    }
}

fn log_so3<T: Scalar>(rot: &Rotation3<T>) -> Vector3<T> {
    let m = rot.matrix();
    let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let c = Float::min(Float::max((tr - T::one()) / T::of_f64(2.0), -T::one()), T::one());
    let theta = Float::acos(c);
    let vee = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    if theta < T::of_f64(1e-6) {
        // omega = vee/2 * (1 + theta^2/12 + ...)
        let u = theta * theta;
        return vee * (T::of_f64(0.5) + u / T::of_f64(12.0));
    }
    if theta > T::of_f64(std::f64::consts::PI - 1e-2) {
        // Near pi the vee part loses precision; recover the axis from the
        // symmetric part and the signs from vee.
        let one_minus_c = T::one() - c;
        let sym = (*m + m.transpose()) * T::of_f64(0.5);
        let mut axis = Vector3::new(
            Float::sqrt(Float::max((sym[(0, 0)] - c) / one_minus_c, T::zero())),
            Float::sqrt(Float::max((sym[(1, 1)] - c) / one_minus_c, T::zero())),
            Float::sqrt(Float::max((sym[(2, 2)] - c) / one_minus_c, T::zero())),
        );
        // Fix relative signs from the off-diagonal products, anchored on
        // the largest component.
        let k = if axis.x >= axis.y && axis.x >= axis.z {
            0
        } else if axis.y >= axis.z {
            1
        } else {
            2
        };
        for i in 0..3 {
            if i != k && sym[(k, i)] < T::zero() {
                axis[i] = -axis[i];
            }
        }
        // Overall sign from vee when it carries signal.
        if vee[k] < T::zero() {
            axis = -axis;
        }
        let n = axis.norm();
        if n > T::zero() {
            return axis * (theta / n);
        }
        return Vector3::zeros();
    }
    vee * (theta / (T::of_f64(2.0) * Float::sin(theta)))
}

/// Coefficient of the squared-hat term in V^{-1}, as a function of
/// u = theta^2.
fn vinv_q<T: Scalar>(u: T) -> T {
    if u < T::of_f64(1e-4) {
        T::of_f64(1.0 / 12.0) + u / T::of_f64(720.0) + u * u / T::of_f64(30240.0)
    } else {
        (T::one() - lie::lie_a(u) / (T::of_f64(2.0) * lie::lie_b(u))) / u
    }
}

/// SE(3) logarithm; inverse of [`exp_se3`] for rotation angles below pi.
pub fn log_se3<T: Scalar>(pose: &PoseSE3<T>) -> Twist6<T> {
    let omega = log_so3(&pose.rotation);
    let u = omega.norm_squared();
    let omega_hat = hat(&omega);
    let vinv = Matrix3::identity() - omega_hat * T::of_f64(0.5)
        + omega_hat * omega_hat * vinv_q(u);
    Twist6 {
        omega,
        v: vinv * pose.translation,
    }
}

// ---- Sim(3) alignment ----------------------------------------------------

/// Closed-form (Umeyama) similarity aligning estimated camera centers to
/// reference centers: minimizes `sum_i || s R c_i + t - c'_i ||^2`.
///
/// Needs at least 3 poses with non-collinear centers.
pub fn align_sim3<T: Scalar>(
    estimated: &[PoseSE3<T>],
    reference: &[PoseSE3<T>],
) -> Result<Sim3<T>, GeometryError> {
    if estimated.len() != reference.len() {
        return Err(GeometryError::LengthMismatch {
            estimated: estimated.len(),
            reference: reference.len(),
        });
    }
    let n = estimated.len();
    if n < 3 {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "need at least 3 poses, got {n}"
        )));
    }
    let finite = |poses: &[PoseSE3<T>]| {
        poses.iter().all(|p| {
            p.translation.iter().all(|x| Float::is_finite(*x))
                && p.rotation.matrix().iter().all(|x| Float::is_finite(*x))
        })
    };
    if !finite(estimated) || !finite(reference) {
        return Err(GeometryError::DegenerateConfiguration(
            "trajectory contains non-finite poses".into(),
        ));
    }
    let nt = T::of_usize(n);
    let mut mu_x = Vector3::zeros();
    let mut mu_y = Vector3::zeros();
    for i in 0..n {
        mu_x += estimated[i].center();
        mu_y += reference[i].center();
    }
    mu_x /= nt;
    mu_y /= nt;

    let mut var_x = T::zero();
    let mut cov = Matrix3::zeros();
    for i in 0..n {
        let x = estimated[i].center() - mu_x;
        let y = reference[i].center() - mu_y;
        var_x += x.norm_squared();
        cov += y * x.transpose();
    }
    var_x /= nt;
    cov /= nt;

    if var_x <= T::of_f64(1e-24) {
        return Err(GeometryError::DegenerateConfiguration(
            "estimated camera centers are coincident".into(),
        ));
    }

    let svd = SVD::new(cov, true, true);
    let u = svd.u.ok_or_else(|| {
        GeometryError::DegenerateConfiguration("SVD failed on center covariance".into())
    })?;
    let v_t = svd.v_t.ok_or_else(|| {
        GeometryError::DegenerateConfiguration("SVD failed on center covariance".into())
    })?;
    let d = svd.singular_values;
    if !(d[0] > T::zero()) || d[1] <= d[0] * T::of_f64(1e-9) {
        return Err(GeometryError::DegenerateConfiguration(
            "camera centers are collinear or coincident".into(),
        ));
    }

    let mut s_diag = Vector3::new(T::one(), T::one(), T::one());
    if (u.determinant() * v_t.determinant()) < T::zero() {
        s_diag.z = -T::one();
    }
    let rot = u * Matrix3::from_diagonal(&s_diag) * v_t;
    let scale = (d[0] * s_diag.x + d[1] * s_diag.y + d[2] * s_diag.z) / var_x;
    if !(scale > T::zero()) {
        return Err(GeometryError::DegenerateConfiguration(format!(
            "alignment produced non-positive scale {}",
            scale.to_f64_lossy()
        )));
    }
    let rotation = Rotation3::from_matrix_unchecked(rot);
    let translation = mu_y - rotation.apply(&mu_x) * scale;
    Sim3::new(scale, rotation, translation)
}

// ---- pose errors ---------------------------------------------------------

/// Per-image rotation/translation errors after Sim(3) alignment.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct PoseErrorReport {
    /// Geodesic rotation error per image, degrees.
    pub rot_deg: Vec<f64>,
    /// Euclidean distance between aligned camera centers, reference units.
    pub trans: Vec<f64>,
    pub mean_rot_deg: f64,
    pub mean_trans: f64,
    /// Set when any image's rotation error exceeds 170 degrees.
    pub mirror_pose: bool,
}

/// Rotation error (geodesic angle, degrees) and translation error
/// (distance between camera centers) per image, after aligning the
/// estimated trajectory onto the reference with [`align_sim3`].
pub fn pose_errors<T: Scalar>(
    estimated: &[PoseSE3<T>],
    reference: &[PoseSE3<T>],
) -> Result<PoseErrorReport, GeometryError> {
    let g = align_sim3(estimated, reference)?;
    let mut rot_deg = Vec::with_capacity(estimated.len());
    let mut trans = Vec::with_capacity(estimated.len());
    for (est, reference) in estimated.iter().zip(reference.iter()) {
        let aligned = g.apply_pose(est);
        let angle = aligned.rotation.geodesic_angle(&reference.rotation);
        rot_deg.push(angle.to_f64_lossy().to_degrees());
        trans.push((aligned.center() - reference.center()).norm().to_f64_lossy());
    }
    let n = estimated.len() as f64;
    let mean_rot_deg = rot_deg.iter().sum::<f64>() / n;
    let mean_trans = trans.iter().sum::<f64>() / n;
    let mirror_pose = rot_deg.iter().any(|&r| r > MIRROR_POSE_THRESHOLD_DEG);
    Ok(PoseErrorReport {
        rot_deg,
        trans,
        mean_rot_deg,
        mean_trans,
        mirror_pose,
    })
}

// ---- trajectory file format ----------------------------------------------

/// Write poses as one line per image:
/// `image_id r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2`
/// (row-major 3x4). Floats render with shortest round-trip precision.
pub fn write_trajectory(
    path: &Path,
    entries: &[(u64, PoseSE3<f64>)],
) -> Result<(), GeometryError> {
    let mut out = String::new();
    out.push_str("# image_id r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2\n");
    for (id, pose) in entries {
        write!(out, "{id}").unwrap();
        let m = pose.rotation.matrix();
        for r in 0..3 {
            for c in 0..3 {
                write!(out, " {}", m[(r, c)]).unwrap();
            }
            write!(out, " {}", pose.translation[r]).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a trajectory file written by [`write_trajectory`] (or produced
/// externally in the same format). Rotations are validated and projected
/// to the nearest rotation matrix to absorb text-format rounding.
pub fn read_trajectory(path: &Path) -> Result<Vec<(u64, PoseSE3<f64>)>, GeometryError> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 13 {
            return Err(GeometryError::TrajectoryParse {
                line: lineno + 1,
                message: format!("expected 13 fields, got {}", fields.len()),
            });
        }
        let id: u64 = fields[0].parse().map_err(|e| GeometryError::TrajectoryParse {
            line: lineno + 1,
            message: format!("bad image id: {e}"),
        })?;
        let mut vals = [0.0f64; 12];
        for (i, f) in fields[1..].iter().enumerate() {
            vals[i] = f.parse().map_err(|e| GeometryError::TrajectoryParse {
                line: lineno + 1,
                message: format!("bad float {f:?}: {e}"),
            })?;
        }
        let m = Matrix3::new(
            vals[0], vals[1], vals[2], vals[4], vals[5], vals[6], vals[8], vals[9], vals[10],
        );
        let t = Vector3::new(vals[3], vals[7], vals[11]);
        let rotation = match Rotation3::from_matrix(m) {
            Ok(r) => r,
            Err(_) => {
                let projected = nearest_rotation(&m);
                Rotation3::from_matrix(projected).map_err(|_| GeometryError::TrajectoryParse {
                    line: lineno + 1,
                    message: "rotation block is not close to a rotation matrix".into(),
                })?
            }
        };
        entries.push((id, PoseSE3::new(rotation, t)));
    }
    Ok(entries)
}

/// Orthogonal projection onto SO(3) via SVD.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = SVD::new(*m, true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut s = Vector3::new(1.0, 1.0, 1.0);
    if (u.determinant() * v_t.determinant()) < 0.0 {
        s.z = -1.0;
    }
    u * Matrix3::from_diagonal(&s) * v_t
}
