//! Camera poses and canonically scaled homographies.

use nalgebra::{Matrix3, Point2, Vector3};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
const SINGULAR_REL_TOL: f64 = 1e-12;

/// Pinhole intrinsics plus the world-to-camera rigid transform of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    /// Focal length in pixels.
    pub focal: f64,
    /// Principal point (u, v) in pixels.
    pub principal: [f64; 2],
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation, meters.
    pub translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(
        focal: f64,
        principal: [f64; 2],
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let pose = Self {
            focal,
            principal,
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    /// Camera at `center` (world, meters) looking at `target`, with image
    /// rows pointing away from world +Z. A straight-down view falls back to
    /// image columns along world +X.
    pub fn look_at(
        focal: f64,
        principal: [f64; 2],
        center: Vector3<f64>,
        target: Vector3<f64>,
    ) -> Result<Self> {
        let forward = (target - center)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidPose("camera center equals target".into()))?;
        let up = Vector3::z();
        let right = forward
            .cross(&up)
            .try_normalize(1e-9)
            .unwrap_or_else(Vector3::x);
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * center);
        Self::new(focal, principal, rotation, translation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0) {
            return Err(Error::InvalidPose(format!("focal length {} must be > 0", self.focal)));
        }
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite())
            || self.principal.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidPose("non-finite pose entry".into()));
        }
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        if gram.amax() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {:e})",
                gram.amax()
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!("rotation determinant {det} != +1")));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        let [u, v] = self.principal;
        Matrix3::new(self.focal, 0.0, u, 0.0, self.focal, v, 0.0, 0.0, 1.0)
    }

    /// `f · r₃ᵀ t`, the scale of the closed-form camera-to-plane homography.
    pub fn lambda(&self) -> f64 {
        self.focal * self.rotation.column(2).dot(&self.translation)
    }

    /// World position of the optical center.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Projects a world point to pixel coordinates. `None` when the point is
    /// on or behind the camera's principal plane.
    pub fn project(&self, world: &Vector3<f64>) -> Option<Point2<f64>> {
        let cam = self.rotation * world + self.translation;
        if cam.z <= 0.0 {
            return None;
        }
        let img = self.intrinsics() * cam;
        Some(Point2::new(img.x / img.z, img.y / img.z))
    }

    /// Unit ray direction in world coordinates through pixel `(x, y)`.
    pub fn pixel_ray(&self, x: f64, y: f64) -> Vector3<f64> {
        let [u, v] = self.principal;
        let cam = Vector3::new((x - u) / self.focal, (y - v) / self.focal, 1.0);
        (self.rotation.transpose() * cam).normalize()
    }
}

/// A 3×3 projective map stored with its largest-magnitude entry equal to +1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(Matrix3<f64>);

impl Homography {
    pub fn identity() -> Self {
        Homography(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Maps a 2D point; `None` when it lands on the line at infinity.
    pub fn apply(&self, p: [f64; 2]) -> Option<[f64; 2]> {
        let q = self.0 * Vector3::new(p[0], p[1], 1.0);
        if q.z.abs() < f64::EPSILON * q.x.abs().max(q.y.abs()).max(1.0) {
            return None;
        }
        Some([q.x / q.z, q.y / q.z])
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .0
            .try_inverse()
            .ok_or(Error::SingularMatrix { det: self.0.determinant() })?;
        normalize_homography(&inv)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        normalize_homography(&(self.0 * other.0))
    }

    /// Largest absolute entry-wise difference to another homography.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.0 - other.0).amax()
    }
}

/// Rescales `m` so that its largest-magnitude entry is exactly +1.
///
/// Magnitude ties (within 1e-12 relative) resolve to the first such entry in
/// row-major order, so the result is invariant to any nonzero scaling of `m`.
pub fn normalize_homography(m: &Matrix3<f64>) -> Result<Homography> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix { det: f64::NAN });
    }
    let max = m.amax();
    let det = m.determinant();
    if max == 0.0 || det.abs() <= SINGULAR_REL_TOL * max * max * max {
        return Err(Error::SingularMatrix { det });
    }
    let cutoff = max * (1.0 - SINGULAR_REL_TOL);
    let pivot = (0..3)
        .flat_map(|r| (0..3).map(move |c| (r, c)))
        .map(|(r, c)| m[(r, c)])
        .find(|v| v.abs() >= cutoff)
        .expect("some entry attains the maximum");
    Ok(Homography(m.map(|v| v / pivot)))
}
