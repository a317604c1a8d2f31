use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::BEHIND_CAMERA_EPS;
use crate::{Error, Result};

/// Pinhole camera without lens distortion.
///
/// A world point `p` maps to camera space as `R·p + t`; pixel coordinates follow
/// `(fx·x/z + cx, fy·y/z + cy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major 3×3 rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f64,
    pub y: f64,
    pub depth: f64,
}

impl Camera {
    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let r = &self.rotation;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image dimensions must be positive".into()));
        }
        let r = self.rotation_matrix();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err <= 1e-6) || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (deviation {err:e})"
            )));
        }
        Ok(())
    }

    pub fn to_camera_space(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation_matrix() * p + self.translation_vector()
    }

    /// Projects a world point; `None` when the point is at or behind the camera
    /// plane (`z ≤ 1e-9`).
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<Projection> {
        let q = self.to_camera_space(p);
        project_camera_space(self, &q)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation_matrix().transpose() * self.translation_vector())
    }

    /// Camera at `distance` in front of the origin looking down the world −z
    /// axis, with world +y up in the image. The vertical field of view is
    /// `fov_y_deg`.
    pub fn frontal(width: usize, height: usize, distance: f64, fov_y_deg: f64) -> Self {
        Self::orbit(width, height, distance, fov_y_deg, 0.0, 0.0, Vector3::zeros())
    }

    /// Camera orbiting `target` at `distance`; yaw rotates about the world y
    /// axis and pitch about the camera's horizontal axis (degrees). Yaw and pitch
    /// of zero place the camera on the +z axis.
    pub fn orbit(
        width: usize,
        height: usize,
        distance: f64,
        fov_y_deg: f64,
        yaw_deg: f64,
        pitch_deg: f64,
        target: Vector3<f64>,
    ) -> Self {
        let f = 0.5 * height as f64 / (0.5 * fov_y_deg.to_radians()).tan();
        let (yaw, pitch) = (yaw_deg.to_radians(), pitch_deg.to_radians());
        // Position on a sphere around the target.
        let eye = target
            + distance
                * Vector3::new(yaw.sin() * pitch.cos(), pitch.sin(), yaw.cos() * pitch.cos());
        let forward = (target - eye).normalize();
        let world_up = Vector3::new(0.0, 1.0, 0.0);
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        // Camera axes: x right, y down (image rows), z forward.
        let r = Matrix3::from_rows(&[right.transpose(), (-up).transpose(), forward.transpose()]);
        let t = -(r * eye);
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[(i, j)];
            }
        }
        Self {
            fx: f,
            fy: f,
            cx: 0.5 * width as f64,
            cy: 0.5 * height as f64,
            rotation,
            translation: [t.x, t.y, t.z],
            width,
            height,
        }
    }
}

pub(crate) fn project_camera_space(cam: &Camera, q: &Vector3<f64>) -> Option<Projection> {
    if !(q.z > BEHIND_CAMERA_EPS) {
        return None;
    }
    Some(Projection {
        x: cam.fx * q.x / q.z + cam.cx,
        y: cam.fy * q.y / q.z + cam.cy,
        depth: q.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> Camera {
        Camera {
            fx: 100.0,
            fy: 100.0,
            cx: 64.0,
            cy: 64.0,
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
            width: 128,
            height: 128,
        }
    }

    #[test]
    fn on_axis_point() {
        let p = identity_cam().project_point(&Vector3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.x, p.y, p.depth), (64.0, 64.0, 2.0));
    }

    #[test]
    fn off_axis_closed_form() {
        let p = identity_cam().project_point(&Vector3::new(0.5, 0.0, 2.0)).unwrap();
        assert_eq!((p.x, p.y, p.depth), (89.0, 64.0, 2.0));
    }

    #[test]
    fn behind_camera() {
        let c = identity_cam();
        assert!(c.project_point(&Vector3::new(0.3, 0.1, 0.0)).is_none());
        assert!(c.project_point(&Vector3::new(0.3, 0.1, -1.0)).is_none());
    }

    #[test]
    fn validation() {
        let mut c = identity_cam();
        assert!(c.validate().is_ok());
        c.rotation[0][0] = 1.1;
        assert!(c.validate().is_err());
        let mut c = identity_cam();
        c.fx = 0.0;
        assert!(c.validate().is_err());
        let mut c = identity_cam();
        c.width = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frontal_camera_looks_at_origin() {
        let c = Camera::frontal(64, 48, 3.0, 40.0);
        c.validate().unwrap();
        let p = c.project_point(&Vector3::zeros()).unwrap();
        assert!((p.x - 32.0).abs() < 1e-12 && (p.y - 24.0).abs() < 1e-12);
        assert!((p.depth - 3.0).abs() < 1e-12);
        // World +y appears above the center, +x to the right.
        let up = c.project_point(&Vector3::new(0.0, 0.5, 0.0)).unwrap();
        assert!(up.y < 24.0);
        let right = c.project_point(&Vector3::new(0.5, 0.0, 0.0)).unwrap();
        assert!(right.x > 32.0);
        assert!((c.center() - Vector3::new(0.0, 0.0, 3.0)).norm() < 1e-12);
    }

    #[test]
    fn orbit_keeps_target_centered() {
        let target = Vector3::new(0.1, -0.2, 0.3);
        let c = Camera::orbit(32, 32, 4.0, 30.0, 35.0, -20.0, target);
        c.validate().unwrap();
        let p = c.project_point(&target).unwrap();
        assert!((p.x - 16.0).abs() < 1e-9 && (p.y - 16.0).abs() < 1e-9);
    }
}
