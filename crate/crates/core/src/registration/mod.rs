//! Template-to-target mesh registration.

mod closest;
mod nicp;

pub use closest::{closest_point_on_triangle, ClosestPoint, TriangleBvh};
pub use nicp::{
    load_landmarks, nicp_register, nicp_register_with_report, Landmark, LevelReport, NicpParams,
    NicpReport,
};

use nalgebra::Vector3;

use crate::Mesh;

/// Exact nearest point on the target surface to `p`.
pub fn closest_surface_point(target: &Mesh, p: &Vector3<f64>) -> ClosestPoint {
    TriangleBvh::build(target).closest(p)
}
