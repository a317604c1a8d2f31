//! Mesh and camera primitives shared by every stage.

mod camera;
mod mesh;
mod raster;
mod sample;

pub use camera::{Camera, Projection};
pub use mesh::Mesh;
pub use raster::{
    barycentric_2d, rasterize_depth, rasterize_depth_rows, DepthBuffer, ScreenTriangle,
    BEHIND_CAMERA_EPS,
};
pub use sample::{bilinear_sample, bilinear_taps, BilinearTaps};
pub(crate) use raster::project_triangles;
