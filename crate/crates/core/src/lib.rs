//! Single-image UV texture reconstruction for fixed-topology head meshes.
//!
//! The pipeline runs in three stages:
//!
//! 1. **Initialization**: a template mesh is registered onto the target geometry
//!    ([`registration`]), the input image is sampled into a partial UV texture
//!    ([`projection`]), the holes are completed by an inpainter ([`inpaint`]) and
//!    the completion is blended back with the observed texels by Poisson fusion
//!    ([`fusion`]).
//! 2. **Correction**: the fused texture is inverted into the latent space of a
//!    texture generator ([`generator`]) and the latent is refined against the
//!    input image through a differentiable UV renderer ([`optimize`]).
//! 3. **Enhancement**: the corrected texture is partially re-noised and denoised
//!    with a deterministic diffusion sampler ([`enhance`]).
//!
//! [`metrics`] provides PSNR/SSIM for evaluating the results. Data-parallel inner
//! loops use rayon when the `parallel` feature is enabled (the default) and fall
//! back to sequential iteration otherwise; results are identical either way.

pub mod enhance;
pub mod error;
pub mod external;
pub mod fixtures;
pub mod fusion;
pub mod generator;
pub mod geometry;
pub mod image;
pub mod inpaint;
pub mod metrics;
pub mod optimize;
pub mod projection;
pub mod registration;
pub mod solver;
pub mod texture;

mod par;

pub use error::{Error, Result};
pub use geometry::{Camera, DepthBuffer, Mesh};
pub use image::Image;
pub use texture::{ChartMask, TextureMap};
