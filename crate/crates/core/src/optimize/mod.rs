//! Differentiable UV rendering, the compound image loss, and latent
//! optimization (inversion toward the initial texture, then correction
//! against the input image).

mod features;
mod latent;
mod loss;
mod render;

pub use features::{feature_len, features, features_vjp, level_offset, level_sizes, LEVELS};
pub use latent::{
    correct_in, correct_latent, invert_latent, render_loss, Adam, LatentResult, LatentSpace, LossTrace, OptimSchedule,
    TraceRow,
};
pub use loss::{total_loss, LossEval, LossTerms, LossWeights, PixelNorm, RegNorm, REG_EPS};
pub use render::{build_render_map, RenderMap};
