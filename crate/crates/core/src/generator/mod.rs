//! Texture generator: synthetic corpus, eigen-texture model and latent mapper.

mod container;
pub mod corpus;
pub mod model;

pub use container::MAGIC;
pub use corpus::{draw_texture, synth_corpus, synth_texture, Layout, Region, Shape, StyleParams, TextureStyle};
pub use model::{fit_pca, Corpus, FileCorpus, FitParams, GeneratorModel, Mapper, SyntheticCorpus};
