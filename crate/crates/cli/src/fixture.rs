//! Synthetic end-to-end scene: a fitted generator, a ground-truth texture
//! drawn from it, the head mesh rendered from a frontal camera, and a
//! pipeline config pointing at all of it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use uvrecon::fixtures::head_mesh;
use uvrecon::generator::{fit_pca, FitParams, GeneratorModel, Layout, StyleParams, SyntheticCorpus};
use uvrecon::image::BitDepth;
use uvrecon::optimize::build_render_map;
use uvrecon::{Camera, Mesh, TextureMap};

use crate::config::{invalid, GeneratorSettings, PipelineConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureParams {
    pub texture_size: usize,
    pub image_size: usize,
    /// Head tessellation: segments around and bands from crown to chin.
    pub lon: usize,
    pub lat: usize,
    pub corpus_count: usize,
    pub corpus_seed: u64,
    pub d_w: usize,
    pub d_z: usize,
    pub mapper_seed: u64,
    /// Seed of the ground-truth pre-mapper latent.
    pub latent_seed: u64,
    pub camera_distance: f64,
    pub fov_y_deg: f64,
    /// Yaw of the template relative to the target, degrees.
    pub template_yaw_deg: f64,
    pub template_scale: f64,
    pub template_offset: [f64; 3],
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            texture_size: 256,
            image_size: 512,
            lon: 64,
            lat: 48,
            corpus_count: 200,
            corpus_seed: 1,
            d_w: 64,
            d_z: 64,
            mapper_seed: 42,
            latent_seed: 2024,
            camera_distance: 4.5,
            fov_y_deg: 30.0,
            template_yaw_deg: 4.0,
            template_scale: 1.05,
            template_offset: [0.04, -0.03, 0.02],
        }
    }
}

impl FixtureParams {
    pub fn validate(&self) -> Result<()> {
        let s = self.texture_size;
        if !(64..=1024).contains(&s) || !s.is_power_of_two() {
            return Err(invalid(format!("texture size must be a power of two in [64, 1024], got {s}")));
        }
        if self.image_size < 16 || self.lon < 3 || self.lat < 2 {
            return Err(invalid("image size must be at least 16 and the head needs lon >= 3, lat >= 2"));
        }
        if self.corpus_count < 2 || self.d_w == 0 || self.d_z == 0 {
            return Err(invalid("corpus_count must be at least 2 and d_w, d_z positive"));
        }
        if !(self.camera_distance > 0.0 && self.fov_y_deg > 0.0 && self.fov_y_deg < 180.0 && self.template_scale > 0.0) {
            return Err(invalid("camera distance, field of view and template scale must be positive"));
        }
        Ok(())
    }
}

/// Files written by [`make_fixture`].
#[derive(Debug, Clone)]
pub struct Fixture {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub config: PipelineConfig,
    /// Ground-truth latent before file quantization.
    pub latent: Vec<f64>,
}

fn similarity(mesh: &Mesh, yaw_deg: f64, scale: f64, offset: [f64; 3]) -> Mesh {
    let (s, c) = yaw_deg.to_radians().sin_cos();
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        let (x, y, z) = (v.x, v.y, v.z);
        v.x = scale * (c * x + s * z) + offset[0];
        v.y = scale * y + offset[1];
        v.z = scale * (-s * x + c * z) + offset[2];
    }
    out
}

/// Pipeline settings of the shipped fixture. Departures from the library
/// defaults: a larger step size so the latent can travel its whole range in
/// the default step counts, a weaker pull toward the initial latent, a 2-texel
/// erosion of the visibility mask, and noise-free repainting.
pub fn fixture_config(params: &FixtureParams, camera: Camera) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        camera: Some(camera),
        texture_size: params.texture_size,
        generator: GeneratorSettings {
            corpus_count: params.corpus_count,
            style: StyleParams {
                seed: params.corpus_seed,
                ..StyleParams::default()
            },
            d_w: params.d_w,
            d_z: params.d_z,
            mapper_seed: params.mapper_seed,
        },
        ..PipelineConfig::default()
    };
    cfg.schedule.lr = 0.01;
    cfg.loss.reg = 1e-4;
    cfg.projection.erode = 2;
    cfg.enhance.deterministic_noise = true;
    let p = &mut cfg.paths;
    p.template = Some("template.obj".into());
    p.target = Some("target.obj".into());
    p.image = Some("image.png".into());
    p.model = Some("model.texgen".into());
    p.ground_truth = Some("gt.png".into());
    p.output = Some("run".into());
    cfg
}

/// Writes the scene into `dir` and returns the config (with relative paths,
/// as stored in `dir/config.json`).
pub fn make_fixture(dir: &Path, params: &FixtureParams) -> Result<Fixture> {
    params.validate()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let s = params.texture_size;

    let corpus = SyntheticCorpus {
        layout: Layout::default_face(),
        style: StyleParams {
            seed: params.corpus_seed,
            ..StyleParams::default()
        },
        side: s,
        count: params.corpus_count,
    };
    let fit = FitParams {
        d_w: params.d_w,
        d_z: params.d_z,
        mapper_seed: params.mapper_seed,
    };
    let model_path = dir.join("model.texgen");
    fit_pca(&corpus, &fit)?.save(&model_path)?;
    let model = GeneratorModel::load(&model_path)?;

    let z = model.sample_z(params.latent_seed);
    let latent = model.map_z_to_w(&z)?;
    let gt_path = dir.join("gt.png");
    model.gen_texture(&latent)?.save(&gt_path)?;
    let gt = TextureMap::load(&gt_path)?;

    let target = head_mesh(params.lon, params.lat);
    target.save_obj(dir.join("target.obj"))?;
    similarity(&target, params.template_yaw_deg, params.template_scale, params.template_offset)
        .save_obj(dir.join("template.obj"))?;

    let (lo, hi) = target.bbox();
    let camera = Camera::orbit(
        params.image_size,
        params.image_size,
        params.camera_distance,
        params.fov_y_deg,
        0.0,
        0.0,
        (lo + hi) / 2.0,
    );
    let (image, _) = build_render_map(&target, &camera, s)?.render(&gt)?;
    image.save_png(dir.join("image.png"), BitDepth::Sixteen)?;

    let config = fixture_config(params, camera);
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_json() + "\n")?;
    fs::write(
        dir.join("fixture.json"),
        serde_json::to_string_pretty(params).expect("params serialize") + "\n",
    )?;
    Ok(Fixture {
        dir: dir.to_path_buf(),
        config_path,
        config,
        latent,
    })
}
