//! Stage-by-stage pipeline with on-disk artifacts.
//!
//! Output layout:
//!
//! ```text
//! <output>/
//!   config.json              effective configuration (output path omitted)
//!   generator/model.texgen   only when no model path is configured
//!   register/mesh.obj        registered template
//!   project/texture.png      partial texture T_proj (+ texture.mask.png)
//!   inpaint/texture.png      completed texture T_sd
//!   fuse/texture.png         fused initialization T_init
//!   invert/texture.png       inverted texture, latent.bin
//!   correct/texture.png      corrected texture T_opt, latent.bin
//!   enhance/texture.png      repainted texture
//!   final/texture.png        enhance output, or T_opt when enhancement is off
//!   traces/invert.csv        loss traces
//!   traces/correct.csv
//!   report.json              metrics
//! ```
//!
//! Every stage directory holds a `stamp.json` fingerprint of its inputs. A
//! stage whose stamp matches and whose outputs exist is not recomputed, and
//! every stage reads its inputs back from disk, so a resumed run and a fresh
//! run produce the same bytes.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use uvrecon::enhance::{enhance, NoisePrior};
use uvrecon::fusion::fuse;
use uvrecon::generator::{fit_pca, FitParams, GeneratorModel, Layout, SyntheticCorpus};
use uvrecon::inpaint::inpaint;
use uvrecon::metrics::MetricReport;
use uvrecon::optimize::{
    build_render_map, correct_in, correct_latent, invert_latent, LatentSpace, LossTrace, RenderMap,
};
use uvrecon::projection::{build_uv_coverage, erode_mask, project_texture};
use uvrecon::registration::{load_landmarks, nicp_register_with_report};
use uvrecon::{Camera, ChartMask, Image, Mesh, TextureMap};

use crate::config::{invalid, PipelineConfig, Prior, ProjectionSettings, Stages, SCHEMA_VERSION};

pub const LOCK_FILE: &str = ".lock";

/// Exclusive ownership of an output directory for the lifetime of a run.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => bail!(
                "{} is locked by another run (delete {} if that run is gone)",
                dir.display(),
                path.display()
            ),
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn value_digest(v: &Value) -> String {
    hex(&Sha256::digest(serde_json::to_vec(v).expect("json serializes")))
}

pub fn write_latent(path: &Path, latent: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = latent.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_latent(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() % 8 != 0 {
        bail!("{} is not a whole number of f64 values", path.display());
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

pub fn write_trace(path: &Path, trace: &LossTrace) -> Result<()> {
    fs::write(path, trace.to_csv()).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: String,
    fingerprint: String,
}

struct Workspace<'a> {
    root: &'a Path,
    computed: Vec<String>,
    reused: Vec<String>,
}

impl Workspace<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Runs `compute` unless the stage stamp matches `inputs` and all
    /// `outputs` exist. Returns the stage fingerprint.
    fn stage(&mut self, name: &str, inputs: Value, outputs: &[&str], compute: impl FnOnce() -> Result<()>) -> Result<String> {
        let fingerprint = value_digest(&json!({ "stage": name, "inputs": inputs }));
        let dir = self.path(name);
        let stamp_path = dir.join("stamp.json");
        let current = fs::read_to_string(&stamp_path)
            .ok()
            .and_then(|t| serde_json::from_str::<Stamp>(&t).ok());
        let complete = outputs.iter().all(|o| self.path(o).is_file());
        if complete && current.is_some_and(|s| s.fingerprint == fingerprint) {
            info!("stage {name}: up to date");
            self.reused.push(name.to_string());
            return Ok(fingerprint);
        }
        if stamp_path.exists() {
            fs::remove_file(&stamp_path)?;
        }
        fs::create_dir_all(&dir)?;
        fs::create_dir_all(self.path("traces"))?;
        info!("stage {name}: running");
        compute().with_context(|| format!("stage `{name}` failed"))?;
        for o in outputs {
            if !self.path(o).is_file() {
                bail!("stage `{name}` did not produce {o}");
            }
        }
        let stamp = Stamp {
            stage: name.to_string(),
            fingerprint: fingerprint.clone(),
        };
        fs::write(&stamp_path, serde_json::to_string_pretty(&stamp)? + "\n")?;
        self.computed.push(name.to_string());
        Ok(fingerprint)
    }
}

/// Metrics of one texture artifact against the reference texture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextureMetrics {
    pub artifact: String,
    pub path: String,
    /// Over every valid reference texel.
    pub full: MetricReport,
    /// Over the valid reference texels seen in the input image.
    pub visible: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimSummary {
    pub stage: String,
    pub steps: usize,
    pub best_step: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub stages: Stages,
    pub texture_size: usize,
    /// Empty without a reference texture.
    pub textures: Vec<TextureMetrics>,
    /// Final texture rendered through the registered mesh against the input
    /// image, on covered pixels.
    pub render: MetricReport,
    pub optimization: Vec<OptimSummary>,
}

impl Report {
    pub fn texture(&self, artifact: &str) -> Option<&TextureMetrics> {
        self.textures.iter().find(|t| t.artifact == artifact)
    }
}

pub struct PipelineOutcome {
    pub report: Report,
    pub computed: Vec<String>,
    pub reused: Vec<String>,
}

fn fit_model(cfg: &PipelineConfig, path: &Path) -> Result<()> {
    let layout = match &cfg.paths.layout {
        Some(p) => Layout::load(p)?,
        None => Layout::default_face(),
    };
    let g = &cfg.generator;
    let corpus = SyntheticCorpus {
        layout,
        style: g.style.clone(),
        side: cfg.texture_size,
        count: g.corpus_count,
    };
    let model = fit_pca(
        &corpus,
        &FitParams {
            d_w: g.d_w,
            d_z: g.d_z,
            mapper_seed: g.mapper_seed,
        },
    )?;
    model.save(path)?;
    Ok(())
}

fn load_texture(path: &Path) -> Result<TextureMap> {
    TextureMap::load(path).with_context(|| format!("loading {}", path.display()))
}

fn texture_with_mask(side: usize, data: Vec<f64>, chart: &ChartMask) -> Result<TextureMap> {
    Ok(TextureMap::from_parts(side, data, chart.as_weights())?)
}

pub fn summarize(stage: &str, trace: &LossTrace, best_step: usize) -> OptimSummary {
    let totals = trace.totals();
    OptimSummary {
        stage: stage.to_string(),
        steps: totals.len().saturating_sub(1),
        best_step,
        initial_loss: totals.first().copied().unwrap_or(f64::NAN),
        best_loss: totals.get(best_step).copied().unwrap_or(f64::NAN),
    }
}

fn read_trace_summary(stage: &str, path: &Path) -> Result<OptimSummary> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let totals: Vec<f64> = text
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').nth(1)?.parse().ok())
        .collect();
    let best_step = totals
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, &v)| match acc {
            Some((_, b)) if b <= v => acc,
            _ => Some((i, v)),
        })
        .map_or(0, |(i, _)| i);
    Ok(OptimSummary {
        stage: stage.to_string(),
        steps: totals.len().saturating_sub(1),
        best_step,
        initial_loss: totals.first().copied().unwrap_or(f64::NAN),
        best_loss: totals.get(best_step).copied().unwrap_or(f64::NAN),
    })
}

/// Runs every enabled stage in order, then writes `report.json`.
/// Projection followed by the optional mask erosion. Texels dropped by the
/// erosion are zeroed like every other invalid texel.
pub fn project_observed(
    mesh: &Mesh,
    camera: &Camera,
    image: &Image,
    s: usize,
    settings: &ProjectionSettings,
) -> Result<TextureMap> {
    let mut t = project_texture(mesh, camera, image, s, settings.depth_bias)?;
    if settings.erode > 0 {
        let chart = build_uv_coverage(mesh, s)?.chart_mask();
        t.mask = erode_mask(&t.mask, &chart, settings.erode);
        for i in 0..t.texel_count() {
            if !t.is_valid(i) {
                t.set_texel(i, [0.0; 3]);
            }
        }
    }
    Ok(t)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let out = cfg.output_dir()?.to_path_buf();
    let _lock = OutputLock::acquire(&out)?;
    let camera = cfg.camera.clone().expect("validated");
    let s = cfg.texture_size;
    let stages = cfg.stages;
    let mut ws = Workspace {
        root: &out,
        computed: Vec::new(),
        reused: Vec::new(),
    };

    let mut effective = cfg.clone();
    effective.paths.output = None;
    fs::write(out.join("config.json"), effective.to_json() + "\n")?;

    // Generator.
    let (model_path, model_fp) = match &cfg.paths.model {
        Some(p) => (p.clone(), file_digest(p)?),
        None => {
            let layout_fp = cfg.paths.layout.as_deref().map(file_digest).transpose()?;
            let path = ws.path("generator/model.texgen");
            let fp = ws.stage(
                "generator",
                json!({ "settings": cfg.generator, "size": s, "layout": layout_fp }),
                &["generator/model.texgen"],
                || fit_model(cfg, &path),
            )?;
            (path, fp)
        }
    };
    let model = GeneratorModel::load(&model_path).with_context(|| format!("loading {}", model_path.display()))?;
    if model.side != s {
        return Err(invalid(format!(
            "generator model has side {} but texture_size is {s}",
            model.side
        )));
    }

    // Registration.
    let template_path = cfg.paths.template.clone().expect("validated");
    let target_path = cfg.paths.target.clone().expect("validated");
    let (mesh_path, mesh_fp) = if stages.register {
        let mut params = cfg.registration.clone();
        if let Some(p) = &cfg.paths.landmarks {
            params.landmarks = load_landmarks(p)?;
        }
        let inputs = json!({
            "template": file_digest(&template_path)?,
            "target": file_digest(&target_path)?,
            "params": params,
        });
        let mesh_out = ws.path("register/mesh.obj");
        let report_out = ws.path("register/report.json");
        let fp = ws.stage("register", inputs, &["register/mesh.obj", "register/report.json"], || {
            let template = Mesh::load_obj(&template_path)?;
            let target = Mesh::load_obj(&target_path)?;
            let (registered, report) = nicp_register_with_report(&template, &target, &params)?;
            registered.save_obj(&mesh_out)?;
            fs::write(&report_out, serde_json::to_string_pretty(&report)? + "\n")?;
            Ok(())
        })?;
        (mesh_out, fp)
    } else {
        let fp = file_digest(&template_path)?;
        (template_path, fp)
    };
    let mesh = Mesh::load_obj(&mesh_path)?;
    let chart = build_uv_coverage(&mesh, s)?.chart_mask();

    // Projection.
    let image_path = cfg.paths.image.clone().expect("validated");
    let proj_path = ws.path("project/texture.png");
    let proj_fp = ws.stage(
        "project",
        json!({
            "mesh": mesh_fp,
            "image": file_digest(&image_path)?,
            "camera": camera,
            "size": s,
            "projection": cfg.projection,
        }),
        &["project/texture.png", "project/texture.mask.png"],
        || Ok(project_observed(&mesh, &camera, &Image::load_png(&image_path)?, s, &cfg.projection)?.save(&proj_path)?),
    )?;
    let t_proj = load_texture(&proj_path)?;

    // Initialization.
    let (start_path, start_fp) = if stages.init {
        let sd_path = ws.path("inpaint/texture.png");
        let sd_fp = ws.stage(
            "inpaint",
            json!({ "project": proj_fp, "inpainter": cfg.inpainter, "poisson": cfg.poisson }),
            &["inpaint/texture.png"],
            || Ok(inpaint(&t_proj, &chart, &cfg.inpainter, &cfg.poisson)?.save(&sd_path)?),
        )?;
        let t_sd = load_texture(&sd_path)?;
        let init_path = ws.path("fuse/texture.png");
        let init_fp = ws.stage(
            "fuse",
            json!({ "inpaint": sd_fp, "poisson": cfg.poisson }),
            &["fuse/texture.png"],
            || {
                let (t, report) = fuse(&t_proj, &t_sd, &chart, &cfg.poisson)?;
                info!(
                    "fuse: {} texels, {} islands, {} iterations",
                    report.region_size, report.island_count, report.iterations
                );
                Ok(t.save(&init_path)?)
            },
        )?;
        (init_path, init_fp)
    } else {
        (proj_path.clone(), proj_fp.clone())
    };
    let start = load_texture(&start_path)?;

    // Latent search.
    let diffusion_prior = || -> Result<NoisePrior<'_>> {
        let schedule = cfg.enhance.schedule()?;
        let t_star = schedule.start_step(cfg.enhance.strength);
        Ok(NoisePrior {
            model: &model,
            base: start.data.clone(),
            schedule,
            t_star,
        })
    };
    let (invert_tex, invert_latent_path) = (ws.path("invert/texture.png"), ws.path("invert/latent.bin"));
    let mut invert_outputs = vec!["invert/texture.png", "invert/latent.bin"];
    if stages.prior == Prior::Generator {
        invert_outputs.push("traces/invert.csv");
    }
    let invert_fp = ws.stage(
        "invert",
        json!({
            "start": start_fp,
            "model": model_fp,
            "prior": stages.prior,
            "schedule": cfg.schedule,
            "enhance": (stages.prior == Prior::Diffusion).then_some(&cfg.enhance),
        }),
        &invert_outputs,
        || {
            match stages.prior {
                Prior::Generator => {
                    let r = invert_latent(&model, &start, &cfg.schedule)?;
                    write_trace(&out.join("traces/invert.csv"), &r.trace)?;
                    write_latent(&invert_latent_path, &r.latent)?;
                    r.texture.save(&invert_tex)?;
                }
                Prior::Diffusion => {
                    let prior = diffusion_prior()?;
                    let zero = vec![0.0; prior.dim()];
                    write_latent(&invert_latent_path, &zero)?;
                    texture_with_mask(s, prior.texture(&zero)?, &model.chart)?.save(&invert_tex)?;
                }
            }
            Ok(())
        },
    )?;

    // Correction.
    let image = Image::load_png(&image_path)?;
    let map: RenderMap = build_render_map(&mesh, &camera, s)?;
    let (opt_tex, opt_latent) = (ws.path("correct/texture.png"), ws.path("correct/latent.bin"));
    let correct_fp = ws.stage(
        "correct",
        json!({
            "invert": invert_fp,
            "mesh": mesh_fp,
            "image": file_digest(&image_path)?,
            "camera": camera,
            "loss": cfg.loss,
            "schedule": cfg.schedule,
        }),
        &["correct/texture.png", "correct/latent.bin", "traces/correct.csv"],
        || {
            let init = read_latent(&invert_latent_path)?;
            let (latent, texture, trace) = match stages.prior {
                Prior::Generator => {
                    let r = correct_latent(&model, &init, &map, &image, &cfg.loss, &cfg.schedule)?;
                    (r.latent, r.texture, r.trace)
                }
                Prior::Diffusion => {
                    let prior = diffusion_prior()?;
                    let (latent, _, trace) = correct_in(&prior, &init, &map, &image, &cfg.loss, &cfg.schedule)?;
                    let texture = texture_with_mask(s, prior.texture(&latent)?, &model.chart)?;
                    (latent, texture, trace)
                }
            };
            write_trace(&out.join("traces/correct.csv"), &trace)?;
            write_latent(&opt_latent, &latent)?;
            Ok(texture.save(&opt_tex)?)
        },
    )?;
    let t_opt = load_texture(&opt_tex)?;

    // Enhancement.
    let (final_source, final_fp) = if stages.enhance {
        let enh_path = ws.path("enhance/texture.png");
        let fp = ws.stage(
            "enhance",
            json!({ "correct": correct_fp, "start": start_fp, "project": proj_fp, "enhance": cfg.enhance }),
            &["enhance/texture.png"],
            || {
                let mut visible = start.clone();
                visible.mask = t_proj.mask.clone();
                Ok(enhance(&t_opt, &model, Some(&visible), &cfg.enhance)?.save(&enh_path)?)
            },
        )?;
        (enh_path, fp)
    } else {
        (opt_tex.clone(), correct_fp)
    };
    let final_path = ws.path("final/texture.png");
    ws.stage(
        "final",
        json!({ "source": final_fp }),
        &["final/texture.png", "final/texture.mask.png"],
        || {
            fs::copy(&final_source, &final_path)?;
            fs::copy(TextureMap::mask_path(&final_source), TextureMap::mask_path(&final_path))?;
            Ok(())
        },
    )?;
    let final_tex = load_texture(&final_path)?;

    // Report.
    let mut textures = Vec::new();
    if let Some(gt_path) = &cfg.paths.ground_truth {
        let gt = load_texture(gt_path)?;
        if gt.side != s {
            return Err(invalid(format!("ground truth has side {} but texture_size is {s}", gt.side)));
        }
        let visible: Vec<f64> = gt.mask.iter().zip(&t_proj.mask).map(|(a, b)| a * b).collect();
        let mut artifacts = vec![("t_proj", "project/texture.png")];
        if stages.init {
            artifacts.push(("t_sd", "inpaint/texture.png"));
            artifacts.push(("t_init", "fuse/texture.png"));
        }
        artifacts.extend([
            ("w_init", "invert/texture.png"),
            ("t_opt", "correct/texture.png"),
        ]);
        if stages.enhance {
            artifacts.push(("t_enh", "enhance/texture.png"));
        }
        artifacts.push(("final", "final/texture.png"));
        for (artifact, rel) in artifacts {
            let t = load_texture(&ws.path(rel))?;
            textures.push(TextureMetrics {
                artifact: artifact.to_string(),
                path: rel.to_string(),
                full: MetricReport::compare(artifact, s, s, &t.data, &gt.data, Some(("reference texels", &gt.mask)))?,
                visible: MetricReport::compare(artifact, s, s, &t.data, &gt.data, Some(("visible texels", &visible)))?,
            });
        }
    }
    let (rendered, coverage) = map.render(&final_tex)?;
    let render = MetricReport::compare(
        "final render",
        image.width,
        image.height,
        &rendered.data,
        &image.data,
        Some(("covered pixels", &coverage)),
    )?;
    let mut optimization = Vec::new();
    if stages.prior == Prior::Generator {
        optimization.push(read_trace_summary("invert", &ws.path("traces/invert.csv"))?);
    }
    optimization.push(read_trace_summary("correct", &ws.path("traces/correct.csv"))?);
    let report = Report {
        schema_version: SCHEMA_VERSION,
        stages,
        texture_size: s,
        textures,
        render,
        optimization,
    };
    let mut f = File::create(out.join("report.json"))?;
    f.write_all((serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    Ok(PipelineOutcome {
        report,
        computed: ws.computed,
        reused: ws.reused,
    })
}
