//! Subcommands. Each accepts `--config` and `--set key=value` overrides; stage
//! flags take precedence over both.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use uvrecon::enhance::enhance;
use uvrecon::fusion::fuse;
use uvrecon::generator::{fit_pca, synth_corpus, FileCorpus, FitParams, GeneratorModel, Layout, SyntheticCorpus};
use uvrecon::image::{load_mask_png, save_mask_png};
use uvrecon::inpaint::inpaint;
use uvrecon::metrics::MetricReport;
use uvrecon::optimize::{build_render_map, correct_latent, invert_latent};
use uvrecon::projection::{build_uv_coverage, synth_masks};
use uvrecon::registration::{load_landmarks, nicp_register_with_report};
use uvrecon::{Camera, Image, Mesh, TextureMap};

use crate::config::{invalid, read_json, require_file, Ablation, PipelineConfig};
use crate::fixture::{make_fixture, FixtureParams};
use crate::pipeline::{project_observed, read_latent, run_pipeline, summarize, write_latent, write_trace};

#[derive(Parser, Debug)]
#[command(name = "uvrecon", version, about = "Single-image UV texture reconstruction")]
pub struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `--set schedule.lr=0.01`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Register the template mesh onto the target mesh.
    Register(RegisterArgs),
    /// Sample the input image into a partial UV texture.
    Project(ProjectArgs),
    /// Complete a partial texture.
    Inpaint(InpaintArgs),
    /// Poisson-fuse a completed texture into the observed one.
    Fuse(FuseArgs),
    /// Fit the eigen-texture generator.
    FitGen(FitGenArgs),
    /// Write synthetic corpus textures.
    SynthCorpus(SynthCorpusArgs),
    /// Write visibility masks under random cameras.
    SynthMasks(SynthMasksArgs),
    /// Invert a texture into the generator latent space.
    Invert(InvertArgs),
    /// Correct a latent against the input image.
    Correct(CorrectArgs),
    /// Repaint a texture with partial diffusion.
    Enhance(EnhanceArgs),
    /// PSNR and SSIM between two images.
    Metrics(MetricsArgs),
    /// Run every enabled stage.
    Pipeline(PipelineArgs),
    /// Write the synthetic end-to-end scene and its config.
    MakeFixture(MakeFixtureArgs),
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the per-level convergence report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    /// Registered mesh.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Camera JSON; defaults to the config camera.
    #[arg(long)]
    pub camera: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Mesh whose UV charts define the texels to fill.
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long)]
    pub observed: PathBuf,
    #[arg(long)]
    pub complete: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitGenArgs {
    /// Directory of corpus PNG textures; a synthetic corpus when absent.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub d_w: Option<usize>,
    #[arg(long)]
    pub d_z: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthCorpusArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthMasksArgs {
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub size: Option<usize>,
    /// Erosion radius in texels.
    #[arg(long, value_parser = ["0", "2"])]
    pub erode: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InvertArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory for texture.png, latent.bin and trace.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CorrectArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Initial latent (little-endian f64).
    #[arg(long)]
    pub latent: PathBuf,
    #[arg(long)]
    pub mesh: PathBuf,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub camera: Option<PathBuf>,
    /// Output directory for texture.png, latent.bin and trace.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: PathBuf,
    /// Texture whose valid texels donate detail when detail transfer is on.
    #[arg(long)]
    pub visible: Option<PathBuf>,
    #[arg(long)]
    pub strength: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Grayscale mask selecting the pixels for PSNR.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    /// Output directory; overrides `paths.output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MakeFixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON file with fixture parameters; defaults otherwise.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub size: Option<usize>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    if let Some(p) = &cli.config {
        require_file(p, "--config")?;
    }
    let cfg = PipelineConfig::load(cli.config.as_deref(), &cli.overrides)?;
    cfg.validate_parts()?;
    Ok(cfg)
}

fn input(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    let p = flag
        .clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| invalid(format!("{what} is required (flag or config)")))?;
    require_file(&p, what)?;
    Ok(p)
}

fn existing(p: &Path, what: &str) -> Result<PathBuf> {
    require_file(p, what)?;
    Ok(p.to_path_buf())
}

fn texture_side(size: Option<usize>, cfg: &PipelineConfig) -> Result<usize> {
    let s = size.unwrap_or(cfg.texture_size);
    if !(64..=1024).contains(&s) || !s.is_power_of_two() {
        return Err(invalid(format!("texture size must be a power of two in [64, 1024], got {s}")));
    }
    Ok(s)
}

fn camera(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<Camera> {
    let cam = match flag {
        Some(p) => {
            require_file(p, "--camera")?;
            read_json::<Camera>(p)?
        }
        None => cfg.camera.clone().ok_or_else(|| invalid("a camera is required (--camera or config)"))?,
    };
    cam.validate().map_err(|e| invalid(format!("camera: {e}")))?;
    Ok(cam)
}

fn model(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<GeneratorModel> {
    let p = input(flag, &cfg.paths.model, "generator model")?;
    GeneratorModel::load(&p).with_context(|| format!("loading {}", p.display()))
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

fn load_texture(path: &Path, what: &str) -> Result<TextureMap> {
    require_file(path, what)?;
    TextureMap::load(path).with_context(|| format!("loading {}", path.display()))
}

fn save_texture(t: &TextureMap, path: &Path) -> Result<()> {
    create_parent(path)?;
    t.save(path).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Register(a) => {
            let template = input(&a.template, &cfg.paths.template, "template mesh")?;
            let target = input(&a.target, &cfg.paths.target, "target mesh")?;
            let mut params = cfg.registration.clone();
            if let Some(p) = &cfg.paths.landmarks {
                params.landmarks = load_landmarks(p)?;
            }
            let (mesh, report) =
                nicp_register_with_report(&Mesh::load_obj(&template)?, &Mesh::load_obj(&target)?, &params)?;
            create_parent(&a.out)?;
            mesh.save_obj(&a.out)?;
            if let Some(r) = &a.report {
                create_parent(r)?;
                fs::write(r, serde_json::to_string_pretty(&report)? + "\n")?;
            }
            println!("registered {} vertices over {} stiffness levels", mesh.vertices.len(), report.levels.len());
        }
        Command::Project(a) => {
            let mesh = Mesh::load_obj(existing(&a.mesh, "--mesh")?)?;
            let image_path = input(&a.image, &cfg.paths.image, "input image")?;
            let cam = camera(&a.camera, &cfg)?;
            let s = texture_side(a.size, &cfg)?;
            let t = project_observed(&mesh, &cam, &Image::load_png(&image_path)?, s, &cfg.projection)?;
            save_texture(&t, &a.out)?;
            println!("{} of {} texels visible", t.valid_count(), t.texel_count());
        }
        Command::Inpaint(a) => {
            let partial = load_texture(&a.input, "--input")?;
            let mesh = Mesh::load_obj(existing(&a.mesh, "--mesh")?)?;
            let chart = build_uv_coverage(&mesh, partial.side)?.chart_mask();
            let t = inpaint(&partial, &chart, &cfg.inpainter, &cfg.poisson)?;
            save_texture(&t, &a.out)?;
            println!("filled {} texels", t.valid_count() - partial.valid_count());
        }
        Command::Fuse(a) => {
            let observed = load_texture(&a.observed, "--observed")?;
            let complete = load_texture(&a.complete, "--complete")?;
            let mesh = Mesh::load_obj(existing(&a.mesh, "--mesh")?)?;
            let chart = build_uv_coverage(&mesh, observed.side)?.chart_mask();
            let (t, report) = fuse(&observed, &complete, &chart, &cfg.poisson)?;
            save_texture(&t, &a.out)?;
            println!(
                "fused {} texels ({} islands, {} CG iterations)",
                report.region_size, report.island_count, report.iterations
            );
        }
        Command::FitGen(a) => {
            let g = &cfg.generator;
            let fit = FitParams {
                d_w: a.d_w.unwrap_or(g.d_w),
                d_z: a.d_z.unwrap_or(g.d_z),
                mapper_seed: g.mapper_seed,
            };
            let model = match &a.corpus {
                Some(dir) => {
                    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
                        .with_context(|| format!("reading {}", dir.display()))?
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| {
                            p.extension().is_some_and(|x| x == "png")
                                && !p.to_string_lossy().ends_with(".mask.png")
                        })
                        .collect();
                    paths.sort();
                    if paths.len() < 2 {
                        return Err(invalid(format!("{} holds fewer than 2 textures", dir.display())));
                    }
                    fit_pca(&FileCorpus::new(paths)?, &fit)?
                }
                None => {
                    let mut style = g.style.clone();
                    if let Some(seed) = a.seed {
                        style.seed = seed;
                    }
                    let corpus = SyntheticCorpus {
                        layout: layout(&cfg)?,
                        style,
                        side: texture_side(a.size, &cfg)?,
                        count: a.n.unwrap_or(g.corpus_count),
                    };
                    fit_pca(&corpus, &fit)?
                }
            };
            create_parent(&a.out)?;
            model.save(&a.out)?;
            println!("model: side {}, d_w {}, d_z {}", model.side, model.d_w(), model.d_z());
        }
        Command::SynthCorpus(a) => {
            let mut style = cfg.generator.style.clone();
            if let Some(seed) = a.seed {
                style.seed = seed;
            }
            let n = a.n.unwrap_or(cfg.generator.corpus_count);
            let textures = synth_corpus(&layout(&cfg)?, &style, n, texture_side(a.size, &cfg)?)?;
            fs::create_dir_all(&a.out)?;
            for (i, t) in textures.iter().enumerate() {
                t.save(a.out.join(format!("texture_{i:05}.png")))?;
            }
            println!("wrote {n} textures to {}", a.out.display());
        }
        Command::SynthMasks(a) => {
            let mesh_path = input(&a.mesh, &cfg.paths.template, "mesh")?;
            let mesh = Mesh::load_obj(&mesh_path)?;
            let mut params = cfg.masks.clone();
            if let Some(c) = a.count {
                params.count = c;
            }
            if let Some(seed) = a.seed {
                params.seed = seed;
            }
            if let Some(e) = &a.erode {
                params.erode = e.parse().expect("restricted by clap");
            }
            params.validate().map_err(|e| invalid(e.to_string()))?;
            let s = texture_side(a.size, &cfg)?;
            let masks = synth_masks(&mesh, s, &params)?;
            fs::create_dir_all(&a.out)?;
            for (i, m) in masks.iter().enumerate() {
                save_mask_png(a.out.join(format!("mask_{i:05}.png")), s, s, m)?;
            }
            let mean = masks.iter().map(|m| m.iter().sum::<f64>()).sum::<f64>() / (masks.len() * s * s) as f64;
            println!("wrote {} masks, mean visible fraction {mean:.4}", masks.len());
        }
        Command::Invert(a) => {
            let model = model(&a.model, &cfg)?;
            let target = load_texture(&a.target, "--target")?;
            let r = invert_latent(&model, &target, &cfg.schedule)?;
            fs::create_dir_all(&a.out)?;
            r.texture.save(a.out.join("texture.png"))?;
            write_latent(&a.out.join("latent.bin"), &r.latent)?;
            write_trace(&a.out.join("trace.csv"), &r.trace)?;
            let s = summarize("invert", &r.trace, r.best_step);
            println!("invert: loss {:.6e} -> {:.6e} (best step {})", s.initial_loss, s.best_loss, s.best_step);
        }
        Command::Correct(a) => {
            let model = model(&a.model, &cfg)?;
            let init = read_latent(&existing(&a.latent, "--latent")?)?;
            let mesh = Mesh::load_obj(existing(&a.mesh, "--mesh")?)?;
            let image = Image::load_png(input(&a.image, &cfg.paths.image, "input image")?)?;
            let cam = camera(&a.camera, &cfg)?;
            let map = build_render_map(&mesh, &cam, model.side)?;
            let r = correct_latent(&model, &init, &map, &image, &cfg.loss, &cfg.schedule)?;
            fs::create_dir_all(&a.out)?;
            r.texture.save(a.out.join("texture.png"))?;
            write_latent(&a.out.join("latent.bin"), &r.latent)?;
            write_trace(&a.out.join("trace.csv"), &r.trace)?;
            let s = summarize("correct", &r.trace, r.best_step);
            println!("correct: loss {:.6e} -> {:.6e} (best step {})", s.initial_loss, s.best_loss, s.best_step);
        }
        Command::Enhance(a) => {
            let model = model(&a.model, &cfg)?;
            let mut opts = cfg.enhance.clone();
            if let Some(st) = a.strength {
                opts.strength = st;
            }
            if let Some(seed) = a.seed {
                opts.seed = seed;
            }
            opts.validate().map_err(|e| invalid(e.to_string()))?;
            let t = load_texture(&a.input, "--input")?;
            let visible = a.visible.as_deref().map(|p| load_texture(p, "--visible")).transpose()?;
            let out = enhance(&t, &model, visible.as_ref(), &opts)?;
            save_texture(&out, &a.out)?;
            println!("enhanced at strength {}", opts.strength);
        }
        Command::Metrics(a) => {
            let x = Image::load_png(existing(&a.a, "first image")?)?;
            let y = Image::load_png(existing(&a.b, "second image")?)?;
            if (x.width, x.height) != (y.width, y.height) {
                return Err(invalid(format!(
                    "images differ in size: {}x{} vs {}x{}",
                    x.width, x.height, y.width, y.height
                )));
            }
            let mask = match &a.mask {
                Some(p) => {
                    let (w, h, m) = load_mask_png(existing(p, "--mask")?)?;
                    if (w, h) != (x.width, x.height) {
                        return Err(invalid("mask size differs from the images"));
                    }
                    Some(m)
                }
                None => None,
            };
            let label = format!("{} vs {}", a.a.display(), a.b.display());
            let report = MetricReport::compare(
                &label,
                x.width,
                x.height,
                &x.data,
                &y.data,
                mask.as_deref().map(|m| ("mask", m)),
            )?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{}", report.summary());
            }
        }
        Command::Pipeline(a) => {
            let mut cfg = cfg;
            if let Some(ab) = a.ablation {
                ab.apply(&mut cfg.stages);
                info!("ablation {}: {:?}", ab.name(), cfg.stages);
            }
            if let Some(out) = a.out {
                cfg.paths.output = Some(out);
            }
            let outcome = run_pipeline(&cfg)?;
            println!(
                "pipeline: {} stages computed, {} up to date",
                outcome.computed.len(),
                outcome.reused.len()
            );
            for t in &outcome.report.textures {
                println!("  {:<8} full {}  visible {}", t.artifact, db(t.full.psnr), db(t.visible.psnr));
            }
            println!("  {}", outcome.report.render.summary());
        }
        Command::MakeFixture(a) => {
            let mut params = match &a.params {
                Some(p) => {
                    require_file(p, "--params")?;
                    read_json::<FixtureParams>(p)?
                }
                None => FixtureParams::default(),
            };
            if let Some(s) = a.size {
                params.texture_size = s;
            }
            let f = make_fixture(&a.out, &params)?;
            println!("fixture written; run `uvrecon pipeline --config {}`", f.config_path.display());
        }
    }
    Ok(())
}

fn layout(cfg: &PipelineConfig) -> Result<Layout> {
    match &cfg.paths.layout {
        Some(p) => {
            require_file(p, "layout")?;
            Ok(Layout::load(p)?)
        }
        None => Ok(Layout::default_face()),
    }
}

fn db(v: f64) -> String {
    if v.is_infinite() {
        "+inf dB".into()
    } else {
        format!("{v:.2} dB")
    }
}
