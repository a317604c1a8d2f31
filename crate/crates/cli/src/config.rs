//! Pipeline configuration: JSON schema, dotted-path overrides and validation.
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use uvrecon::enhance::EnhanceOptions;
use uvrecon::fusion::PoissonOptions;
use uvrecon::generator::StyleParams;
use uvrecon::inpaint::InpainterSpec;
use uvrecon::optimize::{LossWeights, OptimSchedule};
use uvrecon::projection::{MaskSynthParams, DEFAULT_DEPTH_BIAS};
use uvrecon::registration::NicpParams;
use uvrecon::Camera;

pub const SCHEMA_VERSION: u32 = 1;

/// A problem with the configuration or the command line. Maps to exit code 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError(pub String);

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ValidationError {}

pub fn invalid(message: impl Into<String>) -> anyhow::Error {
    ValidationError(message.into()).into()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Mesh carrying the UV layout.
    pub template: Option<PathBuf>,
    /// Geometry of the subject; the template is registered onto it.
    pub target: Option<PathBuf>,
    pub image: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Generator model; when absent the pipeline fits one from the corpus
    /// settings.
    pub model: Option<PathBuf>,
    /// Reference texture for the metrics report.
    pub ground_truth: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    /// Region layout for the synthetic corpus; the built-in face layout when
    /// absent.
    pub layout: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSettings {
    pub depth_bias: f64,
    /// Visibility mask erosion in texels.
    pub erode: usize,
}

impl Default for ProjectionSettings {
    fn default() -> Self {
        Self {
            depth_bias: DEFAULT_DEPTH_BIAS,
            erode: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSettings {
    pub corpus_count: usize,
    pub style: StyleParams,
    pub d_w: usize,
    pub d_z: usize,
    pub mapper_seed: u64,
}

impl Default for GeneratorSettings {
    fn default() -> Self {
        Self {
            corpus_count: 2000,
            style: StyleParams::default(),
            d_w: 64,
            d_z: 64,
            mapper_seed: 42,
        }
    }
}

/// Search space of the correction stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Latent of the texture generator.
    Generator,
    /// Injected noise of the repainting process.
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub register: bool,
    /// Inpaint and fuse; when off the latent search starts from the
    /// projected texture.
    pub init: bool,
    pub prior: Prior,
    pub enhance: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            register: true,
            init: true,
            prior: Prior::Generator,
            enhance: true,
        }
    }
}

/// Stage-toggle presets of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Ablation {
    /// Generator prior without initialization.
    A,
    /// Generator prior from the fused initialization.
    B,
    /// Generator prior from the initialization, then enhancement.
    C,
    /// Diffusion prior without initialization.
    D,
    /// Diffusion prior from the initialization.
    E,
    /// Diffusion prior from the initialization, then enhancement.
    F,
    /// Only disables the initialization.
    NoInit,
}

impl Ablation {
    pub const GRID: [Ablation; 6] = [Ablation::A, Ablation::B, Ablation::C, Ablation::D, Ablation::E, Ablation::F];

    pub fn apply(self, stages: &mut Stages) {
        let (init, prior, enhance) = match self {
            Ablation::A => (false, Prior::Generator, false),
            Ablation::B => (true, Prior::Generator, false),
            Ablation::C => (true, Prior::Generator, true),
            Ablation::D => (false, Prior::Diffusion, false),
            Ablation::E => (true, Prior::Diffusion, false),
            Ablation::F => (true, Prior::Diffusion, true),
            Ablation::NoInit => {
                stages.init = false;
                return;
            }
        };
        stages.init = init;
        stages.prior = prior;
        stages.enhance = enhance;
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::A => "a",
            Ablation::B => "b",
            Ablation::C => "c",
            Ablation::D => "d",
            Ablation::E => "e",
            Ablation::F => "f",
            Ablation::NoInit => "no-init",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub paths: Paths,
    pub camera: Option<Camera>,
    pub texture_size: usize,
    pub registration: NicpParams,
    pub projection: ProjectionSettings,
    pub masks: MaskSynthParams,
    pub inpainter: InpainterSpec,
    pub poisson: PoissonOptions,
    pub generator: GeneratorSettings,
    pub loss: LossWeights,
    pub schedule: OptimSchedule,
    pub enhance: EnhanceOptions,
    pub stages: Stages,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            paths: Paths::default(),
            camera: None,
            texture_size: 256,
            registration: NicpParams::default(),
            projection: ProjectionSettings::default(),
            masks: MaskSynthParams::default(),
            inpainter: InpainterSpec::default(),
            poisson: PoissonOptions::default(),
            generator: GeneratorSettings::default(),
            loss: LossWeights::default(),
            schedule: OptimSchedule::default(),
            enhance: EnhanceOptions::default(),
            stages: Stages::default(),
        }
    }
}

/// Sets `root.<dotted path>` to `value`, creating intermediate objects.
fn set_dotted(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(invalid(format!("malformed override path `{path}`")));
    }
    let mut node = root;
    for key in &keys[..keys.len() - 1] {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| invalid(format!("override `{path}`: `{key}` is not inside an object")))?;
        let child = obj.entry(key.to_string()).or_insert(Value::Null);
        if child.is_null() {
            *child = Value::Object(Default::default());
        }
        node = child;
    }
    let obj = node
        .as_object_mut()
        .ok_or_else(|| invalid(format!("override `{path}`: parent is not an object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Parses `key=value`; the value is read as JSON when it parses and as a
/// string otherwise.
pub fn parse_override(spec: &str) -> Result<(String, Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override `{spec}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| invalid(format!("config is not valid JSON: {e}")))?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        match value.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => return Err(invalid(format!("unsupported schema_version {v}, expected {SCHEMA_VERSION}"))),
            None => return Err(invalid("config lacks a numeric schema_version")),
        }
        serde_json::from_value(value).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Loads `path` (or the defaults when `None`), applies `key=value`
    /// overrides and resolves relative paths against the config directory.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (mut value, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| invalid(format!("cannot read config {}: {e}", p.display())))?;
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| invalid(format!("config {} is not valid JSON: {e}", p.display())))?;
                (value, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (serde_json::to_value(Self::default()).expect("defaults serialize"), PathBuf::new()),
        };
        for spec in overrides {
            let (key, v) = parse_override(spec)?;
            set_dotted(&mut value, &key, v)?;
        }
        let mut cfg = Self::from_value(value)?;
        cfg.paths.resolve(&base);
        Ok(cfg)
    }

    /// Checks everything a full pipeline run needs.
    pub fn validate(&self) -> Result<()> {
        let s = self.texture_size;
        if !(64..=1024).contains(&s) || !s.is_power_of_two() {
            return Err(invalid(format!("texture_size must be a power of two in [64, 1024], got {s}")));
        }
        let p = &self.paths;
        for (name, path) in [("template", &p.template), ("target", &p.target), ("image", &p.image)] {
            match path {
                Some(f) if f.is_file() => {}
                Some(f) => return Err(invalid(format!("paths.{name}: {} does not exist", f.display()))),
                None => return Err(invalid(format!("paths.{name} is required"))),
            }
        }
        if p.output.is_none() {
            return Err(invalid("paths.output is required"));
        }
        for (name, path) in [
            ("model", &p.model),
            ("ground_truth", &p.ground_truth),
            ("landmarks", &p.landmarks),
            ("layout", &p.layout),
        ] {
            if let Some(f) = path {
                if !f.is_file() {
                    return Err(invalid(format!("paths.{name}: {} does not exist", f.display())));
                }
            }
        }
        let camera = self.camera.as_ref().ok_or_else(|| invalid("camera is required"))?;
        self.validate_parts()?;
        camera.validate().map_err(|e| invalid(format!("camera: {e}")))
    }

    /// Parameter checks that do not involve files.
    pub fn validate_parts(&self) -> Result<()> {
        let wrap = |what: &str, r: uvrecon::Result<()>| r.map_err(|e| invalid(format!("{what}: {e}")));
        wrap("registration", self.registration.validate())?;
        wrap("masks", self.masks.validate())?;
        wrap("inpainter", self.inpainter.validate())?;
        wrap("poisson", self.poisson.validate())?;
        wrap("generator.style", self.generator.style.validate())?;
        wrap("loss", self.loss.validate())?;
        wrap("schedule", self.schedule.validate())?;
        wrap("enhance", self.enhance.validate())?;
        if !(self.projection.depth_bias >= 0.0) {
            return Err(invalid("projection.depth_bias must be non-negative"));
        }
        let g = &self.generator;
        if g.corpus_count < 2 || g.d_w == 0 || g.d_z == 0 {
            return Err(invalid("generator needs corpus_count >= 2 and positive d_w, d_z"));
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.paths.output.as_deref().ok_or_else(|| invalid("paths.output is required"))
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.template,
            &mut self.target,
            &mut self.image,
            &mut self.output,
            &mut self.model,
            &mut self.ground_truth,
            &mut self.landmarks,
            &mut self.layout,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// Reads a file that must exist, reporting a validation error otherwise.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(invalid(format!("{what}: {} does not exist", path.display())))
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}
