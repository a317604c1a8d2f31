//! File-based protocol for delegating a stage to an external program.
//!
//! A fresh temporary directory receives `in.png` (16-bit RGB) and
//! `in.mask.png` (8-bit gray, 255 = valid). The command template is split
//! into words and `{in}`, `{mask}`, `{out}`, `{seed}` and `{t}` are replaced
//! in every word; the program runs without a shell and must exit with status
//! 0 after writing `out.png` with the input's dimensions.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::image::{save_mask_png, BitDepth};
use crate::{Error, Image, Result};

/// Environment variable naming the root directory for protocol temp dirs.
pub const TMPDIR_ENV: &str = "UVRECON_TMPDIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExternalCommand {
    pub command: String,
    pub timeout_secs: f64,
    pub seed: u64,
}

impl Default for ExternalCommand {
    fn default() -> Self {
        Self {
            command: String::new(),
            timeout_secs: 600.0,
            seed: 0,
        }
    }
}

impl ExternalCommand {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "external timeout must be positive, got {}",
                self.timeout_secs
            )));
        }
        let words = shell_words::split(&self.command)
            .map_err(|e| Error::InvalidArgument(format!("external command `{}`: {e}", self.command)))?;
        if words.is_empty() {
            return Err(Error::InvalidArgument("external command is empty".into()));
        }
        Ok(())
    }

    /// The argument vector for one invocation.
    pub fn expand(&self, input: &Path, mask: &Path, output: &Path, t: Option<usize>) -> Result<Vec<String>> {
        self.validate()?;
        let t = t.map(|t| t.to_string()).unwrap_or_default();
        let seed = self.seed.to_string();
        let subs = [
            ("{in}", input.to_string_lossy().into_owned()),
            ("{mask}", mask.to_string_lossy().into_owned()),
            ("{out}", output.to_string_lossy().into_owned()),
            ("{seed}", seed),
            ("{t}", t),
        ];
        let words = shell_words::split(&self.command).expect("validated above");
        Ok(words
            .into_iter()
            .map(|w| subs.iter().fold(w, |acc, (k, v)| acc.replace(k, v)))
            .collect())
    }
}

fn fail(context: &str, step: &str, message: impl Into<String>) -> Error {
    Error::External {
        phase: format!("{context}: {step}"),
        message: message.into(),
    }
}

fn temp_root() -> Option<PathBuf> {
    std::env::var_os(TMPDIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn stderr_tail(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let tail: Vec<&str> = text.lines().rev().take(5).collect();
    tail.into_iter().rev().collect::<Vec<_>>().join(" | ")
}

/// Runs one protocol exchange and returns `out.png`. `context` names the
/// calling stage in errors.
pub fn run(cmd: &ExternalCommand, context: &str, image: &Image, mask: &[f64], t: Option<usize>) -> Result<Image> {
    cmd.validate()?;
    if mask.len() != image.width * image.height {
        return Err(Error::ShapeMismatch(format!(
            "mask has {} entries for a {}x{} image",
            mask.len(),
            image.width,
            image.height
        )));
    }
    let dir = match temp_root() {
        Some(root) => tempfile::Builder::new().prefix("uvrecon-").tempdir_in(root),
        None => tempfile::Builder::new().prefix("uvrecon-").tempdir(),
    }
    .map_err(|e| fail(context, "temp dir", e.to_string()))?;
    let input = dir.path().join("in.png");
    let mask_path = dir.path().join("in.mask.png");
    let output = dir.path().join("out.png");
    image
        .save_png(&input, BitDepth::Sixteen)
        .and_then(|_| save_mask_png(&mask_path, image.width, image.height, mask))
        .map_err(|e| fail(context, "write input", e.to_string()))?;

    let argv = cmd.expand(&input, &mask_path, &output, t)?;
    let err_path = dir.path().join("stderr.txt");
    let err_file = File::create(&err_path).map_err(|e| fail(context, "spawn", e.to_string()))?;
    log::debug!("{context}: running {argv:?}");
    let mut child = Command::new(&argv[0])
        .args(&argv[1..])
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(err_file)
        .spawn()
        .map_err(|e| fail(context, "spawn", format!("`{}`: {e}", argv[0])))?;

    let deadline = Instant::now() + Duration::from_secs_f64(cmd.timeout_secs);
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(fail(context, "timeout", format!("no exit after {} s", cmd.timeout_secs)));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(fail(context, "wait", e.to_string())),
        }
    };
    if !status.success() {
        return Err(fail(context, "exit status", format!("{status}; stderr: {}", stderr_tail(&err_path))));
    }
    let out = Image::load_png(&output).map_err(|e| fail(context, "read output", e.to_string()))?;
    if (out.width, out.height) != (image.width, image.height) {
        return Err(fail(
            context,
            "output size",
            format!(
                "expected {}x{}, got {}x{}",
                image.width, image.height, out.width, out.height
            ),
        ));
    }
    Ok(out)
}
