//! Reference implementation of the external-process protocol: copies the
//! input and paints invalid texels mid-gray.

use std::path::PathBuf;

use anyhow::{ensure, Context, Result};
use clap::Parser;
use uvrecon::image::{load_mask_png, BitDepth};
use uvrecon::Image;

#[derive(Parser)]
#[command(about = "Pass-through stage for the uvrecon external-process protocol")]
struct Args {
    input: PathBuf,
    mask: PathBuf,
    output: PathBuf,
    /// Accepted for protocol compatibility; the output does not depend on it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Diffusion step for denoiser use; ignored.
    #[arg(long)]
    t: Option<usize>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let mut image = Image::load_png(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let (w, h, mask) = load_mask_png(&args.mask).with_context(|| format!("reading {}", args.mask.display()))?;
    ensure!(
        (w, h) == (image.width, image.height),
        "mask is {w}x{h} but image is {}x{}",
        image.width,
        image.height
    );
    for y in 0..h {
        for x in 0..w {
            if mask[y * w + x] < 0.5 {
                image.set_pixel(x, y, [0.5; 3]);
            }
        }
    }
    image
        .save_png(&args.output, BitDepth::Sixteen)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}
