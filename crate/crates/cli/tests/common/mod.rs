#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use uvrecon_cli::fixture::{make_fixture, Fixture, FixtureParams};

pub fn small_params() -> FixtureParams {
    FixtureParams {
        texture_size: 64,
        image_size: 128,
        lon: 24,
        lat: 16,
        corpus_count: 40,
        d_w: 16,
        d_z: 16,
        ..FixtureParams::default()
    }
}

pub fn small_fixture(dir: &Path) -> Fixture {
    make_fixture(dir, &small_params()).expect("fixture")
}

pub fn uvrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uvrecon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn uvrecon")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status.code(), stdout(o), stderr(o));
}

/// sha256 of every file under `root`, keyed by relative path.
pub fn dir_digest(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in fs::read_dir(dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                let digest = Sha256::digest(fs::read(&path).expect("read file"));
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
