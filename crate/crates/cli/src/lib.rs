//! Command-line driver for the uvrecon pipeline: configuration, subcommands,
//! the staged pipeline runner and the synthetic end-to-end fixture.

pub mod commands;
pub mod config;
pub mod fixture;
pub mod pipeline;

use config::ValidationError;

/// Exit status for a failed command: 1 for validation errors, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|c| c.downcast_ref::<ValidationError>().is_some()) {
        1
    } else {
        2
    }
}

/// One-line rendering of an error chain. A cause already quoted by the
/// message before it is left out.
pub fn error_message(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut prev = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if prev.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        prev = msg;
    }
    out
}
