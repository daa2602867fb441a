use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use skewnet::experiment::{write_sidecar, Sidecar};
use skewnet::Result;

/// Writes to `path`, or to stdout when absent.
pub fn emit_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn emit_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    emit_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

/// Writes `bytes` and, for file outputs, the provenance sidecar.
pub fn emit_with_sidecar(path: Option<&Path>, bytes: &[u8], sidecar: &Sidecar) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, bytes)?;
            write_sidecar(p, sidecar)?;
        }
        None => io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}
