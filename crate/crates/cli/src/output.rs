//! Reproducible file output: every artifact starts with `#`-prefixed header
//! lines carrying the tool version and a hash of the resolved configuration,
//! and contains nothing time- or host-dependent.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::config::RunConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// FNV-1a over the canonical serialized configuration.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &byte in bytes {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn config_hash(config: &RunConfig) -> u64 {
    fnv1a64(config.to_toml().as_bytes())
}

pub fn meta_lines(hash: u64, extras: &[String]) -> Vec<String> {
    let mut lines = vec![
        format!("vsc {TOOL_VERSION}"),
        format!("config_hash={hash:016x}"),
    ];
    lines.extend(extras.iter().cloned());
    lines
}

pub fn create_file(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok((path, BufWriter::new(file)))
}

/// Write a CSV table: meta lines as `# ` comments, then the header row, then
/// pre-rendered data rows.
pub fn write_table<I>(
    dir: &Path,
    name: &str,
    meta: &[String],
    header: &str,
    rows: I,
) -> Result<PathBuf>
where
    I: IntoIterator<Item = String>,
{
    let (path, mut out) = create_file(dir, name)?;
    for line in meta {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(path)
}
