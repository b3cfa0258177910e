//! The configuration echo and provenance record written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pdanet_core::io::{hash_file, hash_tree, sha256_hex};
use serde::Serialize;

use crate::config::{RunConfig, CONFIG_ECHO};
use crate::error::Result;

pub const PROVENANCE: &str = "provenance.json";
/// Wall-clock measurements; the only output that differs between identical runs.
pub const TIMING: &str = "timing.json";

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seeds: BTreeMap<&'static str, u64>,
    pub config_sha256: String,
    /// Content hash of each input, keyed by its role.
    pub inputs: BTreeMap<String, String>,
}

/// Content hash of a file or a directory tree.
pub fn hash_input(path: &Path) -> Result<String> {
    if path.is_dir() {
        Ok(hash_tree(path, &[PROVENANCE, TIMING])?)
    } else {
        Ok(hash_file(path)?)
    }
}

/// Writes `config.toml` and `provenance.json` into `dir`.
pub fn record(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[(&str, &Path)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let echo = cfg.to_toml();
    fs::write(dir.join(CONFIG_ECHO), &echo)?;
    let seeds = BTreeMap::from([
        ("physics", cfg.physics.seed),
        ("degrade", cfg.degrade.seed),
        ("degrade_exp", cfg.degrade.exp.seed),
        ("data", cfg.data.seed),
        ("train", cfg.train.seed),
    ]);
    let inputs = inputs.iter().map(|(role, p)| Ok((role.to_string(), hash_input(p)?))).collect::<Result<_>>()?;
    let p = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command: command.into(),
        seeds,
        config_sha256: sha256_hex(echo.as_bytes()),
        inputs,
    };
    fs::write(dir.join(PROVENANCE), serde_json::to_string_pretty(&p)?)?;
    Ok(())
}
