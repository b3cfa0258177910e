//! Layered run configuration: preset defaults, then a TOML file, then `--set key=value` overrides.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use pdanet_core::data::AugmentSpec;
use pdanet_core::degradation::DegradationConfig;
use pdanet_core::metrics::MetricsConfig;
use pdanet_core::physics::{RasterSpec, SceneConfig, SurfaceModel};
use pdanet_nn::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{usage, CliError, Result};

/// File name of the effective-configuration echo written into every output directory.
pub const CONFIG_ECHO: &str = "config.toml";

/// Keys that are valid but absent from the defaults because they default to "unset".
const OPTIONAL_KEYS: &[&str] = &["data.exp_dir", "data.augment.crop", "metrics.brisque_model"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Full-scale settings: 256x256 images, 3600 per domain, 200 epochs.
    #[default]
    Full,
    /// 64x64 images, 200 per domain, 5 epochs, base width 32.
    Desk,
}

/// Scene generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    /// Square image side in pixels.
    pub pixels: usize,
    /// Field of view, nm.
    pub size_nm: f64,
    pub impurities_min: usize,
    pub impurities_max: usize,
    /// Scattering strength magnitude range, eV nm^2.
    pub strength_min: f64,
    pub strength_max: f64,
    pub cutoff_nm: f64,
    pub m_eff: f64,
    /// Chemical potential, eV.
    pub mu: f64,
    /// Probe energy relative to the chemical potential, eV.
    pub omega: f64,
    /// Broadening, eV.
    pub eta: f64,
    pub seed: u64,
}

impl PhysicsSection {
    fn from_scene(s: &SceneConfig, seed: u64) -> Self {
        PhysicsSection {
            pixels: s.grid.height,
            size_nm: s.grid.extent.width_nm,
            impurities_min: s.impurity_count.0,
            impurities_max: s.impurity_count.1,
            strength_min: s.strength_range.0,
            strength_max: s.strength_range.1,
            cutoff_nm: s.cutoff_nm,
            m_eff: s.model.m_eff,
            mu: s.model.mu,
            omega: s.model.omega,
            eta: s.model.eta,
            seed,
        }
    }

    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            grid: RasterSpec::square(self.pixels, self.size_nm),
            impurity_count: (self.impurities_min, self.impurities_max),
            strength_range: (self.strength_min, self.strength_max),
            cutoff_nm: self.cutoff_nm,
            model: SurfaceModel { m_eff: self.m_eff, mu: self.mu, omega: self.omega, eta: self.eta },
        }
    }
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection::from_scene(&SceneConfig::default(), 1)
    }
}

/// Degradation of simulated images, plus the stand-in degradation for the experimental domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DegradeSection {
    pub blur_sigma: f64,
    pub noise_sigma: f64,
    pub line_amp: f64,
    pub drift_shear: f64,
    pub seed: u64,
    /// Applied to separate scenes to synthesize an experimental domain when no measured images
    /// are given.
    pub exp: DegradationConfig,
}

impl Default for DegradeSection {
    fn default() -> Self {
        let d = DegradationConfig::default();
        DegradeSection {
            blur_sigma: d.blur_sigma,
            noise_sigma: d.noise_sigma,
            line_amp: d.line_amp,
            drift_shear: d.drift_shear,
            seed: d.seed,
            exp: DegradationConfig::pseudo_experimental(),
        }
    }
}

impl DegradeSection {
    pub fn sim(&self) -> DegradationConfig {
        DegradationConfig {
            blur_sigma: self.blur_sigma,
            noise_sigma: self.noise_sigma,
            line_amp: self.line_amp,
            drift_shear: self.drift_shear,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Training images per domain.
    pub count: usize,
    /// Held-out images per test domain.
    pub test_count: usize,
    /// Seed for held-out scenes, experimental scenes, splits and augmentation.
    pub seed: u64,
    /// Directory of measured experimental images (PNG or raster). When unset, an experimental
    /// domain is synthesized with `degrade.exp`.
    pub exp_dir: Option<PathBuf>,
    /// Measured images held out for testing; the rest are augmented into the training set.
    pub exp_test: usize,
    /// Augmentation of measured experimental training images.
    pub augment: AugmentSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            count: 3600,
            test_count: 200,
            seed: 2,
            exp_dir: None,
            exp_test: 11,
            augment: AugmentSpec { per_image: 72, ..AugmentSpec::default() },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub degrade: DegradeSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub metrics: MetricsConfig,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Full => RunConfig::default(),
            Preset::Desk => RunConfig {
                physics: PhysicsSection::from_scene(&SceneConfig::desk(), 1),
                data: DataSection { count: 200, test_count: 200, ..DataSection::default() },
                train: TrainConfig::desk(),
                ..RunConfig::default()
            },
        }
    }

    /// Applies `file` and then each `key=value` of `sets` on top of preset `p`, and validates.
    pub fn resolve(p: Preset, file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut table = Table::try_from(RunConfig::preset(p)).map_err(|e| usage(format!("internal config error: {e}")))?;
        let mut known = BTreeSet::new();
        leaf_keys(&table, "", &mut known);
        known.extend(OPTIONAL_KEYS.iter().map(|k| k.to_string()));
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            let overlay: Table = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            let mut keys = BTreeSet::new();
            leaf_keys(&overlay, "", &mut keys);
            for k in &keys {
                check_key(k, &known)?;
            }
            merge(&mut table, overlay);
        }
        for s in sets {
            let (key, raw) = s.split_once('=').ok_or_else(|| usage(format!("--set expects key=value, got {s:?}")))?;
            let key = key.trim();
            check_key(key, &known)?;
            set_path(&mut table, key, parse_value(raw.trim()))?;
        }
        let cfg: RunConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| usage(format!("invalid configuration: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        if p.pixels < 8 || p.pixels % 4 != 0 {
            return Err(usage(format!("physics.pixels must be a multiple of 4 and >= 8, got {}", p.pixels)));
        }
        p.scene().validate()?;
        self.degrade.sim().validate()?;
        self.degrade.exp.validate().map_err(|e| usage(format!("degrade.exp: {e}")))?;
        if self.data.count == 0 {
            return Err(usage("data.count must be >= 1"));
        }
        if self.data.test_count == 0 {
            return Err(usage("data.test_count must be >= 1"));
        }
        if self.data.augment.per_image == 0 {
            return Err(usage("data.augment.per_image must be >= 1"));
        }
        self.train.validate()?;
        self.metrics.validate()?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serializes")
    }
}

fn check_key(key: &str, known: &BTreeSet<String>) -> Result<()> {
    let prefix = format!("{key}.");
    if known.contains(key) || known.iter().any(|k| k.starts_with(&prefix)) {
        Ok(())
    } else {
        Err(usage(format!("unknown configuration key {key:?}")))
    }
}

fn leaf_keys(t: &Table, prefix: &str, out: &mut BTreeSet<String>) {
    for (k, v) in t {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(inner) => leaf_keys(inner, &key, out),
            _ => {
                out.insert(key);
            }
        }
    }
}

fn merge(base: &mut Table, overlay: Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}")).ok().and_then(|mut t| t.remove("v")).unwrap_or_else(|| Value::String(raw.into()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| usage(format!("empty configuration key in {key:?}")))?;
    let mut t = table;
    for p in parts {
        let entry = t.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        t = entry.as_table_mut().ok_or_else(|| usage(format!("{key}: {p} is not a section")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for p in [Preset::Full, Preset::Desk] {
            let cfg = RunConfig::preset(p);
            let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn values_parse_as_toml_literals() {
        assert_eq!(parse_value("3"), Value::Integer(3));
        assert_eq!(parse_value("0.5"), Value::Float(0.5));
        assert_eq!(parse_value("true"), Value::Boolean(true));
        assert_eq!(parse_value("saturating"), Value::String("saturating".into()));
        assert_eq!(parse_value("\"GD\""), Value::String("GD".into()));
    }
}
