//! Run configuration.
//!
//! A config file is TOML. Whatever it sets is laid over the built-in
//! defaults (`config/default.toml`), so a file only needs the keys it
//! changes; tables merge key by key, arrays are replaced whole. Unknown keys
//! are rejected with their dotted path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::domain::{build_meshes, ComplexPermittivity, DomainConfig, Phantom, Region};
use crate::enhance::EnhanceConfig;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::inverse::InverseConfig;
use crate::measurement::{FieldMode, GeometryConfig};

pub const DEFAULT_CONFIG: &str = include_str!("../config/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub background: ComplexPermittivity,
    pub regions: Vec<Region>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise levels of the pipeline branches, in percent.
    pub percents: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Parent of the per-run directories.
    pub directory: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub frequency_ghz: f64,
    pub field_mode: FieldMode,
    pub domain: DomainConfig,
    pub phantom: PhantomConfig,
    pub geometry: GeometryConfig,
    pub noise: NoiseConfig,
    pub inverse: InverseConfig,
    pub enhance: EnhanceConfig,
    pub output: OutputConfig,
}

fn parse_value(text: &str) -> Result<toml::Value> {
    text.parse::<toml::Table>().map(toml::Value::Table).map_err(|e| Error::Config {
        key: "<file>".into(),
        message: e.message().to_string(),
    })
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_value(parse_value(DEFAULT_CONFIG).expect("built-in config parses"))
            .expect("built-in config is valid")
    }
}

impl RunConfig {
    fn from_value(value: toml::Value) -> Result<Self> {
        let cfg: RunConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let key = e.path().to_string();
            Error::Config {
                key: if key == "." { "<root>".into() } else { key },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `text` over the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut base = parse_value(DEFAULT_CONFIG)?;
        merge(&mut base, parse_value(text)?);
        RunConfig::from_value(base)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_toml_str(&fsutil::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Digest of every setting that influences results (the output
    /// directory is excluded).
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output");
        }
        sha256_hex(value.to_string().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| Err(Error::Config { key: key.into(), message });
        if !(self.frequency_ghz > 0.0) || !self.frequency_ghz.is_finite() {
            return bad("frequency_ghz", format!("must be positive, got {}", self.frequency_ghz));
        }
        if let Err(e) = build_meshes(&self.domain) {
            return bad("domain", e.to_string());
        }
        if let Err(e) = self.phantom() {
            return bad("phantom", e.to_string());
        }
        let g = &self.geometry;
        if g.transmitters_per_side == 0 {
            return bad("geometry.transmitters_per_side", "must be at least 1".into());
        }
        if g.receivers_per_side == 0 {
            return bad("geometry.receivers_per_side", "must be at least 1".into());
        }
        if g.elements == 0 {
            return bad("geometry.elements", "must be at least 1".into());
        }
        if !(g.standoff_cm > 0.0) {
            return bad("geometry.standoff_cm", format!("must be positive, got {}", g.standoff_cm));
        }
        if !(g.aperture_cm >= 0.0) {
            return bad("geometry.aperture_cm", format!("must be non-negative, got {}", g.aperture_cm));
        }
        if let Some(p) = self.noise.percents.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return bad("noise.percents", format!("noise levels must be non-negative, got {p}"));
        }
        self.inverse.validate()?;
        self.enhance.validate()?;
        Ok(())
    }

    /// Phantom with everything outside the object square held known.
    pub fn phantom(&self) -> Result<Phantom> {
        Phantom::new(
            self.phantom.background,
            self.phantom.regions.clone(),
            Some(self.domain.object_rect()),
        )
    }
}
