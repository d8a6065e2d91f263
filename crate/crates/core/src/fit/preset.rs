//! Weight preset documents.
//!
//! ```text
//! config      six_stem
//! encoder_id  muq
//! source      mss
//! method      ridge
//! lambda      1
//! estimate    cv_mean
//! bass        0.32
//! ...
//! mix         1.64
//! ```
//!
//! Every line is `key<TAB>value`; `#` lines are comments. The header keys
//! come first in the order shown (`estimate` is optional), followed by one
//! line per channel in channel order. Weights are written with the shortest
//! representation that parses back to the same `f64`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FitMethod;
use crate::error::{Error, Result};
use crate::similarity::WeightVector;
use crate::stem::{StemConfig, StemKind};
use crate::store::Source;

pub const MIX_ONLY_PRESET: &str = "mix-only";
pub const UNIFORM_PRESET: &str = "uniform";
pub const PRESET_EXTENSION: &str = "preset";

/// How fitted weights were aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    /// Element-wise mean of the per-split weights of a cross-validation run.
    CvMean,
    /// A single fit on every retained triplet.
    FullData,
}

impl Estimate {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimate::CvMean => "cv_mean",
            Estimate::FullData => "full_data",
        }
    }
}

impl fmt::Display for Estimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimate {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cv_mean" => Ok(Estimate::CvMean),
            "full_data" => Ok(Estimate::FullData),
            other => Err(format!("unknown estimate {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetProvenance {
    pub encoder_id: String,
    pub source: Source,
    pub method: FitMethod,
    pub lambda: f64,
    pub estimate: Option<Estimate>,
}

/// A named weight vector. Built-in presets carry no provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightPreset {
    pub name: String,
    pub weights: WeightVector,
    pub provenance: Option<PresetProvenance>,
}

/// The two presets every index offers: one-hot on the mix, and uniform.
pub fn builtin_presets(config: &StemConfig) -> Vec<WeightPreset> {
    vec![
        WeightPreset {
            name: MIX_ONLY_PRESET.into(),
            weights: WeightVector::one_hot(config.clone(), StemKind::Mix).expect("every config ends with mix"),
            provenance: None,
        },
        WeightPreset {
            name: UNIFORM_PRESET.into(),
            weights: WeightVector::uniform(config.clone()),
            provenance: None,
        },
    ]
}

/// Renders a fitted preset. Built-ins have no provenance and cannot be written.
pub fn format_preset(preset: &WeightPreset) -> Result<String> {
    let prov = preset
        .provenance
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("preset {} has no provenance to write", preset.name)))?;
    let mut out = String::new();
    out.push_str(&format!("config\t{}\n", preset.weights.config().name()));
    out.push_str(&format!("encoder_id\t{}\n", prov.encoder_id));
    out.push_str(&format!("source\t{}\n", prov.source));
    out.push_str(&format!("method\t{}\n", prov.method));
    out.push_str(&format!("lambda\t{}\n", prov.lambda));
    if let Some(estimate) = prov.estimate {
        out.push_str(&format!("estimate\t{estimate}\n"));
    }
    for (stem, w) in preset.weights.iter() {
        out.push_str(&format!("{stem}\t{w}\n"));
    }
    Ok(out)
}

/// Parses a preset document; `name` is the preset's display name.
pub fn parse_preset(name: &str, text: &str) -> Result<WeightPreset> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .collect();
    let bad = |line: usize, message: String| Error::PresetParseError { line, message };
    let header = |at: usize, key: &str| -> Result<(usize, &str)> {
        let Some(&(line, text)) = lines.get(at) else {
            let line = lines.last().map_or(1, |(l, _)| l + 1);
            return Err(bad(line, format!("missing {key}")));
        };
        match text.split_once('\t') {
            Some((k, v)) if k == key && !v.is_empty() => Ok((line, v)),
            _ => Err(bad(line, format!("expected {key:?} entry"))),
        }
    };
    let (_, config_name) = header(0, "config")?;
    let (_, encoder_id) = header(1, "encoder_id")?;
    let (source_line, source) = header(2, "source")?;
    let (method_line, method) = header(3, "method")?;
    let (lambda_line, lambda) = header(4, "lambda")?;

    let source: Source = source.parse().map_err(|e: Error| bad(source_line, e.to_string()))?;
    let method: FitMethod = method.parse().map_err(|e: Error| bad(method_line, e.to_string()))?;
    let lambda: f64 = lambda
        .parse()
        .ok()
        .filter(|l: &f64| l.is_finite() && *l >= 0.0)
        .ok_or_else(|| bad(lambda_line, format!("invalid lambda {lambda:?}")))?;

    let mut rest = &lines[5..];
    let mut estimate = None;
    if let Some(&(line, text)) = rest.first() {
        if let Some(value) = text.strip_prefix("estimate\t") {
            estimate = Some(value.parse::<Estimate>().map_err(|m| bad(line, m))?);
            rest = &rest[1..];
        }
    }

    let mut channels = Vec::new();
    let mut values = Vec::new();
    let last = lines.last().map_or(1, |(l, _)| *l);
    for &(line, text) in rest {
        let (stem, weight) = text
            .split_once('\t')
            .ok_or_else(|| bad(line, "expected stem<TAB>weight".into()))?;
        let stem: StemKind = stem.parse().map_err(|e: Error| bad(line, e.to_string()))?;
        let weight: f64 = weight
            .parse()
            .ok()
            .filter(|w: &f64| w.is_finite())
            .ok_or_else(|| bad(line, format!("invalid weight {weight:?}")))?;
        channels.push(stem);
        values.push(weight);
    }
    let config = match StemConfig::builtin(config_name) {
        Ok(builtin) if builtin.channels() == channels.as_slice() => builtin,
        Ok(_) => {
            return Err(bad(last, format!("channels do not match built-in config {config_name}")));
        }
        Err(_) => StemConfig::new(config_name, channels).map_err(|e| bad(last, e.to_string()))?,
    };
    Ok(WeightPreset {
        name: name.to_string(),
        weights: WeightVector::new(config, values).map_err(|e| bad(last, e.to_string()))?,
        provenance: Some(PresetProvenance {
            encoder_id: encoder_id.to_string(),
            source,
            method,
            lambda,
            estimate,
        }),
    })
}

/// Loads a preset file, naming it after the file stem.
pub fn load_preset(path: impl AsRef<Path>) -> Result<WeightPreset> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("cannot derive a preset name from {}", path.display())))?;
    parse_preset(name, &fs::read_to_string(path)?)
}

pub fn write_preset(preset: &WeightPreset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, format_preset(preset)?)?;
    Ok(())
}

/// Fitted presets by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetRegistry {
    presets: BTreeMap<String, WeightPreset>,
}

impl PresetRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `*.preset` file in `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut registry = PresetRegistry::new();
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        paths.sort();
        for path in paths {
            if path.extension().and_then(|e| e.to_str()) == Some(PRESET_EXTENSION) {
                registry.insert(load_preset(&path)?)?;
            }
        }
        Ok(registry)
    }

    /// Adds a preset. Names must be unique and may not shadow the built-ins.
    pub fn insert(&mut self, preset: WeightPreset) -> Result<()> {
        if preset.name == MIX_ONLY_PRESET || preset.name == UNIFORM_PRESET || self.presets.contains_key(&preset.name) {
            return Err(Error::InvalidInput(format!("preset name {:?} is already taken", preset.name)));
        }
        self.presets.insert(preset.name.clone(), preset);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightPreset> {
        self.presets.get(name)
    }

    pub fn len(&self) -> usize {
        self.presets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.presets.is_empty()
    }

    /// Presets in name order.
    pub fn iter(&self) -> impl Iterator<Item = &WeightPreset> {
        self.presets.values()
    }

    /// Built-ins for `config` followed by the fitted presets built against it.
    pub fn for_config(&self, config: &StemConfig) -> Vec<WeightPreset> {
        let mut out = builtin_presets(config);
        out.extend(self.iter().filter(|p| p.weights.config() == config).cloned());
        out
    }

    /// Looks a preset up by name, including the built-ins for `config`.
    pub fn resolve(&self, name: &str, config: &StemConfig) -> Result<WeightPreset> {
        self.for_config(config)
            .into_iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPreset(name.to_string()))
    }
}
