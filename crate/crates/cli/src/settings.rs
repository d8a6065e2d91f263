//! Run settings from a TOML file, command-line flags and the environment.
//! Flags win over the file; the file wins over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use stemsim_core::fit::{FitMethod, DEFAULT_RIDGE_LAMBDA, PRESET_EXTENSION};
use stemsim_core::{EvalConfig, FitConfig, Source, StemConfig, TiePolicy};

use crate::error::{AppError, AppResult};

pub const DATA_DIR_ENV: &str = "STEMSIM_DATA_DIR";
pub const PACK_EXTENSION: &str = "pack";
pub const TRIPLETS_EXTENSION: &str = "tsv";
pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TOP_K: usize = 10;

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// TOML settings file. Flags override its values.
    #[arg(long, global = true)]
    pub settings: Option<PathBuf>,
    /// Data root for default pack, manifest and preset locations.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    /// Embedding pack files, or directories of `*.pack` files.
    #[arg(long, global = true, value_delimiter = ',')]
    pub packs: Option<Vec<PathBuf>>,
    /// Triplet manifest files, or directories of `*.tsv` files.
    #[arg(long, global = true, value_delimiter = ',')]
    pub triplets: Option<Vec<PathBuf>>,
    /// Directory of fitted `*.preset` files.
    #[arg(long, global = true)]
    pub presets: Option<PathBuf>,
    /// Stem configuration: four_stem or six_stem.
    #[arg(long, global = true)]
    pub config: Option<String>,
    /// Encoder id. Inferred when the source has exactly one.
    #[arg(long, global = true)]
    pub encoder: Option<String>,
    /// Embedding source: mss, ground_truth or mix_native.
    #[arg(long, global = true)]
    pub source: Option<String>,
    /// Minimum majority-vote agreement, inclusive (default 0.75).
    #[arg(long, global = true)]
    pub cutoff: Option<f64>,
    /// Fit method: ols or ridge.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Ridge penalty (default 1).
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    /// Seed for splits and synthetic data (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cross-validation splits (default 100).
    #[arg(long, global = true)]
    pub iterations: Option<usize>,
    /// Training share of each split (default 0.7).
    #[arg(long, global = true)]
    pub train_fraction: Option<f64>,
    /// Tie policy: half_credit, count_wrong or exclude.
    #[arg(long, global = true)]
    pub tie_policy: Option<String>,
    /// Results per query (default 10).
    #[arg(long, global = true)]
    pub top_k: Option<usize>,
    /// HTTP port for `serve` (default 8080).
    #[arg(long, global = true)]
    pub port: Option<u16>,
}

/// The settings file. Keys mirror the long flag names with underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSettings {
    pub data_dir: Option<PathBuf>,
    pub packs: Option<Vec<PathBuf>>,
    pub triplets: Option<Vec<PathBuf>>,
    pub presets: Option<PathBuf>,
    pub config: Option<String>,
    pub encoder: Option<String>,
    pub source: Option<String>,
    pub cutoff: Option<f64>,
    pub method: Option<String>,
    pub lambda: Option<f64>,
    pub seed: Option<u64>,
    pub iterations: Option<usize>,
    pub train_fraction: Option<f64>,
    pub tie_policy: Option<String>,
    pub top_k: Option<usize>,
    pub port: Option<u16>,
}

impl FileSettings {
    pub fn load(path: &Path) -> AppResult<Self> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| AppError::Settings(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub data_dir: PathBuf,
    pub packs: Vec<PathBuf>,
    pub triplets: Vec<PathBuf>,
    pub presets: Option<PathBuf>,
    pub config: StemConfig,
    pub encoder: Option<String>,
    pub source: Source,
    pub fit: FitConfig,
    pub eval: EvalConfig,
    pub top_k: usize,
    pub port: u16,
}

fn parse<T: std::str::FromStr>(value: &str, what: &str) -> AppResult<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| AppError::Settings(format!("{what} {value:?}: {e}")))
}

impl Settings {
    pub fn resolve(args: &DataArgs) -> AppResult<Self> {
        let file = match &args.settings {
            Some(path) => FileSettings::load(path)?,
            None => FileSettings::default(),
        };
        Self::merge(args.clone(), file)
    }

    /// Combines flags and file values; `flags.settings` is ignored here.
    pub fn merge(flags: DataArgs, file: FileSettings) -> AppResult<Self> {
        let data_dir = flags.data_dir.or(file.data_dir).unwrap_or_else(|| PathBuf::from("."));
        let packs = match flags.packs.or(file.packs) {
            Some(paths) => expand(&paths, PACK_EXTENSION)?,
            None => expand_default(&data_dir, PACK_EXTENSION)?,
        };
        let triplets = match flags.triplets.or(file.triplets) {
            Some(paths) => expand(&paths, TRIPLETS_EXTENSION)?,
            None => expand_default(&data_dir, TRIPLETS_EXTENSION)?,
        };
        let presets = flags.presets.or(file.presets).or_else(|| {
            let dir = data_dir.join("presets");
            dir.is_dir().then_some(dir)
        });
        let config = match flags.config.or(file.config) {
            Some(name) => StemConfig::builtin(&name)?,
            None => StemConfig::four_stem(),
        };
        let source = match flags.source.or(file.source) {
            Some(s) => s.parse()?,
            None => Source::Mss,
        };
        let method: FitMethod = match flags.method.or(file.method) {
            Some(m) => m.parse()?,
            None => FitMethod::Ridge,
        };
        let lambda = flags.lambda.or(file.lambda).unwrap_or(match method {
            FitMethod::Ols => 0.0,
            FitMethod::Ridge => DEFAULT_RIDGE_LAMBDA,
        });
        let fit = match method {
            FitMethod::Ols => FitConfig::ols(),
            FitMethod::Ridge => FitConfig::ridge(lambda),
        };
        fit.validate()?;
        let defaults = EvalConfig::default();
        let tie_policy: TiePolicy = match flags.tie_policy.or(file.tie_policy) {
            Some(p) => parse(&p, "tie policy")?,
            None => defaults.tie_policy,
        };
        let eval = EvalConfig {
            cutoff: flags.cutoff.or(file.cutoff).unwrap_or(defaults.cutoff),
            iterations: flags.iterations.or(file.iterations).unwrap_or(defaults.iterations),
            train_fraction: flags.train_fraction.or(file.train_fraction).unwrap_or(defaults.train_fraction),
            seed: flags.seed.or(file.seed).unwrap_or(defaults.seed),
            tie_policy,
            parallel: true,
        };
        eval.validate()?;
        let top_k = flags.top_k.or(file.top_k).unwrap_or(DEFAULT_TOP_K);
        if top_k == 0 {
            return Err(AppError::Settings("top_k must be at least 1".into()));
        }
        Ok(Settings {
            data_dir,
            packs,
            triplets,
            presets,
            config,
            encoder: flags.encoder.or(file.encoder),
            source,
            fit,
            eval,
            top_k,
            port: flags.port.or(file.port).unwrap_or(DEFAULT_PORT),
        })
    }
}

fn expand_default(data_dir: &Path, extension: &str) -> AppResult<Vec<PathBuf>> {
    if data_dir.is_dir() {
        expand(&[data_dir.to_path_buf()], extension)
    } else {
        Ok(Vec::new())
    }
}

/// Files are kept as given; directories contribute their `*.ext` files in
/// name order.
fn expand(paths: &[PathBuf], extension: &str) -> AppResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(path)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|p| p.is_file() && p.extension().and_then(|e| e.to_str()) == Some(extension));
            found.sort();
            out.extend(found);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}

pub fn preset_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.{PRESET_EXTENSION}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_defaults_fill_the_rest() {
        let file: FileSettings = toml::from_str(
            "config = \"six_stem\"\ncutoff = 0.8\nmethod = \"ols\"\nseed = 3\ntop_k = 4\nport = 9000\n",
        )
        .unwrap();
        let flags = DataArgs {
            data_dir: Some(PathBuf::from("/nonexistent")),
            cutoff: Some(0.9),
            seed: Some(7),
            ..Default::default()
        };
        let s = Settings::merge(flags, file).unwrap();
        assert_eq!(s.config, StemConfig::six_stem());
        assert_eq!(s.eval.cutoff, 0.9);
        assert_eq!(s.eval.seed, 7);
        assert_eq!(s.fit, FitConfig::ols());
        assert_eq!((s.top_k, s.port), (4, 9000));
        assert_eq!(s.eval.iterations, 100);
        assert!(s.packs.is_empty());
    }

    #[test]
    fn defaults() {
        let s = Settings::merge(
            DataArgs {
                data_dir: Some(PathBuf::from("/nonexistent")),
                ..Default::default()
            },
            FileSettings::default(),
        )
        .unwrap();
        assert_eq!(s.config, StemConfig::four_stem());
        assert_eq!(s.fit, FitConfig::ridge(1.0));
        assert_eq!(s.source, Source::Mss);
        assert_eq!((s.top_k, s.port), (DEFAULT_TOP_K, DEFAULT_PORT));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |flags: DataArgs| Settings::merge(flags, FileSettings::default()).is_err();
        assert!(bad(DataArgs {
            config: Some("eight_stem".into()),
            ..Default::default()
        }));
        assert!(bad(DataArgs {
            cutoff: Some(0.4),
            ..Default::default()
        }));
        assert!(bad(DataArgs {
            method: Some("lasso".into()),
            ..Default::default()
        }));
        assert!(bad(DataArgs {
            top_k: Some(0),
            ..Default::default()
        }));
        assert!(toml::from_str::<FileSettings>("colour = 1").is_err());
    }

    #[test]
    fn directories_expand_to_sorted_matches() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["b.pack", "a.pack", "notes.txt", "t.tsv"] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        let packs = expand(&[dir.path().to_path_buf()], PACK_EXTENSION).unwrap();
        let names: Vec<_> = packs.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["a.pack", "b.pack"]);
    }
}
