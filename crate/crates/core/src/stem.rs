//! Stem channels and the channel layouts that define the feature dimension.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One isolated instrumental component of a mix, or the mix itself.
///
/// Separator outputs labelled "other" are folded into [`StemKind::Residuals`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StemKind {
    Bass,
    Drums,
    Guitar,
    Piano,
    Vocals,
    Residuals,
    Mix,
}

impl StemKind {
    pub const ALL: [StemKind; 7] = [
        StemKind::Bass,
        StemKind::Drums,
        StemKind::Guitar,
        StemKind::Piano,
        StemKind::Vocals,
        StemKind::Residuals,
        StemKind::Mix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StemKind::Bass => "bass",
            StemKind::Drums => "drums",
            StemKind::Guitar => "guitar",
            StemKind::Piano => "piano",
            StemKind::Vocals => "vocals",
            StemKind::Residuals => "residuals",
            StemKind::Mix => "mix",
        }
    }
}

impl fmt::Display for StemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidStem(s.to_string()))
    }
}

/// An ordered list of stem channels. The channel count is the feature
/// dimension `K` of every feature and weight vector built against it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStemConfig", into = "RawStemConfig")]
pub struct StemConfig {
    name: String,
    channels: Vec<StemKind>,
}

#[derive(Serialize, Deserialize)]
struct RawStemConfig {
    name: String,
    channels: Vec<StemKind>,
}

impl TryFrom<RawStemConfig> for StemConfig {
    type Error = Error;

    fn try_from(raw: RawStemConfig) -> Result<Self> {
        StemConfig::new(raw.name, raw.channels)
    }
}

impl From<StemConfig> for RawStemConfig {
    fn from(config: StemConfig) -> Self {
        RawStemConfig {
            name: config.name,
            channels: config.channels,
        }
    }
}

impl StemConfig {
    /// Builds a custom layout. Channels must be unique and end with the mix.
    pub fn new(name: impl Into<String>, channels: Vec<StemKind>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(Error::InvalidConfig(format!(
                "config name {name:?} must be non-empty without whitespace"
            )));
        }
        if channels.last() != Some(&StemKind::Mix) {
            return Err(Error::InvalidConfig(format!(
                "config {name}: mix must be the last channel"
            )));
        }
        for (i, c) in channels.iter().enumerate() {
            if channels[..i].contains(c) {
                return Err(Error::InvalidConfig(format!(
                    "config {name}: channel {c} appears twice"
                )));
            }
        }
        Ok(StemConfig { name, channels })
    }

    /// bass, drums, vocals, residuals, mix (K = 5).
    pub fn four_stem() -> Self {
        StemConfig {
            name: "four_stem".into(),
            channels: vec![
                StemKind::Bass,
                StemKind::Drums,
                StemKind::Vocals,
                StemKind::Residuals,
                StemKind::Mix,
            ],
        }
    }

    /// bass, drums, guitar, piano, vocals, residuals, mix (K = 7).
    pub fn six_stem() -> Self {
        StemConfig {
            name: "six_stem".into(),
            channels: vec![
                StemKind::Bass,
                StemKind::Drums,
                StemKind::Guitar,
                StemKind::Piano,
                StemKind::Vocals,
                StemKind::Residuals,
                StemKind::Mix,
            ],
        }
    }

    /// Looks up a built-in layout by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "four_stem" => Ok(Self::four_stem()),
            "six_stem" => Ok(Self::six_stem()),
            other => Err(Error::InvalidConfig(format!(
                "unknown stem config {other:?} (expected four_stem or six_stem)"
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn channels(&self) -> &[StemKind] {
        &self.channels
    }

    /// Feature dimension.
    pub fn k(&self) -> usize {
        self.channels.len()
    }

    pub fn position(&self, stem: StemKind) -> Option<usize> {
        self.channels.iter().position(|&c| c == stem)
    }

    pub fn contains(&self, stem: StemKind) -> bool {
        self.channels.contains(&stem)
    }

    pub(crate) fn ensure_same(&self, other: &StemConfig) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ConfigMismatch {
                expected: self.describe(),
                found: other.describe(),
            })
        }
    }

    fn describe(&self) -> String {
        format!("{} (K={})", self.name, self.k())
    }
}

impl fmt::Display for StemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}
