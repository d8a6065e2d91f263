//! Tab-separated ABX triplet manifests.
//!
//! Columns: `triplet_id configuration instrument_class x_segment a_segment
//! b_segment votes_a votes_b`. Lines starting with `#` and blank lines are
//! skipped.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stem::StemKind;

/// Triplet layout of the listening test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Configuration {
    /// Reference and both candidates come from three different tracks.
    #[serde(rename = "XAB")]
    Xab,
    /// The reference shares its track with one of the candidates.
    #[serde(rename = "XYC")]
    Xyc,
}

impl Configuration {
    pub fn as_str(self) -> &'static str {
        match self {
            Configuration::Xab => "XAB",
            Configuration::Xyc => "XYC",
        }
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Configuration {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "XAB" => Ok(Configuration::Xab),
            "XYC" => Ok(Configuration::Xyc),
            other => Err(format!("unknown configuration {other:?}")),
        }
    }
}

/// One ABX item with its raw listener votes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripletRecord {
    pub triplet_id: String,
    pub configuration: Configuration,
    /// The independent subset of the dataset this triplet belongs to.
    pub instrument_class: StemKind,
    pub x_segment: String,
    pub a_segment: String,
    pub b_segment: String,
    pub votes_a: u32,
    pub votes_b: u32,
}

impl TripletRecord {
    /// Checks the segment-distinctness and vote invariants.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.x_segment == self.a_segment || self.x_segment == self.b_segment || self.a_segment == self.b_segment {
            return Err(format!("triplet {}: segments must be pairwise distinct", self.triplet_id));
        }
        if u64::from(self.votes_a) + u64::from(self.votes_b) == 0 {
            return Err(format!("triplet {}: no votes recorded", self.triplet_id));
        }
        Ok(())
    }

    pub fn total_votes(&self) -> u64 {
        u64::from(self.votes_a) + u64::from(self.votes_b)
    }
}

fn parse_line(line: &str, line_no: usize) -> Result<TripletRecord> {
    let fields: Vec<&str> = line.split('\t').collect();
    let malformed = |message: String| Error::ParseError { line: line_no, message };
    let [triplet_id, configuration, instrument_class, x, a, b, votes_a, votes_b] = fields[..] else {
        return Err(malformed(format!("expected 8 tab-separated fields, found {}", fields.len())));
    };
    for (name, value) in [("triplet_id", triplet_id), ("x_segment", x), ("a_segment", a), ("b_segment", b)] {
        if value.is_empty() {
            return Err(malformed(format!("empty {name}")));
        }
    }
    let votes = |name: &str, value: &str| {
        value
            .parse::<u32>()
            .map_err(|e| malformed(format!("{name} {value:?}: {e}")))
    };
    Ok(TripletRecord {
        triplet_id: triplet_id.to_string(),
        configuration: configuration.parse().map_err(malformed)?,
        instrument_class: instrument_class
            .parse()
            .map_err(|_| malformed(format!("unknown instrument class {instrument_class:?}")))?,
        x_segment: x.to_string(),
        a_segment: a.to_string(),
        b_segment: b.to_string(),
        votes_a: votes("votes_a", votes_a)?,
        votes_b: votes("votes_b", votes_b)?,
    })
}

/// Parses manifest text. Errors carry the 1-based line number of the first
/// rejected line.
pub fn parse_triplets(text: &str) -> Result<Vec<TripletRecord>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let record = parse_line(line, line_no)?;
        record
            .validate()
            .map_err(|message| Error::InvalidTriplet { line: line_no, message })?;
        if !ids.insert(record.triplet_id.clone()) {
            return Err(Error::InvalidTriplet {
                line: line_no,
                message: format!("duplicate triplet_id {}", record.triplet_id),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn load_triplets(path: impl AsRef<Path>) -> Result<Vec<TripletRecord>> {
    parse_triplets(&fs::read_to_string(path)?)
}

/// Renders triplets in manifest form, with a header comment.
pub fn format_triplets(triplets: &[TripletRecord]) -> String {
    let mut out = String::from("# triplet_id\tconfiguration\tinstrument_class\tx_segment\ta_segment\tb_segment\tvotes_a\tvotes_b\n");
    for t in triplets {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.triplet_id, t.configuration, t.instrument_class, t.x_segment, t.a_segment, t.b_segment, t.votes_a, t.votes_b
        ));
    }
    out
}

pub fn write_triplets(triplets: &[TripletRecord], path: impl AsRef<Path>) -> Result<()> {
    for t in triplets {
        t.validate().map_err(Error::InvalidInput)?;
    }
    fs::write(path, format_triplets(triplets))?;
    Ok(())
}
