//! Delimiter-separated click logs.
//!
//! One record per line:
//! `sample_id, click_ts, conv_ts, behavior_ts..., numeric..., categorical...`
//! with empty fields for absent timestamps. Lines starting with `#` are
//! comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{GeneratorSpec, TruthRow};
use crate::error::{Error, Result};
use crate::estimators::FeatureSchema;
use crate::event::{ClickEvent, FeatureVector, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategoricalEncoding {
    /// Fields hold integer indices below the field's space.
    #[default]
    Index,
    /// Fields hold raw tokens, hashed into the field's space.
    Hash,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub behaviors: Vec<String>,
    #[serde(default)]
    pub purchase: Option<usize>,
    pub numeric: usize,
    /// Category space per field.
    pub categorical: Vec<usize>,
    #[serde(default)]
    pub encoding: CategoricalEncoding,
}

fn default_delimiter() -> char {
    ','
}

impl LogSchema {
    pub fn for_generator(spec: &GeneratorSpec) -> Self {
        Self {
            delimiter: ',',
            behaviors: spec.behavior_names(),
            purchase: spec.purchase_index(),
            numeric: spec.features.numeric,
            categorical: spec.features.categorical.clone(),
            encoding: CategoricalEncoding::Index,
        }
    }

    pub fn feature_schema(&self) -> FeatureSchema {
        FeatureSchema {
            numeric: self.numeric,
            categorical: self.categorical.clone(),
        }
    }

    pub fn columns(&self) -> usize {
        3 + self.behaviors.len() + self.numeric + self.categorical.len()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        if s.behaviors.is_empty() {
            return Err(Error::Schema("at least one behavior column required".into()));
        }
        if matches!(s.purchase, Some(p) if p >= s.behaviors.len()) {
            return Err(Error::Schema("purchase index out of range".into()));
        }
        if s.categorical.contains(&0) {
            return Err(Error::Schema("category spaces must be positive".into()));
        }
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }
}

/// FNV-1a, used for hashed categorical tokens.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn opt_ts(t: Option<Timestamp>) -> String {
    t.map(|v| v.to_string()).unwrap_or_default()
}

pub fn format_log(log: &[ClickEvent], schema: &LogSchema) -> String {
    let d = schema.delimiter;
    let mut out = String::with_capacity(log.len() * 96);
    for e in log {
        let mut fields: Vec<String> = Vec::with_capacity(schema.columns());
        fields.push(e.sample_id.to_string());
        fields.push(e.click_ts.to_string());
        fields.push(opt_ts(e.conv_ts));
        fields.extend(e.behavior_ts.iter().map(|&t| opt_ts(t)));
        // `{}` on f64 prints the shortest round-tripping form
        fields.extend(e.features.numeric.iter().map(|v| format!("{v}")));
        fields.extend(e.features.categorical.iter().map(|c| c.to_string()));
        let _ = writeln!(out, "{}", fields.join(&d.to_string()));
    }
    out
}

pub fn write_log(path: &Path, log: &[ClickEvent], schema: &LogSchema) -> Result<()> {
    fs::write(path, format_log(log, schema)).map_err(|e| Error::io(path, e))
}

/// Parsed log plus non-fatal diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub log: Vec<ClickEvent>,
    pub warnings: Vec<String>,
}

fn parse_line(line: &str, schema: &LogSchema) -> std::result::Result<ClickEvent, String> {
    let fields: Vec<&str> = line.split(schema.delimiter).map(str::trim).collect();
    if fields.len() != schema.columns() {
        return Err(format!(
            "expected {} fields, found {}",
            schema.columns(),
            fields.len()
        ));
    }
    let ts = |s: &str, what: &str| -> std::result::Result<Timestamp, String> {
        s.parse().map_err(|_| format!("unparseable {what} timestamp {s:?}"))
    };
    let opt = |s: &str, what: &str| -> std::result::Result<Option<Timestamp>, String> {
        if s.is_empty() {
            Ok(None)
        } else {
            ts(s, what).map(Some)
        }
    };
    let sample_id = fields[0]
        .parse()
        .map_err(|_| format!("bad sample id {:?}", fields[0]))?;
    let click_ts = ts(fields[1], "click")?;
    let conv_ts = opt(fields[2], "conversion")?;
    if matches!(conv_ts, Some(v) if v <= click_ts) {
        return Err(format!("conversion at {} not after click at {click_ts}", conv_ts.unwrap()));
    }
    let k = schema.behaviors.len();
    let mut behavior_ts = Vec::with_capacity(k);
    for (name, f) in schema.behaviors.iter().zip(&fields[3..3 + k]) {
        let t = opt(f, name)?;
        if matches!(t, Some(t) if t <= click_ts) {
            return Err(format!("behavior {name} not after click"));
        }
        behavior_ts.push(t);
    }
    if let Some(p) = schema.purchase {
        if behavior_ts[p] != conv_ts {
            return Err("purchase column differs from conversion timestamp".into());
        }
    }
    let num_start = 3 + k;
    let mut numeric = Vec::with_capacity(schema.numeric);
    for f in &fields[num_start..num_start + schema.numeric] {
        let v: f64 = f.parse().map_err(|_| format!("bad numeric feature {f:?}"))?;
        if !v.is_finite() {
            return Err("non-finite numeric feature".into());
        }
        numeric.push(v);
    }
    let mut categorical = Vec::with_capacity(schema.categorical.len());
    for (j, (f, &space)) in fields[num_start + schema.numeric..]
        .iter()
        .zip(&schema.categorical)
        .enumerate()
    {
        let c = match schema.encoding {
            CategoricalEncoding::Index => {
                let c: u64 = f.parse().map_err(|_| format!("bad category {f:?} in field {j}"))?;
                if c >= space as u64 {
                    return Err(format!("category {c} outside space {space} in field {j}"));
                }
                c
            }
            CategoricalEncoding::Hash => fnv1a(f.as_bytes()) % space as u64,
        };
        categorical.push(c as u32);
    }
    Ok(ClickEvent {
        sample_id,
        features: FeatureVector::new(numeric, categorical),
        click_ts,
        conv_ts,
        behavior_ts,
    })
}

/// Parses, validates and time-sorts a log held in memory. `origin` labels
/// diagnostics.
pub fn parse_log(text: &str, schema: &LogSchema, origin: &str) -> Result<Ingested> {
    let mut log = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let e = parse_line(line, schema).map_err(|reason| Error::Parse {
            path: origin.into(),
            line: i + 1,
            reason,
        })?;
        log.push(e);
    }
    if log.is_empty() {
        warnings.push(format!("{origin}: log is empty"));
    }
    if log.windows(2).any(|w| w[0].click_ts > w[1].click_ts) {
        warnings.push(format!("{origin}: records were not time-sorted; sorted by click time"));
        log.sort_by_key(|e| (e.click_ts, e.sample_id));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Ingested { log, warnings })
}

pub fn ingest(path: &Path, schema: &LogSchema) -> Result<Ingested> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_log(&text, schema, &path.display().to_string())
}

pub const TRUTH_HEADER: &str = "sample_id,p_star,y,delay";

pub fn format_truth(rows: &[TruthRow]) -> String {
    let mut out = format!("{TRUTH_HEADER}\n");
    for r in rows {
        let delay = r.delay.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", r.sample_id, r.p_star, r.y as u8, delay);
    }
    out
}

pub fn parse_truth(text: &str, origin: &str) -> Result<Vec<TruthRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::Parse {
            path: origin.into(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        rows.push(TruthRow {
            sample_id: f[0].parse().map_err(|_| bad("bad sample id"))?,
            p_star: f[1].parse().map_err(|_| bad("bad p_star"))?,
            y: match f[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad("bad label")),
            },
            delay: if f[3].is_empty() {
                None
            } else {
                Some(f[3].parse().map_err(|_| bad("bad delay"))?)
            },
        });
    }
    Ok(rows)
}

pub fn write_truth(path: &Path, rows: &[TruthRow]) -> Result<()> {
    fs::write(path, format_truth(rows)).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_truth(&text, &path.display().to_string())
}
