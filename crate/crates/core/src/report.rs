//! Metric reports as delimiter-separated text, and comparison tables built
//! from several reports.
//!
//! A report is a `#`-prefixed metadata block, a header row, one row per
//! interval, and three footer rows keyed `mean`, `pooled` and `count`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{Aggregate, DefinedCounts, IntervalMetrics, MetricSet};

pub const FORMAT: &str = "trace-report/1";
pub const COLUMNS: &str = "interval_start,n,n_pos,auc,nll,pr_auc,ece";
pub const TABLE_COLUMNS: &str = "method,auc,nll,pr_auc,ece";
const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    /// Ordered `key=value` metadata; `method` is required.
    pub meta: Vec<(String, String)>,
    pub intervals: Vec<IntervalMetrics>,
    pub aggregate: Aggregate,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => NA.into(),
    }
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == NA {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("bad number {s:?}"))
}

fn parse_int<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("bad integer {s:?}"))
}

fn metric_cols(m: &MetricSet) -> String {
    format!(
        "{},{},{},{}",
        fmt_opt(m.auc),
        fmt_opt(m.nll),
        fmt_opt(m.pr_auc),
        fmt_opt(m.ece)
    )
}

impl Report {
    pub fn new(
        meta: Vec<(String, String)>,
        intervals: Vec<IntervalMetrics>,
        aggregate: Aggregate,
    ) -> Result<Self> {
        let r = Self {
            meta,
            intervals,
            aggregate,
        };
        r.method()?;
        for (k, v) in &r.meta {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Report(format!("invalid metadata entry {k:?}")));
            }
        }
        Ok(r)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn method(&self) -> Result<&str> {
        self.get("method")
            .ok_or_else(|| Error::Report("report has no method".into()))
    }

    /// Per-interval rows only, for plotting.
    pub fn intervals_csv(&self) -> String {
        let mut s = format!("{COLUMNS}\n");
        for r in &self.intervals {
            let m = MetricSet {
                auc: r.auc,
                nll: r.nll,
                pr_auc: r.pr_auc,
                ece: r.ece,
            };
            let _ = writeln!(s, "{},{},{},{}", r.interval_start, r.n, r.n_pos, metric_cols(&m));
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("# format={FORMAT}\n");
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}={v}");
        }
        s.push_str(&self.intervals_csv());
        let a = &self.aggregate;
        let c = &a.counts;
        let _ = writeln!(s, "mean,{},{},{}", a.n, a.n_pos, metric_cols(&a.mean));
        let _ = writeln!(s, "pooled,{},{},{}", a.n, a.n_pos, metric_cols(&a.pooled));
        let _ = writeln!(
            s,
            "count,{},,{},{},{},{}",
            c.intervals, c.auc, c.nll, c.pr_auc, c.ece
        );
        s
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let mut meta = Vec::new();
        let mut format = None;
        let mut header = false;
        let mut intervals = Vec::new();
        let (mut mean, mut pooled, mut counts) = (None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            if let Some(rest) = raw.strip_prefix('#') {
                let (k, v) = rest
                    .trim_start()
                    .split_once('=')
                    .ok_or_else(|| err(ln, "metadata line without '='".into()))?;
                if k == "format" {
                    format = Some(v.to_string());
                } else {
                    meta.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            if !header {
                if raw != COLUMNS {
                    return Err(Error::Report(format!(
                        "{}: incompatible columns {raw:?}, expected {COLUMNS:?}",
                        origin.display()
                    )));
                }
                header = true;
                continue;
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 7 {
                return Err(err(ln, format!("expected 7 fields, found {}", f.len())));
            }
            let metrics = || -> std::result::Result<MetricSet, String> {
                Ok(MetricSet {
                    auc: parse_opt(f[3])?,
                    nll: parse_opt(f[4])?,
                    pr_auc: parse_opt(f[5])?,
                    ece: parse_opt(f[6])?,
                })
            };
            match f[0] {
                "mean" | "pooled" => {
                    let n: usize = parse_int(f[1]).map_err(|r| err(ln, r))?;
                    let n_pos: usize = parse_int(f[2]).map_err(|r| err(ln, r))?;
                    let m = metrics().map_err(|r| err(ln, r))?;
                    if f[0] == "mean" {
                        mean = Some((n, n_pos, m));
                    } else {
                        pooled = Some(m);
                    }
                }
                "count" => {
                    let p = |s: &str| parse_int::<usize>(s).map_err(|r| err(ln, r));
                    counts = Some(DefinedCounts {
                        intervals: p(f[1])?,
                        auc: p(f[3])?,
                        nll: p(f[4])?,
                        pr_auc: p(f[5])?,
                        ece: p(f[6])?,
                    });
                }
                _ => {
                    if mean.is_some() {
                        return Err(err(ln, "interval row after footer".into()));
                    }
                    let m = metrics().map_err(|r| err(ln, r))?;
                    intervals.push(IntervalMetrics {
                        interval_start: parse_int(f[0]).map_err(|r| err(ln, r))?,
                        n: parse_int(f[1]).map_err(|r| err(ln, r))?,
                        n_pos: parse_int(f[2]).map_err(|r| err(ln, r))?,
                        auc: m.auc,
                        nll: m.nll,
                        pr_auc: m.pr_auc,
                        ece: m.ece,
                    });
                }
            }
        }
        match format.as_deref() {
            Some(FORMAT) => {}
            Some(other) => {
                return Err(Error::Report(format!(
                    "{}: unsupported report format {other:?}",
                    origin.display()
                )))
            }
            None => {
                return Err(Error::Report(format!(
                    "{}: missing format line",
                    origin.display()
                )))
            }
        }
        let ((n, n_pos, mean), pooled, counts) = match (mean, pooled, counts) {
            (Some(m), Some(p), Some(c)) => (m, p, c),
            _ => {
                return Err(Error::Report(format!(
                    "{}: missing aggregate footer",
                    origin.display()
                )))
            }
        };
        Report::new(
            meta,
            intervals,
            Aggregate {
                n,
                n_pos,
                mean,
                pooled,
                counts,
            },
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// One row per report, holding the interval-mean metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, MetricSet)>,
}

impl ComparisonTable {
    pub fn merge(reports: &[Report]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::Report("no reports to merge".into()));
        }
        let rows = reports
            .iter()
            .map(|r| Ok((r.method()?.to_string(), r.aggregate.mean)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{TABLE_COLUMNS}\n");
        for (m, v) in &self.rows {
            let _ = writeln!(s, "{m},{}", metric_cols(v));
        }
        s
    }

    /// Aligned plain-text table with four decimals.
    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(m, _)| m.len())
            .max()
            .unwrap_or(0)
            .max("Method".len());
        let cell = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => NA.into(),
        };
        let mut s = format!(
            "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "Method", "AUC", "NLL", "PR-AUC", "ECE"
        );
        for (m, v) in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>8}  {:>8}  {:>8}  {:>8}",
                m,
                cell(v.auc),
                cell(v.nll),
                cell(v.pr_auc),
                cell(v.ece)
            );
        }
        s
    }
}
