//! Per-excerpt metric records, their aggregates and the report files.
//!
//! ```text
//! # mp3gan-report v1
//! # config_sha256 <hex or ->
//! # checkpoint <system> <id>
//! # protocol n_samples=20 selection_metric=lsd excerpt_frames=336 excerpts_per_song=all seed=0
//! song_id	start_frame	bitrate	system	lsd	mse	snr	odg	di
//! ```
//!
//! Absent PEAQ grades are written as `-`.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::codec::Bitrate;
use crate::error::{Error, Result};
use crate::evaluation::metrics::Metric;

pub const REPORT_HEADER: &str = "# mp3gan-report v1";
pub const REPORT_FILE: &str = "report.tsv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SUMMARY_JSON: &str = "summary.json";
pub const REPORT_COLUMNS: [&str; 9] = ["song_id", "start_frame", "bitrate", "system", "lsd", "mse", "snr", "odg", "di"];
/// Metric columns in summary order.
pub const SUMMARY_METRICS: [&str; 5] = ["odg", "di", "lsd", "mse", "snr"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Mp3,
    Det,
    Sto,
}

impl System {
    pub fn name(self) -> &'static str {
        match self {
            System::Mp3 => "mp3",
            System::Det => "det",
            System::Sto => "sto",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for System {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mp3" => Ok(System::Mp3),
            "det" => Ok(System::Det),
            "sto" => Ok(System::Sto),
            _ => Err(Error::Config(format!("unknown system {s:?} (mp3, det, sto)"))),
        }
    }
}

/// How excerpts are chosen and how stochastic systems are sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub n_samples: usize,
    /// Which best-of-N output PEAQ is run on.
    pub selection_metric: Metric,
    pub excerpt_frames: usize,
    /// `None` takes every non-overlapping excerpt.
    pub excerpts_per_song: Option<usize>,
    pub seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            n_samples: 20,
            selection_metric: Metric::Lsd,
            excerpt_frames: 336,
            excerpts_per_song: None,
            seed: 0,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be at least 1".into()));
        }
        if self.excerpt_frames == 0 {
            return Err(Error::Config("excerpt_frames must be at least 1".into()));
        }
        if self.excerpts_per_song == Some(0) {
            return Err(Error::Config("excerpts_per_song must be at least 1".into()));
        }
        Ok(())
    }

    fn header_line(&self) -> String {
        format!(
            "# protocol n_samples={} selection_metric={} excerpt_frames={} excerpts_per_song={} seed={}",
            self.n_samples,
            self.selection_metric,
            self.excerpt_frames,
            self.excerpts_per_song.map_or("all".to_string(), |n| n.to_string()),
            self.seed
        )
    }

    fn parse_header(rest: &str) -> Result<Protocol> {
        let mut p = Protocol::default();
        for kv in rest.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad protocol field {kv:?}")))?;
            let bad = || Error::Data(format!("bad protocol value {kv:?}"));
            match k {
                "n_samples" => p.n_samples = v.parse().map_err(|_| bad())?,
                "selection_metric" => p.selection_metric = v.parse().map_err(|_| bad())?,
                "excerpt_frames" => p.excerpt_frames = v.parse().map_err(|_| bad())?,
                "excerpts_per_song" => {
                    p.excerpts_per_song = if v == "all" { None } else { Some(v.parse().map_err(|_| bad())?) }
                }
                "seed" => p.seed = v.parse().map_err(|_| bad())?,
                _ => return Err(Error::Data(format!("unknown protocol field {k:?}"))),
            }
        }
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcerptRecord {
    pub song_id: String,
    pub start_frame: usize,
    pub bitrate: Bitrate,
    pub system: System,
    pub lsd: f64,
    pub mse: f64,
    pub snr: f64,
    pub odg: Option<f64>,
    pub di: Option<f64>,
}

impl ExcerptRecord {
    pub fn value(&self, column: &str) -> Option<f64> {
        match column {
            "lsd" => Some(self.lsd),
            "mse" => Some(self.mse),
            "snr" => Some(self.snr),
            "odg" => self.odg,
            "di" => self.di,
            _ => None,
        }
    }

    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Lsd => self.lsd,
            Metric::Mse => self.mse,
            Metric::Snr => self.snr,
        }
    }

    fn to_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:?}"));
        format!(
            "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{}\t{}",
            self.song_id,
            self.start_frame,
            self.bitrate,
            self.system,
            self.lsd,
            self.mse,
            self.snr,
            opt(self.odg),
            opt(self.di)
        )
    }

    fn parse_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != REPORT_COLUMNS.len() {
            return Err(Error::Data(format!("report row has {} columns: {line:?}", cols.len())));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::Data(format!("bad number {s:?} in report row")))
        };
        let opt = |s: &str| -> Result<Option<f64>> { if s == "-" { Ok(None) } else { num(s).map(Some) } };
        Ok(Self {
            song_id: cols[0].to_string(),
            start_frame: cols[1]
                .parse()
                .map_err(|_| Error::Data(format!("bad start frame {:?}", cols[1])))?,
            bitrate: cols[2].parse()?,
            system: cols[3].parse()?,
            lsd: num(cols[4])?,
            mse: num(cols[5])?,
            snr: num(cols[6])?,
            odg: opt(cols[7])?,
            di: opt(cols[8])?,
        })
    }
}

/// Mean and population standard deviation of one metric column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub system: System,
    pub bitrate: Bitrate,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean.is_infinite() {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub config_sha256: Option<String>,
    /// Checkpoint id per model system.
    pub checkpoints: BTreeMap<System, String>,
    pub records: Vec<ExcerptRecord>,
}

impl MetricReport {
    pub fn new(protocol: Protocol) -> Self {
        Self {
            protocol,
            config_sha256: None,
            checkpoints: BTreeMap::new(),
            records: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if let Some(odg) = r.odg {
                if !(-4.0..=0.0).contains(&odg) {
                    return Err(Error::Data(format!("ODG {odg} outside [-4, 0] for {}", r.song_id)));
                }
            }
        }
        Ok(())
    }

    /// (system, bitrate) pairs present, in sorted order.
    pub fn groups(&self) -> Vec<(System, Bitrate)> {
        let mut g: Vec<_> = self.records.iter().map(|r| (r.system, r.bitrate)).collect();
        g.sort_by_key(|&(s, b)| (b, s));
        g.dedup();
        g
    }

    /// Aggregates per (system, bitrate, metric), recomputed from the records.
    /// PEAQ columns only appear when at least one record has them.
    pub fn aggregates(&self) -> Vec<Aggregate> {
        let mut out = Vec::new();
        for (system, bitrate) in self.groups() {
            for metric in SUMMARY_METRICS {
                let values: Vec<f64> = self
                    .records
                    .iter()
                    .filter(|r| r.system == system && r.bitrate == bitrate)
                    .filter_map(|r| r.value(metric))
                    .collect();
                if values.is_empty() {
                    continue;
                }
                let (mean, std) = mean_std(&values);
                out.push(Aggregate {
                    system,
                    bitrate,
                    metric: metric.to_string(),
                    count: values.len(),
                    mean,
                    std,
                });
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{REPORT_HEADER}").unwrap();
        writeln!(s, "# config_sha256 {}", self.config_sha256.as_deref().unwrap_or("-")).unwrap();
        for (system, id) in &self.checkpoints {
            writeln!(s, "# checkpoint {system} {id}").unwrap();
        }
        writeln!(s, "{}", self.protocol.header_line()).unwrap();
        writeln!(s, "{}", REPORT_COLUMNS.join("\t")).unwrap();
        for r in &self.records {
            writeln!(s, "{}", r.to_row()).unwrap();
        }
        s
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::Data(format!("report does not start with {REPORT_HEADER:?}")));
        }
        let mut report = MetricReport::new(Protocol::default());
        let mut seen_columns = false;
        for line in lines {
            if let Some(rest) = line.strip_prefix("# config_sha256 ") {
                report.config_sha256 = (rest != "-").then(|| rest.to_string());
            } else if let Some(rest) = line.strip_prefix("# checkpoint ") {
                let (system, id) = rest
                    .split_once(' ')
                    .ok_or_else(|| Error::Data(format!("bad checkpoint line {line:?}")))?;
                report.checkpoints.insert(system.parse()?, id.to_string());
            } else if let Some(rest) = line.strip_prefix("# protocol ") {
                report.protocol = Protocol::parse_header(rest)?;
            } else if line.starts_with('#') {
                continue;
            } else if !seen_columns {
                if line != REPORT_COLUMNS.join("\t") {
                    return Err(Error::Data(format!("unexpected report columns {line:?}")));
                }
                seen_columns = true;
            } else if !line.is_empty() {
                report.records.push(ExcerptRecord::parse_row(line)?);
            }
        }
        report.validate()?;
        Ok(report)
    }

    /// Mean (std) per system and bitrate, one row per `<system>_<bitrate>`
    /// and one column per metric; `n/a` where a metric is unavailable.
    pub fn summary_table(&self) -> String {
        let aggs = self.aggregates();
        let mut s = String::new();
        writeln!(
            s,
            "n_samples={} selection_metric={} excerpts={}",
            self.protocol.n_samples,
            self.protocol.selection_metric,
            self.records.len()
        )
        .unwrap();
        write!(s, "{:<10}", "").unwrap();
        for m in SUMMARY_METRICS {
            write!(s, " {:>16}", m.to_uppercase()).unwrap();
        }
        writeln!(s).unwrap();
        let mut last_bitrate = None;
        for (system, bitrate) in self.groups() {
            if last_bitrate.is_some() && last_bitrate != Some(bitrate) {
                writeln!(s, "{}", "-".repeat(10 + 17 * SUMMARY_METRICS.len())).unwrap();
            }
            last_bitrate = Some(bitrate);
            write!(s, "{:<10}", format!("{system}_{bitrate}")).unwrap();
            for m in SUMMARY_METRICS {
                let cell = aggs
                    .iter()
                    .find(|a| a.system == system && a.bitrate == bitrate && a.metric == m)
                    .map_or("n/a".to_string(), |a| format!("{:.2} ({:.2})", a.mean, a.std));
                write!(s, " {cell:>16}").unwrap();
            }
            writeln!(s).unwrap();
        }
        s
    }

    /// Protocol, provenance and aggregates. Non-finite numbers become null.
    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&serde_json::json!({
            "protocol": self.protocol,
            "config_sha256": self.config_sha256,
            "checkpoints": self.checkpoints,
            "aggregates": self.aggregates(),
        }))
        .expect("summary serializes")
    }

    /// Write the record table, the text summary and the JSON summary.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            (REPORT_FILE, self.to_tsv()),
            (SUMMARY_FILE, self.summary_table()),
            (SUMMARY_JSON, self.summary_json()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}
