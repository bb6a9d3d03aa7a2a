//! Metrics records and their CSV serialization.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{PipelineError, Result};

pub const CSV_HEADER: &str = "object_id,method,sampling_rate,psnr_db,ie_bits,mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    DiffuserEcam,
    PostProcessing,
}

impl Method {
    pub const BOTH: [Method; 2] = [Method::DiffuserEcam, Method::PostProcessing];

    pub fn name(self) -> &'static str {
        match self {
            Method::DiffuserEcam => "diffuser_ecam",
            Method::PostProcessing => "post_processing",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub object_id: String,
    pub method: Method,
    pub sampling_rate: f64,
    /// `f64::INFINITY` for identical images, NaN for a failed run.
    pub psnr_db: f64,
    pub ie_bits: f64,
    pub mse: f64,
}

impl MetricsRecord {
    pub fn failed(object_id: String, method: Method, sampling_rate: f64) -> Self {
        Self {
            object_id,
            method,
            sampling_rate,
            psnr_db: f64::NAN,
            ie_bits: f64::NAN,
            mse: f64::NAN,
        }
    }

    pub fn is_failed(&self) -> bool {
        self.psnr_db.is_nan()
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.object_id,
            self.method,
            fmt17(self.sampling_rate),
            fmt17(self.psnr_db),
            fmt17(self.ie_bits),
            fmt17(self.mse)
        )
    }
}

/// 17 significant digits; `inf` and `nan` literals for non-finite values.
pub fn fmt17(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

pub fn parse_metric(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        "nan" => Some(f64::NAN),
        other => other.parse().ok(),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<MetricsRecord>,
    /// Seeds, config digest and scoring conventions, written as a sidecar.
    pub metadata: Vec<(String, String)>,
}

impl MetricsReport {
    /// Order by (object, method, rate) so output is independent of run order.
    pub fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            a.object_id
                .cmp(&b.object_id)
                .then(a.method.cmp(&b.method))
                .then(a.sampling_rate.total_cmp(&b.sampling_rate))
        });
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn metadata_text(&self) -> String {
        self.metadata
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        fs::write(csv_path, self.to_csv()).map_err(|e| PipelineError::io(csv_path, e))?;
        let meta = csv_path.with_extension("meta");
        fs::write(&meta, self.metadata_text()).map_err(|e| PipelineError::io(&meta, e))
    }

    pub fn find(&self, object_id: &str, method: Method, rate: f64) -> Option<&MetricsRecord> {
        self.records
            .iter()
            .find(|r| r.object_id == object_id && r.method == method && r.sampling_rate == rate)
    }
}

/// Parse CSV produced by [`MetricsReport::to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(PipelineError::Config("metrics CSV has an unexpected header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || PipelineError::Config(format!("malformed metrics row `{line}`"));
            if f.len() != 6 {
                return Err(bad());
            }
            let method = match f[1] {
                "diffuser_ecam" => Method::DiffuserEcam,
                "post_processing" => Method::PostProcessing,
                _ => return Err(bad()),
            };
            Ok(MetricsRecord {
                object_id: f[0].to_string(),
                method,
                sampling_rate: parse_metric(f[2]).ok_or_else(bad)?,
                psnr_db: parse_metric(f[3]).ok_or_else(bad)?,
                ie_bits: parse_metric(f[4]).ok_or_else(bad)?,
                mse: parse_metric(f[5]).ok_or_else(bad)?,
            })
        })
        .collect()
}

/// Append rows to a CSV file, writing the header first if the file is new.
pub fn append_csv(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut text = match fs::read_to_string(path) {
        Ok(existing) => existing,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => format!("{CSV_HEADER}\n"),
        Err(e) => return Err(PipelineError::io(path, e)),
    };
    for r in records {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}
