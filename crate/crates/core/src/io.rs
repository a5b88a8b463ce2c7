//! CSV and JSON trace files.
//!
//! Floats are written with 9 significant digits and `\n` line endings so that
//! equal inputs give byte-identical files.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::evaluation::{ErrorStats, GroundTruthTrack, TruthPoint};
use crate::format::{fmt_sig9, round_sig9};
use crate::geometry::Point2;
use crate::localization::{PositionFix, SolveMethod};
use crate::sim::Measurement;

pub const MEASUREMENTS_HEADER: [&str; 8] =
    ["t", "tag", "anchor", "slot", "distance_m", "snr_db", "los", "valid"];
pub const FIXES_HEADER: [&str; 7] = [
    "t",
    "x_m",
    "y_m",
    "sigma_pos_m",
    "residual_rms_m",
    "n_ranges",
    "method",
];
pub const TRUTH_HEADER: [&str; 3] = ["t", "x_m", "y_m"];
pub const HISTOGRAM_HEADER: [&str; 4] = ["bin_lo", "bin_hi", "count", "pdf_fit"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {message}")]
    Schema { file: String, message: String },
}

impl DataError {
    pub fn is_io(&self) -> bool {
        matches!(self, DataError::Io { .. })
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn schema(file: &str, message: impl Into<String>) -> Self {
        DataError::Schema {
            file: file.to_string(),
            message: message.into(),
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn csv_to_io(e: csv::Error) -> std::io::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e,
        other => std::io::Error::other(format!("{other:?}")),
    }
}

pub fn write_measurements<W: Write>(w: W, rows: &[Measurement]) -> std::io::Result<()> {
    let mut out = writer(w);
    out.write_record(MEASUREMENTS_HEADER).map_err(csv_to_io)?;
    for m in rows {
        out.write_record([
            fmt_sig9(m.t_s),
            m.tag_id.to_string(),
            m.anchor_id.to_string(),
            m.slot_index.to_string(),
            fmt_sig9(m.distance_m),
            fmt_sig9(m.snr_db),
            flag(m.los).to_string(),
            flag(m.valid).to_string(),
        ])
        .map_err(csv_to_io)?;
    }
    out.flush()
}

pub fn write_fixes<W: Write>(w: W, rows: &[PositionFix]) -> std::io::Result<()> {
    let mut out = writer(w);
    out.write_record(FIXES_HEADER).map_err(csv_to_io)?;
    for f in rows {
        out.write_record([
            fmt_sig9(f.t_s),
            fmt_sig9(f.position.x),
            fmt_sig9(f.position.y),
            fmt_sig9(f.sigma_pos_m),
            fmt_sig9(f.residual_rms_m),
            f.n_ranges_used.to_string(),
            f.method.as_str().to_string(),
        ])
        .map_err(csv_to_io)?;
    }
    out.flush()
}

/// Writes `t,x_m,y_m`, adding a `label` column when any point has one.
pub fn write_truth<W: Write>(w: W, points: &[TruthPoint]) -> std::io::Result<()> {
    let labelled = points.iter().any(|p| p.label.is_some());
    let mut out = writer(w);
    let mut header: Vec<&str> = TRUTH_HEADER.to_vec();
    if labelled {
        header.push("label");
    }
    out.write_record(&header).map_err(csv_to_io)?;
    for p in points {
        let mut row = vec![fmt_sig9(p.t), fmt_sig9(p.position.x), fmt_sig9(p.position.y)];
        if labelled {
            row.push(p.label.clone().unwrap_or_default());
        }
        out.write_record(&row).map_err(csv_to_io)?;
    }
    out.flush()
}

pub fn write_histogram<W: Write>(w: W, stats: &ErrorStats) -> std::io::Result<()> {
    let mut out = writer(w);
    out.write_record(HISTOGRAM_HEADER).map_err(csv_to_io)?;
    for b in &stats.histogram {
        let centre = 0.5 * (b.bin_lo_m + b.bin_hi_m);
        out.write_record([
            fmt_sig9(b.bin_lo_m),
            fmt_sig9(b.bin_hi_m),
            b.count.to_string(),
            fmt_sig9(stats.pdf_at(centre)),
        ])
        .map_err(csv_to_io)?;
    }
    out.flush()
}

/// Pretty JSON with every float rounded to 9 significant digits.
pub fn stable_json<T: serde::Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

fn round_json(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round_sig9(x)) {
                    *n = r;
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Create `path` and hand a buffered writer to `body`.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| DataError::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| DataError::io(path, e))?;
    Ok(buf)
}

/// Column lookup by header name.
struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn parse(file: &str, data: &[u8]) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(data);
        let header = rdr
            .headers()
            .map_err(|e| DataError::schema(file, format!("unreadable header: {e}")))?
            .clone();
        let columns = header
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| DataError::schema(file, format!("row {}: {e}", i + 1)))?;
            rows.push(rec);
        }
        Ok(Self {
            file: file.to_string(),
            columns,
            rows,
        })
    }

    fn require(&self, names: &[&str]) -> Result<(), DataError> {
        for name in names {
            if !self.columns.contains_key(*name) {
                return Err(DataError::schema(&self.file, format!("missing column `{name}`")));
            }
        }
        if self.rows.is_empty() {
            return Err(DataError::schema(&self.file, "no data rows"));
        }
        Ok(())
    }

    fn raw<'a>(&self, row: &'a csv::StringRecord, name: &str) -> Option<&'a str> {
        self.columns.get(name).and_then(|&i| row.get(i))
    }

    fn get<T: std::str::FromStr>(&self, row_no: usize, name: &str) -> Result<T, DataError> {
        let raw = self.raw(&self.rows[row_no], name).unwrap_or("");
        raw.parse().map_err(|_| {
            DataError::schema(
                &self.file,
                format!("column `{name}`, row {}: cannot parse `{raw}`", row_no + 1),
            )
        })
    }

    fn get_f64(&self, row_no: usize, name: &str) -> Result<f64, DataError> {
        let v: f64 = self.get(row_no, name)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DataError::schema(
                &self.file,
                format!("column `{name}`, row {}: value must be finite", row_no + 1),
            ))
        }
    }

    fn get_flag(&self, row_no: usize, name: &str) -> Result<bool, DataError> {
        match self.raw(&self.rows[row_no], name).unwrap_or("") {
            "1" | "true" => Ok(true),
            "0" | "false" => Ok(false),
            raw => Err(DataError::schema(
                &self.file,
                format!("column `{name}`, row {}: expected 0/1, got `{raw}`", row_no + 1),
            )),
        }
    }
}

pub fn parse_fixes(file: &str, data: &[u8]) -> Result<Vec<PositionFix>, DataError> {
    let table = Table::parse(file, data)?;
    table.require(&FIXES_HEADER)?;
    (0..table.rows.len())
        .map(|i| {
            Ok(PositionFix {
                t_s: table.get_f64(i, "t")?,
                position: Point2::new(table.get_f64(i, "x_m")?, table.get_f64(i, "y_m")?),
                sigma_pos_m: table.get_f64(i, "sigma_pos_m")?,
                residual_rms_m: table.get_f64(i, "residual_rms_m")?,
                n_ranges_used: table.get(i, "n_ranges")?,
                method: table.get::<SolveMethod>(i, "method")?,
                converged: true,
            })
        })
        .collect()
}

pub fn parse_truth(file: &str, data: &[u8]) -> Result<GroundTruthTrack, DataError> {
    let table = Table::parse(file, data)?;
    table.require(&TRUTH_HEADER)?;
    let points = (0..table.rows.len())
        .map(|i| {
            Ok(TruthPoint {
                t: table.get_f64(i, "t")?,
                position: Point2::new(table.get_f64(i, "x_m")?, table.get_f64(i, "y_m")?),
                label: table
                    .raw(&table.rows[i], "label")
                    .filter(|s| !s.is_empty())
                    .map(str::to_string),
            })
        })
        .collect::<Result<Vec<_>, DataError>>()?;
    GroundTruthTrack::new(points).map_err(|e| DataError::schema(file, e.to_string()))
}

pub fn parse_measurements(file: &str, data: &[u8]) -> Result<Vec<Measurement>, DataError> {
    let table = Table::parse(file, data)?;
    table.require(&MEASUREMENTS_HEADER)?;
    (0..table.rows.len())
        .map(|i| {
            Ok(Measurement {
                t_s: table.get_f64(i, "t")?,
                tag_id: table.get(i, "tag")?,
                anchor_id: table.get(i, "anchor")?,
                slot_index: table.get(i, "slot")?,
                distance_m: table.get_f64(i, "distance_m")?,
                snr_db: table.get(i, "snr_db")?,
                los: table.get_flag(i, "los")?,
                valid: table.get_flag(i, "valid")?,
            })
        })
        .collect()
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn read_fixes(path: &Path) -> Result<Vec<PositionFix>, DataError> {
    parse_fixes(&file_name(path), &read_file(path)?)
}

pub fn read_truth(path: &Path) -> Result<GroundTruthTrack, DataError> {
    parse_truth(&file_name(path), &read_file(path)?)
}

pub fn read_measurements(path: &Path) -> Result<Vec<Measurement>, DataError> {
    parse_measurements(&file_name(path), &read_file(path)?)
}
