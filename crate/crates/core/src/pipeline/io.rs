use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{io_err, PipelineError};
use crate::{format_timestamp, parse_timestamp};

pub const WEATHER_HEADER: [&str; 5] = [
    "timestamp_iso8601",
    "irradiance_wm2",
    "ambient_temp_f",
    "module_temp_f",
    "cloud_cover_pct",
];
pub const NWP_HEADER: [&str; 3] = [
    "timestamp_iso8601",
    "ambient_temp_forecast_f",
    "cloud_cover_forecast_pct",
];
pub const PRODUCTION_HEADER: [&str; 2] = ["timestamp_iso8601", "generation_kw"];

/// One weather CSV row. Empty cells are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRow {
    pub timestamp: NaiveDateTime,
    pub irradiance_wm2: Option<f64>,
    pub ambient_temp_f: Option<f64>,
    pub module_temp_f: Option<f64>,
    pub cloud_cover_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NwpRecord {
    pub timestamp: NaiveDateTime,
    pub ambient_temp_forecast_f: f64,
    pub cloud_cover_forecast_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionRow {
    pub timestamp: NaiveDateTime,
    pub generation_kw: Option<f64>,
}

struct Row {
    line: usize,
    timestamp: NaiveDateTime,
    values: Vec<Option<f64>>,
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

/// Reads a timestamped numeric table with an exact header. Rows come back
/// sorted by timestamp; duplicates are rejected.
fn read_table(path: &Path, header: &[&str]) -> Result<Vec<Row>, PipelineError> {
    let file = file_name(path);
    let handle = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(handle);

    let found = reader
        .headers()
        .map_err(|e| PipelineError::Schema {
            file: file.clone(),
            row: 1,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let found_names: Vec<&str> = found.iter().map(|h| h.trim_start_matches('\u{feff}')).collect();
    if found_names != header {
        return Err(PipelineError::Header {
            file,
            found: found_names.len(),
            header: found_names.join(","),
            expected: header.len(),
            expected_names: header.join(","),
        });
    }

    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| PipelineError::Schema {
            file: file.clone(),
            row: line,
            column: "-".into(),
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(PipelineError::Schema {
                file,
                row: line,
                column: header.get(record.len()).unwrap_or(&"-").to_string(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let schema = |column: &str, message: String| PipelineError::Schema {
            file: file.clone(),
            row: line,
            column: column.into(),
            message,
        };
        let timestamp = parse_timestamp(&record[0])
            .ok_or_else(|| schema(header[0], format!("cannot parse timestamp '{}'", &record[0])))?;
        if !seen.insert(timestamp) {
            return Err(PipelineError::DuplicateTimestamp { file, timestamp });
        }
        let values = (1..header.len())
            .map(|c| parse_cell(&record[c]).map_err(|m| schema(header[c], m)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(Row {
            line,
            timestamp,
            values,
        });
    }
    rows.sort_by_key(|r| r.timestamp);
    Ok(rows)
}

fn parse_cell(cell: &str) -> Result<Option<f64>, String> {
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    let v: f64 = cell.parse().map_err(|_| format!("cannot parse number '{cell}'"))?;
    Ok(v.is_finite().then_some(v))
}

pub fn read_weather_csv(path: &Path) -> Result<Vec<WeatherRow>, PipelineError> {
    Ok(read_table(path, &WEATHER_HEADER)?
        .into_iter()
        .map(|r| WeatherRow {
            timestamp: r.timestamp,
            irradiance_wm2: r.values[0],
            ambient_temp_f: r.values[1],
            module_temp_f: r.values[2],
            cloud_cover_pct: r.values[3],
        })
        .collect())
}

/// NWP rows must sit on the hour with cloud cover in [0, 100]. Rows with an
/// empty cell are dropped and later reported as gaps.
pub fn read_nwp_csv(path: &Path) -> Result<Vec<NwpRecord>, PipelineError> {
    let file = file_name(path);
    let mut out = Vec::new();
    for r in read_table(path, &NWP_HEADER)? {
        let schema = |column: &str, message: String| PipelineError::Schema {
            file: file.clone(),
            row: r.line,
            column: column.into(),
            message,
        };
        if r.timestamp.format("%M:%S").to_string() != "00:00" {
            return Err(schema(NWP_HEADER[0], "NWP records must be on the hour".into()));
        }
        let (Some(ambient), Some(cloud)) = (r.values[0], r.values[1]) else {
            continue;
        };
        if !(0.0..=100.0).contains(&cloud) {
            return Err(schema(NWP_HEADER[2], format!("cloud cover {cloud} outside [0, 100]")));
        }
        out.push(NwpRecord {
            timestamp: r.timestamp,
            ambient_temp_forecast_f: ambient,
            cloud_cover_forecast_pct: cloud,
        });
    }
    Ok(out)
}

pub fn read_production_csv(path: &Path) -> Result<Vec<ProductionRow>, PipelineError> {
    Ok(read_table(path, &PRODUCTION_HEADER)?
        .into_iter()
        .map(|r| ProductionRow {
            timestamp: r.timestamp,
            generation_kw: r.values[0],
        })
        .collect())
}

pub(crate) fn fmt_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<(), PipelineError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    let wrap = |e: csv::Error| PipelineError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_weather_csv(path: &Path, rows: &[WeatherRow]) -> Result<(), PipelineError> {
    write_table(
        path,
        &WEATHER_HEADER,
        rows.iter().map(|r| {
            vec![
                format_timestamp(r.timestamp),
                fmt_value(r.irradiance_wm2),
                fmt_value(r.ambient_temp_f),
                fmt_value(r.module_temp_f),
                fmt_value(r.cloud_cover_pct),
            ]
        }),
    )
}

pub fn write_nwp_csv(path: &Path, rows: &[NwpRecord]) -> Result<(), PipelineError> {
    write_table(
        path,
        &NWP_HEADER,
        rows.iter().map(|r| {
            vec![
                format_timestamp(r.timestamp),
                fmt_value(Some(r.ambient_temp_forecast_f)),
                fmt_value(Some(r.cloud_cover_forecast_pct)),
            ]
        }),
    )
}

pub fn write_production_csv(path: &Path, rows: &[ProductionRow]) -> Result<(), PipelineError> {
    write_table(
        path,
        &PRODUCTION_HEADER,
        rows.iter()
            .map(|r| vec![format_timestamp(r.timestamp), fmt_value(r.generation_kw)]),
    )
}

/// Creates `path` atomically: writes a sibling temporary file, then renames.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}
