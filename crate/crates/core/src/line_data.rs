//! Static line description: ordered segments with distance, nominal cruise
//! speed and nominal dwell at the arrival station.
//!
//! The on-disk format is a flat CSV table with one header row and the columns
//! `from,to,distance_km,cruise_kmh,dwell_s`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Line speed limit shared by every segment of the bundled dataset.
pub const DEFAULT_SPEED_LIMIT_KMH: f64 = 80.0;

const HEADER: [&str; 5] = ["from", "to", "distance_km", "cruise_kmh", "dwell_s"];

/// The Xiamen Line 1 table shipped with the repository.
pub const XIAMEN_LINE1_CSV: &str = include_str!("../../../data/xiamen_line1.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub from_station: String,
    pub to_station: String,
    pub distance_km: f64,
    pub nominal_cruise_kmh: f64,
    /// Dwell at `to_station`, seconds.
    pub nominal_dwell_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineDataset {
    pub name: String,
    pub segments: Vec<SegmentRecord>,
    pub speed_limit_kmh: f64,
}

impl LineDataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(name: impl Into<String>, segments: Vec<SegmentRecord>, speed_limit_kmh: f64) -> Result<Self> {
        let ds = LineDataset {
            name: name.into(),
            segments,
            speed_limit_kmh,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// The bundled 24-station Xiamen Line 1 table.
    pub fn xiamen_line1() -> Self {
        parse_line(XIAMEN_LINE1_CSV, "xiamen_line1").expect("bundled line file is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed_limit_kmh > 0.0 && self.speed_limit_kmh.is_finite()) {
            return Err(Error::config("line", "speed limit must be positive"));
        }
        if self.segments.is_empty() {
            return Err(Error::config("line", "line has no segments"));
        }
        for (index, seg) in self.segments.iter().enumerate() {
            let fail = |message: String| Error::Validation {
                index,
                from: seg.from_station.clone(),
                to: seg.to_station.clone(),
                message,
            };
            if !(seg.distance_km > 0.0 && seg.distance_km.is_finite()) {
                return Err(fail(format!("distance {} km must be > 0", seg.distance_km)));
            }
            if !(seg.nominal_cruise_kmh > 0.0) {
                return Err(fail(format!("cruise speed {} km/h must be > 0", seg.nominal_cruise_kmh)));
            }
            if seg.nominal_cruise_kmh > self.speed_limit_kmh {
                return Err(fail(format!(
                    "cruise speed {} km/h exceeds the {} km/h limit",
                    seg.nominal_cruise_kmh, self.speed_limit_kmh
                )));
            }
            if !(seg.nominal_dwell_s >= 0.0 && seg.nominal_dwell_s.is_finite()) {
                return Err(fail(format!("dwell {} s must be >= 0", seg.nominal_dwell_s)));
            }
            if let Some(next) = self.segments.get(index + 1) {
                if next.from_station != seg.to_station {
                    return Err(fail(format!(
                        "chain broken: next segment starts at {}",
                        next.from_station
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn station_count(&self) -> usize {
        self.segments.len() + 1
    }

    pub fn stations(&self) -> Vec<&str> {
        let mut out = Vec::with_capacity(self.station_count());
        out.push(self.segments[0].from_station.as_str());
        out.extend(self.segments.iter().map(|s| s.to_station.as_str()));
        out
    }

    pub fn total_length_km(&self) -> f64 {
        self.segments.iter().map(|s| s.distance_km).sum()
    }

    /// Writes the dataset back in the line-file format.
    pub fn to_csv_string(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for s in &self.segments {
            w.write_record([
                s.from_station.clone(),
                s.to_station.clone(),
                format!("{}", s.distance_km),
                format!("{}", s.nominal_cruise_kmh),
                format!("{}", s.nominal_dwell_s),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }
}

/// Parses a line file with the default 80 km/h limit.
pub fn parse_line(source: &str, name: &str) -> Result<LineDataset> {
    parse_line_with_limit(source, name, DEFAULT_SPEED_LIMIT_KMH)
}

pub fn parse_line_with_limit(source: &str, name: &str, speed_limit_kmh: f64) -> Result<LineDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());

    let parse_err = |line: usize, field: &str, message: String| Error::Parse {
        source_name: name.to_string(),
        line,
        field: field.to_string(),
        message,
    };

    let headers = rdr.headers().map_err(|e| parse_err(1, "header", e.to_string()))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != HEADER {
        return Err(parse_err(1, "header", format!("expected {:?}, found {:?}", HEADER, got)));
    }

    let mut segments = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, "row", e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != HEADER.len() {
            return Err(parse_err(line, "row", format!("expected 5 fields, found {}", record.len())));
        }
        let number = |idx: usize| -> Result<f64> {
            record[idx]
                .parse::<f64>()
                .map_err(|e| parse_err(line, HEADER[idx], format!("{:?}: {e}", &record[idx])))
        };
        segments.push(SegmentRecord {
            from_station: record[0].to_string(),
            to_station: record[1].to_string(),
            distance_km: number(2)?,
            nominal_cruise_kmh: number(3)?,
            nominal_dwell_s: number(4)?,
        });
    }
    LineDataset::new(name, segments, speed_limit_kmh)
}

pub fn load_line(path: &Path) -> Result<LineDataset> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::MissingFile {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_line(&text, &name)
}

/// The same line travelled in the opposite direction.
///
/// Dwell belongs to a station, not a direction: reversed segment `j` arrives
/// at the station where forward segment `n-1-j` departed, so it takes the
/// dwell of the forward segment arriving there. The origin station has no
/// forward dwell; it becomes the reversed terminal, whose dwell is never used,
/// and takes the forward terminal's value so the map is an involution.
pub fn reverse_direction(ds: &LineDataset) -> LineDataset {
    let n = ds.segments.len();
    let segments = (0..n)
        .map(|j| {
            let i = n - 1 - j;
            let fwd = &ds.segments[i];
            let dwell_src = (i + n - 1) % n;
            SegmentRecord {
                from_station: fwd.to_station.clone(),
                to_station: fwd.from_station.clone(),
                distance_km: fwd.distance_km,
                nominal_cruise_kmh: fwd.nominal_cruise_kmh,
                nominal_dwell_s: ds.segments[dwell_src].nominal_dwell_s,
            }
        })
        .collect();
    LineDataset {
        name: ds.name.clone(),
        segments,
        speed_limit_kmh: ds.speed_limit_kmh,
    }
}
