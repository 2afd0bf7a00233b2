//! The EWB container: a JSON header plus a little-endian float32 payload in
//! row-major (time, level, lat, lon) order.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Grid, GridSpec};
use crate::error::{Error, Result};

/// Timestamp format used in every file the toolkit writes.
pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContainerHeader {
    variable: String,
    units: String,
    nlat: usize,
    nlon: usize,
    ntime: usize,
    nlevel: usize,
    lat0: f64,
    lon0: f64,
    dlat: f64,
    dlon: f64,
    times: Vec<String>,
    #[serde(rename = "levels_hPa")]
    levels_hpa: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fill_value: Option<f32>,
    payload: String,
}

/// One physical variable on a (time, level, lat, lon) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldCube {
    pub variable: String,
    pub units: String,
    pub spec: GridSpec,
    pub times: Vec<DateTime<Utc>>,
    /// Pressure levels in hPa, descending. Empty for single-level fields.
    pub levels_hpa: Vec<f64>,
    pub fill_value: Option<f32>,
    values: Vec<f32>,
}

impl FieldCube {
    pub fn new(
        variable: impl Into<String>,
        units: impl Into<String>,
        spec: GridSpec,
        times: Vec<DateTime<Utc>>,
        levels_hpa: Vec<f64>,
        fill_value: Option<f32>,
        values: Vec<f32>,
    ) -> Result<Self> {
        let cube = Self {
            variable: variable.into(),
            units: units.into(),
            spec,
            times,
            levels_hpa,
            fill_value,
            values,
        };
        cube.validate()?;
        Ok(cube)
    }

    /// Build a cube by evaluating `f(t, level, i, j)` at every point.
    pub fn from_fn(
        variable: impl Into<String>,
        units: impl Into<String>,
        spec: GridSpec,
        times: Vec<DateTime<Utc>>,
        levels_hpa: Vec<f64>,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let nlevel = levels_hpa.len().max(1);
        let mut values = Vec::with_capacity(times.len() * nlevel * spec.len());
        for t in 0..times.len() {
            for l in 0..nlevel {
                for i in 0..spec.nlat {
                    for j in 0..spec.nlon {
                        values.push(f(t, l, i, j));
                    }
                }
            }
        }
        Self::new(variable, units, spec, times, levels_hpa, None, values)
    }

    fn validate(&self) -> Result<()> {
        let expected = self.ntime() * self.nlevel() * self.spec.len();
        if expected != self.values.len() {
            return Err(Error::PayloadLength {
                expected,
                actual: self.values.len(),
            });
        }
        if let Some(k) = self.times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotoneTime(k + 1));
        }
        if self.levels_hpa.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::MalformedHeader("pressure levels must be strictly descending".into()));
        }
        if self.fill_value.is_none() && self.values.iter().any(|v| v.is_nan()) {
            return Err(Error::MalformedHeader("payload contains NaN but no fill_value is declared".into()));
        }
        Ok(())
    }

    pub fn ntime(&self) -> usize {
        self.times.len()
    }

    pub fn nlevel(&self) -> usize {
        self.levels_hpa.len().max(1)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    fn offset(&self, t: usize, level: usize) -> usize {
        (t * self.nlevel() + level) * self.spec.len()
    }

    pub fn value(&self, t: usize, level: usize, i: usize, j: usize) -> f32 {
        self.values[self.offset(t, level) + i * self.spec.nlon + j]
    }

    /// True for samples equal to the declared fill value or NaN.
    pub fn is_missing(&self, v: f32) -> bool {
        v.is_nan() || self.fill_value.is_some_and(|f| f == v)
    }

    /// Value as f64 with missing samples mapped to NaN.
    pub fn get(&self, t: usize, level: usize, i: usize, j: usize) -> f64 {
        let v = self.value(t, level, i, j);
        if self.is_missing(v) {
            f64::NAN
        } else {
            v as f64
        }
    }

    /// One horizontal slice as f64; missing samples become NaN.
    pub fn field(&self, t: usize, level: usize) -> Grid<f64> {
        let off = self.offset(t, level);
        let data = self.values[off..off + self.spec.len()]
            .iter()
            .map(|&v| if self.is_missing(v) { f64::NAN } else { v as f64 })
            .collect();
        Grid::from_vec(self.spec.nlat, self.spec.nlon, data).expect("slice matches grid")
    }

    /// Uniform spacing of the time axis in seconds, if it has one.
    pub fn cadence_seconds(&self) -> Option<i64> {
        let mut steps = self.times.windows(2).map(|w| (w[1] - w[0]).num_seconds());
        let first = steps.next()?;
        steps.all(|s| s == first).then_some(first)
    }

    pub fn time_index(&self, t: DateTime<Utc>) -> Option<usize> {
        self.times.binary_search(&t).ok()
    }

    pub fn level_index(&self, hpa: f64) -> Option<usize> {
        self.levels_hpa.iter().position(|&l| (l - hpa).abs() < 1e-6)
    }

    /// Copy with the time axis restricted to `[start, end]`.
    pub fn time_subset(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        let keep: Vec<usize> = (0..self.ntime()).filter(|&t| self.times[t] >= start && self.times[t] <= end).collect();
        let n = self.nlevel() * self.spec.len();
        let mut values = Vec::with_capacity(keep.len() * n);
        for &t in &keep {
            let off = self.offset(t, 0);
            values.extend_from_slice(&self.values[off..off + n]);
        }
        Self::new(
            self.variable.clone(),
            self.units.clone(),
            self.spec,
            keep.iter().map(|&t| self.times[t]).collect(),
            self.levels_hpa.clone(),
            self.fill_value,
            values,
        )
    }

    fn header(&self, payload: String) -> ContainerHeader {
        ContainerHeader {
            variable: self.variable.clone(),
            units: self.units.clone(),
            nlat: self.spec.nlat,
            nlon: self.spec.nlon,
            ntime: self.ntime(),
            nlevel: self.nlevel(),
            lat0: self.spec.lat0,
            lon0: self.spec.lon0,
            dlat: self.spec.dlat,
            dlon: self.spec.dlon,
            times: self.times.iter().map(|t| t.format(TIME_FORMAT).to_string()).collect(),
            levels_hpa: self.levels_hpa.clone(),
            fill_value: self.fill_value,
            payload,
        }
    }
}

pub(crate) fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::MalformedHeader(format!("bad timestamp {s:?}: {e}")))
}

/// Read a container given the path of its `.json` header.
pub fn load_cube(path: impl AsRef<Path>) -> Result<FieldCube> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: ContainerHeader =
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader(format!("{}: {e}", path.display())))?;

    if header.times.len() != header.ntime {
        return Err(Error::MalformedHeader(format!(
            "ntime is {} but {} timestamps are listed",
            header.ntime,
            header.times.len()
        )));
    }
    let levels_ok = header.levels_hpa.len() == header.nlevel || (header.nlevel == 1 && header.levels_hpa.is_empty());
    if !levels_ok || header.nlevel == 0 {
        return Err(Error::MalformedHeader(format!(
            "nlevel is {} but {} levels are listed",
            header.nlevel,
            header.levels_hpa.len()
        )));
    }
    let spec = GridSpec::new(header.lat0, header.lon0, header.dlat, header.dlon, header.nlat, header.nlon)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let times = header.times.iter().map(|s| parse_time(s)).collect::<Result<Vec<_>>>()?;

    let payload_path = payload_path(path, &header.payload);
    let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
    let expected = header.ntime * header.nlevel * header.nlat * header.nlon;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != expected {
        return Err(Error::PayloadLength {
            expected,
            actual: bytes.len() / 4,
        });
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();

    FieldCube::new(
        header.variable,
        header.units,
        spec,
        times,
        header.levels_hpa,
        header.fill_value,
        values,
    )
}

fn payload_path(header_path: &Path, payload: &str) -> PathBuf {
    match header_path.parent() {
        Some(dir) => dir.join(payload),
        None => PathBuf::from(payload),
    }
}

/// Write `cube` as `<path>` (header) and `<stem>.f32` (payload) alongside it.
pub fn write_cube(cube: &FieldCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad container path {}", path.display())))?;
    let payload = format!("{stem}.f32");
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut text = serde_json::to_string_pretty(&cube.header(payload.clone()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))?;

    let mut bytes = Vec::with_capacity(cube.values.len() * 4);
    for v in &cube.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let payload_path = payload_path(path, &payload);
    fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))
}
