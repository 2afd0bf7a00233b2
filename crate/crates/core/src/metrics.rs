//! Verification metrics shared by every event type, and the record type the
//! harness writes them into.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_area_km2, haversine_km, lon_delta, FieldCube, Grid, LatLon};

/// A detection outcome that may legitimately be absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal<T> {
    Detected(T),
    NoSignal,
}

impl<T> Signal<T> {
    pub fn detected(self) -> Option<T> {
        match self {
            Signal::Detected(v) => Some(v),
            Signal::NoSignal => None,
        }
    }

    pub fn is_detected(&self) -> bool {
        matches!(self, Signal::Detected(_))
    }
}

fn paired(f: &[f64], o: &[f64]) -> Result<()> {
    if f.len() != o.len() {
        return Err(Error::ShapeMismatch(format!("{} forecast values vs {} observed", f.len(), o.len())));
    }
    if f.is_empty() {
        return Err(Error::Empty("no values to compare".into()));
    }
    Ok(())
}

pub fn mae(f: &[f64], o: &[f64]) -> Result<f64> {
    paired(f, o)?;
    Ok(f.iter().zip(o).map(|(a, b)| (a - b).abs()).sum::<f64>() / f.len() as f64)
}

pub fn rmse(f: &[f64], o: &[f64]) -> Result<f64> {
    paired(f, o)?;
    Ok((f.iter().zip(o).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / f.len() as f64).sqrt())
}

/// How gridpoints are weighted in a regional mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionWeighting {
    #[default]
    Equal,
    Area,
}

/// Regional score with a flag set when the relaxation window ran past
/// either end of the data for at least one gridpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedScore {
    pub value: f64,
    pub truncated: bool,
    pub points: usize,
}

struct RegionalMean {
    sum: f64,
    weight: f64,
    points: usize,
}

impl RegionalMean {
    fn new() -> Self {
        Self {
            sum: 0.0,
            weight: 0.0,
            points: 0,
        }
    }

    fn add(&mut self, v: f64, w: f64) {
        self.sum += v * w;
        self.weight += w;
        self.points += 1;
    }

    fn finish(self, truncated: bool) -> Result<RelaxedScore> {
        if self.points == 0 || self.weight <= 0.0 {
            return Err(Error::Undefined("no valid gridpoints in region".into()));
        }
        Ok(RelaxedScore {
            value: self.sum / self.weight,
            truncated,
            points: self.points,
        })
    }
}

fn cogridded(f: &FieldCube, o: &FieldCube, mask: Option<&Grid<bool>>) -> Result<()> {
    f.spec.ensure_same(&o.spec, "forecast/observation")?;
    if let Some(m) = mask {
        m.ensure_shape(&o.spec, "region mask")?;
    }
    if f.nlevel() != 1 || o.nlevel() != 1 {
        return Err(Error::ShapeMismatch("relaxed metrics need single-level cubes".into()));
    }
    if f.ntime() == 0 || o.ntime() == 0 {
        return Err(Error::Empty("cube has no times".into()));
    }
    Ok(())
}

fn point_weight(weighting: RegionWeighting, o: &FieldCube, i: usize) -> f64 {
    match weighting {
        RegionWeighting::Equal => 1.0,
        RegionWeighting::Area => cell_area_km2(o.spec.lat(i), &o.spec),
    }
}

/// Regional mean of |max forecast within ±relax of the observed maximum
/// time − observed maximum|.
pub fn rmae_max(
    f: &FieldCube,
    o: &FieldCube,
    mask: Option<&Grid<bool>>,
    relax_hours: i64,
    weighting: RegionWeighting,
) -> Result<RelaxedScore> {
    cogridded(f, o, mask)?;
    let relax = Duration::hours(relax_hours);
    let (f_first, f_last) = (f.times[0], f.times[f.ntime() - 1]);
    let mut acc = RegionalMean::new();
    let mut truncated = false;
    for i in 0..o.spec.nlat {
        for j in 0..o.spec.nlon {
            if mask.is_some_and(|m| !m[(i, j)]) {
                continue;
            }
            let Some((t_star, o_max)) = (0..o.ntime())
                .map(|t| (o.times[t], o.get(t, 0, i, j)))
                .filter(|(_, v)| v.is_finite())
                .fold(None, |best: Option<(DateTime<Utc>, f64)>, (t, v)| match best {
                    Some((_, b)) if b >= v => best,
                    _ => Some((t, v)),
                })
            else {
                continue;
            };
            let f_max = (0..f.ntime())
                .filter(|&t| (f.times[t] - t_star).abs() <= relax)
                .map(|t| f.get(t, 0, i, j))
                .filter(|v| v.is_finite())
                .fold(f64::NEG_INFINITY, f64::max);
            if f_max == f64::NEG_INFINITY {
                continue;
            }
            truncated |= t_star - relax < f_first || t_star + relax > f_last;
            acc.add((f_max - o_max).abs(), point_weight(weighting, o, i));
        }
    }
    acc.finish(truncated)
}

/// Daily minima per UTC calendar day at one gridpoint.
fn daily_minima(c: &FieldCube, i: usize, j: usize) -> Vec<(NaiveDate, f64)> {
    let mut out: Vec<(NaiveDate, f64)> = Vec::new();
    for t in 0..c.ntime() {
        let v = c.get(t, 0, i, j);
        if !v.is_finite() {
            continue;
        }
        let d = c.times[t].date_naive();
        match out.last_mut() {
            Some((day, m)) if *day == d => *m = m.min(v),
            _ => out.push((d, v)),
        }
    }
    out
}

fn span_days(c: &FieldCube) -> f64 {
    let step = c.cadence_seconds().unwrap_or(0);
    ((c.times[c.ntime() - 1] - c.times[0]).num_seconds() + step) as f64 / 86_400.0
}

/// Regional mean of |forecast − observed| for the event maximum of daily
/// minimum temperature, letting the forecast day move by ±`relax_days`.
pub fn rmae_maxdailymin(
    f: &FieldCube,
    o: &FieldCube,
    mask: Option<&Grid<bool>>,
    relax_days: i64,
    weighting: RegionWeighting,
) -> Result<RelaxedScore> {
    cogridded(f, o, mask)?;
    if span_days(o) < 1.0 - 1e-9 {
        return Err(Error::InvalidParameter("event is shorter than one day".into()));
    }
    let mut acc = RegionalMean::new();
    let mut truncated = false;
    for i in 0..o.spec.nlat {
        for j in 0..o.spec.nlon {
            if mask.is_some_and(|m| !m[(i, j)]) {
                continue;
            }
            let obs = daily_minima(o, i, j);
            let Some(&(d_star, o_val)) = obs.iter().fold(None, |best: Option<&(NaiveDate, f64)>, x| match best {
                Some(b) if b.1 >= x.1 => Some(b),
                _ => Some(x),
            }) else {
                continue;
            };
            let fc = daily_minima(f, i, j);
            let window: Vec<f64> = fc
                .iter()
                .filter(|(d, _)| (*d - d_star).num_days().abs() <= relax_days)
                .map(|x| x.1)
                .collect();
            let Some(f_val) = window.iter().copied().reduce(f64::max) else {
                continue;
            };
            if let (Some(first), Some(last)) = (fc.first(), fc.last()) {
                truncated |= d_star - Duration::days(relax_days) < first.0 || d_star + Duration::days(relax_days) > last.0;
            }
            acc.add((f_val - o_val).abs(), point_weight(weighting, o, i));
        }
    }
    acc.finish(truncated)
}

/// Intersection over union of two co-gridded masks.
pub fn iou(a: &Grid<bool>, b: &Grid<bool>) -> Result<f64> {
    a.ensure_same_shape(b, "iou")?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        return Err(Error::Undefined("iou of two empty masks".into()));
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Displacement {
    /// Euclidean distance in degrees on the lat/lon plane.
    pub planar_deg: f64,
    pub km: f64,
}

pub fn spatial_displacement(pred: LatLon, obs: LatLon) -> Displacement {
    let dlat = pred.lat - obs.lat;
    let dlon = lon_delta(pred.lon, obs.lon);
    Displacement {
        planar_deg: dlat.hypot(dlon),
        km: haversine_km(pred, obs),
    }
}

/// Predicted start day minus actual start day; negative means the event was
/// predicted to start early.
pub fn lead_time_days(predicted_start: Option<NaiveDate>, actual_start: NaiveDate) -> Signal<i64> {
    match predicted_start {
        Some(p) => Signal::Detected((p - actual_start).num_days()),
        None => Signal::NoSignal,
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub model: String,
    pub case: String,
    #[serde(with = "crate::timefmt")]
    pub init_time: DateTime<Utc>,
    pub lead_hours: i64,
    pub metric: String,
    pub value: Option<f64>,
    pub units: String,
    pub undefined: bool,
}

impl MetricRecord {
    /// Record holding `value`; absent or non-finite values become undefined.
    pub fn new(
        model: &str,
        case: &str,
        init_time: DateTime<Utc>,
        lead_hours: i64,
        metric: &str,
        units: &str,
        value: Option<f64>,
    ) -> Self {
        let value = value.filter(|v| v.is_finite());
        Self {
            model: model.to_string(),
            case: case.to_string(),
            init_time,
            lead_hours,
            metric: metric.to_string(),
            undefined: value.is_none(),
            value,
            units: units.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.value, self.undefined) {
            (Some(v), false) if v.is_finite() => Ok(()),
            (None, true) => Ok(()),
            _ => Err(Error::InvalidParameter(format!(
                "record {}/{} must carry either a finite value or the undefined flag",
                self.case, self.metric
            ))),
        }
    }

    pub fn is_diagnostic(&self) -> bool {
        self.metric.starts_with(DIAGNOSTIC_PREFIX)
    }
}

/// Metric-name prefix for rows that describe a skipped or incomplete case
/// rather than a score.
pub const DIAGNOSTIC_PREFIX: &str = "diagnostic:";

pub fn write_records_csv(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let bytes = records_csv_bytes(records)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn records_csv_bytes(records: &[MetricRecord]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(["model", "case", "init_time", "lead_hours", "metric", "value", "units", "undefined"])?;
    for r in records {
        r.validate()?;
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: MetricRecord = rec?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_records_jsonl(path: impl AsRef<Path>, records: &[MetricRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        r.validate()?;
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_records_jsonl(path: impl AsRef<Path>) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetricRecord = serde_json::from_str(&line)?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2021, 6, 20, 0, 0, 0).unwrap()
    }

    fn point_cube(vals: &[f64], step_h: i64) -> FieldCube {
        let spec = GridSpec::new(40.0, -100.0, 1.0, 1.0, 1, 1).unwrap();
        let times = (0..vals.len() as i64).map(|k| t0() + Duration::hours(step_h * k)).collect();
        FieldCube::new("t2m", "K", spec, times, vec![], None, vals.iter().map(|&v| v as f32).collect()).unwrap()
    }

    #[test]
    fn mae_rmse_examples() {
        assert_eq!(mae(&[1.0, 3.0], &[2.0, 1.0]).unwrap(), 1.5);
        assert_eq!(rmse(&[5.0], &[2.0]).unwrap(), 3.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!(matches!(mae(&[], &[]), Err(Error::Empty(_))));
        assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn iou_examples() {
        let a = Grid::from_vec(1, 8, vec![true, true, true, true, true, false, false, false]).unwrap();
        let b = Grid::from_vec(1, 8, vec![false, false, false, true, true, true, true, true]).unwrap();
        assert_eq!(iou(&a, &b).unwrap(), 0.25);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let none = Grid::filled(1, 8, false);
        assert_eq!(iou(&a, &none).unwrap(), 0.0);
        assert!(iou(&none, &none).unwrap_err().is_undefined());
    }

    #[test]
    fn displacement_examples() {
        let d = spatial_displacement(LatLon::new(3.0, 4.0), LatLon::new(0.0, 0.0));
        assert!((d.planar_deg - 5.0).abs() < 1e-12);
        let d = spatial_displacement(LatLon::new(60.0, 1.0), LatLon::new(60.0, 0.0));
        assert!((d.planar_deg - 1.0).abs() < 1e-12);
        assert!((d.km - 55.6).abs() < 0.05);
        let d = spatial_displacement(LatLon::new(10.0, 179.5), LatLon::new(10.0, -179.5));
        assert!((d.planar_deg - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lead_time_examples() {
        let d = |m, dd| NaiveDate::from_ymd_opt(2021, m, dd).unwrap();
        assert_eq!(lead_time_days(Some(d(6, 25)), d(6, 27)), Signal::Detected(-2));
        assert_eq!(lead_time_days(Some(d(6, 27)), d(6, 27)), Signal::Detected(0));
        assert_eq!(lead_time_days(None, d(6, 27)), Signal::NoSignal);
    }

    /// daily cycle whose peak on day k is 300 - 2(peak_day - k) up to the peak day
    fn stepped_diurnal(days: usize, peak_day: usize, shift_h: i64) -> Vec<f64> {
        (0..days as i64 * 24)
            .map(|h| {
                let src = h - shift_h;
                let day = src.div_euclid(24);
                let hour = src.rem_euclid(24) as f64;
                let peak = 300.0 - 2.0 * (day - peak_day as i64).abs() as f64;
                let phase = ((hour - 15.0) / 24.0 * std::f64::consts::TAU).cos();
                peak - 8.0 * (1.0 - phase) / 2.0
            })
            .collect()
    }

    #[test]
    fn rmae_max_phase_relaxation() {
        let obs = point_cube(&stepped_diurnal(8, 4, 0), 1);
        let same = rmae_max(&obs, &obs, None, 24, RegionWeighting::Equal).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(!same.truncated);
        let early = point_cube(&stepped_diurnal(8, 4, 12), 1);
        assert_eq!(rmae_max(&early, &obs, None, 24, RegionWeighting::Equal).unwrap().value, 0.0);
        let late = point_cube(&stepped_diurnal(8, 4, 36), 1);
        assert!((rmae_max(&late, &obs, None, 24, RegionWeighting::Equal).unwrap().value - 2.0).abs() < 1e-4);
    }

    #[test]
    fn rmae_max_truncation_flag() {
        let obs = point_cube(&[300.0, 290.0, 290.0, 290.0, 290.0, 290.0], 6);
        let s = rmae_max(&obs, &obs, None, 24, RegionWeighting::Equal).unwrap();
        assert!(s.truncated);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn maxdailymin_examples() {
        let night = |warm: f64| -> Vec<f64> {
            (0..5 * 4).map(|k| if k % 4 == 0 { 285.0 + warm + (k / 4) as f64 } else { 295.0 }).collect()
        };
        let obs = point_cube(&night(0.0), 6);
        let fc = point_cube(&night(3.0), 6);
        assert!((rmae_maxdailymin(&fc, &obs, None, 1, RegionWeighting::Equal).unwrap().value - 3.0).abs() < 1e-4);
        assert_eq!(rmae_maxdailymin(&obs, &obs, None, 1, RegionWeighting::Equal).unwrap().value, 0.0);

        let one_day = point_cube(&[290.0, 291.0, 292.0, 293.0], 6);
        let fc = point_cube(&[288.0, 291.0, 292.0, 293.0], 6);
        assert_eq!(rmae_maxdailymin(&fc, &one_day, None, 1, RegionWeighting::Equal).unwrap().value, 2.0);
        let short = point_cube(&[290.0, 291.0], 6);
        assert!(rmae_maxdailymin(&short, &short, None, 1, RegionWeighting::Equal).is_err());
    }

    #[test]
    fn record_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![
            MetricRecord::new("m", "c1", t0(), 24, "rmse", "K", Some(1.25)),
            MetricRecord::new("m", "c1", t0(), 24, "csi", "1", None),
            MetricRecord::new("m", "c1", t0(), 24, "far", "1", Some(f64::NAN)),
        ];
        assert!(recs[2].undefined && recs[2].value.is_none());
        let csv_path = dir.path().join("r.csv");
        write_records_csv(&csv_path, &recs).unwrap();
        let text = fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("model,case,init_time,lead_hours,metric,value,units,undefined\n"));
        assert!(text.contains("m,c1,2021-06-20T00:00:00Z,24,csi,,1,true"));
        assert_eq!(read_records_csv(&csv_path).unwrap(), recs);
        let jl = dir.path().join("r.jsonl");
        write_records_jsonl(&jl, &recs).unwrap();
        assert_eq!(read_records_jsonl(&jl).unwrap(), recs);
    }

    proptest! {
        #[test]
        fn mae_rmse_properties(pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..30), c in -100.0f64..100.0) {
            let (f, o): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = mae(&f, &o).unwrap();
            prop_assert!((m - mae(&o, &f).unwrap()).abs() < 1e-12);
            prop_assert!(rmse(&f, &o).unwrap() + 1e-12 >= m);
            let fs: Vec<f64> = f.iter().map(|x| x + c).collect();
            let os: Vec<f64> = o.iter().map(|x| x + c).collect();
            prop_assert!((mae(&fs, &os).unwrap() - m).abs() < 1e-9);
        }

        #[test]
        fn iou_matches_counts(a in proptest::collection::vec(any::<bool>(), 16), b in proptest::collection::vec(any::<bool>(), 16)) {
            let ga = Grid::from_vec(4, 4, a.clone()).unwrap();
            let gb = Grid::from_vec(4, 4, b.clone()).unwrap();
            let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
            let union = a.iter().zip(&b).filter(|(x, y)| **x || **y).count();
            match iou(&ga, &gb) {
                Ok(v) => {
                    prop_assert_eq!(v, inter as f64 / union as f64);
                    prop_assert_eq!(v, iou(&gb, &ga).unwrap());
                }
                Err(_) => prop_assert_eq!(union, 0),
            }
        }

        #[test]
        fn rmae_max_absorbs_small_shifts(shift in 0i64..=24) {
            let obs = point_cube(&stepped_diurnal(8, 4, 0), 1);
            let fc = point_cube(&stepped_diurnal(8, 4, shift), 1);
            prop_assert!(rmae_max(&fc, &obs, None, 24, RegionWeighting::Equal).unwrap().value.abs() < 1e-9);
        }
    }
}
