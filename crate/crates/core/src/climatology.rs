//! Percentile climatologies and the temperature-event detectors built on
//! them: heat waves, major freezes and marginal temperature days.

use chrono::{DateTime, Datelike, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    cell_area_km2, connected_components, Connectivity, FieldCube, Grid, GridSpec, LandMask, LatLon, Region,
};

pub const DAYS_PER_YEAR: usize = 365;
pub const SYNOPTIC_SLOTS: usize = 4;
pub const FREEZING_K: f64 = 273.15;
const SIX_HOURS: i64 = 6 * 3600;

/// Day-of-year bucket in a 365-day calendar; Feb 29 folds onto Feb 28.
pub fn day_of_year_index(date: NaiveDate) -> usize {
    let ord = date.ordinal0() as usize;
    if date.leap_year() && ord >= 59 {
        if ord == 59 {
            58
        } else {
            ord - 1
        }
    } else {
        ord
    }
}

/// 6-hourly synoptic slot (0, 6, 12, 18 UTC).
pub fn synoptic_slot(t: DateTime<Utc>) -> usize {
    t.hour() as usize / 6
}

fn doy_distance(a: usize, b: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(DAYS_PER_YEAR - d)
}

/// Weighted quantile by cumulative-weight linear interpolation.
///
/// Each sorted sample sits at the midpoint of its weight mass; those
/// positions are rescaled so the smallest sample maps to 0 and the largest
/// to 1, and the quantile interpolates linearly between neighbours. With
/// equal weights this reduces to the usual linear (type 7) estimator.
/// Non-positive weights are ignored.
pub fn weighted_quantile(samples: &[(f64, f64)], p: f64) -> Option<f64> {
    let mut s: Vec<(f64, f64)> = samples.iter().copied().filter(|&(v, w)| w > 0.0 && v.is_finite()).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    if s.len() == 1 {
        return Some(s[0].0);
    }
    let total: f64 = s.iter().map(|x| x.1).sum();
    let first = s[0].1;
    let last = s[s.len() - 1].1;
    let denom = total - 0.5 * (first + last);
    let p = p.clamp(0.0, 1.0);

    let mut cum = 0.0;
    let mut prev: Option<(f64, f64)> = None; // (position, value)
    for &(v, w) in &s {
        let pos = (cum + 0.5 * w - 0.5 * first) / denom;
        cum += w;
        if pos >= p {
            return Some(match prev {
                None => v,
                Some((p0, v0)) if pos > p0 => v0 + (v - v0) * (p - p0) / (pos - p0),
                Some(_) => v,
            });
        }
        prev = Some((pos, v));
    }
    Some(s[s.len() - 1].0)
}

/// Per-gridpoint percentile threshold for every (day of year, synoptic hour).
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileClimatology {
    pub spec: GridSpec,
    pub percentile: f64,
    /// [doy][slot][lat][lon]
    values: Vec<f32>,
}

impl PercentileClimatology {
    fn offset(&self, doy: usize, slot: usize) -> usize {
        (doy * SYNOPTIC_SLOTS + slot) * self.spec.len()
    }

    pub fn value(&self, doy: usize, slot: usize, i: usize, j: usize) -> f64 {
        self.values[self.offset(doy, slot) + i * self.spec.nlon + j] as f64
    }

    /// Threshold applicable at time `t`.
    pub fn at(&self, t: DateTime<Utc>, i: usize, j: usize) -> f64 {
        self.value(day_of_year_index(t.date_naive()), synoptic_slot(t), i, j)
    }

    /// Climatology that is the same value everywhere (mostly for tests and
    /// synthetic cases).
    pub fn constant(spec: GridSpec, percentile: f64, value: f32) -> Self {
        Self {
            spec,
            percentile,
            values: vec![value; DAYS_PER_YEAR * SYNOPTIC_SLOTS * spec.len()],
        }
    }

    /// Climatology from a per-gridpoint function of (doy, slot).
    pub fn from_fn(spec: GridSpec, percentile: f64, f: impl Fn(usize, usize, usize, usize) -> f32) -> Self {
        let mut values = Vec::with_capacity(DAYS_PER_YEAR * SYNOPTIC_SLOTS * spec.len());
        for d in 0..DAYS_PER_YEAR {
            for s in 0..SYNOPTIC_SLOTS {
                for i in 0..spec.nlat {
                    for j in 0..spec.nlon {
                        values.push(f(d, s, i, j));
                    }
                }
            }
        }
        Self { spec, percentile, values }
    }

    fn axis_times() -> Vec<DateTime<Utc>> {
        let start = Utc.with_ymd_and_hms(2001, 1, 1, 0, 0, 0).unwrap();
        (0..(DAYS_PER_YEAR * SYNOPTIC_SLOTS) as i64)
            .map(|k| start + Duration::hours(6 * k))
            .collect()
    }

    /// Container form: the time axis is one non-leap year at 6-hourly
    /// cadence (365 x 4 entries); the variable name carries the percentile.
    pub fn to_cube(&self) -> FieldCube {
        let pct = format!("{}", (self.percentile * 100.0 * 1e6).round() / 1e6);
        FieldCube::new(
            format!("t2m_p{pct}"),
            "K",
            self.spec,
            Self::axis_times(),
            vec![],
            None,
            self.values.clone(),
        )
        .expect("climatology cube is well formed")
    }

    pub fn from_cube(cube: &FieldCube) -> Result<Self> {
        if cube.ntime() != DAYS_PER_YEAR * SYNOPTIC_SLOTS || cube.nlevel() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "climatology needs {} times and 1 level, got {} and {}",
                DAYS_PER_YEAR * SYNOPTIC_SLOTS,
                cube.ntime(),
                cube.nlevel()
            )));
        }
        let pct = cube
            .variable
            .rsplit_once("_p")
            .and_then(|(_, p)| p.parse::<f64>().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("climatology variable {:?} lacks a _p<percent> suffix", cube.variable)))?;
        if cube.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedHeader("climatology values must be finite".into()));
        }
        Ok(Self {
            spec: cube.spec,
            percentile: pct / 100.0,
            values: cube.values().to_vec(),
        })
    }
}

/// Weighted percentile of every (gridpoint, day of year, synoptic hour)
/// over a window of ±`half_window_days` with triangular weights
/// `max(0, 1 - |d| / half_window_days)`.
pub fn build_percentile_climatology(
    history: &FieldCube,
    percentile: f64,
    half_window_days: usize,
) -> Result<PercentileClimatology> {
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(Error::InvalidParameter(format!("percentile {percentile} must lie in (0, 1)")));
    }
    if half_window_days == 0 {
        return Err(Error::InvalidParameter("half window must be at least one day".into()));
    }
    if history.nlevel() != 1 {
        return Err(Error::ShapeMismatch("climatology history must be single-level".into()));
    }
    let (first, last) = match (history.times.first(), history.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::InsufficientHistory("history is empty".into())),
    };
    let step = history.cadence_seconds().unwrap_or(SIX_HOURS);
    if (last - first).num_seconds() + step < 2 * DAYS_PER_YEAR as i64 * 86_400 {
        return Err(Error::InsufficientHistory(format!(
            "history spans {} days, at least two years are required",
            (last - first).num_days()
        )));
    }

    let keys: Vec<(usize, usize)> = history
        .times
        .iter()
        .map(|t| (day_of_year_index(t.date_naive()), synoptic_slot(*t)))
        .collect();
    let spec = history.spec;
    let npts = spec.len();
    let hw = half_window_days as f64;

    // per gridpoint: [doy*4 + slot] -> thresholds
    let per_point: Vec<Result<Vec<f32>>> = (0..npts)
        .into_par_iter()
        .map(|k| {
            let (i, j) = spec.unflat(k);
            let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); DAYS_PER_YEAR * SYNOPTIC_SLOTS];
            for (t, &(d, s)) in keys.iter().enumerate() {
                let v = history.get(t, 0, i, j);
                if v.is_finite() {
                    buckets[d * SYNOPTIC_SLOTS + s].push(v);
                }
            }
            let mut out = vec![0f32; DAYS_PER_YEAR * SYNOPTIC_SLOTS];
            let mut samples = Vec::new();
            for d in 0..DAYS_PER_YEAR {
                for s in 0..SYNOPTIC_SLOTS {
                    samples.clear();
                    for off in -(half_window_days as isize - 1)..=(half_window_days as isize - 1) {
                        let dd = (d as isize + off).rem_euclid(DAYS_PER_YEAR as isize) as usize;
                        let w = 1.0 - doy_distance(d, dd) as f64 / hw;
                        for &v in &buckets[dd * SYNOPTIC_SLOTS + s] {
                            samples.push((v, w));
                        }
                    }
                    let q = weighted_quantile(&samples, percentile).ok_or_else(|| {
                        Error::InsufficientHistory(format!("no samples for day {d} slot {s} at gridpoint ({i},{j})"))
                    })?;
                    out[d * SYNOPTIC_SLOTS + s] = q as f32;
                }
            }
            Ok(out)
        })
        .collect();

    let mut values = vec![0f32; DAYS_PER_YEAR * SYNOPTIC_SLOTS * npts];
    for (k, res) in per_point.into_iter().enumerate() {
        for (ds, v) in res?.into_iter().enumerate() {
            values[ds * npts + k] = v;
        }
    }
    Ok(PercentileClimatology {
        spec,
        percentile,
        values,
    })
}

/// How the 6-hourly samples of one UTC day combine into a daily flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DayRule {
    Any,
    All,
}

/// Per-day boolean flags for every gridpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyFlags {
    pub spec: GridSpec,
    pub days: Vec<NaiveDate>,
    /// [day][lat][lon]
    flags: Vec<bool>,
}

impl DailyFlags {
    pub fn get(&self, day: usize, i: usize, j: usize) -> bool {
        self.flags[day * self.spec.len() + i * self.spec.nlon + j]
    }

    /// Daily series at one gridpoint.
    pub fn series(&self, i: usize, j: usize) -> Vec<bool> {
        (0..self.days.len()).map(|d| self.get(d, i, j)).collect()
    }
}

fn check_cadence(cube: &FieldCube) -> Result<()> {
    if cube.ntime() < 2 {
        return Ok(());
    }
    match cube.cadence_seconds() {
        Some(SIX_HOURS) => Ok(()),
        other => Err(Error::Cadence(format!(
            "temperature cadence must be 6-hourly, found {:?} s",
            other
        ))),
    }
}

fn daily_flags(cube: &FieldCube, rule: DayRule, pred: impl Fn(usize, usize, usize) -> bool + Sync) -> Result<DailyFlags> {
    check_cadence(cube)?;
    if cube.nlevel() != 1 {
        return Err(Error::ShapeMismatch("temperature cube must be single-level".into()));
    }
    let mut days: Vec<NaiveDate> = Vec::new();
    let mut day_of_time = Vec::with_capacity(cube.ntime());
    for t in &cube.times {
        let d = t.date_naive();
        if days.last() != Some(&d) {
            days.push(d);
        }
        day_of_time.push(days.len() - 1);
    }
    let npts = cube.spec.len();
    let nlon = cube.spec.nlon;
    let mut flags = vec![rule == DayRule::All; days.len() * npts];
    let mut seen = vec![false; days.len() * npts];
    for (t, &d) in day_of_time.iter().enumerate() {
        for k in 0..npts {
            let (i, j) = (k / nlon, k % nlon);
            let hit = pred(t, i, j);
            let idx = d * npts + k;
            seen[idx] = true;
            flags[idx] = match rule {
                DayRule::Any => flags[idx] || hit,
                DayRule::All => flags[idx] && hit,
            };
        }
    }
    for (f, s) in flags.iter_mut().zip(&seen) {
        *f &= *s;
    }
    Ok(DailyFlags {
        spec: cube.spec,
        days,
        flags,
    })
}

/// Runs of `true` that may bridge gaps of at most `max_gap` false entries.
/// Returns inclusive `(start, end)` index pairs; both ends are `true`.
pub fn merged_runs(flags: &[bool], max_gap: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut k = 0;
    while k < flags.len() {
        if !flags[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < flags.len() && flags[k] {
            k += 1;
        }
        let end = k - 1;
        match runs.last_mut() {
            Some(last) if start - last.1 - 1 <= max_gap => last.1 = end,
            _ => runs.push((start, end)),
        }
    }
    runs
}

/// Longest merged run per gridpoint, with the daily flags it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLengths {
    pub daily: DailyFlags,
    /// Longest merged run length in days (gap days included).
    pub longest: Grid<u32>,
    /// Day index where that run starts.
    pub start: Grid<Option<usize>>,
    pub max_gap_days: usize,
}

impl RunLengths {
    fn from_daily(daily: DailyFlags, max_gap_days: usize) -> Self {
        let spec = daily.spec;
        let mut longest = Grid::filled(spec.nlat, spec.nlon, 0u32);
        let mut start = Grid::filled(spec.nlat, spec.nlon, None);
        for i in 0..spec.nlat {
            for j in 0..spec.nlon {
                let runs = merged_runs(&daily.series(i, j), max_gap_days);
                // earliest run wins ties
                if let Some(&(s, e)) = runs.iter().rev().max_by_key(|(s, e)| e - s) {
                    longest[(i, j)] = (e - s + 1) as u32;
                    start[(i, j)] = Some(s);
                }
            }
        }
        Self {
            daily,
            longest,
            start,
            max_gap_days,
        }
    }

    /// `true` for each (day, gridpoint) lying inside a merged run of at
    /// least `min_run` days.
    pub fn in_event(&self, min_run: usize) -> Vec<Grid<bool>> {
        let spec = self.daily.spec;
        let mut out = vec![Grid::filled(spec.nlat, spec.nlon, false); self.daily.days.len()];
        for i in 0..spec.nlat {
            for j in 0..spec.nlon {
                for (s, e) in merged_runs(&self.daily.series(i, j), self.max_gap_days) {
                    if e - s + 1 >= min_run {
                        for day in out.iter_mut().take(e + 1).skip(s) {
                            day[(i, j)] = true;
                        }
                    }
                }
            }
        }
        out
    }

    /// First day on which more than half of the `region` gridpoints are
    /// inside a qualifying run.
    pub fn event_start_day(&self, region: &Grid<bool>, min_run: usize) -> Option<NaiveDate> {
        let total = region.count();
        if total == 0 {
            return None;
        }
        self.in_event(min_run)
            .iter()
            .position(|day| 2 * day.and(region).count() > total)
            .map(|d| self.daily.days[d])
    }
}

fn ensure_cogridded(temp: &FieldCube, clim: &PercentileClimatology) -> Result<()> {
    temp.spec.ensure_same(&clim.spec, "climatology")
}

/// Longest heat-wave run per gridpoint: a day qualifies when any 6-hourly
/// sample exceeds the climatology; runs bridge single-day (≤ 24 h) gaps.
pub fn detect_heatwave_days(temp: &FieldCube, clim85: &PercentileClimatology) -> Result<RunLengths> {
    ensure_cogridded(temp, clim85)?;
    let daily = daily_flags(temp, DayRule::Any, |t, i, j| {
        let v = temp.get(t, 0, i, j);
        v.is_finite() && v > clim85.at(temp.times[t], i, j)
    })?;
    Ok(RunLengths::from_daily(daily, 1))
}

/// Longest freeze run per gridpoint: a day qualifies when a sample is both
/// below 273.15 K and below the climatology.
pub fn detect_freeze_days(temp: &FieldCube, clim15: &PercentileClimatology) -> Result<RunLengths> {
    ensure_cogridded(temp, clim15)?;
    let daily = daily_flags(temp, DayRule::Any, |t, i, j| {
        let v = temp.get(t, 0, i, j);
        v.is_finite() && v < FREEZING_K && v < clim15.at(temp.times[t], i, j)
    })?;
    Ok(RunLengths::from_daily(daily, 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowParams {
    pub min_run_days: u32,
    pub step_deg: f64,
    pub edge_fraction: f64,
}

impl Default for GrowParams {
    fn default() -> Self {
        Self {
            min_run_days: 3,
            step_deg: 1.0,
            edge_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Edge {
    North,
    South,
    East,
    West,
}

/// Box in grid-relative coordinates: latitude and longitude offset east
/// of `lon0`.
#[derive(Debug, Clone, Copy)]
struct GridBox {
    lat_lo: f64,
    lat_hi: f64,
    x_lo: f64,
    x_hi: f64,
}

impl GridBox {
    fn rows(&self, spec: &GridSpec) -> Option<(usize, usize)> {
        let lo = ((self.lat_lo - spec.lat0) / spec.dlat - 1e-9).ceil().max(0.0);
        let hi = ((self.lat_hi - spec.lat0) / spec.dlat + 1e-9).floor().min((spec.nlat - 1) as f64);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    fn cols(&self, spec: &GridSpec) -> Option<(usize, usize)> {
        let lo = (self.x_lo / spec.dlon - 1e-9).ceil().max(0.0);
        let hi = (self.x_hi / spec.dlon + 1e-9).floor().min((spec.nlon - 1) as f64);
        (lo <= hi).then_some((lo as usize, hi as usize))
    }

    fn to_region(self, spec: &GridSpec) -> Region {
        Region {
            lat_min: self.lat_lo,
            lat_max: self.lat_hi,
            lon_min: crate::grid::wrap_lon(spec.lon0 + self.x_lo),
            lon_max: crate::grid::wrap_lon(spec.lon0 + self.x_hi),
        }
    }
}

fn qualifies(runs: &Grid<u32>, land: Option<&LandMask>, i: usize, j: usize, min_run: u32) -> Option<bool> {
    if land.is_some_and(|m| !m.mask[(i, j)]) {
        return None;
    }
    Some(runs[(i, j)] >= min_run)
}

fn edge_fraction(b: &GridBox, edge: Edge, runs: &Grid<u32>, spec: &GridSpec, land: Option<&LandMask>, min_run: u32) -> f64 {
    let (Some((r0, r1)), Some((c0, c1))) = (b.rows(spec), b.cols(spec)) else {
        return 0.0;
    };
    let cells: Vec<(usize, usize)> = match edge {
        Edge::North => (c0..=c1).map(|j| (r1, j)).collect(),
        Edge::South => (c0..=c1).map(|j| (r0, j)).collect(),
        Edge::East => (r0..=r1).map(|i| (i, c1)).collect(),
        Edge::West => (r0..=r1).map(|i| (i, c0)).collect(),
    };
    let (mut n, mut hit) = (0usize, 0usize);
    for (i, j) in cells {
        if let Some(q) = qualifies(runs, land, i, j, min_run) {
            n += 1;
            hit += q as usize;
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

fn seed_box(seed: LatLon, spec: &GridSpec, step: f64) -> GridBox {
    let x = spec.lon_offset(seed.lon);
    GridBox {
        lat_lo: seed.lat - 0.5 * step,
        lat_hi: seed.lat + 0.5 * step,
        x_lo: x - 0.5 * step,
        x_hi: x + 0.5 * step,
    }
}

/// Fraction of (land) gridpoints in the initial 1° box around `seed` whose
/// run reaches `min_run_days`.
pub fn seed_box_majority(seed: LatLon, runs: &Grid<u32>, spec: &GridSpec, params: &GrowParams, land: Option<&LandMask>) -> f64 {
    let b = seed_box(seed, spec, params.step_deg);
    let (Some((r0, r1)), Some((c0, c1))) = (b.rows(spec), b.cols(spec)) else {
        return 0.0;
    };
    let (mut n, mut hit) = (0usize, 0usize);
    for i in r0..=r1 {
        for j in c0..=c1 {
            if let Some(q) = qualifies(runs, land, i, j, params.min_run_days) {
                n += 1;
                hit += q as usize;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        hit as f64 / n as f64
    }
}

/// Grow a box outward from the 1°x1° box at `seed`. Each pass visits the
/// edges in N, S, E, W order and pushes an edge out by one step while at
/// least half of the (land) gridpoints on that edge have a qualifying run.
/// Growth stops at the grid bounds.
pub fn grow_bounding_box(
    seed: LatLon,
    runs: &Grid<u32>,
    spec: &GridSpec,
    params: &GrowParams,
    land: Option<&LandMask>,
) -> Result<Region> {
    runs.ensure_shape(spec, "run lengths")?;
    let (si, sj) = spec
        .nearest(seed)
        .ok_or_else(|| Error::SeedNotQualifying(format!("seed {seed:?} is off the grid")))?;
    if runs[(si, sj)] < params.min_run_days {
        return Err(Error::SeedNotQualifying(format!(
            "seed run is {} days, {} required",
            runs[(si, sj)],
            params.min_run_days
        )));
    }

    let step = params.step_deg;
    let lat_cap = (spec.lat0, spec.lat_last());
    let x_cap = (0.0, (spec.nlon - 1) as f64 * spec.dlon);
    let mut b = seed_box(seed, spec, step);
    b.lat_lo = b.lat_lo.max(lat_cap.0);
    b.lat_hi = b.lat_hi.min(lat_cap.1);
    b.x_lo = b.x_lo.max(x_cap.0);
    b.x_hi = b.x_hi.min(x_cap.1);

    let mut changed = true;
    while changed {
        changed = false;
        for edge in [Edge::North, Edge::South, Edge::East, Edge::West] {
            let frac = edge_fraction(&b, edge, runs, spec, land, params.min_run_days);
            if frac < params.edge_fraction {
                continue;
            }
            let before = b;
            match edge {
                Edge::North => b.lat_hi = (b.lat_hi + step).min(lat_cap.1),
                Edge::South => b.lat_lo = (b.lat_lo - step).max(lat_cap.0),
                Edge::East => b.x_hi = (b.x_hi + step).min(x_cap.1),
                Edge::West => b.x_lo = (b.x_lo - step).max(x_cap.0),
            }
            let moved = (before.lat_hi, before.lat_lo, before.x_hi, before.x_lo) != (b.lat_hi, b.lat_lo, b.x_hi, b.x_lo);
            changed |= moved;
        }
    }
    Ok(b.to_region(spec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureEvent {
    HeatWave,
    Freeze,
    Marginal,
}

/// A detected temperature case: spatial box, time window and per-gridpoint
/// qualifying-day counts (zero outside the case).
#[derive(Debug, Clone, PartialEq)]
pub struct EventCase {
    pub id: String,
    pub event_type: TemperatureEvent,
    pub region: Region,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub qualifying_days: Grid<u32>,
}

fn midnight(d: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&d.and_hms_opt(0, 0, 0).expect("midnight"))
}

/// Heat-wave or freeze case around a seed: the seed must qualify and a
/// majority of the initial box must qualify before the box is grown.
pub fn detect_seeded_case(
    id: &str,
    event_type: TemperatureEvent,
    runs: &RunLengths,
    seed: LatLon,
    params: &GrowParams,
    land: Option<&LandMask>,
) -> Result<EventCase> {
    let spec = runs.daily.spec;
    let majority = seed_box_majority(seed, &runs.longest, &spec, params, land);
    if majority <= 0.5 {
        return Err(Error::SeedNotQualifying(format!(
            "only {:.0}% of the seed box qualifies",
            100.0 * majority
        )));
    }
    let region = grow_bounding_box(seed, &runs.longest, &spec, params, land)?;
    let mut in_case = region.mask(&spec);
    if let Some(l) = land {
        in_case = in_case.and(&l.mask);
    }
    let mut first: Option<usize> = None;
    let mut last: Option<usize> = None;
    let mut counts = Grid::filled(spec.nlat, spec.nlon, 0u32);
    for i in 0..spec.nlat {
        for j in 0..spec.nlon {
            if !in_case[(i, j)] || runs.longest[(i, j)] < params.min_run_days {
                continue;
            }
            let s = runs.start[(i, j)].expect("qualifying run has a start");
            let e = s + runs.longest[(i, j)] as usize - 1;
            counts[(i, j)] = runs.longest[(i, j)];
            first = Some(first.map_or(s, |f| f.min(s)));
            last = Some(last.map_or(e, |l| l.max(e)));
        }
    }
    let (first, last) = first.zip(last).ok_or_else(|| Error::SeedNotQualifying("no qualifying land gridpoints".into()))?;
    Ok(EventCase {
        id: id.to_string(),
        event_type,
        region,
        start: midnight(runs.daily.days[first]),
        end: midnight(runs.daily.days[last]) + Duration::days(1),
        qualifying_days: counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarginalParams {
    pub min_days: usize,
    pub min_area_km2: f64,
    /// Gridpoints south of this latitude are ignored (Antarctica).
    pub southern_limit_lat: f64,
}

impl Default for MarginalParams {
    fn default() -> Self {
        Self {
            min_days: 5,
            min_area_km2: 200_000.0,
            southern_limit_lat: -60.0,
        }
    }
}

/// Land regions larger than `min_area_km2` whose temperature stays inside
/// the [p16, p84] band on every sample for at least `min_days` days.
pub fn detect_marginal_regions(
    temp: &FieldCube,
    clim16: &PercentileClimatology,
    clim84: &PercentileClimatology,
    land: &LandMask,
    params: &MarginalParams,
) -> Result<Vec<EventCase>> {
    ensure_cogridded(temp, clim16)?;
    ensure_cogridded(temp, clim84)?;
    temp.spec.ensure_same(&land.spec, "land mask")?;
    let daily = daily_flags(temp, DayRule::All, |t, i, j| {
        let v = temp.get(t, 0, i, j);
        let when = temp.times[t];
        v.is_finite() && v >= clim16.at(when, i, j) && v <= clim84.at(when, i, j)
    })?;
    let runs = RunLengths::from_daily(daily, 0);
    let spec = temp.spec;
    let persistent = Grid::from_fn(spec.nlat, spec.nlon, |i, j| {
        land.mask[(i, j)] && spec.lat(i) >= params.southern_limit_lat && runs.longest[(i, j)] as usize >= params.min_days
    });
    let comps = connected_components(&persistent, Connectivity::Eight, spec.is_global_lon());

    let mut cases = Vec::new();
    for members in comps.all_members() {
        let area: f64 = members.iter().map(|&k| cell_area_km2(spec.lat(spec.unflat(k).0), &spec)).sum();
        if area <= params.min_area_km2 {
            continue;
        }
        let mut counts = Grid::filled(spec.nlat, spec.nlon, 0u32);
        let (mut lat_lo, mut lat_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut x_lo, mut x_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut first, mut last) = (usize::MAX, 0usize);
        for &k in &members {
            let (i, j) = spec.unflat(k);
            counts[(i, j)] = runs.longest[(i, j)];
            lat_lo = lat_lo.min(spec.lat(i));
            lat_hi = lat_hi.max(spec.lat(i));
            let x = j as f64 * spec.dlon;
            x_lo = x_lo.min(x);
            x_hi = x_hi.max(x);
            let s = runs.start[(i, j)].expect("persistent point has a run");
            first = first.min(s);
            last = last.max(s + runs.longest[(i, j)] as usize - 1);
        }
        if lat_hi <= lat_lo {
            lat_hi = lat_lo + spec.dlat.min(1e-6).max(1e-6);
        }
        cases.push(EventCase {
            id: format!("marginal-{:03}", cases.len() + 1),
            event_type: TemperatureEvent::Marginal,
            region: Region {
                lat_min: lat_lo,
                lat_max: lat_hi,
                lon_min: crate::grid::wrap_lon(spec.lon0 + x_lo),
                lon_max: crate::grid::wrap_lon(spec.lon0 + x_hi),
            },
            start: midnight(runs.daily.days[first]),
            end: midnight(runs.daily.days[last]) + Duration::days(1),
            qualifying_days: counts,
        });
    }
    Ok(cases)
}
