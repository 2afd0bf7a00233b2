//! Tropical-cyclone candidate detection and track stitching.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{destination, great_circle_deg, lon_delta, wrap_lon, Grid, GridSpec, LatLon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcParams {
    pub max_center_pressure_hpa: f64,
    /// Required thickness change away from the warm core, metres (negative).
    pub warm_core_thickness_drop_m: f64,
    pub warm_core_radius_gcd: f64,
    /// Search radius around the pressure minimum for the thickness maximum.
    pub warm_core_anchor_radius_gcd: f64,
    pub require_closed_contours: bool,
    pub min_pressure_gradient_pa: f64,
    pub gradient_radius_gcd: f64,
    pub max_distance_from_reference_gcd: f64,
    pub min_candidate_separation_gcd: f64,
    pub max_track_gap_hours: i64,
    /// Largest jump allowed between consecutive track points.
    pub max_step_distance_gcd: f64,
    pub min_valid_wind_timesteps: usize,
    pub valid_wind_ms: f64,
    pub max_abs_latitude: f64,
    pub peak_wind_radius_gcd: f64,
    pub contour_rays: usize,
}

impl Default for TcParams {
    fn default() -> Self {
        Self {
            max_center_pressure_hpa: 1020.0,
            warm_core_thickness_drop_m: -6.0,
            warm_core_radius_gcd: 6.5,
            warm_core_anchor_radius_gcd: 1.0,
            require_closed_contours: true,
            min_pressure_gradient_pa: 200.0,
            gradient_radius_gcd: 5.5,
            max_distance_from_reference_gcd: 5.0,
            min_candidate_separation_gcd: 1.0,
            max_track_gap_hours: 48,
            max_step_distance_gcd: 8.0,
            min_valid_wind_timesteps: 10,
            valid_wind_ms: 10.0,
            max_abs_latitude: 50.0,
            peak_wind_radius_gcd: 2.0,
            contour_rays: 8,
        }
    }
}

impl TcParams {
    pub fn validate(&self) -> Result<()> {
        let radii = [
            self.warm_core_radius_gcd,
            self.warm_core_anchor_radius_gcd,
            self.gradient_radius_gcd,
            self.max_distance_from_reference_gcd,
            self.min_candidate_separation_gcd,
            self.max_step_distance_gcd,
            self.peak_wind_radius_gcd,
        ];
        if radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::InvalidParameter("TC search radii must be positive".into()));
        }
        if self.warm_core_thickness_drop_m > 0.0 || self.min_pressure_gradient_pa < 0.0 {
            return Err(Error::InvalidParameter(
                "thickness drop must be non-positive and pressure gradient non-negative".into(),
            ));
        }
        if self.max_track_gap_hours <= 0 || self.contour_rays == 0 || !(self.max_abs_latitude > 0.0) {
            return Err(Error::InvalidParameter("track gap, ray count and latitude cap must be positive".into()));
        }
        Ok(())
    }
}

/// Fields needed for candidate detection at one valid time. Pressure is in
/// hPa, geopotential heights in metres, winds in m/s.
#[derive(Debug, Clone, PartialEq)]
pub struct TcFields {
    pub spec: GridSpec,
    pub time: DateTime<Utc>,
    pub mslp_hpa: Grid<f64>,
    pub z300_m: Grid<f64>,
    pub z500_m: Grid<f64>,
    pub u10: Grid<f64>,
    pub v10: Grid<f64>,
}

impl TcFields {
    pub fn validate(&self) -> Result<()> {
        self.mslp_hpa.ensure_shape(&self.spec, "mslp")?;
        self.z300_m.ensure_shape(&self.spec, "z300")?;
        self.z500_m.ensure_shape(&self.spec, "z500")?;
        self.u10.ensure_shape(&self.spec, "u10")?;
        self.v10.ensure_shape(&self.spec, "v10")
    }

    pub fn thickness(&self) -> Grid<f64> {
        Grid::from_fn(self.spec.nlat, self.spec.nlon, |i, j| self.z300_m[(i, j)] - self.z500_m[(i, j)])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourDirection {
    Rise,
    Drop,
}

/// Azimuth sampling for closed-contour tests.
fn ray_bearings(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| 360.0 * k as f64 / n as f64)
}

fn on_grid(spec: &GridSpec, center: LatLon) -> Result<(usize, usize)> {
    spec.nearest(center)
        .ok_or_else(|| Error::InvalidParameter(format!("center {center:?} lies outside the grid")))
}

/// Does the field change by at least `delta` in `direction` along every
/// ray before reaching `radius`? Rays are sampled at the grid resolution;
/// a ray that leaves the grid first fails.
pub fn closed_contour_check(
    field: &Grid<f64>,
    spec: &GridSpec,
    center: LatLon,
    delta: f64,
    radius_gcd: f64,
    direction: ContourDirection,
) -> Result<bool> {
    closed_contour_rays(field, spec, center, delta, radius_gcd, direction, 8).map(|passed| passed == 8)
}

/// Number of rays (out of `rays`) that meet the contour condition.
pub fn closed_contour_rays(
    field: &Grid<f64>,
    spec: &GridSpec,
    center: LatLon,
    delta: f64,
    radius_gcd: f64,
    direction: ContourDirection,
    rays: usize,
) -> Result<usize> {
    field.ensure_shape(spec, "contour field")?;
    let (ci, cj) = on_grid(spec, center)?;
    if delta <= 0.0 {
        return Ok(rays);
    }
    let reference = field[(ci, cj)];
    let step = spec.dlat.min(spec.dlon);
    let nsteps = (radius_gcd / step + 1e-9).floor() as usize;
    let mut passed = 0;
    for bearing in ray_bearings(rays) {
        for k in 1..=nsteps {
            let p = destination(center, bearing, k as f64 * step);
            let Some((i, j)) = spec.nearest(p) else {
                break;
            };
            let change = match direction {
                ContourDirection::Rise => field[(i, j)] - reference,
                ContourDirection::Drop => reference - field[(i, j)],
            };
            if change >= delta {
                passed += 1;
                break;
            }
        }
    }
    Ok(passed)
}

/// Gridpoints within `radius_gcd` of `center`, as (row, column).
pub fn points_within(spec: &GridSpec, center: LatLon, radius_gcd: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let lat_lo = center.lat - radius_gcd;
    let lat_hi = center.lat + radius_gcd;
    let i0 = ((lat_lo - spec.lat0) / spec.dlat).floor().max(0.0) as usize;
    let i1 = (((lat_hi - spec.lat0) / spec.dlat).ceil().max(0.0) as usize).min(spec.nlat.saturating_sub(1));
    for i in i0..=i1 {
        for j in 0..spec.nlon {
            if great_circle_deg(center, spec.point(i, j)) <= radius_gcd + 1e-9 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Largest 10 m wind speed within `radius_gcd` of `center`.
pub fn peak_wind(u10: &Grid<f64>, v10: &Grid<f64>, spec: &GridSpec, center: LatLon, radius_gcd: f64) -> Result<f64> {
    u10.ensure_shape(spec, "u10")?;
    v10.ensure_shape(spec, "v10")?;
    on_grid(spec, center)?;
    Ok(points_within(spec, center, radius_gcd)
        .into_iter()
        .map(|(i, j)| u10[(i, j)].hypot(v10[(i, j)]))
        .filter(|w| w.is_finite())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateCenter {
    #[serde(with = "crate::timefmt")]
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub mslp_hpa: f64,
    /// Warm-core closed-contour test outcome.
    pub warm_core: bool,
    pub peak_wind_ms: f64,
}

impl CandidateCenter {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

/// Gridpoints whose value is ≤ every neighbour and < at least one.
pub fn local_minima(field: &Grid<f64>, wrap_lon: bool) -> Vec<(usize, usize)> {
    let (nlat, nlon) = field.shape();
    let mut out = Vec::new();
    for i in 0..nlat {
        for j in 0..nlon {
            let v = field[(i, j)];
            if !v.is_finite() {
                continue;
            }
            let mut strictly_lower = false;
            let mut is_min = true;
            'nb: for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ni = i as isize + di;
                    let mut nj = j as isize + dj;
                    if ni < 0 || ni >= nlat as isize {
                        continue;
                    }
                    if nj < 0 || nj >= nlon as isize {
                        if !wrap_lon {
                            continue;
                        }
                        nj = nj.rem_euclid(nlon as isize);
                    }
                    let w = field[(ni as usize, nj as usize)];
                    if w < v {
                        is_min = false;
                        break 'nb;
                    }
                    strictly_lower |= v < w;
                }
            }
            if is_min && strictly_lower {
                out.push((i, j));
            }
        }
    }
    out
}

fn required_rays(params: &TcParams) -> usize {
    if params.require_closed_contours {
        params.contour_rays
    } else {
        1
    }
}

/// Candidate cyclone centres at one valid time.
pub fn find_candidates(fields: &TcFields, params: &TcParams, reference: Option<LatLon>) -> Result<Vec<CandidateCenter>> {
    params.validate()?;
    fields.validate()?;
    let spec = &fields.spec;
    let thickness = fields.thickness();
    let need = required_rays(params);
    let mut found = Vec::new();
    for (i, j) in local_minima(&fields.mslp_hpa, spec.is_global_lon()) {
        let p = spec.point(i, j);
        let mslp = fields.mslp_hpa[(i, j)];
        if mslp > params.max_center_pressure_hpa || p.lat.abs() > params.max_abs_latitude {
            continue;
        }
        if reference.is_some_and(|r| great_circle_deg(p, r) > params.max_distance_from_reference_gcd) {
            continue;
        }
        let rise = closed_contour_rays(
            &fields.mslp_hpa,
            spec,
            p,
            params.min_pressure_gradient_pa / 100.0,
            params.gradient_radius_gcd,
            ContourDirection::Rise,
            params.contour_rays,
        )?;
        if rise < need {
            continue;
        }
        let warm_core = match warm_core_anchor(&thickness, spec, p, params.warm_core_anchor_radius_gcd) {
            Some(anchor) => {
                closed_contour_rays(
                    &thickness,
                    spec,
                    anchor,
                    -params.warm_core_thickness_drop_m,
                    params.warm_core_radius_gcd,
                    ContourDirection::Drop,
                    params.contour_rays,
                )? >= need
            }
            None => false,
        };
        if !warm_core {
            continue;
        }
        found.push(CandidateCenter {
            time: fields.time,
            lat: p.lat,
            lon: p.lon,
            mslp_hpa: mslp,
            warm_core,
            peak_wind_ms: peak_wind(&fields.u10, &fields.v10, spec, p, params.peak_wind_radius_gcd)?,
        });
    }
    Ok(enforce_separation(found, params.min_candidate_separation_gcd))
}

/// Position of the thickness maximum within `radius` of `center`.
fn warm_core_anchor(thickness: &Grid<f64>, spec: &GridSpec, center: LatLon, radius: f64) -> Option<LatLon> {
    let mut best: Option<(f64, f64, (usize, usize))> = None;
    for (i, j) in points_within(spec, center, radius) {
        let v = thickness[(i, j)];
        if !v.is_finite() {
            continue;
        }
        let d = great_circle_deg(center, spec.point(i, j));
        // highest thickness, nearest to the low on ties
        let better = match best {
            None => true,
            Some((bv, bd, _)) => v > bv || (v == bv && d < bd),
        };
        if better {
            best = Some((v, d, (i, j)));
        }
    }
    best.map(|(_, _, (i, j))| spec.point(i, j))
}

fn deeper_first(a: &CandidateCenter, b: &CandidateCenter) -> std::cmp::Ordering {
    a.mslp_hpa
        .total_cmp(&b.mslp_hpa)
        .then(a.lat.total_cmp(&b.lat))
        .then(a.lon.total_cmp(&b.lon))
}

/// Among candidates closer than `min_sep`, only the deepest survives.
pub fn enforce_separation(mut cands: Vec<CandidateCenter>, min_sep: f64) -> Vec<CandidateCenter> {
    cands.sort_by(deeper_first);
    let mut kept: Vec<CandidateCenter> = Vec::new();
    for c in cands {
        if kept.iter().all(|k| great_circle_deg(k.position(), c.position()) >= min_sep) {
            kept.push(c);
        }
    }
    kept.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)));
    kept
}

/// Candidates for each valid time, computed in parallel. The reference
/// position for each time comes from `reference` when given.
pub fn find_candidates_series(
    fields: &[TcFields],
    params: &TcParams,
    reference: Option<&Track>,
) -> Result<Vec<(DateTime<Utc>, Vec<CandidateCenter>)>> {
    fields
        .par_iter()
        .map(|f| {
            let ref_point = match reference {
                Some(track) => match track.position_at(f.time) {
                    Some(p) => Some(p),
                    None => return Ok((f.time, Vec::new())),
                },
                None => None,
            };
            Ok((f.time, find_candidates(f, params, ref_point)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackSource {
    Forecast,
    Analysis,
}

impl TrackSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrackSource::Forecast => "forecast",
            TrackSource::Analysis => "analysis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    #[serde(with = "crate::timefmt")]
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub mslp_hpa: f64,
    pub peak_wind_ms: f64,
}

impl TrackPoint {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    /// Linear interpolation at fraction `f` of the way to `next`; longitude
    /// follows the short way round.
    pub fn lerp(&self, next: &TrackPoint, f: f64) -> TrackPoint {
        let dt = (next.time - self.time).num_milliseconds() as f64 * f;
        TrackPoint {
            time: self.time + Duration::milliseconds(dt.round() as i64),
            lat: self.lat + (next.lat - self.lat) * f,
            lon: wrap_lon(self.lon + lon_delta(self.lon, next.lon) * f),
            mslp_hpa: self.mslp_hpa + (next.mslp_hpa - self.mslp_hpa) * f,
            peak_wind_ms: self.peak_wind_ms + (next.peak_wind_ms - self.peak_wind_ms) * f,
        }
    }
}

impl From<&CandidateCenter> for TrackPoint {
    fn from(c: &CandidateCenter) -> Self {
        TrackPoint {
            time: c.time,
            lat: c.lat,
            lon: c.lon,
            mslp_hpa: c.mslp_hpa,
            peak_wind_ms: c.peak_wind_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub storm_id: String,
    pub source: TrackSource,
    pub points: Vec<TrackPoint>,
}

impl Track {
    pub fn new(storm_id: impl Into<String>, source: TrackSource, points: Vec<TrackPoint>) -> Result<Self> {
        if let Some(k) = points.windows(2).position(|w| w[1].time <= w[0].time) {
            return Err(Error::NonMonotoneTime(k + 1));
        }
        Ok(Self {
            storm_id: storm_id.into(),
            source,
            points,
        })
    }

    pub fn start(&self) -> Option<DateTime<Utc>> {
        self.points.first().map(|p| p.time)
    }

    /// Linearly interpolated state at `t`; `None` outside the track span.
    pub fn interpolate_at(&self, t: DateTime<Utc>) -> Option<TrackPoint> {
        let k = self.points.partition_point(|p| p.time < t);
        let p1 = self.points.get(k)?;
        if p1.time == t {
            return Some(*p1);
        }
        let p0 = self.points.get(k.checked_sub(1)?)?;
        let f = (t - p0.time).num_milliseconds() as f64 / (p1.time - p0.time).num_milliseconds() as f64;
        Some(p0.lerp(p1, f))
    }

    pub fn position_at(&self, t: DateTime<Utc>) -> Option<LatLon> {
        self.interpolate_at(t).map(|p| p.position())
    }

    /// Track aligned to the given valid times (those inside its span).
    pub fn resampled(&self, times: &[DateTime<Utc>]) -> Track {
        Track {
            storm_id: self.storm_id.clone(),
            source: self.source,
            points: times.iter().filter_map(|&t| self.interpolate_at(t)).collect(),
        }
    }

    pub fn valid_wind_steps(&self, threshold: f64) -> usize {
        self.points.iter().filter(|p| p.peak_wind_ms >= threshold).count()
    }

    pub fn is_valid(&self, params: &TcParams) -> bool {
        self.valid_wind_steps(params.valid_wind_ms) >= params.min_valid_wind_timesteps
    }
}

/// Greedy nearest-neighbour association of candidates into tracks.
///
/// At each time, every (open track, candidate) pair within the gap and step
/// limits is ranked by distance, then candidate pressure, latitude and
/// longitude, and pairs are taken one-to-one in that order. Leftover
/// candidates open new tracks. Tracks without enough strong-wind points
/// are dropped.
pub fn stitch_tracks(
    candidates_by_time: &[(DateTime<Utc>, Vec<CandidateCenter>)],
    params: &TcParams,
    reference: Option<&Track>,
    source: TrackSource,
    id_prefix: &str,
) -> Result<Vec<Track>> {
    params.validate()?;
    if let Some(k) = candidates_by_time.windows(2).position(|w| w[1].0 <= w[0].0) {
        return Err(Error::NonMonotoneTime(k + 1));
    }
    let max_gap = Duration::hours(params.max_track_gap_hours);
    let mut tracks: Vec<Vec<TrackPoint>> = Vec::new();
    for (time, cands) in candidates_by_time {
        let mut cands: Vec<CandidateCenter> = cands
            .iter()
            .filter(|c| c.lat.abs() <= params.max_abs_latitude)
            .filter(|c| match reference {
                None => true,
                Some(r) => r
                    .position_at(*time)
                    .is_some_and(|p| great_circle_deg(p, c.position()) <= params.max_distance_from_reference_gcd),
            })
            .copied()
            .collect();
        cands.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)).then(a.mslp_hpa.total_cmp(&b.mslp_hpa)));

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            let last = t.last().expect("tracks are never empty");
            if *time - last.time > max_gap {
                continue;
            }
            for (ci, c) in cands.iter().enumerate() {
                let d = great_circle_deg(last.position(), c.position());
                if d <= params.max_step_distance_gcd {
                    pairs.push((d, ci, ti));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(deeper_first(&cands[a.1], &cands[b.1]))
                .then(a.2.cmp(&b.2))
        });
        let mut cand_used = vec![false; cands.len()];
        let mut track_used = vec![false; tracks.len()];
        for (_, ci, ti) in pairs {
            if cand_used[ci] || track_used[ti] {
                continue;
            }
            cand_used[ci] = true;
            track_used[ti] = true;
            tracks[ti].push(TrackPoint::from(&cands[ci]));
        }
        for (ci, c) in cands.iter().enumerate() {
            if !cand_used[ci] {
                tracks.push(vec![TrackPoint::from(c)]);
            }
        }
    }
    let mut out = Vec::new();
    for points in tracks {
        let track = Track {
            storm_id: String::new(),
            source,
            points,
        };
        if track.is_valid(params) {
            out.push(Track {
                storm_id: format!("{id_prefix}{:03}", out.len() + 1),
                ..track
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    storm_id: String,
    source: TrackSource,
    #[serde(with = "crate::timefmt")]
    time: DateTime<Utc>,
    lat: f64,
    lon: f64,
    mslp_hpa: f64,
    peak_wind_ms: f64,
}

pub fn write_tracks_csv(path: impl AsRef<Path>, tracks: &[Track]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    if tracks.iter().all(|t| t.points.is_empty()) {
        w.write_record(["storm_id", "source", "time", "lat", "lon", "mslp_hpa", "peak_wind_ms"])?;
    }
    for t in tracks {
        for p in &t.points {
            w.serialize(TrackRow {
                storm_id: t.storm_id.clone(),
                source: t.source,
                time: p.time,
                lat: p.lat,
                lon: p.lon,
                mslp_hpa: p.mslp_hpa,
                peak_wind_ms: p.peak_wind_ms,
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Tracks grouped by (storm id, source) in first-appearance order.
pub fn read_tracks_csv(path: impl AsRef<Path>) -> Result<Vec<Track>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut order: Vec<(String, TrackSource)> = Vec::new();
    let mut groups: BTreeMap<(String, TrackSource), Vec<TrackPoint>> = BTreeMap::new();
    for row in r.deserialize() {
        let row: TrackRow = row?;
        let key = (row.storm_id.clone(), row.source);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(TrackPoint {
            time: row.time,
            lat: row.lat,
            lon: wrap_lon(row.lon),
            mslp_hpa: row.mslp_hpa,
            peak_wind_ms: row.peak_wind_ms,
        });
    }
    order
        .into_iter()
        .map(|key| {
            let points = groups.remove(&key).unwrap_or_default();
            Track::new(key.0, key.1, points)
        })
        .collect()
}
