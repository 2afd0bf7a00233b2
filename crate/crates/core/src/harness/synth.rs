//! Synthetic cases with analytically known answers.
//!
//! Every generator writes a complete evaluation tree under its output
//! directory: `catalog/`, `forecasts/<model>/`, `targets/` and `truth.json`.
//! Forecasts are copies of the target fields, so a correct pipeline scores
//! them perfectly.

use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::ar_tracker::GRAVITY;
use crate::climatology::{detect_heatwave_days, detect_marginal_regions, detect_seeded_case, GrowParams, MarginalParams, PercentileClimatology, TemperatureEvent};
use crate::convective::{compute_pph, write_reports_csv, PphParams, Report, ReportType, CBSS_SEVERE_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::{great_circle_deg, write_cube, FieldCube, Grid, GridSpec, LandMask, LatLon, Region};
use crate::tc_tracker::TcFields;

use super::catalog::{write_case, CaseStudy, EventType};
use super::pipeline::select_times;
use super::store::init_dir_name;

/// Model name used for forecasts that equal the target.
pub const PERFECT_MODEL: &str = "perfect";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    Vortex,
    ArPlume,
    HeatSeries,
    Sounding,
    Reports,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vortex" => Ok(SynthKind::Vortex),
            "ar_plume" => Ok(SynthKind::ArPlume),
            "heat_series" => Ok(SynthKind::HeatSeries),
            "sounding" => Ok(SynthKind::Sounding),
            "reports" => Ok(SynthKind::Reports),
            other => Err(Error::InvalidParameter(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureVariant {
    #[default]
    Heat,
    Freeze,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub seed: u64,
    /// Vortex: number of 6-hourly steps (4..=40).
    pub steps: usize,
    /// Vortex: central pressure depression, hPa (5..=80).
    pub depth_hpa: f64,
    /// Vortex: peak 10 m wind, m/s (12..=80).
    pub peak_wind_ms: f64,
    pub variant: TemperatureVariant,
    /// Heat series: day index of the peak anomaly (3..=8).
    pub peak_day: usize,
    /// Heat series: peak excess over the percentile threshold, K (2..=15).
    pub anomaly_k: f64,
    /// Reports: number of storm reports (0..=500).
    pub reports: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            steps: 12,
            depth_hpa: 15.0,
            peak_wind_ms: 25.0,
            variant: TemperatureVariant::Heat,
            peak_day: 5,
            anomaly_k: 6.0,
            reports: 20,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (4..=40).contains(&self.steps)
            && (5.0..=80.0).contains(&self.depth_hpa)
            && (12.0..=80.0).contains(&self.peak_wind_ms)
            && (3..=8).contains(&self.peak_day)
            && (2.0..=15.0).contains(&self.anomaly_k)
            && self.reports <= 500;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("synthetic parameters out of range: {self:?}")))
        }
    }
}

/// What a generator wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOutput {
    pub kind: SynthKind,
    pub case_ids: Vec<String>,
    pub truth: serde_json::Value,
}

pub fn generate_synthetic(kind: SynthKind, params: &SynthParams, out: impl AsRef<Path>) -> Result<SynthOutput> {
    params.validate()?;
    let out = out.as_ref();
    for sub in ["catalog", "forecasts", "targets"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (case_ids, truth) = match kind {
        SynthKind::Vortex => vortex(params, &mut rng, out)?,
        SynthKind::ArPlume => ar_plume(&mut rng, out)?,
        SynthKind::HeatSeries => heat_series(params, out)?,
        SynthKind::Sounding => sounding(out)?,
        SynthKind::Reports => reports(params, &mut rng, out)?,
    };
    let output = SynthOutput { kind, case_ids, truth };
    let mut text = serde_json::to_string_pretty(&output)?;
    text.push('\n');
    let p = out.join("truth.json");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(output)
}

fn utc(y: i32, m: u32, d: u32, h: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, h, 0, 0).single().expect("valid date")
}

fn six_hourly(start: DateTime<Utc>, n: usize) -> Vec<DateTime<Utc>> {
    (0..n as i64).map(|k| start + Duration::hours(6 * k)).collect()
}

fn write_target(out: &Path, case: &str, name: &str, cube: &FieldCube) -> Result<()> {
    write_cube(cube, out.join("targets").join(case).join(format!("{name}.json")))
}

/// Forecast copies of `cubes` restricted to times at or after `init`.
fn write_forecast(out: &Path, case: &str, init: DateTime<Utc>, cubes: &[(&str, &FieldCube)]) -> Result<()> {
    let dir = out.join("forecasts").join(PERFECT_MODEL).join(case).join(init_dir_name(init));
    for (name, cube) in cubes {
        write_cube(&select_times(cube, |t| t >= init)?, dir.join(format!("{name}.json")))?;
    }
    Ok(())
}

fn write_catalog(out: &Path, case: &CaseStudy) -> Result<()> {
    write_case(out.join("catalog").join(format!("{}.json", case.id)), case)
}

fn single_level(name: &str, units: &str, spec: GridSpec, times: &[DateTime<Utc>], f: impl Fn(usize, usize, usize) -> f64) -> Result<FieldCube> {
    FieldCube::from_fn(name, units, spec, times.to_vec(), vec![], |t, _, i, j| f(t, i, j) as f32)
}

/// Axisymmetric cyclone: Gaussian pressure depression, warm-core thickness
/// bump and a tangential wind `peak·x·exp((1 − x²)/2)` peaking one degree
/// from the centre.
pub fn analytic_vortex(spec: GridSpec, time: DateTime<Utc>, center: LatLon, depth_hpa: f64, peak_wind_ms: f64, ambient_hpa: f64) -> TcFields {
    let sigma = 3.0;
    let r = |i, j| great_circle_deg(center, spec.point(i, j));
    let mslp = Grid::from_fn(spec.nlat, spec.nlon, |i, j| ambient_hpa - depth_hpa * (-(r(i, j) / sigma).powi(2)).exp());
    let z500 = Grid::filled(spec.nlat, spec.nlon, 5700.0);
    let z300 = Grid::from_fn(spec.nlat, spec.nlon, |i, j| 9500.0 + 20.0 * (-(r(i, j) / sigma).powi(2)).exp());
    let tangential = |i: usize, j: usize| {
        let p = spec.point(i, j);
        let x: f64 = r(i, j);
        let s = peak_wind_ms * x * ((1.0 - x * x) / 2.0).exp();
        let dy = p.lat - center.lat;
        let dx = crate::grid::lon_delta(center.lon, p.lon) * center.lat.to_radians().cos();
        let d = dx.hypot(dy);
        if d == 0.0 {
            (0.0, 0.0)
        } else {
            (-s * dy / d, s * dx / d)
        }
    };
    TcFields {
        spec,
        time,
        mslp_hpa: mslp,
        z300_m: z300,
        z500_m: z500,
        u10: Grid::from_fn(spec.nlat, spec.nlon, |i, j| tangential(i, j).0),
        v10: Grid::from_fn(spec.nlat, spec.nlon, |i, j| tangential(i, j).1),
    }
}

fn vortex(p: &SynthParams, rng: &mut ChaCha8Rng, out: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let spec = GridSpec::new(5.0, -110.0, 0.5, 0.5, 71, 101)?;
    let coast = -88.0;
    let land = LandMask::new(spec, Grid::from_fn(spec.nlat, spec.nlon, |_, j| spec.lon(j) <= coast))?;
    let t0 = utc(2022, 9, 25, 0);
    let n = p.steps;
    let times = six_hourly(t0, n);
    // track ends 2.5 steps past the coast
    let speed = 1.0;
    let lon0 = coast + speed * (n as f64 - 3.5) + rng.gen_range(-0.2..0.2);
    let lat0 = 20.0 + rng.gen_range(-0.5..0.5);
    let centers: Vec<LatLon> = (0..n).map(|k| LatLon::new(lat0 + 0.25 * k as f64, lon0 - speed * k as f64)).collect();
    let fields: Vec<TcFields> = times
        .iter()
        .zip(&centers)
        .map(|(&t, &c)| analytic_vortex(spec, t, c, p.depth_hpa, p.peak_wind_ms, 1010.0))
        .collect();
    let cube = |name: &str, units: &str, get: fn(&TcFields) -> &Grid<f64>| {
        single_level(name, units, spec, &times, |t, i, j| get(&fields[t])[(i, j)])
    };
    let mslp = cube("mslp", "hPa", |f| &f.mslp_hpa)?;
    let z300 = cube("z300", "m", |f| &f.z300_m)?;
    let z500 = cube("z500", "m", |f| &f.z500_m)?;
    let u10 = cube("u10", "m/s", |f| &f.u10)?;
    let v10 = cube("v10", "m/s", |f| &f.v10)?;
    let id = "tc_synthetic";
    for (name, c) in [("mslp", &mslp), ("z300", &z300), ("z500", &z500), ("u10", &u10), ("v10", &v10)] {
        write_target(out, id, name, c)?;
    }
    write_target(out, id, "land_mask", &land.to_cube())?;
    let all = [("mslp", &mslp), ("z300", &z300), ("z500", &z500), ("u10", &u10), ("v10", &v10)];
    let inits = [t0, t0 + Duration::hours(6)];
    for init in inits {
        write_forecast(out, id, init, &all)?;
    }
    let mut case = CaseStudy::new(id, EventType::TropicalCyclone, Region::new(10.0, 35.0, -105.0, -70.0)?, t0, t0 + Duration::hours(6 * n as i64));
    case.region_label = "north_atlantic".into();
    write_catalog(out, &case)?;
    // straight segment between the two points that bracket the coast
    let k = centers.iter().position(|c| c.lon <= coast).expect("track reaches the coast");
    let (a, b) = (centers[k - 1], centers[k]);
    let f = (a.lon - coast) / (a.lon - b.lon);
    let landfall_time = times[k - 1] + Duration::milliseconds((f * 6.0 * 3_600_000.0).round() as i64);
    let truth = json!({
        "case": id,
        "centers": centers.iter().zip(&times).map(|(c, t)| json!({"time": crate::timefmt::format(t), "lat": c.lat, "lon": c.lon})).collect::<Vec<_>>(),
        "central_pressure_hpa": 1010.0 - p.depth_hpa,
        "peak_wind_ms": p.peak_wind_ms,
        "coast_lon": coast,
        "landfall_fraction": f,
        "landfall_time": crate::timefmt::format(&landfall_time),
        "expected": {"landfall_displacement": 0.0, "landfall_time_error": 0.0, "landfall_pressure_mae": 0.0, "landfall_wind_mae": 0.0},
    });
    Ok((vec![id.to_string()], truth))
}

/// IVT magnitude of a zonally elongated Gaussian plume.
pub fn plume_ivt(spec: &GridSpec, center: LatLon, peak: f64, sx: f64, sy: f64) -> Grid<f64> {
    Grid::from_fn(spec.nlat, spec.nlon, |i, j| {
        let dx = crate::grid::lon_delta(center.lon, spec.lon(j)) / sx;
        let dy = (spec.lat(i) - center.lat) / sy;
        peak * (-(dx * dx + dy * dy) / 2.0).exp()
    })
}

fn ar_plume(rng: &mut ChaCha8Rng, out: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let spec = GridSpec::new(25.0, -150.0, 0.25, 0.25, 121, 161)?;
    let coast = -124.0;
    let land = LandMask::new(spec, Grid::from_fn(spec.nlat, spec.nlon, |_, j| spec.lon(j) >= coast - 1e-9))?;
    let t0 = utc(2023, 1, 9, 0);
    let n = 5;
    let times = six_hourly(t0, n);
    let lat = 40.0 + rng.gen_range(-1.0..1.0);
    let peak = 800.0;
    let (sx, sy) = (8.0, 1.25);
    let centers: Vec<LatLon> = (0..n).map(|k| LatLon::new(lat, -136.0 + 2.0 * k as f64)).collect();
    let ivt: Vec<Grid<f64>> = centers.iter().map(|&c| plume_ivt(&spec, c, peak, sx, sy)).collect();
    // constant q and v = 0 over 1000-400 hPa: IVT = q·u·Δp/g
    let levels = vec![1000.0, 700.0, 400.0];
    let q0 = 0.01;
    let factor = q0 * 600.0 * 100.0 / GRAVITY;
    let q = FieldCube::from_fn("q", "kg/kg", spec, times.clone(), levels.clone(), |_, _, _, _| q0 as f32)?;
    let u = FieldCube::from_fn("u", "m/s", spec, times.clone(), levels.clone(), |t, _, i, j| (ivt[t][(i, j)] / factor) as f32)?;
    let v = FieldCube::from_fn("v", "m/s", spec, times.clone(), levels, |_, _, _, _| 0.0)?;
    let id = "ar_synthetic";
    for (name, c) in [("q", &q), ("u", &u), ("v", &v)] {
        write_target(out, id, name, c)?;
    }
    write_target(out, id, "land_mask", &land.to_cube())?;
    let inits = [t0 - Duration::hours(12), t0];
    for init in inits {
        // earlier initialisations carry the same plume before the case starts
        let pad = |c: &FieldCube| -> Result<FieldCube> {
            let before: Vec<DateTime<Utc>> = (0..)
                .map(|k| init + Duration::hours(6 * k))
                .take_while(|t| *t < t0)
                .collect();
            let full: Vec<DateTime<Utc>> = before.iter().chain(times.iter()).copied().collect();
            let off = before.len();
            FieldCube::from_fn(&c.variable, &c.units, spec, full, c.levels_hpa.clone(), |t, l, i, j| {
                c.value(t.saturating_sub(off), l, i, j)
            })
        };
        let (qf, uf, vf) = (pad(&q)?, pad(&u)?, pad(&v)?);
        write_forecast(out, id, init, &[("q", &qf), ("u", &uf), ("v", &vf)])?;
    }
    let case = CaseStudy::new(id, EventType::AtmosphericRiver, Region::new(25.0, 55.0, -150.0, -110.0)?, t0, t0 + Duration::hours(6 * n as i64));
    write_catalog(out, &case)?;
    let first_land = (0..n)
        .find(|&k| (0..spec.len()).any(|p| {
            let (i, j) = spec.unflat(p);
            land.mask[(i, j)] && ivt[k][(i, j)] >= 400.0
        }))
        .expect("plume reaches land");
    let land_time = times[first_land];
    let area: Vec<usize> = ivt.iter().map(|g| g.as_slice().iter().filter(|v| **v >= 400.0).count()).collect();
    let truth = json!({
        "case": id,
        "plume_centers": centers.iter().map(|c| json!({"lat": c.lat, "lon": c.lon})).collect::<Vec<_>>(),
        "points_above_threshold": area,
        "first_land_time": crate::timefmt::format(&land_time),
        "lead_time_hours": inits.iter().map(|i| json!({"init": crate::timefmt::format(i), "hours": (land_time - *i).num_hours()})).collect::<Vec<_>>(),
        "expected": {"ar_land_iou": 1.0, "ar_land_displacement": 0.0},
    });
    Ok((vec![id.to_string()], truth))
}

/// Daily temperature peak for a constructed heat wave: 298 K normally and
/// `threshold + anomaly − 2·|day − peak_day|` while that exceeds the
/// threshold.
fn event_excess(day: usize, peak_day: usize, anomaly: f64) -> f64 {
    anomaly - 2.0 * (day as f64 - peak_day as f64).abs()
}

/// Days of the marginal variant that stay inside the percentile band.
const MARGINAL_DAYS: std::ops::RangeInclusive<usize> = 3..=10;

fn heat_series(p: &SynthParams, out: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let spec = GridSpec::new(30.0, -100.0, 1.0, 1.0, 11, 11)?;
    let land = LandMask::all_land(spec);
    let t0 = utc(2021, 6, 20, 0);
    let days = 14;
    let times = six_hourly(t0, days * 4);
    let diurnal = |t: usize| {
        // 0 at the 18Z maximum, 1 at the 06Z minimum
        let hour = (t % 4) as f64 * 6.0;
        0.5 * (1.0 - (2.0 * std::f64::consts::PI * (hour - 18.0) / 24.0).cos())
    };
    let (event, id, label, clim_files): (Option<TemperatureEvent>, &str, &str, Vec<(&str, f32, f64)>) = match p.variant {
        TemperatureVariant::Heat => (Some(TemperatureEvent::HeatWave), "heat_synthetic", "heat", vec![("clim_p85", 300.0, 0.85)]),
        TemperatureVariant::Freeze => (Some(TemperatureEvent::Freeze), "freeze_synthetic", "freeze", vec![("clim_p15", 275.0, 0.15)]),
        TemperatureVariant::Marginal => (None, "marginal_synthetic", "marginal", vec![("clim_p16", 290.0, 0.16), ("clim_p84", 300.0, 0.84)]),
    };
    let temp = single_level("t2m", "K", spec, &times, |t, i, j| {
        let day = t / 4;
        let x = event_excess(day, p.peak_day, p.anomaly_k);
        let ripple = 0.01 * (i + j) as f64;
        match p.variant {
            TemperatureVariant::Heat => {
                let peak = if x > 0.0 { 300.0 + x } else { 298.0 };
                peak - 8.0 * diurnal(t) - ripple
            }
            TemperatureVariant::Freeze => {
                let trough = if x > 0.0 { 273.15 - x } else { 276.0 };
                trough + 8.0 * (1.0 - diurnal(t)) + ripple
            }
            TemperatureVariant::Marginal => {
                let base = if MARGINAL_DAYS.contains(&day) { 295.0 } else { 303.0 };
                base + 2.0 * (1.0 - 2.0 * diurnal(t)) - ripple
            }
        }
    })?;
    write_target(out, id, "t2m", &temp)?;
    write_target(out, id, "land_mask", &land.to_cube())?;
    for (name, v, pct) in &clim_files {
        write_target(out, id, name, &PercentileClimatology::constant(spec, *pct, *v).to_cube())?;
    }
    let inits = [t0, t0 + Duration::days(1)];
    for init in inits {
        write_forecast(out, id, init, &[("t2m", &temp)])?;
    }

    let seed = LatLon::new(35.0, -95.0);
    let (case, truth) = match event {
        Some(kind) => {
            let clim = PercentileClimatology::constant(spec, clim_files[0].2, clim_files[0].1);
            let runs = match kind {
                TemperatureEvent::Freeze => crate::climatology::detect_freeze_days(&temp, &clim)?,
                _ => detect_heatwave_days(&temp, &clim)?,
            };
            let found = detect_seeded_case(id, kind, &runs, seed, &GrowParams::default(), Some(&land))?;
            let mut case = CaseStudy::from_event(&found);
            case.seed = Some(seed);
            let first = (0..days).find(|&d| event_excess(d, p.peak_day, p.anomaly_k) > 0.0).expect("event has days");
            let last = (0..days).rev().find(|&d| event_excess(d, p.peak_day, p.anomaly_k) > 0.0).expect("event has days");
            let truth = json!({
                "case": id,
                "variant": label,
                "start_day": first,
                "start_date": (t0 + Duration::days(first as i64)).date_naive().to_string(),
                "run_days": last - first + 1,
                "expected": {"lead_time": 0.0, "mae": 0.0, "rmse": 0.0},
            });
            (case, truth)
        }
        None => {
            let lo = PercentileClimatology::constant(spec, clim_files[0].2, clim_files[0].1);
            let hi = PercentileClimatology::constant(spec, clim_files[1].2, clim_files[1].1);
            let found = detect_marginal_regions(&temp, &lo, &hi, &land, &MarginalParams::default())?;
            let first = found
                .first()
                .ok_or_else(|| Error::Empty("marginal detector found no region".into()))?;
            let mut case = CaseStudy::from_event(first);
            case.id = id.to_string();
            let truth = json!({
                "case": id,
                "variant": label,
                "start_day": MARGINAL_DAYS.start(),
                "marginal_days": MARGINAL_DAYS.end() - MARGINAL_DAYS.start() + 1,
                "expected": {"mae": 0.0, "rmse": 0.0},
            });
            (case, truth)
        }
    };
    write_catalog(out, &case)?;
    Ok((vec![id.to_string()], truth))
}

/// Pressure levels used by the synthetic soundings, surface first.
pub const SOUNDING_LEVELS: [f64; 19] = [
    1000.0, 975.0, 950.0, 925.0, 900.0, 850.0, 800.0, 750.0, 700.0, 650.0, 600.0, 550.0, 500.0, 450.0, 400.0, 350.0, 300.0, 250.0, 200.0,
];

/// Temperature (K) and specific humidity of a warm, moist, conditionally
/// unstable column.
pub fn unstable_column(p_hpa: f64) -> (f64, f64) {
    let t = 303.0 * (p_hpa / 1000.0).powf(0.19);
    let rh = if p_hpa >= 850.0 { 0.85 } else { 0.3 };
    let es = 6.112 * (17.67 * (t - 273.15) / (t - 29.65)).exp();
    let e = rh * es;
    let r = 0.622 * e / (p_hpa - e);
    (t, r / (1.0 + r))
}

fn sounding(out: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let spec = GridSpec::new(30.0, -100.0, 0.5, 0.5, 11, 21)?;
    let t0 = utc(2024, 5, 6, 12);
    let times = six_hourly(t0, 2);
    let levels = SOUNDING_LEVELS.to_vec();
    let unstable = |j: usize| j >= spec.nlon / 2;
    let temp = FieldCube::from_fn("t", "K", spec, times.clone(), levels.clone(), |_, l, _, j| {
        if unstable(j) { unstable_column(SOUNDING_LEVELS[l]).0 as f32 } else { 280.0 }
    })?;
    let q = FieldCube::from_fn("q", "kg/kg", spec, times.clone(), levels.clone(), |_, l, _, j| {
        if unstable(j) { unstable_column(SOUNDING_LEVELS[l]).1 as f32 } else { 1e-6 }
    })?;
    let u = FieldCube::from_fn("u", "m/s", spec, times.clone(), levels.clone(), |_, l, _, _| if SOUNDING_LEVELS[l] <= 500.0 { 30.0 } else { 10.0 })?;
    let v = FieldCube::from_fn("v", "m/s", spec, times.clone(), levels, |_, _, _, _| 0.0)?;
    let u10 = single_level("u10", "m/s", spec, &times, |_, _, _| 0.0)?;
    let v10 = single_level("v10", "m/s", spec, &times, |_, _, _| 0.0)?;
    let id = "sounding_synthetic";
    let reports: Vec<Report> = (0..spec.nlat)
        .step_by(2)
        .flat_map(|i| (spec.nlon / 2..spec.nlon).step_by(2).map(move |j| (i, j)))
        .map(|(i, j)| Report {
            time: t0 + Duration::hours(3),
            lat: spec.lat(i),
            lon: spec.lon(j),
            kind: ReportType::Hail,
            magnitude: Some(1.0),
        })
        .collect();
    let tdir = out.join("targets").join(id);
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    write_reports_csv(tdir.join("reports.csv"), &reports)?;
    let all = [("t", &temp), ("q", &q), ("u", &u), ("v", &v), ("u10", &u10), ("v10", &v10)];
    write_forecast(out, id, t0, &all)?;
    let case = CaseStudy::new(id, EventType::Severe, Region::new(30.0, 35.0, -100.0, -90.0)?, t0, t0 + Duration::hours(12));
    write_catalog(out, &case)?;
    let truth = json!({
        "case": id,
        "levels_hpa": SOUNDING_LEVELS,
        "isothermal_columns": (0..spec.nlon).filter(|&j| !unstable(j)).count() * spec.nlat,
        "isothermal_mlcape": 0.0,
        "unstable_columns": (0..spec.nlon).filter(|&j| unstable(j)).count() * spec.nlat,
        "bulk_shear_ms": 30.0,
    });
    Ok((vec![id.to_string()], truth))
}

fn reports(p: &SynthParams, rng: &mut ChaCha8Rng, out: &Path) -> Result<(Vec<String>, serde_json::Value)> {
    let spec = GridSpec::new(30.0, -105.0, 0.5, 0.5, 31, 41)?;
    let start = utc(2024, 5, 6, 12);
    let end = start + Duration::days(1);
    let times = six_hourly(start - Duration::days(2), 12);
    let center = LatLon::new(37.0 + rng.gen_range(-0.5..0.5), -95.0 + rng.gen_range(-0.5..0.5));
    let kinds = [ReportType::Tornado, ReportType::Hail, ReportType::Wind];
    let reps: Vec<Report> = (0..p.reports)
        .map(|_| Report {
            time: start + Duration::minutes(rng.gen_range(0..24 * 60)),
            lat: ((center.lat + rng.gen_range(-2.0..2.0)) * 100.0_f64).round() / 100.0,
            lon: ((center.lon + rng.gen_range(-2.0..2.0)) * 100.0_f64).round() / 100.0,
            kind: kinds[rng.gen_range(0..3)],
            magnitude: None,
        })
        .collect();
    let severe = reps.iter().any(|r| r.kind != ReportType::Wind);
    let (event_type, id) = if severe {
        (EventType::Severe, "severe_synthetic")
    } else {
        (EventType::MarginalSevere, "marginal_severe_synthetic")
    };
    let pph = compute_pph(&reps, &spec, &PphParams::default())?;
    let threshold = super::config::EvaluationParams::default().pph_threshold;
    let observed = pph.probability.map(|&v| v >= threshold);
    let tdir = out.join("targets").join(id);
    fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
    write_reports_csv(tdir.join("reports.csv"), &reps)?;
    let cbss = single_level("cbss", "m3/s3", spec, &times, |t, i, j| {
        let in_case = times[t] >= start && times[t] < end;
        if in_case && observed[(i, j)] { 2.0 * CBSS_SEVERE_THRESHOLD } else { 0.0 }
    })?;
    let inits = [start - Duration::days(2), start - Duration::days(1), start];
    for init in inits {
        write_forecast(out, id, init, &[("cbss", &cbss)])?;
    }
    let case = CaseStudy::new(id, event_type, Region::new(30.0, 45.0, -105.0, -85.0)?, start, end);
    write_catalog(out, &case)?;
    let scored = reps.iter().filter(|r| r.kind != ReportType::Wind).count();
    let truth = if severe {
        json!({
            "case": id,
            "reports": reps.len(),
            "severe_reports": scored,
            "pph_cells": observed.count(),
            "expected": {"csi": 1.0, "far": 0.0, "report_hits": scored, "report_misses": 0, "early_signal": 2.0},
        })
    } else {
        json!({
            "case": id,
            "reports": reps.len(),
            "severe_reports": 0,
            "expected": {"false_alarm_day": 0.0},
        })
    };
    Ok((vec![id.to_string()], truth))
}
