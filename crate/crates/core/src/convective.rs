//! Convective environment diagnostics, practically perfect hindcasts from
//! storm reports, and region-based contingency scores.

use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mask_bounds, FieldCube, Grid, GridSpec, LatLon, Region};
use crate::metrics::Signal;

pub mod thermo {
    //! Moist thermodynamics shared by the parcel routines.

    pub const RD: f64 = 287.04;
    pub const CP: f64 = 1005.7;
    pub const LV: f64 = 2.501e6;
    pub const EPSILON: f64 = 0.622;
    pub const KAPPA: f64 = RD / CP;
    pub const ZERO_C: f64 = 273.15;

    /// Saturation vapour pressure over water, hPa.
    pub fn saturation_vapor_pressure(t_k: f64) -> f64 {
        6.112 * (17.67 * (t_k - ZERO_C) / (t_k - 29.65)).exp()
    }

    /// Saturation mixing ratio, kg/kg.
    pub fn saturation_mixing_ratio(t_k: f64, p_hpa: f64) -> f64 {
        let e = saturation_vapor_pressure(t_k).min(0.5 * p_hpa);
        EPSILON * e / (p_hpa - e)
    }

    pub fn mixing_ratio_from_dewpoint(td_k: f64, p_hpa: f64) -> f64 {
        saturation_mixing_ratio(td_k, p_hpa)
    }

    pub fn mixing_ratio_from_specific_humidity(q: f64) -> f64 {
        q / (1.0 - q)
    }

    /// Dewpoint of air with mixing ratio `r` at pressure `p`.
    pub fn dewpoint(r: f64, p_hpa: f64) -> f64 {
        let e = r * p_hpa / (EPSILON + r);
        let x = (e / 6.112).ln();
        243.5 * x / (17.67 - x) + ZERO_C
    }

    pub fn virtual_temperature(t_k: f64, r: f64) -> f64 {
        t_k * (1.0 + r / EPSILON) / (1.0 + r)
    }

    pub fn potential_temperature(t_k: f64, p_hpa: f64) -> f64 {
        t_k * (1000.0 / p_hpa).powf(KAPPA)
    }

    /// Lifting condensation level temperature (K) from temperature and
    /// dewpoint.
    pub fn lcl_temperature(t_k: f64, td_k: f64) -> f64 {
        1.0 / (1.0 / (td_k - 56.0) + (t_k / td_k).ln() / 800.0) + 56.0
    }

    /// Pseudoadiabatic lapse rate dT/dp (K per hPa).
    pub fn moist_lapse(t_k: f64, p_hpa: f64) -> f64 {
        let rs = saturation_mixing_ratio(t_k, p_hpa);
        (RD * t_k + LV * rs) / (CP + LV * LV * rs * EPSILON / (RD * t_k * t_k)) / p_hpa
    }
}

use thermo::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Moisture {
    DewpointK(Vec<f64>),
    SpecificHumidity(Vec<f64>),
}

/// Vertical profile ordered from the surface upward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundingProfile {
    pub pressure_hpa: Vec<f64>,
    pub temperature_k: Vec<f64>,
    pub moisture: Moisture,
}

pub const MIN_PROFILE_LEVELS: usize = 5;

impl SoundingProfile {
    pub fn new(pressure_hpa: Vec<f64>, temperature_k: Vec<f64>, moisture: Moisture) -> Result<Self> {
        let p = Self {
            pressure_hpa,
            temperature_k,
            moisture,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.pressure_hpa.len();
        let m = match &self.moisture {
            Moisture::DewpointK(v) | Moisture::SpecificHumidity(v) => v.len(),
        };
        if self.temperature_k.len() != n || m != n {
            return Err(Error::Profile("pressure, temperature and moisture lengths differ".into()));
        }
        if n < MIN_PROFILE_LEVELS {
            return Err(Error::Profile(format!("profile has {n} levels, at least {MIN_PROFILE_LEVELS} required")));
        }
        if self.pressure_hpa.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Profile("pressure must strictly decrease upward".into()));
        }
        if self.pressure_hpa[0] <= 500.0 {
            return Err(Error::Profile("surface pressure must exceed 500 hPa".into()));
        }
        let finite = self.pressure_hpa.iter().chain(&self.temperature_k).all(|v| v.is_finite() && *v > 0.0);
        if !finite {
            return Err(Error::Profile("pressure and temperature must be finite and positive".into()));
        }
        Ok(())
    }

    /// Mixing ratio at each level, kg/kg.
    pub fn mixing_ratio(&self) -> Vec<f64> {
        match &self.moisture {
            Moisture::DewpointK(td) => td
                .iter()
                .zip(&self.pressure_hpa)
                .map(|(&d, &p)| mixing_ratio_from_dewpoint(d, p))
                .collect(),
            Moisture::SpecificHumidity(q) => q.iter().map(|&q| mixing_ratio_from_specific_humidity(q.max(0.0))).collect(),
        }
    }
}

/// Linear-in-log-pressure interpolation of `values` at `p`; `ps` descending.
fn interp_logp(ps: &[f64], values: &[f64], p: f64) -> f64 {
    let k = ps.partition_point(|&x| x > p);
    if k == 0 {
        return values[0];
    }
    if k >= ps.len() {
        return values[ps.len() - 1];
    }
    let (p0, p1) = (ps[k - 1], ps[k]);
    let f = (p0 / p).ln() / (p0 / p1).ln();
    values[k - 1] + (values[k] - values[k - 1]) * f
}

/// Depth of the mixed layer, hPa.
pub const MIXED_LAYER_DEPTH_HPA: f64 = 100.0;
const ASCENT_STEP_HPA: f64 = 1.0;

/// Pressure-weighted mean potential temperature and mixing ratio over the
/// lowest `depth` hPa.
pub fn mixed_layer_parcel(profile: &SoundingProfile, depth: f64) -> (f64, f64) {
    let ps = &profile.pressure_hpa;
    let r = profile.mixing_ratio();
    let theta: Vec<f64> = ps.iter().zip(&profile.temperature_k).map(|(&p, &t)| potential_temperature(t, p)).collect();
    let top = ps[0] - depth;
    let mut nodes: Vec<(f64, f64, f64)> = (0..ps.len()).filter(|&k| ps[k] > top).map(|k| (ps[k], theta[k], r[k])).collect();
    nodes.push((top, interp_logp(ps, &theta, top), interp_logp(ps, &r, top)));
    let (mut th, mut rr) = (0.0, 0.0);
    for w in nodes.windows(2) {
        let dp = w[0].0 - w[1].0;
        th += 0.5 * (w[0].1 + w[1].1) * dp;
        rr += 0.5 * (w[0].2 + w[1].2) * dp;
    }
    let total = ps[0] - top;
    (th / total, rr / total)
}

fn rk4_moist(t: f64, p: f64, dp: f64) -> f64 {
    let k1 = moist_lapse(t, p);
    let k2 = moist_lapse(t + 0.5 * dp * k1, p + 0.5 * dp);
    let k3 = moist_lapse(t + 0.5 * dp * k2, p + 0.5 * dp);
    let k4 = moist_lapse(t + dp * k3, p + dp);
    t + dp * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
}

/// Mixed-layer CAPE (J/kg): the lowest-100-hPa mean parcel is lifted dry
/// adiabatically to its LCL and pseudoadiabatically above, and positive
/// virtual-temperature buoyancy is integrated above the mixed layer.
pub fn compute_mlcape(profile: &SoundingProfile) -> Result<f64> {
    profile.validate()?;
    let ps = &profile.pressure_hpa;
    let env_r = profile.mixing_ratio();
    let env_tv: Vec<f64> = profile
        .temperature_k
        .iter()
        .zip(&env_r)
        .map(|(&t, &r)| virtual_temperature(t, r))
        .collect();
    let p_sfc = ps[0];
    let p_end = ps[ps.len() - 1];
    let ml_top = p_sfc - MIXED_LAYER_DEPTH_HPA;
    if p_end >= ml_top {
        return Err(Error::Profile("profile does not extend above the mixed layer".into()));
    }
    let (theta, r) = mixed_layer_parcel(profile, MIXED_LAYER_DEPTH_HPA);
    let t_sfc = theta * (p_sfc / 1000.0).powf(KAPPA);
    let p_lcl = if r <= 0.0 {
        0.0
    } else {
        let td = dewpoint(r, p_sfc);
        if td >= t_sfc {
            p_sfc
        } else {
            p_sfc * (lcl_temperature(t_sfc, td) / t_sfc).powf(1.0 / KAPPA)
        }
    };

    // ascent pressures: the mixed-layer top, then 1 hPa steps upward
    let mut levels = vec![ml_top];
    let mut p = (ml_top / ASCENT_STEP_HPA).ceil() * ASCENT_STEP_HPA - ASCENT_STEP_HPA;
    while p > p_end {
        levels.push(p);
        p -= ASCENT_STEP_HPA;
    }
    levels.push(p_end);

    let mut moist_state: Option<(f64, f64)> = None; // (p, T) on the pseudoadiabat
    let mut parcel_tv = |p: f64| -> f64 {
        if p >= p_lcl {
            return virtual_temperature(theta * (p / 1000.0).powf(KAPPA), r);
        }
        let (mut pp, mut tt) = moist_state.unwrap_or((p_lcl, theta * (p_lcl / 1000.0).powf(KAPPA)));
        while pp - p > 1e-12 {
            let dp = -(pp - p).min(ASCENT_STEP_HPA);
            tt = rk4_moist(tt, pp, dp);
            pp += dp;
        }
        moist_state = Some((p, tt));
        virtual_temperature(tt, saturation_mixing_ratio(tt, p))
    };

    let mut cape = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &p in &levels {
        let b = (parcel_tv(p) - interp_logp(ps, &env_tv, p)).max(0.0);
        if let Some((p0, b0)) = prev {
            cape += RD * 0.5 * (b0 + b) * (p0 / p).ln();
        }
        prev = Some((p, b));
    }
    Ok(cape.max(0.0))
}

/// MLCAPE at every gridpoint of one time from temperature (K) and specific
/// humidity (kg/kg) on pressure levels; the highest-pressure level is the
/// surface.
pub fn mlcape_grid(temperature: &FieldCube, specific_humidity: &FieldCube, t: usize) -> Result<Grid<f64>> {
    temperature.spec.ensure_same(&specific_humidity.spec, "specific humidity")?;
    if temperature.levels_hpa != specific_humidity.levels_hpa {
        return Err(Error::ShapeMismatch("temperature and humidity levels differ".into()));
    }
    let spec = temperature.spec;
    let levels = temperature.levels_hpa.clone();
    let values: Vec<f64> = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let (i, j) = spec.unflat(k);
            let mut ps = Vec::new();
            let mut ts = Vec::new();
            let mut qs = Vec::new();
            for (l, &p) in levels.iter().enumerate() {
                let tv = temperature.get(t, l, i, j);
                let qv = specific_humidity.get(t, l, i, j);
                if tv.is_finite() && qv.is_finite() {
                    ps.push(p);
                    ts.push(tv);
                    qs.push(qv);
                }
            }
            let profile = SoundingProfile::new(ps, ts, Moisture::SpecificHumidity(qs))?;
            compute_mlcape(&profile)
        })
        .collect::<Result<_>>()?;
    Grid::from_vec(spec.nlat, spec.nlon, values)
}

/// Magnitude of the vector wind difference between 500 hPa and the surface.
pub fn compute_bulk_shear(u_sfc: &Grid<f64>, v_sfc: &Grid<f64>, u500: &Grid<f64>, v500: &Grid<f64>) -> Result<Grid<f64>> {
    u_sfc.ensure_same_shape(v_sfc, "v_sfc")?;
    u_sfc.ensure_same_shape(u500, "u500")?;
    u_sfc.ensure_same_shape(v500, "v500")?;
    let (nlat, nlon) = u_sfc.shape();
    Ok(Grid::from_fn(nlat, nlon, |i, j| {
        (u500[(i, j)] - u_sfc[(i, j)]).hypot(v500[(i, j)] - v_sfc[(i, j)])
    }))
}

pub const CBSS_SEVERE_THRESHOLD: f64 = 15_000.0;

pub fn compute_cbss(mlcape: &Grid<f64>, shear: &Grid<f64>) -> Result<Grid<f64>> {
    mlcape.ensure_same_shape(shear, "shear")?;
    if mlcape.as_slice().iter().chain(shear.as_slice()).any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("MLCAPE and shear must be non-negative".into()));
    }
    let (nlat, nlon) = mlcape.shape();
    Ok(Grid::from_fn(nlat, nlon, |i, j| mlcape[(i, j)] * shear[(i, j)]))
}

/// Gridpoints at or above the severe threshold.
pub fn severe_mask(cbss: &Grid<f64>, threshold: f64) -> Grid<bool> {
    cbss.map(|&v| v >= threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportType {
    Tornado,
    Hail,
    Wind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(with = "crate::timefmt")]
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    #[serde(rename = "type")]
    pub kind: ReportType,
    pub magnitude: Option<f64>,
}

impl Report {
    pub fn validate(&self) -> Result<()> {
        if !(self.lat.abs() <= 90.0 && self.lon.is_finite()) {
            return Err(Error::InvalidParameter(format!("report at ({}, {}) has invalid coordinates", self.lat, self.lon)));
        }
        Ok(())
    }
}

pub fn read_reports_csv(path: impl AsRef<Path>) -> Result<Vec<Report>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rep: Report = row?;
        rep.validate()?;
        out.push(rep);
    }
    Ok(out)
}

pub fn write_reports_csv(path: impl AsRef<Path>, reports: &[Report]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["time", "lat", "lon", "type", "magnitude"])?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reports with `start <= time < end`.
pub fn reports_in_window(reports: &[Report], start: DateTime<Utc>, end: DateTime<Utc>) -> Vec<Report> {
    reports.iter().filter(|r| r.time >= start && r.time < end).copied().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PphParams {
    /// Gaussian standard deviation in gridpoints.
    pub sigma: f64,
    /// Kernel peak for a single unit-weight report.
    pub peak: f64,
    pub weight_tornado: f64,
    pub weight_hail: f64,
    /// Kernel half-width in standard deviations.
    pub truncate_sigmas: f64,
}

impl Default for PphParams {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            peak: 0.6,
            weight_tornado: 10.0,
            weight_hail: 10.0,
            truncate_sigmas: 6.0,
        }
    }
}

impl PphParams {
    fn weight(&self, kind: ReportType) -> Option<f64> {
        match kind {
            ReportType::Tornado => Some(self.weight_tornado),
            ReportType::Hail => Some(self.weight_hail),
            ReportType::Wind => None,
        }
    }

    fn kernel(&self) -> Vec<f64> {
        let half = (self.truncate_sigmas * self.sigma).ceil() as isize;
        (-half..=half)
            .map(|d| (-(d as f64).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PphField {
    pub spec: GridSpec,
    pub sigma: f64,
    pub probability: Grid<f64>,
}

/// Report weights deposited at their nearest gridpoints (wind reports
/// excluded, off-grid reports ignored).
pub fn deposit_reports(reports: &[Report], spec: &GridSpec, params: &PphParams) -> Grid<f64> {
    let mut g = Grid::filled(spec.nlat, spec.nlon, 0.0);
    for r in reports {
        let Some(w) = params.weight(r.kind) else {
            continue;
        };
        if let Some((i, j)) = spec.nearest(LatLon::new(r.lat, r.lon)) {
            g[(i, j)] += w;
        }
    }
    g
}

/// One pass of a 1-D convolution along rows (`along_lon`) or columns.
/// Every output sums the taps in the same order, so shifting the input
/// shifts the output bit for bit.
fn convolve_axis(input: &Grid<f64>, kernel: &[f64], along_lon: bool, wrap: bool) -> Grid<f64> {
    let (nlat, nlon) = input.shape();
    let half = (kernel.len() / 2) as isize;
    let rows: Vec<Vec<f64>> = (0..nlat)
        .into_par_iter()
        .map(|i| {
            (0..nlon)
                .map(|j| {
                    let mut acc = 0.0;
                    for (t, &k) in kernel.iter().enumerate() {
                        let d = t as isize - half;
                        let v = if along_lon {
                            let mut jj = j as isize + d;
                            if jj < 0 || jj >= nlon as isize {
                                if !wrap {
                                    continue;
                                }
                                jj = jj.rem_euclid(nlon as isize);
                            }
                            input[(i, jj as usize)]
                        } else {
                            let ii = i as isize + d;
                            if ii < 0 || ii >= nlat as isize {
                                continue;
                            }
                            input[(ii as usize, j)]
                        };
                        acc += k * v;
                    }
                    acc
                })
                .collect()
        })
        .collect();
    Grid::from_vec(nlat, nlon, rows.into_iter().flatten().collect()).expect("shape preserved")
}

/// Sum of weighted unit-peak Gaussian kernels before scaling and clipping.
pub fn pph_kernel_sum(reports: &[Report], spec: &GridSpec, params: &PphParams) -> Result<Grid<f64>> {
    if !(params.sigma > 0.0 && params.truncate_sigmas > 0.0) {
        return Err(Error::InvalidParameter("PPH sigma and truncation must be positive".into()));
    }
    let kernel = params.kernel();
    let deposits = deposit_reports(reports, spec, params);
    let wrap = spec.is_global_lon();
    Ok(convolve_axis(&convolve_axis(&deposits, &kernel, true, wrap), &kernel, false, wrap))
}

/// Practically perfect hindcast probability field.
pub fn compute_pph(reports: &[Report], spec: &GridSpec, params: &PphParams) -> Result<PphField> {
    let sum = pph_kernel_sum(reports, spec, params)?;
    Ok(PphField {
        spec: *spec,
        sigma: params.sigma,
        probability: sum.map(|&v| (params.peak * v).clamp(0.0, 1.0)),
    })
}

/// Tight box around `pph >= contour`.
pub fn pph_bounding_box(pph: &PphField, contour: f64) -> Result<Region> {
    mask_bounds(&pph.probability.map(|&p| p >= contour), &pph.spec)
        .ok_or_else(|| Error::Empty(format!("no gridpoint reaches the {contour} contour")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contingency {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Contingency {
    pub fn csi(&self) -> Result<f64> {
        let d = self.tp + self.fn_ + self.fp;
        if d == 0 {
            return Err(Error::Undefined("csi with no predicted or observed cells".into()));
        }
        Ok(self.tp as f64 / d as f64)
    }

    pub fn far(&self) -> Result<f64> {
        let d = self.tp + self.fp;
        if d == 0 {
            return Err(Error::Undefined("far with no predicted cells".into()));
        }
        Ok(self.fp as f64 / d as f64)
    }
}

/// Cellwise contingency counts, restricted to `region` when given.
pub fn region_contingency(pred: &Grid<bool>, target: &Grid<bool>, region: Option<&Grid<bool>>) -> Result<Contingency> {
    pred.ensure_same_shape(target, "target mask")?;
    if let Some(r) = region {
        pred.ensure_same_shape(r, "region mask")?;
    }
    let mut c = Contingency { tp: 0, fp: 0, fn_: 0, tn: 0 };
    for k in 0..pred.len() {
        if region.is_some_and(|r| !r.as_slice()[k]) {
            continue;
        }
        match (pred.as_slice()[k], target.as_slice()[k]) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitsMisses {
    pub hits: usize,
    pub misses: usize,
}

/// Reports (tornado and hail) whose nearest gridpoint is inside the
/// predicted mask count as hits, the rest as misses.
pub fn report_hits_misses(pred: &Grid<bool>, spec: &GridSpec, reports: &[Report]) -> Result<HitsMisses> {
    pred.ensure_shape(spec, "prediction mask")?;
    let mut hm = HitsMisses { hits: 0, misses: 0 };
    for r in reports.iter().filter(|r| r.kind != ReportType::Wind) {
        match spec.nearest(LatLon::new(r.lat, r.lon)) {
            Some(ij) if pred[ij] => hm.hits += 1,
            _ => hm.misses += 1,
        }
    }
    Ok(hm)
}

/// Fraction of the observed region covered by the prediction.
pub fn coverage(pred: &Grid<bool>, observed: &Grid<bool>) -> Result<f64> {
    pred.ensure_same_shape(observed, "observed mask")?;
    let total = observed.count();
    if total == 0 {
        return Err(Error::Empty("observed region is empty".into()));
    }
    Ok(pred.and(observed).count() as f64 / total as f64)
}

/// Longest lead (days) at which the prediction covers at least `min_cover`
/// of the observed region, with every shorter lead also doing so.
pub fn early_signal(pred_by_lead_hours: &[(i64, Grid<bool>)], observed: &Grid<bool>, min_cover: f64) -> Result<Signal<f64>> {
    if observed.count() == 0 {
        return Err(Error::Empty("observed region is empty".into()));
    }
    let mut leads: Vec<&(i64, Grid<bool>)> = pred_by_lead_hours.iter().collect();
    leads.sort_by_key(|(h, _)| *h);
    let mut best = None;
    for (h, mask) in leads {
        if coverage(mask, observed)? >= min_cover {
            best = Some(*h as f64 / 24.0);
        } else {
            break;
        }
    }
    Ok(best.map_or(Signal::NoSignal, Signal::Detected))
}
