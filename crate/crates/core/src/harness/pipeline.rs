//! Per-event-type evaluation of one case against one model.

use chrono::{DateTime, Duration, Utc};

use crate::ar_tracker::{ar_landfall_lead_time, compute_ivt_at, detect_ar_objects, union_land_mask, ArSnapshot, IvtField};
use crate::climatology::{detect_freeze_days, detect_heatwave_days, PercentileClimatology};
use crate::convective::{
    compute_bulk_shear, compute_cbss, compute_pph, early_signal, mlcape_grid, region_contingency, report_hits_misses,
    reports_in_window, severe_mask, Report,
};
use crate::error::{Error, Result};
use crate::grid::{center_of_mass_mask, FieldCube, Grid, GridSpec, LandMask};
use crate::landfall::{detect_landfalls, filter_landfalls, landfall_metrics, LandfallEvent};
use crate::metrics::{self, lead_time_days, rmae_max, rmae_maxdailymin, spatial_displacement, MetricRecord, Signal, DIAGNOSTIC_PREFIX};
use crate::tc_tracker::{find_candidates_series, stitch_tracks, TcFields, Track, TrackSource};

use super::catalog::{CaseStudy, EventType};
use super::config::Config;
use super::store::{ForecastStore, TargetStore};

/// Records produced for one (case, model) pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseEvaluation {
    pub records: Vec<MetricRecord>,
    /// Human-readable reasons for every diagnostic record.
    pub messages: Vec<String>,
    /// Some initialisation (or the whole case) could not be scored.
    pub partial: bool,
}

struct Emitter<'a> {
    model: &'a str,
    case: &'a CaseStudy,
    out: CaseEvaluation,
}

impl<'a> Emitter<'a> {
    fn push(&mut self, init: DateTime<Utc>, lead_hours: i64, metric: &str, units: &str, value: Option<f64>) {
        self.out
            .records
            .push(MetricRecord::new(self.model, &self.case.id, init, lead_hours, metric, units, value));
    }

    /// Undefined outcomes become undefined records; anything else is passed on.
    fn push_result(&mut self, init: DateTime<Utc>, lead: i64, metric: &str, units: &str, r: Result<f64>) -> Result<()> {
        match r {
            Ok(v) => self.push(init, lead, metric, units, Some(v)),
            Err(e) if e.is_undefined() => self.push(init, lead, metric, units, None),
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn diagnostic(&mut self, init: DateTime<Utc>, lead: i64, kind: &str, value: Option<f64>, message: String) {
        self.push(init, lead, &format!("{DIAGNOSTIC_PREFIX}{kind}"), "1", value);
        self.out.messages.push(format!("{}/{}: {message}", self.model, self.case.id));
        if kind != "truncated_window" {
            self.out.partial = true;
        }
    }

    fn diagnose_error(&mut self, init: DateTime<Utc>, lead: i64, e: &Error) {
        let kind = match e {
            Error::MissingVariable(_) => "missing_variable",
            _ => "error",
        };
        self.diagnostic(init, lead, kind, None, e.to_string());
    }
}

fn hours(d: Duration) -> i64 {
    d.num_seconds().div_euclid(3600)
}

/// Valid times the case needs: every lead step from start up to end.
pub fn required_times(case: &CaseStudy, step_hours: i64) -> Vec<DateTime<Utc>> {
    let step = Duration::hours(step_hours.max(1));
    let mut out = Vec::new();
    let mut t = case.start;
    while t < case.end {
        out.push(t);
        t += step;
    }
    out
}

fn coverage(times: &[DateTime<Utc>], required: &[DateTime<Utc>]) -> f64 {
    if required.is_empty() {
        return 1.0;
    }
    required.iter().filter(|t| times.binary_search(t).is_ok()).count() as f64 / required.len() as f64
}

/// Copy of `cube` keeping the times for which `keep` holds.
pub fn select_times(cube: &FieldCube, keep: impl Fn(DateTime<Utc>) -> bool) -> Result<FieldCube> {
    let idx: Vec<usize> = (0..cube.ntime()).filter(|&t| keep(cube.times[t])).collect();
    let n = cube.nlevel() * cube.spec.len();
    let mut values = Vec::with_capacity(idx.len() * n);
    for &t in &idx {
        values.extend_from_slice(&cube.values()[t * n..(t + 1) * n]);
    }
    FieldCube::new(
        cube.variable.clone(),
        cube.units.clone(),
        cube.spec,
        idx.iter().map(|&t| cube.times[t]).collect(),
        cube.levels_hpa.clone(),
        cube.fill_value,
        values,
    )
}

fn on_lead_axis(init: DateTime<Utc>, cfg: &Config) -> impl Fn(DateTime<Utc>) -> bool {
    let max = cfg.evaluation.max_lead_hours;
    let step = cfg.evaluation.lead_step_hours;
    move |t| {
        let secs = (t - init).num_seconds();
        secs >= 0 && secs <= max * 3600 && secs % (step * 3600) == 0
    }
}

fn in_case(case: &CaseStudy) -> impl Fn(DateTime<Utc>) -> bool {
    let (s, e) = (case.start, case.end);
    move |t| t >= s && t < e
}

fn negated(c: &FieldCube) -> Result<FieldCube> {
    let values = c.values().iter().map(|&v| if c.is_missing(v) { v } else { -v }).collect();
    FieldCube::new(c.variable.clone(), c.units.clone(), c.spec, c.times.clone(), c.levels_hpa.clone(), c.fill_value, values)
}

fn region_grid(case: &CaseStudy, spec: &GridSpec, land: Option<&LandMask>) -> Result<Grid<bool>> {
    let mut m = case.region.mask(spec);
    if let Some(l) = land {
        m = m.and(&l.mask);
    }
    if m.count() == 0 {
        return Err(Error::Undefined(format!("case {} region holds no usable gridpoints", case.id)));
    }
    Ok(m)
}

/// Evaluate one case for one model. Failures never escape: they become
/// diagnostic records and mark the evaluation partial.
pub fn evaluate_case(
    case: &CaseStudy,
    model: &str,
    cfg: &Config,
    forecasts: &ForecastStore,
    targets: &TargetStore,
) -> CaseEvaluation {
    let mut em = Emitter {
        model,
        case,
        out: CaseEvaluation::default(),
    };
    let cfg = match cfg.with_overrides(&case.parameters) {
        Ok(c) => c,
        Err(e) => {
            em.diagnose_error(case.start, 0, &e);
            return em.out;
        }
    };
    let inits = match forecasts.inits(model, &case.id) {
        Ok(v) => v,
        Err(e) => {
            em.diagnose_error(case.start, 0, &e);
            return em.out;
        }
    };
    if inits.is_empty() {
        em.diagnostic(case.start, 0, "no_forecasts", None, "no forecast initialisations found".into());
        return em.out;
    }
    let missing = case.missing_targets(&targets.dir(case));
    if !missing.is_empty() {
        let e = Error::MissingVariable(format!("target files {missing:?}"));
        em.diagnose_error(case.start, 0, &e);
        return em.out;
    }
    let ctx = Ctx {
        case,
        model,
        cfg: &cfg,
        forecasts,
        targets,
        inits: &inits,
    };
    let r = match case.event_type {
        EventType::HeatWave | EventType::Freeze | EventType::MarginalTemp => temperature(&ctx, &mut em),
        EventType::Severe | EventType::MarginalSevere => severe(&ctx, &mut em),
        EventType::AtmosphericRiver => atmospheric_river(&ctx, &mut em),
        EventType::TropicalCyclone => tropical_cyclone(&ctx, &mut em),
    };
    if let Err(e) = r {
        em.diagnose_error(case.start, 0, &e);
    }
    em.out
}

struct Ctx<'a> {
    case: &'a CaseStudy,
    model: &'a str,
    cfg: &'a Config,
    forecasts: &'a ForecastStore,
    targets: &'a TargetStore,
    inits: &'a [DateTime<Utc>],
}

impl Ctx<'_> {
    fn load(&self, init: DateTime<Utc>, var: &str) -> Result<FieldCube> {
        let c = self.forecasts.load(self.model, &self.case.id, init, var)?;
        select_times(&c, on_lead_axis(init, self.cfg))
    }

    fn has(&self, init: DateTime<Utc>, var: &str) -> bool {
        self.forecasts.has(self.model, &self.case.id, init, var)
    }

    fn event_lead(&self, init: DateTime<Utc>) -> i64 {
        hours(self.case.start - init)
    }

    /// Run `f` for every initialisation that covers enough of the case;
    /// per-initialisation failures become diagnostics.
    fn each_init(&self, em: &mut Emitter, probe: &str, mut f: impl FnMut(DateTime<Utc>, &mut Emitter) -> Result<()>) {
        let required = required_times(self.case, self.cfg.evaluation.lead_step_hours);
        for &init in self.inits {
            let lead = self.event_lead(init);
            let times = match self.load(init, probe) {
                Ok(c) => c.times,
                Err(e) => {
                    em.diagnose_error(init, lead, &e);
                    continue;
                }
            };
            let cov = coverage(&times, &required);
            if cov < self.cfg.evaluation.min_valid_fraction {
                em.diagnostic(
                    init,
                    lead,
                    "incomplete",
                    Some(cov),
                    format!("forecast from {init} covers {:.0}% of the case", 100.0 * cov),
                );
                continue;
            }
            if let Err(e) = f(init, em) {
                em.diagnose_error(init, lead, &e);
            }
        }
    }
}

fn masked_values(c: &FieldCube, t: usize, mask: &Grid<bool>) -> Vec<f64> {
    let mut v = Vec::new();
    for i in 0..c.spec.nlat {
        for j in 0..c.spec.nlon {
            if mask[(i, j)] {
                v.push(c.get(t, 0, i, j));
            }
        }
    }
    v
}

fn temperature(ctx: &Ctx, em: &mut Emitter) -> Result<()> {
    let case = ctx.case;
    let cfg = ctx.cfg;
    let o_all = ctx.targets.cube(case, "t2m")?;
    let land = ctx.targets.land_mask(case, &o_all.spec)?;
    let mask = region_grid(case, &o_all.spec, Some(&land))?;
    let o = select_times(&o_all, in_case(case))?;
    if o.ntime() == 0 {
        return Err(Error::MissingVariable(format!("target t2m has no times inside case {}", case.id)));
    }
    let clim = match case.event_type {
        EventType::MarginalTemp => None,
        _ => Some(PercentileClimatology::from_cube(&ctx.targets.cube(case, "clim")?)?),
    };
    let detect = |c: &FieldCube, clim: &PercentileClimatology| match case.event_type {
        EventType::Freeze => detect_freeze_days(c, clim),
        _ => detect_heatwave_days(c, clim),
    };
    let min_run = cfg.evaluation.min_run_days;
    let actual_start = match &clim {
        Some(cl) => detect(&o_all, cl)?.event_start_day(&mask, min_run),
        None => None,
    };
    // cold events score the minimum and the lowest daily maximum
    let cold = case.event_type == EventType::Freeze;
    let (peak_name, daily_name) = if cold {
        ("rmae_min_temperature", "rmae_min_daily_max_temperature")
    } else {
        ("rmae_max_temperature", "rmae_max_daily_min_temperature")
    };
    let o_signed = if cold { negated(&o)? } else { o.clone() };

    ctx.each_init(em, "t2m", |init, em| {
        let f_all = ctx.load(init, "t2m")?;
        f_all.spec.ensure_same(&o.spec, "forecast t2m")?;
        let f = select_times(&f_all, in_case(case))?;
        let lead = ctx.event_lead(init);

        let mut f_means = Vec::new();
        let mut o_means = Vec::new();
        for (tf, &when) in f.times.iter().enumerate() {
            let Some(to) = o.time_index(when) else { continue };
            let (fv, ov): (Vec<f64>, Vec<f64>) = masked_values(&f, tf, &mask)
                .into_iter()
                .zip(masked_values(&o, to, &mask))
                .filter(|(a, b)| a.is_finite() && b.is_finite())
                .unzip();
            let lh = hours(when - init);
            em.push_result(init, lh, "mae", "K", metrics::mae(&fv, &ov))?;
            em.push_result(init, lh, "rmse", "K", metrics::rmse(&fv, &ov))?;
            if !fv.is_empty() {
                f_means.push(fv.iter().sum::<f64>() / fv.len() as f64);
                o_means.push(ov.iter().sum::<f64>() / ov.len() as f64);
            }
        }
        em.push_result(init, lead, "regional_rmse", "K", metrics::rmse(&f_means, &o_means))?;

        let f_signed = if cold { negated(&f)? } else { f.clone() };
        let w = cfg.evaluation.weighting;
        match rmae_max(&f_signed, &o_signed, Some(&mask), cfg.evaluation.relax_hours, w) {
            Ok(s) => {
                em.push(init, lead, peak_name, "K", Some(s.value));
                if s.truncated {
                    em.diagnostic(init, lead, "truncated_window", Some(1.0), format!("{peak_name} window truncated"));
                }
            }
            Err(e) => em.push_result(init, lead, peak_name, "K", Err(e))?,
        }
        let daily = rmae_maxdailymin(&f_signed, &o_signed, Some(&mask), cfg.evaluation.relax_days, w).map(|s| s.value);
        em.push_result(init, lead, daily_name, "K", daily)?;

        if let Some(cl) = &clim {
            let predicted = detect(&f_all, cl)?.event_start_day(&mask, min_run);
            let value = match actual_start {
                Some(actual) => match lead_time_days(predicted, actual) {
                    Signal::Detected(d) => Some(d as f64),
                    Signal::NoSignal => None,
                },
                None => None,
            };
            em.push(init, lead, "lead_time", "days", value);
        }
        Ok(())
    });
    Ok(())
}

/// CBSS at every selected valid time of one forecast, from a stored `cbss`
/// field when present and from temperature, humidity and winds otherwise.
fn forecast_cbss(ctx: &Ctx, init: DateTime<Utc>) -> Result<Vec<(DateTime<Utc>, GridSpec, Grid<f64>)>> {
    let keep = in_case(ctx.case);
    if ctx.has(init, "cbss") {
        let c = select_times(&ctx.load(init, "cbss")?, &keep)?;
        return Ok((0..c.ntime()).map(|t| (c.times[t], c.spec, c.field(t, 0).map(|v| v.max(0.0)))).collect());
    }
    let t_cube = select_times(&ctx.load(init, "t")?, &keep)?;
    let q_cube = select_times(&ctx.load(init, "q")?, &keep)?;
    let u = select_times(&ctx.load(init, "u")?, &keep)?;
    let v = select_times(&ctx.load(init, "v")?, &keep)?;
    let u10 = select_times(&ctx.load(init, "u10")?, &keep)?;
    let v10 = select_times(&ctx.load(init, "v10")?, &keep)?;
    let l500 = u
        .level_index(500.0)
        .zip(v.level_index(500.0))
        .ok_or_else(|| Error::MissingVariable("500 hPa winds".into()))?;
    for c in [&q_cube, &u, &v, &u10, &v10] {
        t_cube.spec.ensure_same(&c.spec, &c.variable)?;
        if c.times != t_cube.times {
            return Err(Error::ShapeMismatch(format!("{} time axis differs from temperature", c.variable)));
        }
    }
    let mut out = Vec::new();
    for t in 0..t_cube.ntime() {
        let cape = mlcape_grid(&t_cube, &q_cube, t)?;
        let shear = compute_bulk_shear(&u10.field(t, 0), &v10.field(t, 0), &u.field(t, l500.0), &v.field(t, l500.1))?;
        out.push((t_cube.times[t], t_cube.spec, compute_cbss(&cape, &shear)?));
    }
    Ok(out)
}

fn observed_severe(reports: &[Report], spec: &GridSpec, ctx: &Ctx) -> Result<Grid<bool>> {
    let pph = compute_pph(reports, spec, &ctx.cfg.pph)?;
    Ok(pph.probability.map(|&p| p >= ctx.cfg.evaluation.pph_threshold))
}

fn severe(ctx: &Ctx, em: &mut Emitter) -> Result<()> {
    let case = ctx.case;
    let cfg = ctx.cfg;
    let reports = reports_in_window(&ctx.targets.reports(case)?, case.start, case.end);
    let mut by_lead: Vec<(i64, Grid<bool>)> = Vec::new();
    let mut observed: Option<(GridSpec, Grid<bool>, Grid<bool>)> = None;
    let probe = if ctx.inits.iter().any(|&i| ctx.has(i, "cbss")) { "cbss" } else { "t" };

    ctx.each_init(em, probe, |init, em| {
        let lead = ctx.event_lead(init);
        let fields = forecast_cbss(ctx, init)?;
        let Some(&(_, spec, _)) = fields.first() else {
            return Err(Error::MissingVariable("no forecast valid time inside the case".into()));
        };
        if observed.as_ref().is_none_or(|(s, _, _)| !s.same_as(&spec)) {
            let region = case.region.nonempty_mask(&spec)?;
            observed = Some((spec, observed_severe(&reports, &spec, ctx)?.and(&region), region));
        }
        let (_, obs, region) = observed.as_ref().expect("observed region set above");
        let mut pred = Grid::filled(spec.nlat, spec.nlon, false);
        for (_, s, cbss) in &fields {
            s.ensure_same(&spec, "cbss")?;
            let m = severe_mask(cbss, cfg.evaluation.cbss_threshold);
            for (p, q) in pred.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *p |= *q;
            }
        }
        let pred = pred.and(region);
        match case.event_type {
            EventType::MarginalSevere => {
                let alarm = pred.count() > 0 && obs.count() == 0;
                em.push(init, lead, "false_alarm_day", "count", Some(if alarm { 1.0 } else { 0.0 }));
            }
            _ => {
                let table = region_contingency(&pred, obs, Some(region))?;
                em.push_result(init, lead, "csi", "1", table.csi())?;
                em.push_result(init, lead, "far", "1", table.far())?;
                let hm = report_hits_misses(&pred, &spec, &reports)?;
                em.push(init, lead, "report_hits", "count", Some(hm.hits as f64));
                em.push(init, lead, "report_misses", "count", Some(hm.misses as f64));
                by_lead.push((lead, pred));
            }
        }
        Ok(())
    });

    if case.event_type == EventType::Severe {
        let value = match &observed {
            Some((_, obs, _)) if !by_lead.is_empty() => {
                let leads: Vec<(i64, Grid<bool>)> = by_lead.into_iter().filter(|(h, _)| *h >= 0).collect();
                match early_signal(&leads, obs, cfg.evaluation.early_signal_cover) {
                    Ok(Signal::Detected(d)) => Some(d),
                    Ok(Signal::NoSignal) => None,
                    Err(e) if e.is_undefined() => None,
                    Err(e) => return Err(e),
                }
            }
            _ => None,
        };
        em.push(case.start, 0, "early_signal", "days", value);
    }
    Ok(())
}

/// IVT at the listed times from a stored `ivt` magnitude or from q, u, v.
pub fn ivt_fields(load: impl Fn(&str) -> Result<FieldCube>, has_ivt: bool, keep: impl Fn(DateTime<Utc>) -> bool) -> Result<Vec<IvtField>> {
    if has_ivt {
        let c = select_times(&load("ivt")?, keep)?;
        return (0..c.ntime())
            .map(|t| IvtField::from_magnitude(c.spec, c.times[t], c.field(t, 0).map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 })))
            .collect();
    }
    let q = select_times(&load("q")?, &keep)?;
    let u = select_times(&load("u")?, &keep)?;
    let v = select_times(&load("v")?, &keep)?;
    (0..q.ntime()).map(|t| compute_ivt_at(&q, &u, &v, t)).collect()
}

fn snapshots(fields: &[IvtField], ctx: &Ctx, land: &LandMask) -> Result<Vec<ArSnapshot>> {
    fields
        .iter()
        .map(|f| {
            Ok(ArSnapshot {
                time: f.time,
                objects: detect_ar_objects(f, &ctx.cfg.ar, land)?,
            })
        })
        .collect()
}

fn atmospheric_river(ctx: &Ctx, em: &mut Emitter) -> Result<()> {
    let case = ctx.case;
    let target_fields = ivt_fields(|v| ctx.targets.cube(case, v), ctx.targets.has(case, "ivt"), in_case(case))?;
    let Some(first) = target_fields.first() else {
        return Err(Error::MissingVariable(format!("target IVT has no times inside case {}", case.id)));
    };
    let spec = first.spec;
    let land = ctx.targets.land_mask(case, &spec)?;
    let region = case.region.nonempty_mask(&spec)?;
    let target = snapshots(&target_fields, ctx, &land)?;
    let probe = if ctx.inits.iter().any(|&i| ctx.has(i, "ivt")) { "ivt" } else { "q" };

    ctx.each_init(em, probe, |init, em| {
        let fields = ivt_fields(|v| ctx.load(init, v), ctx.has(init, "ivt"), in_case(case))?;
        for f in &fields {
            f.spec.ensure_same(&spec, "forecast ivt")?;
        }
        let forecast = snapshots(&fields, ctx, &land)?;
        for fs in &forecast {
            let Some(ts) = target.iter().find(|s| s.time == fs.time) else { continue };
            let lh = hours(fs.time - init);
            let fm = union_land_mask(&spec, &fs.objects).and(&region);
            let tm = union_land_mask(&spec, &ts.objects).and(&region);
            em.push_result(init, lh, "ar_land_iou", "1", metrics::iou(&fm, &tm))?;
            let disp = center_of_mass_mask(&fm, &spec)
                .and_then(|a| center_of_mass_mask(&tm, &spec).map(|b| spatial_displacement(a, b)));
            let (km, deg) = match disp {
                Ok(d) => (Some(d.km), Some(d.planar_deg)),
                Err(e) if e.is_undefined() => (None, None),
                Err(e) => return Err(e),
            };
            em.push(init, lh, "ar_land_displacement", "km", km);
            em.push(init, lh, "ar_land_displacement_planar", "deg", deg);
        }
        let lt = ar_landfall_lead_time(init, &forecast, &target, Some(&case.region));
        let (lead, value) = match lt {
            Ok(Signal::Detected(h)) => (h.round() as i64, Some(h)),
            Ok(Signal::NoSignal) => (ctx.event_lead(init), None),
            Err(e) if e.is_undefined() => (ctx.event_lead(init), None),
            Err(e) => return Err(e),
        };
        em.push(init, lead, "ar_landfall_lead_time", "hours", value);
        Ok(())
    });
    Ok(())
}

const TC_VARS: [&str; 5] = ["mslp", "z300", "z500", "u10", "v10"];

/// Detection fields at every time of the given cubes (mslp may be in Pa).
pub fn tc_fields(load: impl Fn(&str) -> Result<FieldCube>) -> Result<Vec<TcFields>> {
    let cubes: Vec<FieldCube> = TC_VARS.iter().map(|v| load(v)).collect::<Result<_>>()?;
    for c in &cubes[1..] {
        cubes[0].spec.ensure_same(&c.spec, &c.variable)?;
        if c.times != cubes[0].times {
            return Err(Error::ShapeMismatch(format!("{} time axis differs from mslp", c.variable)));
        }
    }
    let pa = cubes[0].units.eq_ignore_ascii_case("pa");
    (0..cubes[0].ntime())
        .map(|t| {
            let mslp = cubes[0].field(t, 0);
            let f = TcFields {
                spec: cubes[0].spec,
                time: cubes[0].times[t],
                mslp_hpa: if pa { mslp.map(|v| v / 100.0) } else { mslp },
                z300_m: cubes[1].field(t, 0),
                z500_m: cubes[2].field(t, 0),
                u10: cubes[3].field(t, 0),
                v10: cubes[4].field(t, 0),
            };
            f.validate()?;
            Ok(f)
        })
        .collect()
}

fn target_tracks(ctx: &Ctx) -> Result<Vec<Track>> {
    match ctx.targets.tracks(ctx.case) {
        Ok(t) => Ok(t),
        Err(Error::MissingVariable(_)) if ctx.targets.has(ctx.case, "mslp") => {
            let fields = tc_fields(|v| ctx.targets.cube(ctx.case, v))?;
            let cands = find_candidates_series(&fields, &ctx.cfg.tc, None)?;
            stitch_tracks(&cands, &ctx.cfg.tc, None, TrackSource::Analysis, &format!("{}_", ctx.case.id))
        }
        Err(e) => Err(e),
    }
}

pub fn landfalls(tracks: &[Track], land: &LandMask) -> Result<Vec<LandfallEvent>> {
    let mut out = Vec::new();
    for t in tracks.iter().filter(|t| t.points.len() >= 2) {
        out.extend(detect_landfalls(t, land)?);
    }
    Ok(out)
}

fn tropical_cyclone(ctx: &Ctx, em: &mut Emitter) -> Result<()> {
    let case = ctx.case;
    let cfg = ctx.cfg;
    let tracks = target_tracks(ctx)?;
    let reference = tracks
        .iter()
        .max_by_key(|t| t.points.len())
        .ok_or_else(|| Error::MissingVariable(format!("no target track for case {}", case.id)))?
        .clone();
    let land_cube = ctx.targets.cube(case, "land_mask")?;
    let land = LandMask::from_cube(&land_cube)?.without_small_features(cfg.evaluation.min_land_cells);
    let target_landfalls = landfalls(std::slice::from_ref(&reference), &land)?;

    ctx.each_init(em, "mslp", |init, em| {
        let fields = tc_fields(|v| ctx.load(init, v))?;
        let Some(first) = fields.first() else {
            return Err(Error::MissingVariable("forecast has no valid times".into()));
        };
        let land = land.resample(&first.spec);
        let cands = find_candidates_series(&fields, &cfg.tc, Some(&reference))?;
        let prefix = format!("{}_{}_", ctx.model, store_init_tag(init));
        let fc_tracks = stitch_tracks(&cands, &cfg.tc, Some(&reference), TrackSource::Forecast, &prefix)?;
        let fc_landfalls = landfalls(&fc_tracks, &land)?;
        let outcome = filter_landfalls(&fc_landfalls, &target_landfalls, init, first.time, &cfg.landfall);
        let fallback_lead = target_landfalls
            .iter()
            .find(|e| e.time >= init)
            .map(|e| hours(e.time - init))
            .unwrap_or_else(|| ctx.event_lead(init));
        let names = [
            ("landfall_displacement", "km"),
            ("landfall_time_error", "hours"),
            ("landfall_pressure_mae", "hPa"),
            ("landfall_wind_mae", "m/s"),
        ];
        match landfall_metrics(&outcome.pairs) {
            Ok(m) => {
                let lead = hours(outcome.pairs[0].target.time - init);
                let values = [m.displacement_km, m.time_me_hours, m.pressure_mae_hpa, m.wind_mae_ms];
                for ((name, units), v) in names.into_iter().zip(values) {
                    em.push(init, lead, name, units, Some(v));
                }
            }
            Err(e) if e.is_undefined() => {
                for (name, units) in names {
                    em.push(init, fallback_lead, name, units, None);
                }
            }
            Err(e) => return Err(e),
        }
        Ok(())
    });
    Ok(())
}

fn store_init_tag(init: DateTime<Utc>) -> String {
    init.format("%Y%m%d%H").to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn required_times_are_half_open() {
        let s = Utc.with_ymd_and_hms(2021, 1, 1, 0, 0, 0).unwrap();
        let mut c = CaseStudy::new("c", EventType::HeatWave, crate::grid::Region::new(0.0, 1.0, 0.0, 1.0).unwrap(), s, s + Duration::days(1));
        assert_eq!(required_times(&c, 6).len(), 4);
        c.end = s + Duration::hours(25);
        assert_eq!(required_times(&c, 6).len(), 5);
        assert_eq!(coverage(&required_times(&c, 6)[..2], &required_times(&c, 6)), 0.4);
    }

    #[test]
    fn negative_hours_round_down() {
        assert_eq!(hours(Duration::minutes(-30)), -1);
        assert_eq!(hours(Duration::hours(36)), 36);
    }
}
