//! Landfall detection on cyclone tracks and the landfall verification
//! metrics.

use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{haversine_km, LandMask, LatLon};
use crate::tc_tracker::{Track, TrackPoint, TrackSource};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandfallEvent {
    pub storm_id: String,
    pub source: TrackSource,
    /// 1 for the first landfall on the track, 2 for the second, ...
    pub ordinal: usize,
    #[serde(with = "crate::timefmt")]
    pub time: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub mslp_hpa: f64,
    pub wind_ms: f64,
}

impl LandfallEvent {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

const BISECTION_STEPS: usize = 40;

/// Fraction along the segment `a -> b` of the first ocean-to-land
/// crossing, if there is one. The segment is sampled every half mask cell
/// and the crossing is then refined by bisection.
pub fn first_crossing(a: &TrackPoint, b: &TrackPoint, land: &LandMask) -> Option<f64> {
    let at = |f: f64| land.is_land(a.lerp(b, f).position());
    let span = (b.lat - a.lat).hypot(crate::grid::lon_delta(a.lon, b.lon));
    let step = 0.5 * land.spec.dlat.min(land.spec.dlon);
    let n = ((span / step).ceil() as usize).max(1);
    let mut prev_land = at(0.0);
    for k in 1..=n {
        let f = k as f64 / n as f64;
        let here = at(f);
        if here && !prev_land {
            let (mut lo, mut hi) = ((k - 1) as f64 / n as f64, f);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if at(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi);
        }
        prev_land = here;
    }
    None
}

/// Every ocean-to-land crossing along the track, one per segment at most.
/// The mask should already be stripped of features too small to count.
pub fn detect_landfalls(track: &Track, land: &LandMask) -> Result<Vec<LandfallEvent>> {
    if track.points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "track {} needs at least two points for landfall detection",
            track.storm_id
        )));
    }
    let mut out = Vec::new();
    for w in track.points.windows(2) {
        if let Some(f) = first_crossing(&w[0], &w[1], land) {
            let p = w[0].lerp(&w[1], f);
            out.push(LandfallEvent {
                storm_id: track.storm_id.clone(),
                source: track.source,
                ordinal: out.len() + 1,
                time: p.time,
                lat: p.lat,
                lon: p.lon,
                mslp_hpa: p.mslp_hpa,
                wind_ms: p.peak_wind_ms,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandfallMode {
    /// Compare against the target's first landfall.
    #[default]
    First,
    /// Compare against the next target landfall at or after initialisation.
    Next,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandfallFilter {
    pub dedupe_km: f64,
    pub match_window_hours: i64,
    pub mode: LandfallMode,
}

impl Default for LandfallFilter {
    fn default() -> Self {
        Self {
            dedupe_km: 50.0,
            match_window_hours: 24,
            mode: LandfallMode::First,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Within the dedupe distance of an earlier kept landfall on the track.
    NearDuplicate,
    /// Between initialisation and the forecast track's first valid time.
    BeforeTrackStart,
    /// Not the landfall selected for this comparison.
    NotSelected,
    /// No counterpart within the matching window.
    OutsideWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub event: LandfallEvent,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandfallPair {
    pub forecast: LandfallEvent,
    pub target: LandfallEvent,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub pairs: Vec<LandfallPair>,
    pub dropped: Vec<Dropped>,
}

/// Drop landfalls within `km` of an earlier kept landfall of the same
/// storm. Input order is preserved.
fn dedupe(events: Vec<LandfallEvent>, km: f64, dropped: &mut Vec<Dropped>) -> Vec<LandfallEvent> {
    let mut kept: Vec<LandfallEvent> = Vec::new();
    for e in events {
        let near = kept
            .iter()
            .any(|k| k.storm_id == e.storm_id && k.source == e.source && haversine_km(k.position(), e.position()) <= km);
        if near {
            dropped.push(Dropped {
                event: e,
                reason: DropReason::NearDuplicate,
            });
        } else {
            kept.push(e);
        }
    }
    kept
}

fn sorted(mut v: Vec<LandfallEvent>) -> Vec<LandfallEvent> {
    v.sort_by(|a, b| a.time.cmp(&b.time).then(a.storm_id.cmp(&b.storm_id)).then(a.ordinal.cmp(&b.ordinal)));
    v
}

/// Select comparable landfalls for one forecast initialisation.
///
/// Near-duplicate landfalls are removed from both lists first, then any
/// landfall in `[init, forecast_start)` is dropped. One target landfall is
/// selected by `mode`, each forecast track contributes only its first
/// remaining landfall, and a forecast landfall is paired with the target
/// only when their times differ by at most the matching window. Pairs are
/// one-to-one; the closest in time wins.
pub fn filter_landfalls(
    forecast: &[LandfallEvent],
    target: &[LandfallEvent],
    init: DateTime<Utc>,
    forecast_start: DateTime<Utc>,
    filter: &LandfallFilter,
) -> FilterOutcome {
    let mut dropped = Vec::new();
    let mut fc = dedupe(sorted(forecast.to_vec()), filter.dedupe_km, &mut dropped);
    let mut tg = dedupe(sorted(target.to_vec()), filter.dedupe_km, &mut dropped);

    let before_start = |e: &LandfallEvent| e.time >= init && e.time < forecast_start;
    for list in [&mut fc, &mut tg] {
        let (gone, keep): (Vec<_>, Vec<_>) = std::mem::take(list).into_iter().partition(|e| before_start(e));
        dropped.extend(gone.into_iter().map(|event| Dropped {
            event,
            reason: DropReason::BeforeTrackStart,
        }));
        *list = keep;
    }

    let chosen = match filter.mode {
        LandfallMode::First => tg.first().cloned(),
        LandfallMode::Next => tg.iter().find(|e| e.time >= init).cloned(),
    };
    for e in tg {
        if chosen.as_ref() != Some(&e) {
            dropped.push(Dropped {
                event: e,
                reason: DropReason::NotSelected,
            });
        }
    }

    let mut firsts: Vec<LandfallEvent> = Vec::new();
    for e in fc {
        if firsts.iter().any(|f| f.storm_id == e.storm_id && f.source == e.source) {
            dropped.push(Dropped {
                event: e,
                reason: DropReason::NotSelected,
            });
        } else {
            firsts.push(e);
        }
    }

    let Some(target) = chosen else {
        dropped.extend(firsts.into_iter().map(|event| Dropped {
            event,
            reason: DropReason::OutsideWindow,
        }));
        return FilterOutcome { pairs: vec![], dropped };
    };
    let window = Duration::hours(filter.match_window_hours);
    let best = firsts
        .iter()
        .enumerate()
        .filter(|(_, f)| (f.time - target.time).abs() <= window)
        .min_by(|(_, a), (_, b)| {
            (a.time - target.time)
                .abs()
                .cmp(&(b.time - target.time).abs())
                .then(a.time.cmp(&b.time))
                .then(a.storm_id.cmp(&b.storm_id))
        })
        .map(|(k, _)| k);
    let mut pairs = Vec::new();
    for (k, f) in firsts.into_iter().enumerate() {
        if Some(k) == best {
            pairs.push(LandfallPair {
                forecast: f,
                target: target.clone(),
            });
        } else {
            dropped.push(Dropped {
                event: f,
                reason: DropReason::OutsideWindow,
            });
        }
    }
    if pairs.is_empty() {
        dropped.push(Dropped {
            event: target,
            reason: DropReason::OutsideWindow,
        });
    }
    FilterOutcome { pairs, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandfallMetrics {
    pub pressure_mae_hpa: f64,
    pub wind_mae_ms: f64,
    /// Mean signed forecast − target landfall time.
    pub time_me_hours: f64,
    pub displacement_km: f64,
    pub pairs: usize,
}

pub fn landfall_metrics(pairs: &[LandfallPair]) -> Result<LandfallMetrics> {
    if pairs.is_empty() {
        return Err(Error::Undefined("no matched landfalls".into()));
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&LandfallPair) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    Ok(LandfallMetrics {
        pressure_mae_hpa: mean(&|p| (p.forecast.mslp_hpa - p.target.mslp_hpa).abs()),
        wind_mae_ms: mean(&|p| (p.forecast.wind_ms - p.target.wind_ms).abs()),
        time_me_hours: mean(&|p| (p.forecast.time - p.target.time).num_milliseconds() as f64 / 3_600_000.0),
        displacement_km: mean(&|p| haversine_km(p.forecast.position(), p.target.position())),
        pairs: pairs.len(),
    })
}

const LANDFALL_HEADER: [&str; 8] = ["storm_id", "source", "ordinal", "time", "lat", "lon", "mslp_hpa", "wind_ms"];

pub fn write_landfalls_csv(path: impl AsRef<Path>, events: &[LandfallEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    if events.is_empty() {
        w.write_record(LANDFALL_HEADER)?;
    }
    for e in events {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_landfalls_csv(path: impl AsRef<Path>) -> Result<Vec<LandfallEvent>> {
    let mut r = csv::Reader::from_path(path.as_ref())?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
