//! Run configuration: module defaults, a TOML file and `key=value` overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ar_tracker::ArParams;
use crate::climatology::{GrowParams, MarginalParams};
use crate::convective::{PphParams, CBSS_SEVERE_THRESHOLD};
use crate::error::{Error, Result};
use crate::landfall::LandfallFilter;
use crate::metrics::RegionWeighting;
use crate::tc_tracker::TcParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationParams {
    /// Models to evaluate; empty means every model directory found.
    pub models: Vec<String>,
    pub max_lead_hours: i64,
    pub lead_step_hours: i64,
    /// Fraction of the case's valid times a forecast must cover.
    pub min_valid_fraction: f64,
    pub relax_hours: i64,
    pub relax_days: i64,
    pub weighting: RegionWeighting,
    /// Minimum qualifying run for heat and freeze starts, days.
    pub min_run_days: usize,
    /// PPH probability that binarises the observed severe region.
    pub pph_threshold: f64,
    pub cbss_threshold: f64,
    /// Fraction of the observed severe region a forecast must cover to
    /// count towards the early signal.
    pub early_signal_cover: f64,
    /// Land components smaller than this many cells are ignored for
    /// landfall detection.
    pub min_land_cells: usize,
}

impl Default for EvaluationParams {
    fn default() -> Self {
        Self {
            models: Vec::new(),
            max_lead_hours: 240,
            lead_step_hours: 6,
            min_valid_fraction: 0.5,
            relax_hours: 24,
            relax_days: 1,
            weighting: RegionWeighting::Equal,
            min_run_days: 3,
            pph_threshold: 0.01,
            cbss_threshold: CBSS_SEVERE_THRESHOLD,
            early_signal_cover: 0.5,
            min_land_cells: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub evaluation: EvaluationParams,
    pub grow: GrowParams,
    pub marginal: MarginalParams,
    pub ar: ArParams,
    pub tc: TcParams,
    pub landfall: LandfallFilter,
    pub pph: PphParams,
}

impl Config {
    /// Defaults, then the optional config file, then each `key=value`.
    pub fn resolve(file: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut cfg = Config::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let table: toml::Table = toml::from_str(&text)
                .map_err(|e| Error::InvalidParameter(format!("{}: {e}", path.display())))?;
            cfg = cfg.with_overrides(&serde_json::to_value(table)?)?;
        }
        for s in sets {
            cfg = cfg.with_assignment(s)?;
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serialises")
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let base = Config::default().to_json();
        let mut merged = base.clone();
        merge_checked(&mut merged, v, "")?;
        let cfg: Config = serde_json::from_value(merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Merge a nested object of overrides. Every key must already exist.
    pub fn with_overrides(&self, overrides: &Value) -> Result<Self> {
        let mut v = self.to_json();
        merge_checked(&mut v, overrides, "")?;
        let cfg: Config = serde_json::from_value(v)
            .map_err(|e| Error::InvalidParameter(format!("configuration override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `dotted.key=value` assignment. The value is read as a TOML
    /// value when possible and as a bare string otherwise.
    pub fn with_assignment(&self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got {assignment:?}")))?;
        let key = key.trim();
        let raw = raw.trim();
        let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
            Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key"))?,
            Err(_) => Value::String(raw.to_string()),
        };
        let mut nested = value;
        for part in key.split('.').rev() {
            if part.is_empty() {
                return Err(Error::InvalidParameter(format!("empty segment in key {key:?}")));
            }
            nested = Value::Object([(part.to_string(), nested)].into_iter().collect());
        }
        self.with_overrides(&nested)
    }

    pub fn validate(&self) -> Result<()> {
        self.ar.validate()?;
        self.tc.validate()?;
        let e = &self.evaluation;
        let ok = e.max_lead_hours > 0
            && e.lead_step_hours > 0
            && (0.0..=1.0).contains(&e.min_valid_fraction)
            && e.relax_hours >= 0
            && e.relax_days >= 0
            && e.min_run_days > 0
            && e.pph_threshold > 0.0
            && e.cbss_threshold > 0.0
            && (0.0..=1.0).contains(&e.early_signal_cover);
        if !ok {
            return Err(Error::InvalidParameter(format!("evaluation settings out of range: {e:?}")));
        }
        if !(self.landfall.dedupe_km >= 0.0 && self.landfall.match_window_hours >= 0) {
            return Err(Error::InvalidParameter("landfall dedupe distance and window must be non-negative".into()));
        }
        Ok(())
    }
}

fn merge_checked(base: &mut Value, overrides: &Value, path: &str) -> Result<()> {
    let Some(over) = overrides.as_object() else {
        return Err(Error::InvalidParameter(format!("override at {path:?} must be a table")));
    };
    let Some(target) = base.as_object_mut() else {
        return Err(Error::InvalidParameter(format!("{path:?} is not a table")));
    };
    for (k, v) in over {
        let here = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        let slot = target
            .get_mut(k)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown configuration key {here:?}")))?;
        if slot.is_object() {
            merge_checked(slot, v, &here)?;
        } else {
            *slot = v.clone();
        }
    }
    Ok(())
}
