//! Case catalog: one JSON document per case study.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::climatology::{EventCase, TemperatureEvent};
use crate::error::{Error, Result};
use crate::grid::{LatLon, Region};

/// JSON Schema every case document must satisfy.
pub const CASE_SCHEMA: &str = include_str!("../../schema/case.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    HeatWave,
    Freeze,
    MarginalTemp,
    Severe,
    MarginalSevere,
    AtmosphericRiver,
    TropicalCyclone,
}

impl EventType {
    pub const ALL: [EventType; 7] = [
        EventType::HeatWave,
        EventType::Freeze,
        EventType::MarginalTemp,
        EventType::Severe,
        EventType::MarginalSevere,
        EventType::AtmosphericRiver,
        EventType::TropicalCyclone,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::HeatWave => "heat_wave",
            EventType::Freeze => "freeze",
            EventType::MarginalTemp => "marginal_temp",
            EventType::Severe => "severe",
            EventType::MarginalSevere => "marginal_severe",
            EventType::AtmosphericRiver => "atmospheric_river",
            EventType::TropicalCyclone => "tropical_cyclone",
        }
    }

    /// Target files a case of this type needs when the catalog entry does
    /// not name them.
    pub fn default_targets(&self) -> &'static [(&'static str, &'static str)] {
        match self {
            EventType::HeatWave => &[("t2m", "t2m.json"), ("clim", "clim_p85.json"), ("land_mask", "land_mask.json")],
            EventType::Freeze => &[("t2m", "t2m.json"), ("clim", "clim_p15.json"), ("land_mask", "land_mask.json")],
            EventType::MarginalTemp => &[("t2m", "t2m.json"), ("land_mask", "land_mask.json")],
            EventType::Severe | EventType::MarginalSevere => &[("reports", "reports.csv")],
            EventType::AtmosphericRiver => &[("land_mask", "land_mask.json")],
            EventType::TropicalCyclone => &[("land_mask", "land_mask.json")],
        }
    }
}

impl std::fmt::Display for EventType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EventType::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Catalog(format!("unknown event type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudy {
    pub id: String,
    pub event_type: EventType,
    pub region: Region,
    /// Grouping label for pooled tables (basin, continent, ...).
    #[serde(default = "default_label")]
    pub region_label: String,
    #[serde(with = "crate::timefmt")]
    pub start: DateTime<Utc>,
    #[serde(with = "crate::timefmt")]
    pub end: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<LatLon>,
    /// Role → file name under the case's target directory.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub targets: BTreeMap<String, String>,
    /// Overrides of the run configuration, same layout as the config file.
    #[serde(default = "empty_object", skip_serializing_if = "is_empty_object")]
    pub parameters: serde_json::Value,
}

fn default_label() -> String {
    "global".to_string()
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

fn is_empty_object(v: &serde_json::Value) -> bool {
    v.as_object().is_some_and(|m| m.is_empty())
}

impl CaseStudy {
    pub fn new(id: &str, event_type: EventType, region: Region, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        Self {
            id: id.to_string(),
            event_type,
            region,
            region_label: default_label(),
            start,
            end,
            seed: None,
            targets: BTreeMap::new(),
            parameters: empty_object(),
        }
    }

    /// Case entry for a detected temperature event.
    pub fn from_event(case: &EventCase) -> Self {
        let event_type = match case.event_type {
            TemperatureEvent::HeatWave => EventType::HeatWave,
            TemperatureEvent::Freeze => EventType::Freeze,
            TemperatureEvent::Marginal => EventType::MarginalTemp,
        };
        Self::new(&case.id, event_type, case.region, case.start, case.end)
    }

    pub fn validate(&self) -> Result<()> {
        let id_ok = !self.id.is_empty()
            && self.id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
            && self.id != "."
            && self.id != "..";
        if !id_ok {
            return Err(Error::Catalog(format!("case id {:?} must be a plain file-name token", self.id)));
        }
        self.region.validate().map_err(|e| Error::Catalog(format!("case {}: {e}", self.id)))?;
        if self.region.lat_min < -90.0 || self.region.lat_max > 90.0 {
            return Err(Error::Catalog(format!("case {}: latitudes out of range", self.id)));
        }
        if self.end <= self.start {
            return Err(Error::Catalog(format!("case {}: end must follow start", self.id)));
        }
        if !self.parameters.is_object() {
            return Err(Error::Catalog(format!("case {}: parameters must be an object", self.id)));
        }
        if let Some(s) = self.seed {
            if !(s.lat.abs() <= 90.0 && s.lon.is_finite()) {
                return Err(Error::Catalog(format!("case {}: seed out of range", self.id)));
            }
        }
        Ok(())
    }

    /// File name for a target role, falling back to the event-type default.
    pub fn target_file(&self, role: &str) -> Option<String> {
        self.targets.get(role).cloned().or_else(|| {
            self.event_type
                .default_targets()
                .iter()
                .find(|(r, _)| *r == role)
                .map(|(_, f)| f.to_string())
        })
    }

    /// Target files that must exist before the case can run.
    pub fn required_targets(&self) -> Vec<String> {
        let mut roles: Vec<String> = self.event_type.default_targets().iter().map(|(r, _)| r.to_string()).collect();
        for r in self.targets.keys() {
            if !roles.contains(r) {
                roles.push(r.clone());
            }
        }
        roles.into_iter().filter_map(|r| self.target_file(&r)).collect()
    }

    /// Names of required target files missing under `target_dir`.
    pub fn missing_targets(&self, target_dir: &Path) -> Vec<String> {
        self.required_targets()
            .into_iter()
            .filter(|f| !target_dir.join(f).exists())
            .collect()
    }
}

pub fn read_case(path: impl AsRef<Path>) -> Result<CaseStudy> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let case: CaseStudy =
        serde_json::from_str(&text).map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))?;
    case.validate()?;
    Ok(case)
}

pub fn write_case(path: impl AsRef<Path>, case: &CaseStudy) -> Result<()> {
    let path = path.as_ref();
    case.validate()?;
    let mut text = serde_json::to_string_pretty(case)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// All `*.json` cases in a directory, sorted by id. Duplicate ids are
/// rejected.
pub fn load_catalog(dir: impl AsRef<Path>) -> Result<Vec<CaseStudy>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut cases = paths.iter().map(read_case).collect::<Result<Vec<_>>>()?;
    cases.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = cases.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Catalog(format!("duplicate case id {:?}", w[0].id)));
    }
    Ok(cases)
}
