//! Group-wise means of metric records, the tables behind heatmap figures.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricRecord;

use super::catalog::CaseStudy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKey {
    EventType,
    Region,
    Lead,
    Model,
}

impl std::str::FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "event_type" => Ok(GroupKey::EventType),
            "region" => Ok(GroupKey::Region),
            "lead" | "lead_hours" => Ok(GroupKey::Lead),
            "model" => Ok(GroupKey::Model),
            other => Err(Error::InvalidParameter(format!("unknown group key {other:?}"))),
        }
    }
}

pub fn parse_group_keys(s: &str) -> Result<Vec<GroupKey>> {
    let mut keys: Vec<GroupKey> = s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    keys.sort();
    keys.dedup();
    Ok(keys)
}

/// Event type and region label of a case, looked up by case id.
#[derive(Debug, Clone, Default)]
pub struct CaseIndex {
    by_id: HashMap<String, (String, String)>,
}

impl CaseIndex {
    pub fn new(cases: &[CaseStudy]) -> Self {
        Self {
            by_id: cases
                .iter()
                .map(|c| (c.id.clone(), (c.event_type.as_str().to_string(), c.region_label.clone())))
                .collect(),
        }
    }

    fn get(&self, case: &str) -> (String, String) {
        self.by_id
            .get(case)
            .cloned()
            .unwrap_or_else(|| ("unknown".to_string(), "unknown".to_string()))
    }
}

/// One output row; ungrouped columns hold `*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub event_type: String,
    pub region: String,
    pub model: String,
    pub lead_hours: String,
    pub metric: String,
    pub units: String,
    pub mean: Option<f64>,
    pub n_defined: usize,
    pub n_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    event_type: Option<String>,
    region: Option<String>,
    model: Option<String>,
    lead: Option<i64>,
    metric: String,
    units: String,
}

/// Mean of every group. Diagnostic rows are left out; undefined rows are
/// counted but never averaged. Values are sorted before summation so the
/// result does not depend on record order.
pub fn aggregate(records: &[MetricRecord], cases: &CaseIndex, group_by: &[GroupKey]) -> Vec<SummaryRow> {
    let has = |k: GroupKey| group_by.contains(&k);
    let mut groups: BTreeMap<Key, (Vec<f64>, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_diagnostic()) {
        let (event_type, region) = cases.get(&r.case);
        let key = Key {
            event_type: has(GroupKey::EventType).then_some(event_type),
            region: has(GroupKey::Region).then_some(region),
            model: has(GroupKey::Model).then(|| r.model.clone()),
            lead: has(GroupKey::Lead).then_some(r.lead_hours),
            metric: r.metric.clone(),
            units: r.units.clone(),
        };
        let slot = groups.entry(key).or_default();
        match r.value {
            Some(v) if !r.undefined => slot.0.push(v),
            _ => slot.1 += 1,
        }
    }
    let star = |s: Option<String>| s.unwrap_or_else(|| "*".to_string());
    groups
        .into_iter()
        .map(|(k, (mut values, n_undefined))| {
            values.sort_by(f64::total_cmp);
            let mean = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
            SummaryRow {
                event_type: star(k.event_type),
                region: star(k.region),
                model: star(k.model),
                lead_hours: star(k.lead.map(|l| l.to_string())),
                metric: k.metric,
                units: k.units,
                mean,
                n_defined: values.len(),
                n_undefined,
            }
        })
        .collect()
}

pub fn summary_csv_bytes(rows: &[SummaryRow]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record([
        "event_type",
        "region",
        "model",
        "lead_hours",
        "metric",
        "units",
        "mean",
        "n_defined",
        "n_undefined",
    ])?;
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::InvalidParameter(format!("csv buffer: {e}")))
}

pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, summary_csv_bytes(rows)?).map_err(|e| Error::io(path, e))
}
