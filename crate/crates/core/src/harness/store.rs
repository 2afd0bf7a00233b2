//! Directory-backed forecast and target providers.
//!
//! Forecasts live under `<root>/<model>/<case>/init_YYYYMMDDTHHZ/<var>.json`
//! and targets under `<root>/<case>/`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, Utc};

use crate::convective::{read_reports_csv, Report};
use crate::error::{Error, Result};
use crate::grid::{load_cube, FieldCube, GridSpec, LandMask};
use crate::tc_tracker::{read_tracks_csv, Track};

use super::catalog::CaseStudy;

const INIT_FORMAT: &str = "init_%Y%m%dT%HZ";

pub fn init_dir_name(init: DateTime<Utc>) -> String {
    init.format(INIT_FORMAT).to_string()
}

pub fn parse_init_dir(name: &str) -> Option<DateTime<Utc>> {
    // chrono needs minutes to build a datetime
    NaiveDateTime::parse_from_str(&format!("{name}00"), "init_%Y%m%dT%HZ%M")
        .ok()
        .map(|t| t.and_utc())
}

fn sorted_subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut out: Vec<(String, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter_map(|e| e.file_name().to_str().map(|n| (n.to_string(), e.path())))
        .collect();
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ForecastStore {
    pub root: PathBuf,
}

impl ForecastStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn models(&self) -> Result<Vec<String>> {
        if !self.root.is_dir() {
            return Err(Error::Catalog(format!("forecast directory {} does not exist", self.root.display())));
        }
        Ok(sorted_subdirs(&self.root)?.into_iter().map(|(n, _)| n).collect())
    }

    /// Initialisation times available for a model and case, ascending.
    pub fn inits(&self, model: &str, case: &str) -> Result<Vec<DateTime<Utc>>> {
        let mut out: Vec<DateTime<Utc>> = sorted_subdirs(&self.root.join(model).join(case))?
            .into_iter()
            .filter_map(|(n, _)| parse_init_dir(&n))
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn dir(&self, model: &str, case: &str, init: DateTime<Utc>) -> PathBuf {
        self.root.join(model).join(case).join(init_dir_name(init))
    }

    pub fn has(&self, model: &str, case: &str, init: DateTime<Utc>, var: &str) -> bool {
        self.dir(model, case, init).join(format!("{var}.json")).is_file()
    }

    pub fn load(&self, model: &str, case: &str, init: DateTime<Utc>, var: &str) -> Result<FieldCube> {
        let path = self.dir(model, case, init).join(format!("{var}.json"));
        if !path.is_file() {
            return Err(Error::MissingVariable(format!("{model}/{case}/{}: {var}", init_dir_name(init))));
        }
        load_cube(path)
    }
}

#[derive(Debug, Clone)]
pub struct TargetStore {
    pub root: PathBuf,
}

impl TargetStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dir(&self, case: &CaseStudy) -> PathBuf {
        self.root.join(&case.id)
    }

    fn path(&self, case: &CaseStudy, role: &str) -> Result<PathBuf> {
        let file = case
            .target_file(role)
            .unwrap_or_else(|| format!("{role}.json"));
        let path = self.dir(case).join(file);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingVariable(format!("{}: target {role} ({})", case.id, path.display())))
        }
    }

    pub fn has(&self, case: &CaseStudy, role: &str) -> bool {
        self.path(case, role).is_ok()
    }

    pub fn cube(&self, case: &CaseStudy, role: &str) -> Result<FieldCube> {
        load_cube(self.path(case, role)?)
    }

    /// Land mask re-expressed on `spec`.
    pub fn land_mask(&self, case: &CaseStudy, spec: &GridSpec) -> Result<LandMask> {
        Ok(LandMask::from_cube(&self.cube(case, "land_mask")?)?.resample(spec))
    }

    pub fn reports(&self, case: &CaseStudy) -> Result<Vec<Report>> {
        read_reports_csv(self.path(case, "reports")?)
    }

    pub fn tracks(&self, case: &CaseStudy) -> Result<Vec<Track>> {
        let file = case.target_file("tracks").unwrap_or_else(|| "tracks.csv".into());
        let path = self.dir(case).join(file);
        if !path.is_file() {
            return Err(Error::MissingVariable(format!("{}: target tracks ({})", case.id, path.display())));
        }
        read_tracks_csv(path)
    }
}
