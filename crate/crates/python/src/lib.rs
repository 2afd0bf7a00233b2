//! Python bindings: grids and field containers, the event detectors, the
//! verification metrics and the batch evaluation harness.
//!
//! Structured values (parameters, reports, tracks, records) cross the
//! boundary as plain dicts and lists; 2-D fields are lists of rows.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use ewb_core::ar_tracker::{self, ArParams, IvtField};
use ewb_core::convective::{self, Moisture, PphParams, Report, SoundingProfile};
use ewb_core::grid::{self, FieldCube, Grid, GridSpec, LandMask, LatLon};
use ewb_core::harness::{self, pipeline, Config, RunInputs, RunManifest, SynthKind, SynthParams};
use ewb_core::landfall::{self, LandfallEvent, LandfallFilter};
use ewb_core::metrics::{self, RegionWeighting};
use ewb_core::tc_tracker::{self, TcParams, Track, TrackPoint, TrackSource};
use ewb_core::{timefmt, Error};

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn from_py_or_default<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    obj.map_or_else(|| Ok(T::default()), from_py)
}

fn grid_from_rows<T: Clone>(rows: Vec<Vec<T>>, spec: &GridSpec) -> PyResult<Grid<T>> {
    if rows.len() != spec.nlat || rows.iter().any(|r| r.len() != spec.nlon) {
        return Err(PyValueError::new_err(format!(
            "expected {} rows of {} values",
            spec.nlat, spec.nlon
        )));
    }
    Grid::from_vec(spec.nlat, spec.nlon, rows.into_iter().flatten().collect()).map_err(err)
}

fn grid_to_rows<T: Clone>(g: &Grid<T>) -> Vec<Vec<T>> {
    g.as_slice().chunks(g.nlon()).map(|r| r.to_vec()).collect()
}

#[pyclass(name = "GridSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyGridSpec {
    inner: GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(lat0: f64, lon0: f64, dlat: f64, dlon: f64, nlat: usize, nlon: usize) -> PyResult<Self> {
        Ok(Self {
            inner: GridSpec::new(lat0, lon0, dlat, dlon, nlat, nlon).map_err(err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.inner.shape()
    }

    #[getter]
    fn origin(&self) -> (f64, f64) {
        (self.inner.lat0, self.inner.lon0)
    }

    #[getter]
    fn spacing(&self) -> (f64, f64) {
        (self.inner.dlat, self.inner.dlon)
    }

    fn lat(&self, i: usize) -> f64 {
        self.inner.lat(i)
    }

    fn lon(&self, j: usize) -> f64 {
        self.inner.lon(j)
    }

    fn nearest(&self, lat: f64, lon: f64) -> Option<(usize, usize)> {
        self.inner.nearest(LatLon::new(lat, lon))
    }

    fn is_global_lon(&self) -> bool {
        self.inner.is_global_lon()
    }

    fn __repr__(&self) -> String {
        let s = &self.inner;
        format!("GridSpec({}, {}, {}, {}, {}, {})", s.lat0, s.lon0, s.dlat, s.dlon, s.nlat, s.nlon)
    }
}

/// A gridded variable over time and optional pressure levels.
#[pyclass(name = "FieldCube")]
struct PyFieldCube {
    inner: FieldCube,
}

#[pymethods]
impl PyFieldCube {
    #[new]
    #[pyo3(signature = (variable, units, spec, times, values, levels_hpa=Vec::new()))]
    fn new(
        variable: String,
        units: String,
        spec: &Bound<'_, PyGridSpec>,
        times: Vec<String>,
        values: Vec<f32>,
        levels_hpa: Vec<f64>,
    ) -> PyResult<Self> {
        let times = times.iter().map(|t| timefmt::parse(t)).collect::<Result<Vec<_>, _>>().map_err(err)?;
        let inner = FieldCube::new(variable, units, spec.get().inner, times, levels_hpa, None, values).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: grid::load_cube(path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        grid::write_cube(&self.inner, path).map_err(err)
    }

    #[getter]
    fn variable(&self) -> String {
        self.inner.variable.clone()
    }

    #[getter]
    fn units(&self) -> String {
        self.inner.units.clone()
    }

    #[getter]
    fn spec(&self) -> PyGridSpec {
        PyGridSpec { inner: self.inner.spec }
    }

    #[getter]
    fn times(&self) -> Vec<String> {
        self.inner.times.iter().map(timefmt::format).collect()
    }

    #[getter]
    fn levels_hpa(&self) -> Vec<f64> {
        self.inner.levels_hpa.clone()
    }

    /// (time, level, lat, lon); single-level cubes report one level.
    #[getter]
    fn shape(&self) -> (usize, usize, usize, usize) {
        let s = &self.inner.spec;
        (self.inner.ntime(), self.inner.nlevel(), s.nlat, s.nlon)
    }

    #[pyo3(signature = (t, level=0))]
    fn field(&self, t: usize, level: usize) -> PyResult<Vec<Vec<f64>>> {
        if t >= self.inner.ntime() || level >= self.inner.nlevel() {
            return Err(PyValueError::new_err("time or level index out of range"));
        }
        Ok(grid_to_rows(&self.inner.field(t, level)))
    }

    fn __repr__(&self) -> String {
        let (nt, nl, ny, nx) = self.shape();
        format!("FieldCube({:?}, shape=({nt}, {nl}, {ny}, {nx}))", self.inner.variable)
    }
}

#[pyfunction]
fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    grid::haversine_km(LatLon::new(lat1, lon1), LatLon::new(lat2, lon2))
}

/// Trapezoidal column flux (1/g)∫ q·wind dp, pressures in hPa from the surface up.
#[pyfunction]
fn column_flux(pressure_hpa: Vec<f64>, q: Vec<f64>, wind: Vec<f64>) -> PyResult<f64> {
    if q.len() != pressure_hpa.len() || wind.len() != pressure_hpa.len() {
        return Err(PyValueError::new_err("pressure, q and wind lengths differ"));
    }
    Ok(ar_tracker::column_flux(&pressure_hpa, &q, &wind))
}

/// IVT magnitude at every time of the cubes.
#[pyfunction]
fn compute_ivt(q: &PyFieldCube, u: &PyFieldCube, v: &PyFieldCube) -> PyResult<Vec<Vec<Vec<f64>>>> {
    let fields = ar_tracker::compute_ivt(&q.inner, &u.inner, &v.inner).map_err(err)?;
    Ok(fields.iter().map(|f| grid_to_rows(&f.ivt)).collect())
}

fn land_or_ocean(land: Option<Vec<Vec<bool>>>, spec: &GridSpec) -> PyResult<LandMask> {
    match land {
        Some(rows) => LandMask::new(*spec, grid_from_rows(rows, spec)?).map_err(err),
        None => Ok(LandMask::all_ocean(*spec)),
    }
}

/// Atmospheric-river objects in one IVT field.
#[pyfunction]
#[pyo3(signature = (ivt, spec, land=None, params=None))]
fn detect_ar_objects(
    py: Python<'_>,
    ivt: Vec<Vec<f64>>,
    spec: &Bound<'_, PyGridSpec>,
    land: Option<Vec<Vec<bool>>>,
    params: Option<&Bound<'_, PyAny>>,
) -> PyResult<Vec<Py<PyAny>>> {
    let spec = spec.get().inner;
    let params: ArParams = from_py_or_default(params)?;
    let land = land_or_ocean(land, &spec)?;
    let epoch = chrono_epoch();
    let field = IvtField::from_magnitude(spec, epoch, grid_from_rows(ivt, &spec)?).map_err(err)?;
    let objects = ar_tracker::detect_ar_objects(&field, &params, &land).map_err(err)?;
    objects
        .iter()
        .map(|o| {
            let d = serde_json::json!({
                "id": o.id,
                "size": o.size(),
                "members": o.members,
                "land_members": o.land_members,
                "center": [o.center.lat, o.center.lon],
                "land_center": o.land_center.map(|c| [c.lat, c.lon]),
            });
            to_py(py, &d)
        })
        .collect()
}

fn chrono_epoch() -> DateTime<Utc> {
    DateTime::<Utc>::from_timestamp(0, 0).expect("epoch")
}

/// Mixed-layer CAPE (J/kg) of one sounding, surface first. Give exactly
/// one of dewpoint (K) or specific humidity (kg/kg).
#[pyfunction]
#[pyo3(signature = (pressure_hpa, temperature_k, dewpoint_k=None, specific_humidity=None))]
fn compute_mlcape(
    pressure_hpa: Vec<f64>,
    temperature_k: Vec<f64>,
    dewpoint_k: Option<Vec<f64>>,
    specific_humidity: Option<Vec<f64>>,
) -> PyResult<f64> {
    let moisture = match (dewpoint_k, specific_humidity) {
        (Some(td), None) => Moisture::DewpointK(td),
        (None, Some(q)) => Moisture::SpecificHumidity(q),
        _ => return Err(PyValueError::new_err("give exactly one of dewpoint_k or specific_humidity")),
    };
    let profile = SoundingProfile::new(pressure_hpa, temperature_k, moisture).map_err(err)?;
    convective::compute_mlcape(&profile).map_err(err)
}

/// Practically perfect hindcast probabilities from storm reports
/// (dicts with time, lat, lon, type and optional magnitude).
#[pyfunction]
#[pyo3(signature = (reports, spec, params=None))]
fn compute_pph(reports: &Bound<'_, PyAny>, spec: &Bound<'_, PyGridSpec>, params: Option<&Bound<'_, PyAny>>) -> PyResult<Vec<Vec<f64>>> {
    let reports: Vec<Report> = from_py(reports)?;
    let params: PphParams = from_py_or_default(params)?;
    let pph = convective::compute_pph(&reports, &spec.get().inner, &params).map_err(err)?;
    Ok(grid_to_rows(&pph.probability))
}

/// Cell counts with CSI and FAR (None when undefined).
#[pyfunction]
#[pyo3(signature = (predicted, observed, region=None))]
fn contingency(
    py: Python<'_>,
    predicted: Vec<Vec<bool>>,
    observed: Vec<Vec<bool>>,
    region: Option<Vec<Vec<bool>>>,
) -> PyResult<Py<PyAny>> {
    let nlat = predicted.len();
    let nlon = predicted.first().map_or(0, |r| r.len());
    let spec = GridSpec::new(0.0, 0.0, 1.0, 1.0, nlat.max(1), nlon.max(1)).map_err(err)?;
    let pred = grid_from_rows(predicted, &spec)?;
    let obs = grid_from_rows(observed, &spec)?;
    let region = region.map(|r| grid_from_rows(r, &spec)).transpose()?;
    let c = convective::region_contingency(&pred, &obs, region.as_ref()).map_err(err)?;
    let d = serde_json::json!({
        "tp": c.tp, "fp": c.fp, "fn": c.fn_, "tn": c.tn,
        "csi": c.csi().ok(),
        "far": c.far().ok(),
    });
    to_py(py, &d)
}

/// Regional mean absolute error of the maximum with a ±relax_hours window.
#[pyfunction]
#[pyo3(signature = (forecast, observed, relax_hours=24, area_weighted=false))]
fn rmae_max(forecast: &PyFieldCube, observed: &PyFieldCube, relax_hours: i64, area_weighted: bool) -> PyResult<(f64, bool)> {
    let w = if area_weighted { RegionWeighting::Area } else { RegionWeighting::Equal };
    let s = metrics::rmae_max(&forecast.inner, &observed.inner, None, relax_hours, w).map_err(err)?;
    Ok((s.value, s.truncated))
}

fn track_to_py(py: Python<'_>, t: &Track) -> PyResult<Py<PyAny>> {
    let d = serde_json::json!({
        "storm_id": t.storm_id,
        "source": t.source,
        "points": t.points,
    });
    to_py(py, &d)
}

/// Tropical-cyclone tracks from a directory of mslp, z300, z500, u10 and
/// v10 containers.
#[pyfunction]
#[pyo3(signature = (fields_dir, params=None, prefix="F", source="forecast"))]
fn track_cyclones(
    py: Python<'_>,
    fields_dir: PathBuf,
    params: Option<&Bound<'_, PyAny>>,
    prefix: &str,
    source: &str,
) -> PyResult<Vec<Py<PyAny>>> {
    let params: TcParams = from_py_or_default(params)?;
    let source: TrackSource = from_py(&source.into_pyobject(py)?.into_any())?;
    let fields = pipeline::tc_fields(|v| grid::load_cube(cube_path(&fields_dir, v))).map_err(err)?;
    let cands = tc_tracker::find_candidates_series(&fields, &params, None).map_err(err)?;
    let tracks = tc_tracker::stitch_tracks(&cands, &params, None, source, prefix).map_err(err)?;
    tracks.iter().map(|t| track_to_py(py, t)).collect()
}

fn cube_path(dir: &Path, var: &str) -> PathBuf {
    dir.join(format!("{var}.json"))
}

/// Every ocean-to-land crossing of a track dict against a land mask
/// container.
#[pyfunction]
fn detect_landfalls(py: Python<'_>, track: &Bound<'_, PyAny>, land_mask: PathBuf) -> PyResult<Py<PyAny>> {
    let storm_id: String = track.get_item("storm_id")?.extract()?;
    let source: TrackSource = from_py(&track.get_item("source")?)?;
    let points: Vec<TrackPoint> = from_py(&track.get_item("points")?)?;
    let track = Track::new(storm_id, source, points).map_err(err)?;
    let land = LandMask::from_cube(&grid::load_cube(land_mask).map_err(err)?).map_err(err)?;
    let events = landfall::detect_landfalls(&track, &land).map_err(err)?;
    to_py(py, &events)
}

/// Apply the dedupe, start-time, selection and matching-window rules.
#[pyfunction]
#[pyo3(signature = (forecast, target, init, forecast_start, filter=None))]
fn filter_landfalls(
    py: Python<'_>,
    forecast: &Bound<'_, PyAny>,
    target: &Bound<'_, PyAny>,
    init: &str,
    forecast_start: &str,
    filter: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let fc: Vec<LandfallEvent> = from_py(forecast)?;
    let tg: Vec<LandfallEvent> = from_py(target)?;
    let filter: LandfallFilter = from_py_or_default(filter)?;
    let out = landfall::filter_landfalls(
        &fc,
        &tg,
        timefmt::parse(init).map_err(err)?,
        timefmt::parse(forecast_start).map_err(err)?,
        &filter,
    );
    let d = serde_json::json!({"pairs": out.pairs, "dropped": out.dropped});
    to_py(py, &d)
}

/// Write a synthetic case tree to `out` and return its truth record.
#[pyfunction]
#[pyo3(signature = (kind, out, params=None))]
fn generate_synthetic(py: Python<'_>, kind: &str, out: PathBuf, params: Option<&Bound<'_, PyAny>>) -> PyResult<Py<PyAny>> {
    let kind: SynthKind = kind.parse().map_err(err)?;
    let params: SynthParams = from_py_or_default(params)?;
    let res = harness::generate_synthetic(kind, &params, out).map_err(err)?;
    to_py(py, &res.truth)
}

#[pyfunction]
fn default_config(py: Python<'_>) -> PyResult<Py<PyAny>> {
    to_py(py, &Config::default().to_json())
}

/// Evaluate every catalog case and write records, summary and manifest
/// into `out`.
#[pyfunction]
#[pyo3(signature = (catalog, forecasts, targets, out, config=None, overrides=Vec::new()))]
fn run_evaluation(
    py: Python<'_>,
    catalog: PathBuf,
    forecasts: PathBuf,
    targets: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    overrides: Vec<String>,
) -> PyResult<Py<PyAny>> {
    let cfg = Config::resolve(config.as_deref(), &overrides).map_err(err)?;
    let inputs = RunInputs {
        catalog,
        forecasts,
        targets,
    };
    let res = py.detach(|| harness::run_evaluation(&inputs, &cfg, &out)).map_err(err)?;
    let d = serde_json::json!({
        "partial": res.is_partial(),
        "records": res.records,
        "messages": res.messages,
        "manifest": res.manifest,
    });
    to_py(py, &d)
}

/// Re-run a manifest into `out`; returns the output files whose digests differ.
#[pyfunction]
fn replay(py: Python<'_>, manifest: PathBuf, out: PathBuf) -> PyResult<Vec<String>> {
    let m = RunManifest::read(manifest).map_err(err)?;
    let (_, report) = py.detach(|| harness::replay(&m, &out)).map_err(err)?;
    Ok(report.mismatched)
}

#[pymodule]
fn ewb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyFieldCube>()?;
    m.add_function(wrap_pyfunction!(haversine_km, m)?)?;
    m.add_function(wrap_pyfunction!(column_flux, m)?)?;
    m.add_function(wrap_pyfunction!(compute_ivt, m)?)?;
    m.add_function(wrap_pyfunction!(detect_ar_objects, m)?)?;
    m.add_function(wrap_pyfunction!(compute_mlcape, m)?)?;
    m.add_function(wrap_pyfunction!(compute_pph, m)?)?;
    m.add_function(wrap_pyfunction!(contingency, m)?)?;
    m.add_function(wrap_pyfunction!(rmae_max, m)?)?;
    m.add_function(wrap_pyfunction!(track_cyclones, m)?)?;
    m.add_function(wrap_pyfunction!(detect_landfalls, m)?)?;
    m.add_function(wrap_pyfunction!(filter_landfalls, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_evaluation, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
