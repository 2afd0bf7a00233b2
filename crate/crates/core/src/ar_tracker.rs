//! Integrated vapor transport and atmospheric-river objects.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    center_of_mass_indices, connected_components, dilate_square, haversine_km, laplacian, mask_bounds, Connectivity, FieldCube, Grid,
    GridSpec, LandMask, LatLon, Region, Spacing,
};
use crate::metrics::{self, Signal};

/// Standard gravity, m s⁻².
pub const GRAVITY: f64 = 9.80665;
/// Upper pressure bound of the integration column, hPa.
pub const IVT_TOP_HPA: f64 = 200.0;

#[derive(Debug, Clone, PartialEq)]
pub struct IvtField {
    pub spec: GridSpec,
    pub time: DateTime<Utc>,
    pub ivt_u: Grid<f64>,
    pub ivt_v: Grid<f64>,
    pub ivt: Grid<f64>,
}

impl IvtField {
    /// Field from a given magnitude with the transport pointing east.
    pub fn from_magnitude(spec: GridSpec, time: DateTime<Utc>, ivt: Grid<f64>) -> Result<Self> {
        ivt.ensure_shape(&spec, "ivt")?;
        if ivt.as_slice().iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("ivt magnitude must be finite and non-negative".into()));
        }
        Ok(Self {
            spec,
            time,
            ivt_u: ivt.clone(),
            ivt_v: Grid::like(&ivt, 0.0),
            ivt,
        })
    }
}

/// Trapezoidal column integral (1/g)∫ q·w dp over pressure given in hPa
/// (surface first). Missing values contribute zero.
pub fn column_flux(p_hpa: &[f64], q: &[f64], wind: &[f64]) -> f64 {
    let mut total = 0.0;
    for k in 1..p_hpa.len() {
        let f0 = q[k - 1] * wind[k - 1];
        let f1 = q[k] * wind[k];
        let f0 = if f0.is_finite() { f0 } else { 0.0 };
        let f1 = if f1.is_finite() { f1 } else { 0.0 };
        total += 0.5 * (f0 + f1) * (p_hpa[k - 1] - p_hpa[k]) * 100.0;
    }
    total / GRAVITY
}

fn integration_levels(q: &FieldCube, u: &FieldCube, v: &FieldCube) -> Result<Vec<usize>> {
    for (c, name) in [(u, "u"), (v, "v")] {
        q.spec.ensure_same(&c.spec, name)?;
        if c.levels_hpa != q.levels_hpa {
            return Err(Error::ShapeMismatch(format!("{name} level axis differs from specific humidity")));
        }
        if c.times != q.times {
            return Err(Error::ShapeMismatch(format!("{name} time axis differs from specific humidity")));
        }
    }
    let levels: Vec<usize> = (0..q.levels_hpa.len()).filter(|&l| q.levels_hpa[l] >= IVT_TOP_HPA - 1e-9).collect();
    if levels.len() < 3 {
        return Err(Error::ShapeMismatch(format!(
            "ivt needs at least 3 pressure levels at or below {IVT_TOP_HPA} hPa, found {}",
            levels.len()
        )));
    }
    Ok(levels)
}

/// IVT at time index `t` from specific humidity (kg/kg) and wind (m/s) on
/// shared pressure levels.
pub fn compute_ivt_at(q: &FieldCube, u: &FieldCube, v: &FieldCube, t: usize) -> Result<IvtField> {
    let levels = integration_levels(q, u, v)?;
    let spec = q.spec;
    let p: Vec<f64> = levels.iter().map(|&l| q.levels_hpa[l]).collect();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.nlat)
        .into_par_iter()
        .map(|i| {
            let mut ru = Vec::with_capacity(spec.nlon);
            let mut rv = Vec::with_capacity(spec.nlon);
            let mut qc = vec![0.0; levels.len()];
            let mut uc = vec![0.0; levels.len()];
            let mut vc = vec![0.0; levels.len()];
            for j in 0..spec.nlon {
                for (k, &l) in levels.iter().enumerate() {
                    qc[k] = q.get(t, l, i, j);
                    uc[k] = u.get(t, l, i, j);
                    vc[k] = v.get(t, l, i, j);
                }
                ru.push(column_flux(&p, &qc, &uc));
                rv.push(column_flux(&p, &qc, &vc));
            }
            (ru, rv)
        })
        .collect();
    let mut iu = Vec::with_capacity(spec.len());
    let mut iv = Vec::with_capacity(spec.len());
    for (ru, rv) in rows {
        iu.extend(ru);
        iv.extend(rv);
    }
    let ivt_u = Grid::from_vec(spec.nlat, spec.nlon, iu)?;
    let ivt_v = Grid::from_vec(spec.nlat, spec.nlon, iv)?;
    let ivt = Grid::from_fn(spec.nlat, spec.nlon, |i, j| ivt_u[(i, j)].hypot(ivt_v[(i, j)]));
    Ok(IvtField {
        spec,
        time: q.times[t],
        ivt_u,
        ivt_v,
        ivt,
    })
}

/// IVT at every time of the input cubes.
pub fn compute_ivt(q: &FieldCube, u: &FieldCube, v: &FieldCube) -> Result<Vec<IvtField>> {
    integration_levels(q, u, v)?;
    (0..q.ntime()).map(|t| compute_ivt_at(q, u, v, t)).collect()
}

/// Units in which the Laplacian threshold is expressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianUnits {
    /// IVT units per gridpoint² (unit spacing).
    #[default]
    GridIndex,
    /// IVT units per m² on the sphere.
    Metres,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArParams {
    pub ivt_threshold: f64,
    pub laplacian_threshold: f64,
    pub laplacian_search_radius: usize,
    pub min_points: usize,
    pub tropics_exclusion_lat: f64,
    pub laplacian_units: LaplacianUnits,
}

impl Default for ArParams {
    fn default() -> Self {
        Self {
            ivt_threshold: 400.0,
            laplacian_threshold: 2.5,
            laplacian_search_radius: 8,
            min_points: 500,
            tropics_exclusion_lat: 20.0,
            laplacian_units: LaplacianUnits::GridIndex,
        }
    }
}

impl ArParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.ivt_threshold > 0.0
            && self.laplacian_threshold > 0.0
            && self.laplacian_search_radius > 0
            && self.min_points > 0
            && self.tropics_exclusion_lat >= 0.0
            && self.tropics_exclusion_lat < 90.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("AR parameters must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArObject {
    pub id: usize,
    pub time: DateTime<Utc>,
    pub spec: GridSpec,
    /// Flat gridpoint indices, ascending.
    pub members: Vec<usize>,
    /// Members that fall on land, ascending.
    pub land_members: Vec<usize>,
    pub center: LatLon,
    pub land_center: Option<LatLon>,
}

impl ArObject {
    fn build(id: usize, time: DateTime<Utc>, spec: GridSpec, mut members: Vec<usize>, land: &LandMask) -> Result<Self> {
        members.sort_unstable();
        let land_members: Vec<usize> = members.iter().copied().filter(|&k| land.mask.as_slice()[k]).collect();
        let center = center_of_mass_indices(&members, &spec)?;
        let land_center = if land_members.is_empty() {
            None
        } else {
            Some(center_of_mass_indices(&land_members, &spec)?)
        };
        Ok(Self {
            id,
            time,
            spec,
            members,
            land_members,
            center,
            land_center,
        })
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn mask(&self) -> Grid<bool> {
        index_mask(&self.spec, &self.members)
    }

    pub fn land_mask(&self) -> Grid<bool> {
        index_mask(&self.spec, &self.land_members)
    }

    pub fn intersects_land(&self) -> bool {
        !self.land_members.is_empty()
    }

    /// True when a land member lies inside `region` (any land member when
    /// no region is given).
    pub fn intersects_land_in(&self, region: Option<&Region>) -> bool {
        match region {
            None => self.intersects_land(),
            Some(r) => self.land_members.iter().any(|&k| {
                let (i, j) = self.spec.unflat(k);
                r.contains(self.spec.point(i, j))
            }),
        }
    }

    /// Smallest latitude/longitude box containing every member.
    pub fn bbox(&self) -> Region {
        mask_bounds(&self.mask(), &self.spec).expect("objects are never empty")
    }
}

fn index_mask(spec: &GridSpec, idx: &[usize]) -> Grid<bool> {
    let mut m = Grid::filled(spec.nlat, spec.nlon, false);
    for &k in idx {
        m.as_mut_slice()[k] = true;
    }
    m
}

/// Gridpoints that satisfy the pointwise AR conditions: IVT at or above
/// the threshold with a strong-Laplacian point within the search radius.
pub fn candidate_mask(ivt: &IvtField, params: &ArParams) -> Result<Grid<bool>> {
    params.validate()?;
    let wrap = ivt.spec.is_global_lon();
    let spacing = match params.laplacian_units {
        LaplacianUnits::GridIndex => Spacing::Index,
        LaplacianUnits::Metres => Spacing::Spherical(ivt.spec),
    };
    let lap = laplacian(&ivt.ivt, spacing, wrap)?;
    let strong = lap.map(|v| v.abs() >= params.laplacian_threshold);
    let near = dilate_square(&strong, params.laplacian_search_radius, wrap);
    let data: Vec<bool> = ivt
        .ivt
        .as_slice()
        .par_iter()
        .zip(near.as_slice().par_iter())
        .map(|(&v, &n)| n && v >= params.ivt_threshold)
        .collect();
    Grid::from_vec(ivt.spec.nlat, ivt.spec.nlon, data)
}

/// Atmospheric-river objects in one IVT field.
pub fn detect_ar_objects(ivt: &IvtField, params: &ArParams, land: &LandMask) -> Result<Vec<ArObject>> {
    ivt.spec.ensure_same(&land.spec, "land mask")?;
    let cand = candidate_mask(ivt, params)?;
    let comps = connected_components(&cand, Connectivity::Eight, ivt.spec.is_global_lon());
    let mut objects = Vec::new();
    for members in comps.all_members() {
        if members.len() < params.min_points {
            continue;
        }
        let obj = ArObject::build(objects.len(), ivt.time, ivt.spec, members, land)?;
        if obj.center.lat.abs() < params.tropics_exclusion_lat {
            continue;
        }
        objects.push(ArObject { id: objects.len(), ..obj });
    }
    Ok(objects)
}

/// Objects detected at one valid time.
#[derive(Debug, Clone, PartialEq)]
pub struct ArSnapshot {
    pub time: DateTime<Utc>,
    pub objects: Vec<ArObject>,
}

fn first_land_time(seq: &[ArSnapshot], region: Option<&Region>) -> Option<DateTime<Utc>> {
    let mut sorted: Vec<&ArSnapshot> = seq.iter().collect();
    sorted.sort_by_key(|s| s.time);
    sorted
        .into_iter()
        .find(|s| s.objects.iter().any(|o| o.intersects_land_in(region)))
        .map(|s| s.time)
}

/// Hours between the forecast initialisation and the target's first land
/// intersection, provided the forecast itself produces a land-intersecting
/// object inside the region at some valid time.
pub fn ar_landfall_lead_time(
    init: DateTime<Utc>,
    forecast: &[ArSnapshot],
    target: &[ArSnapshot],
    region: Option<&Region>,
) -> Result<Signal<f64>> {
    if target.is_empty() {
        return Err(Error::Empty("target object sequence is empty".into()));
    }
    let target_first = first_land_time(target, region)
        .ok_or_else(|| Error::Undefined("target never intersects land in the region".into()))?;
    if init > target_first {
        return Err(Error::Undefined("forecast initialised after the target landfall".into()));
    }
    Ok(match first_land_time(forecast, region) {
        Some(_) => Signal::Detected((target_first - init).num_seconds() as f64 / 3600.0),
        None => Signal::NoSignal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArComparison {
    pub displacement_km: f64,
    pub iou: f64,
}

/// Land-intersection displacement and IOU of two objects.
pub fn ar_displacement_and_iou(forecast: &ArObject, target: &ArObject) -> Result<ArComparison> {
    forecast.spec.ensure_same(&target.spec, "objects")?;
    let (Some(fc), Some(tc)) = (forecast.land_center, target.land_center) else {
        return Err(Error::Undefined("object does not intersect land".into()));
    };
    Ok(ArComparison {
        displacement_km: haversine_km(fc, tc),
        iou: metrics::iou(&forecast.land_mask(), &target.land_mask())?,
    })
}

/// Union of the land masks of several objects.
pub fn union_land_mask(spec: &GridSpec, objects: &[ArObject]) -> Grid<bool> {
    let mut m = Grid::filled(spec.nlat, spec.nlon, false);
    for o in objects {
        for &k in &o.land_members {
            m.as_mut_slice()[k] = true;
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArObjectLine {
    #[serde(with = "crate::timefmt")]
    time: DateTime<Utc>,
    size: usize,
    center: LatLon,
    land_center: Option<LatLon>,
    bbox: Region,
    /// (first flat index, run length) pairs
    member_runlength_encoding: Vec<(usize, usize)>,
}

fn run_length_encode(sorted: &[usize]) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &k in sorted {
        match runs.last_mut() {
            Some((s, n)) if *s + *n == k => *n += 1,
            _ => runs.push((k, 1)),
        }
    }
    runs
}

pub fn write_ar_objects_jsonl(path: impl AsRef<Path>, objects: &[ArObject]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for o in objects {
        let line = ArObjectLine {
            time: o.time,
            size: o.size(),
            center: o.center,
            land_center: o.land_center,
            bbox: o.bbox(),
            member_runlength_encoding: run_length_encode(&o.members),
        };
        serde_json::to_writer(&mut buf, &line)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Read objects back; land intersections are recomputed from `land`.
pub fn read_ar_objects_jsonl(path: impl AsRef<Path>, land: &LandMask) -> Result<Vec<ArObject>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArObjectLine = serde_json::from_str(&line)?;
        let members: Vec<usize> = rec.member_runlength_encoding.iter().flat_map(|&(s, n)| s..s + n).collect();
        if members.len() != rec.size || members.iter().any(|&k| k >= land.spec.len()) {
            return Err(Error::MalformedHeader(format!("object at {} has inconsistent members", rec.time)));
        }
        out.push(ArObject::build(out.len(), rec.time, land.spec, members, land)?);
    }
    Ok(out)
}
