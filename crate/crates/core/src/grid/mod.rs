//! Regular latitude/longitude grids, geodesy helpers and the raster
//! kernels shared by every detector.
//!
//! Latitude increases with the row index; longitudes are kept in the
//! canonical `[-180, 180)` range and wrap modulo 360.

mod cube;
mod kernels;

pub use cube::{load_cube, write_cube, FieldCube, TIME_FORMAT};
pub(crate) use cube::parse_time;
pub(crate) use kernels::center_of_mass_indices;
pub use kernels::{
    center_of_mass, center_of_mass_mask, connected_components, dilate_square, laplacian,
    Components, Connectivity, Spacing,
};

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used for every distance and area.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const EPS: f64 = 1e-9;

/// Wrap a longitude into `[-180, 180)`.
pub fn wrap_lon(lon: f64) -> f64 {
    let x = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if x >= 180.0 {
        x - 360.0
    } else {
        x
    }
}

/// Signed longitude difference `b - a` folded into `[-180, 180)`.
pub fn lon_delta(a: f64, b: f64) -> f64 {
    wrap_lon(b - a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Great-circle distance in kilometres on a sphere of radius 6371 km.
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    central_angle(a, b) * EARTH_RADIUS_KM
}

/// Great-circle separation in degrees of arc.
pub fn great_circle_deg(a: LatLon, b: LatLon) -> f64 {
    central_angle(a, b).to_degrees()
}

fn central_angle(a: LatLon, b: LatLon) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * h.clamp(0.0, 1.0).sqrt().asin()
}

/// Point reached by travelling `distance_deg` degrees of arc from `start`
/// along the initial bearing `bearing_deg` (clockwise from north).
pub fn destination(start: LatLon, bearing_deg: f64, distance_deg: f64) -> LatLon {
    let lat1 = start.lat.to_radians();
    let lon1 = start.lon.to_radians();
    let brg = bearing_deg.to_radians();
    let d = distance_deg.to_radians();
    let lat2 = (lat1.sin() * d.cos() + lat1.cos() * d.sin() * brg.cos()).asin();
    let lon2 = lon1 + (brg.sin() * d.sin() * lat1.cos()).atan2(d.cos() - lat1.sin() * lat2.sin());
    LatLon::new(lat2.to_degrees(), wrap_lon(lon2.to_degrees()))
}

/// Uniformly spaced latitude/longitude grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
}

impl GridSpec {
    pub fn new(lat0: f64, lon0: f64, dlat: f64, dlon: f64, nlat: usize, nlon: usize) -> Result<Self> {
        if !(dlat > 0.0 && dlon > 0.0) || !dlat.is_finite() || !dlon.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive (dlat={dlat}, dlon={dlon})"
            )));
        }
        if nlat == 0 || nlon == 0 {
            return Err(Error::InvalidParameter("grid must have at least one point".into()));
        }
        // Point-registered grids such as 721 x 0.25° span exactly 180°.
        if (nlat - 1) as f64 * dlat > 180.0 + 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "latitude span {} exceeds 180 degrees",
                (nlat - 1) as f64 * dlat
            )));
        }
        if lat0 < -90.0 - 1e-6 || lat0 + (nlat - 1) as f64 * dlat > 90.0 + 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "latitudes {lat0}..{} leave [-90, 90]",
                lat0 + (nlat - 1) as f64 * dlat
            )));
        }
        if nlon as f64 * dlon > 360.0 + 1e-6 {
            return Err(Error::InvalidParameter("longitude span exceeds 360 degrees".into()));
        }
        Ok(Self {
            lat0,
            lon0: wrap_lon(lon0),
            dlat,
            dlon,
            nlat,
            nlon,
        })
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nlat, self.nlon)
    }

    pub fn lat(&self, i: usize) -> f64 {
        self.lat0 + i as f64 * self.dlat
    }

    pub fn lon(&self, j: usize) -> f64 {
        wrap_lon(self.lon0 + j as f64 * self.dlon)
    }

    pub fn point(&self, i: usize, j: usize) -> LatLon {
        LatLon::new(self.lat(i), self.lon(j))
    }

    pub fn lat_last(&self) -> f64 {
        self.lat(self.nlat - 1)
    }

    /// Longitude offset east of `lon0`, in `[0, 360)`.
    pub fn lon_offset(&self, lon: f64) -> f64 {
        (lon - self.lon0).rem_euclid(360.0)
    }

    /// True when the longitude axis closes on itself.
    pub fn is_global_lon(&self) -> bool {
        (self.nlon as f64 * self.dlon - 360.0).abs() < 1e-6
    }

    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.nlon + j
    }

    pub fn unflat(&self, k: usize) -> (usize, usize) {
        (k / self.nlon, k % self.nlon)
    }

    /// Nearest gridpoint to `p`, or `None` when `p` lies more than half a
    /// cell outside the grid.
    pub fn nearest(&self, p: LatLon) -> Option<(usize, usize)> {
        let fi = (p.lat - self.lat0) / self.dlat;
        let i = fi.round();
        if i < 0.0 || i > (self.nlat - 1) as f64 {
            return None;
        }
        let off = self.lon_offset(p.lon);
        let mut j = (off / self.dlon).round();
        if self.is_global_lon() {
            j = j.rem_euclid(self.nlon as f64);
        } else if j > (self.nlon - 1) as f64 {
            // just west of lon0
            if ((off - 360.0) / self.dlon).round() == 0.0 {
                j = 0.0;
            } else {
                return None;
            }
        }
        Some((i as usize, j as usize))
    }

    /// Co-gridded within floating tolerance.
    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.nlat == other.nlat
            && self.nlon == other.nlon
            && (self.lat0 - other.lat0).abs() < 1e-6
            && lon_delta(self.lon0, other.lon0).abs() < 1e-6
            && (self.dlat - other.dlat).abs() < 1e-9
            && (self.dlon - other.dlon).abs() < 1e-9
    }

    pub fn ensure_same(&self, other: &GridSpec, what: &str) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!("{what}: grids differ ({self:?} vs {other:?})")))
        }
    }
}

/// Dense 2-D array in (latitude, longitude) row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    nlat: usize,
    nlon: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(nlat: usize, nlon: usize, value: T) -> Self {
        Self {
            nlat,
            nlon,
            data: vec![value; nlat * nlon],
        }
    }

    pub fn like<U>(other: &Grid<U>, value: T) -> Self {
        Self::filled(other.nlat, other.nlon, value)
    }

    pub fn from_vec(nlat: usize, nlon: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != nlat * nlon {
            return Err(Error::ShapeMismatch(format!(
                "{} values cannot fill a {nlat}x{nlon} grid",
                data.len()
            )));
        }
        Ok(Self { nlat, nlon, data })
    }

    pub fn from_fn(nlat: usize, nlon: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nlat * nlon);
        for i in 0..nlat {
            for j in 0..nlon {
                data.push(f(i, j));
            }
        }
        Self { nlat, nlon, data }
    }

    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            nlat: self.nlat,
            nlon: self.nlon,
            data: self.data.iter().map(f).collect(),
        }
    }

    /// Same grid, shifted by `(di, dj)` gridpoints; cells shifted in from
    /// outside take `fill`.
    pub fn shifted(&self, di: isize, dj: isize, fill: T) -> Self {
        Self::from_fn(self.nlat, self.nlon, |i, j| {
            let si = i as isize - di;
            let sj = j as isize - dj;
            if si < 0 || sj < 0 || si >= self.nlat as isize || sj >= self.nlon as isize {
                fill.clone()
            } else {
                self.data[si as usize * self.nlon + sj as usize].clone()
            }
        })
    }
}

impl<T> Grid<T> {
    pub fn nlat(&self) -> usize {
        self.nlat
    }

    pub fn nlon(&self) -> usize {
        self.nlon
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nlat, self.nlon)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&T> {
        if i < self.nlat && j < self.nlon {
            Some(&self.data[i * self.nlon + j])
        } else {
            None
        }
    }

    pub fn matches(&self, spec: &GridSpec) -> bool {
        self.nlat == spec.nlat && self.nlon == spec.nlon
    }

    pub fn ensure_shape(&self, spec: &GridSpec, what: &str) -> Result<()> {
        if self.matches(spec) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: grid is {}x{}, spec is {}x{}",
                self.nlat, self.nlon, spec.nlat, spec.nlon
            )))
        }
    }

    pub fn ensure_same_shape<U>(&self, other: &Grid<U>, what: &str) -> Result<()> {
        if self.shape() == other.shape() {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }
}

impl Grid<bool> {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &Grid<bool>) -> Grid<bool> {
        Grid {
            nlat: self.nlat,
            nlon: self.nlon,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        }
    }
}

impl<T> Index<(usize, usize)> for Grid<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.nlon + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Grid<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.nlon + j]
    }
}

/// Area of the cell centred on latitude `lat` for the grid spacing of `spec`.
pub fn cell_area_km2(lat: f64, spec: &GridSpec) -> f64 {
    if lat.abs() >= 90.0 {
        return 0.0;
    }
    let r2 = EARTH_RADIUS_KM * EARTH_RADIUS_KM;
    (r2 * spec.dlat.to_radians() * spec.dlon.to_radians() * lat.to_radians().cos()).max(0.0)
}

/// Tight latitude/longitude box around the `true` cells of `mask`. On a
/// global grid the longitude span is the shortest arc covering the
/// occupied columns, so boxes may cross the antimeridian.
pub fn mask_bounds(mask: &Grid<bool>, spec: &GridSpec) -> Option<Region> {
    let mut rows: Option<(usize, usize)> = None;
    let mut cols = vec![false; spec.nlon];
    for i in 0..spec.nlat {
        for j in 0..spec.nlon {
            if mask[(i, j)] {
                rows = Some(rows.map_or((i, i), |(a, b)| (a.min(i), b.max(i))));
                cols[j] = true;
            }
        }
    }
    let (r0, r1) = rows?;
    let (j0, j1) = covering_arc(&cols, spec.is_global_lon());
    Some(Region {
        lat_min: spec.lat(r0),
        lat_max: spec.lat(r1),
        lon_min: spec.lon(j0),
        lon_max: spec.lon(j1),
    })
}

/// First and last column of the shortest arc covering every occupied
/// column; without wrap this is simply the min and max.
fn covering_arc(cols: &[bool], wrap: bool) -> (usize, usize) {
    let occupied: Vec<usize> = (0..cols.len()).filter(|&j| cols[j]).collect();
    let (first, last) = (occupied[0], occupied[occupied.len() - 1]);
    if !wrap || occupied.len() == 1 {
        return (first, last);
    }
    // widest empty gap, including the one across the seam
    let mut best_gap = cols.len() - 1 - last + first;
    let mut arc = (first, last);
    for w in occupied.windows(2) {
        let gap = w[1] - w[0] - 1;
        if gap > best_gap {
            best_gap = gap;
            arc = (w[1], w[0]);
        }
    }
    arc
}

/// Rectangular latitude/longitude box. `lon_min > lon_max` denotes a box
/// that crosses the antimeridian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Region {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let r = Self {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lat_min < self.lat_max) {
            return Err(Error::InvalidParameter(format!(
                "region lat_min {} must be below lat_max {}",
                self.lat_min, self.lat_max
            )));
        }
        Ok(())
    }

    pub fn contains(&self, p: LatLon) -> bool {
        if p.lat < self.lat_min - EPS || p.lat > self.lat_max + EPS {
            return false;
        }
        let (lo, hi, x) = (wrap_lon(self.lon_min), wrap_lon(self.lon_max), wrap_lon(p.lon));
        if self.lon_max - self.lon_min >= 360.0 - EPS {
            return true;
        }
        if lo <= hi {
            x >= lo - EPS && x <= hi + EPS
        } else {
            x >= lo - EPS || x <= hi + EPS
        }
    }

    /// Gridpoints of `spec` that fall inside the box.
    pub fn mask(&self, spec: &GridSpec) -> Grid<bool> {
        Grid::from_fn(spec.nlat, spec.nlon, |i, j| self.contains(spec.point(i, j)))
    }

    /// Region mask that fails when it selects no gridpoint.
    pub fn nonempty_mask(&self, spec: &GridSpec) -> Result<Grid<bool>> {
        let m = self.mask(spec);
        if m.count() == 0 {
            return Err(Error::Empty(format!("region {self:?} encloses no gridpoint")));
        }
        Ok(m)
    }

    pub fn center(&self) -> LatLon {
        let width = (self.lon_max - self.lon_min).rem_euclid(360.0);
        LatLon::new(
            0.5 * (self.lat_min + self.lat_max),
            wrap_lon(self.lon_min + 0.5 * width),
        )
    }
}

/// Boolean land/ocean raster, `true` = land.
#[derive(Debug, Clone, PartialEq)]
pub struct LandMask {
    pub spec: GridSpec,
    pub mask: Grid<bool>,
}

impl LandMask {
    pub fn new(spec: GridSpec, mask: Grid<bool>) -> Result<Self> {
        mask.ensure_shape(&spec, "land mask")?;
        Ok(Self { spec, mask })
    }

    pub fn all_land(spec: GridSpec) -> Self {
        Self {
            spec,
            mask: Grid::filled(spec.nlat, spec.nlon, true),
        }
    }

    pub fn all_ocean(spec: GridSpec) -> Self {
        Self {
            spec,
            mask: Grid::filled(spec.nlat, spec.nlon, false),
        }
    }

    /// Land at the nearest cell; points off the mask count as ocean.
    pub fn is_land(&self, p: LatLon) -> bool {
        self.spec.nearest(p).map(|(i, j)| self.mask[(i, j)]).unwrap_or(false)
    }

    /// Drop land components with fewer than `min_cells` cells (atolls and
    /// similar minute features).
    pub fn without_small_features(&self, min_cells: usize) -> Self {
        let comps = connected_components(&self.mask, Connectivity::Eight, self.spec.is_global_lon());
        let mask = comps.labels.map(|&l| l > 0 && comps.sizes[l as usize - 1] >= min_cells);
        Self { spec: self.spec, mask }
    }

    /// Read a land mask stored as a single-time container (values ≥ 0.5 are land).
    pub fn from_cube(cube: &FieldCube) -> Result<Self> {
        let field = cube.field(0, 0);
        let mask = field.map(|&v| v >= 0.5);
        Self::new(cube.spec, mask)
    }

    pub fn to_cube(&self) -> FieldCube {
        let epoch = chrono::DateTime::<chrono::Utc>::from_timestamp(0, 0).expect("epoch");
        let values = self.mask.as_slice().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        FieldCube::new("land_mask", "1", self.spec, vec![epoch], vec![], None, values)
            .expect("land mask cube is well formed")
    }

    /// Land mask re-expressed on another grid by nearest-cell lookup.
    pub fn resample(&self, spec: &GridSpec) -> Self {
        if self.spec.same_as(spec) {
            return self.clone();
        }
        let mask = Grid::from_fn(spec.nlat, spec.nlon, |i, j| self.is_land(spec.point(i, j)));
        Self { spec: *spec, mask }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn haversine_reference_values() {
        let o = LatLon::new(0.0, 0.0);
        assert_eq!(haversine_km(o, o), 0.0);
        assert_relative_eq!(
            haversine_km(o, LatLon::new(0.0, 180.0)),
            EARTH_RADIUS_KM * std::f64::consts::PI,
            max_relative = 1e-12
        );
        assert_relative_eq!(haversine_km(o, LatLon::new(1.0, 0.0)), 111.19492664455873, epsilon = 1e-9);
        assert_relative_eq!(
            haversine_km(LatLon::new(60.0, 0.0), LatLon::new(60.0, 1.0)),
            55.597,
            epsilon = 0.01
        );
    }

    #[test]
    fn cell_area_values() {
        let one = GridSpec::new(-89.5, -180.0, 1.0, 1.0, 180, 360).unwrap();
        assert_eq!(cell_area_km2(90.0, &one), 0.0);
        let expected = EARTH_RADIUS_KM.powi(2) * (std::f64::consts::PI / 180.0).powi(2);
        assert_relative_eq!(cell_area_km2(0.0, &one), expected, max_relative = 1e-12);
        assert!((cell_area_km2(0.0, &one) - 12364.31).abs() < 0.01);

        let total: f64 = (0..one.nlat).map(|i| cell_area_km2(one.lat(i), &one) * one.nlon as f64).sum();
        let sphere = 4.0 * std::f64::consts::PI * EARTH_RADIUS_KM.powi(2);
        assert!((total - sphere).abs() / sphere < 0.005, "{total} vs {sphere}");
        assert!((sphere - 5.1007e8).abs() / 5.1007e8 < 1e-3);
    }

    #[test]
    fn gridspec_validation() {
        assert!(GridSpec::new(0.0, 0.0, 0.0, 1.0, 2, 2).is_err());
        assert!(GridSpec::new(-90.0, 0.0, 0.25, 0.25, 721, 1440).is_ok());
        assert!(GridSpec::new(-90.0, 0.0, 0.25, 0.25, 722, 1440).is_err());
        let g = GridSpec::new(0.0, 200.0, 1.0, 1.0, 2, 2).unwrap();
        assert_eq!(g.lon0, -160.0);
    }

    #[test]
    fn nearest_handles_wrap() {
        let g = GridSpec::new(-90.0, 0.0, 1.0, 1.0, 181, 360).unwrap();
        assert!(g.is_global_lon());
        assert_eq!(g.nearest(LatLon::new(10.2, -0.3)), Some((100, 0)));
        assert_eq!(g.nearest(LatLon::new(10.2, -0.6)), Some((100, 359)));
        let r = GridSpec::new(0.0, 10.0, 1.0, 1.0, 5, 5).unwrap();
        assert_eq!(r.nearest(LatLon::new(0.0, 9.7)), Some((0, 0)));
        assert_eq!(r.nearest(LatLon::new(0.0, 9.2)), None);
        assert_eq!(r.nearest(LatLon::new(0.0, 14.4)), Some((0, 4)));
        assert_eq!(r.nearest(LatLon::new(4.6, 12.0)), None);
    }

    #[test]
    fn region_contains_across_antimeridian() {
        let r = Region::new(-5.0, 5.0, 170.0, -170.0).unwrap();
        assert!(r.contains(LatLon::new(0.0, 179.0)));
        assert!(r.contains(LatLon::new(0.0, -175.0)));
        assert!(!r.contains(LatLon::new(0.0, 0.0)));
        assert!(Region::new(5.0, 5.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn small_land_features_dropped() {
        let spec = GridSpec::new(0.0, 0.0, 0.1, 0.1, 10, 10).unwrap();
        let mut mask = Grid::filled(10, 10, false);
        mask[(1, 1)] = true; // atoll
        for i in 5..7 {
            for j in 5..7 {
                mask[(i, j)] = true;
            }
        }
        let lm = LandMask::new(spec, mask).unwrap().without_small_features(4);
        assert!(!lm.mask[(1, 1)]);
        assert_eq!(lm.mask.count(), 4);
    }

    #[test]
    fn destination_round_trip() {
        let start = LatLon::new(20.0, -60.0);
        for brg in [0.0, 45.0, 90.0, 200.0] {
            let p = destination(start, brg, 3.0);
            assert_relative_eq!(great_circle_deg(start, p), 3.0, epsilon = 1e-9);
        }
    }

    proptest! {
        #[test]
        fn haversine_triangle_inequality(
            a in (-90.0f64..90.0, -180.0f64..180.0),
            b in (-90.0f64..90.0, -180.0f64..180.0),
            c in (-90.0f64..90.0, -180.0f64..180.0),
        ) {
            let (a, b, c) = (LatLon::new(a.0, a.1), LatLon::new(b.0, b.1), LatLon::new(c.0, c.1));
            let ab = haversine_km(a, b);
            let bc = haversine_km(b, c);
            let ac = haversine_km(a, c);
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-9) + 1e-9);
            prop_assert!((haversine_km(b, a) - ab).abs() < 1e-9);
            prop_assert!(ab >= 0.0);
        }

        #[test]
        fn wrap_lon_is_canonical(x in -1000.0f64..1000.0) {
            let w = wrap_lon(x);
            prop_assert!((-180.0..180.0).contains(&w));
            prop_assert!(((w - x).rem_euclid(360.0)).min(360.0 - (w - x).rem_euclid(360.0)) < 1e-9);
        }
    }

    #[test]
    fn covering_arc_across_seam() {
        assert_eq!(covering_arc(&[true, false, false, false, true, true], true), (4, 0));
        assert_eq!(covering_arc(&[true, false, false, false, true, true], false), (0, 5));
        assert_eq!(covering_arc(&[false, true, true, false], true), (1, 2));
        let spec = GridSpec::new(-1.0, -180.0, 1.0, 90.0, 3, 4).unwrap();
        let m = Grid::from_fn(3, 4, |i, j| i == 1 && (j == 0 || j == 3));
        let r = mask_bounds(&m, &spec).unwrap();
        assert_eq!((r.lon_min, r.lon_max), (90.0, -180.0));
        assert!(mask_bounds(&Grid::filled(3, 4, false), &spec).is_none());
    }
}
