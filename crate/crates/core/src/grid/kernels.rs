use rayon::prelude::*;

use super::{cell_area_km2, Grid, GridSpec, LatLon, EARTH_RADIUS_KM};
use crate::error::{Error, Result};

/// Neighbourhood used when labelling connected regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::InvalidParameter(format!("connectivity must be 4 or 8, got {other}"))),
        }
    }
}

/// Result of labelling a boolean mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// 0 for background, otherwise the 1-based component label.
    pub labels: Grid<u32>,
    /// `sizes[k]` is the number of cells carrying label `k + 1`.
    pub sizes: Vec<usize>,
}

impl Components {
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Flat indices of every member of component `label` (1-based), in
    /// raster order.
    pub fn members(&self, label: u32) -> Vec<usize> {
        self.labels
            .as_slice()
            .iter()
            .enumerate()
            .filter_map(|(k, &l)| (l == label).then_some(k))
            .collect()
    }

    /// Members of every component at once, indexed by `label - 1`.
    pub fn all_members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&n| Vec::with_capacity(n)).collect();
        for (k, &l) in self.labels.as_slice().iter().enumerate() {
            if l > 0 {
                out[l as usize - 1].push(k);
            }
        }
        out
    }
}

/// Label the connected regions of `mask`. Labels are assigned in raster
/// order of each region's first cell. With `wrap_lon` the first and last
/// columns are adjacent.
pub fn connected_components(mask: &Grid<bool>, connectivity: Connectivity, wrap_lon: bool) -> Components {
    let (nlat, nlon) = mask.shape();
    let cells = mask.as_slice();
    let mut labels = vec![0u32; cells.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();

    let offsets: &[(isize, isize)] = match connectivity {
        Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
        Connectivity::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    };

    for start in 0..cells.len() {
        if !cells[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        stack.push(start);
        let mut size = 0usize;
        while let Some(k) = stack.pop() {
            size += 1;
            let (i, j) = ((k / nlon) as isize, (k % nlon) as isize);
            for &(di, dj) in offsets {
                let ni = i + di;
                if ni < 0 || ni >= nlat as isize {
                    continue;
                }
                let mut nj = j + dj;
                if nj < 0 || nj >= nlon as isize {
                    if !wrap_lon {
                        continue;
                    }
                    nj = nj.rem_euclid(nlon as isize);
                }
                let nk = ni as usize * nlon + nj as usize;
                if cells[nk] && labels[nk] == 0 {
                    labels[nk] = label;
                    stack.push(nk);
                }
            }
        }
        sizes.push(size);
    }

    Components {
        labels: Grid::from_vec(nlat, nlon, labels).expect("label grid matches mask"),
        sizes,
    }
}

/// Grid spacing convention for [`laplacian`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spacing {
    /// Unit spacing: the result is per gridpoint².
    Index,
    /// Constant metric spacing along latitude (`dy`) and longitude (`dx`).
    Uniform { dy: f64, dx: f64 },
    /// Spherical spacing in metres; the zonal spacing shrinks with cos(lat).
    Spherical(GridSpec),
}

/// Five-point Laplacian with replicate-edge boundaries. With `wrap_lon`
/// the longitude axis is periodic instead.
pub fn laplacian(field: &Grid<f64>, spacing: Spacing, wrap_lon: bool) -> Result<Grid<f64>> {
    let (nlat, nlon) = field.shape();
    if nlat < 3 || nlon < 3 {
        return Err(Error::GridTooSmall(format!("laplacian needs at least 3x3, got {nlat}x{nlon}")));
    }
    let row_spacing: Vec<(f64, f64)> = match spacing {
        Spacing::Index => vec![(1.0, 1.0); nlat],
        Spacing::Uniform { dy, dx } => vec![(dy, dx); nlat],
        Spacing::Spherical(spec) => {
            spec.ensure_same_grid_shape(field)?;
            let metres_per_deg = EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;
            // keep the polar rows finite: never narrower than half a cell from the pole
            let min_cos = (90.0 - 0.5 * spec.dlat).to_radians().cos();
            (0..nlat)
                .map(|i| {
                    let c = spec.lat(i).to_radians().cos().max(min_cos);
                    (spec.dlat * metres_per_deg, spec.dlon * metres_per_deg * c)
                })
                .collect()
        }
    };

    let f = field.as_slice();
    let mut out = vec![0.0; f.len()];
    out.par_chunks_mut(nlon).enumerate().for_each(|(i, row)| {
        let up = if i + 1 < nlat { i + 1 } else { i };
        let dn = if i > 0 { i - 1 } else { i };
        let (dy, dx) = row_spacing[i];
        let (dy2, dx2) = (dy * dy, dx * dx);
        for (j, cell) in row.iter_mut().enumerate() {
            let (w, e) = neighbours_lon(j, nlon, wrap_lon);
            let c = f[i * nlon + j];
            let d2y = f[up * nlon + j] - 2.0 * c + f[dn * nlon + j];
            let d2x = f[i * nlon + e] - 2.0 * c + f[i * nlon + w];
            *cell = d2y / dy2 + d2x / dx2;
        }
    });
    Grid::from_vec(nlat, nlon, out)
}

fn neighbours_lon(j: usize, nlon: usize, wrap: bool) -> (usize, usize) {
    let w = if j > 0 {
        j - 1
    } else if wrap {
        nlon - 1
    } else {
        0
    };
    let e = if j + 1 < nlon {
        j + 1
    } else if wrap {
        0
    } else {
        j
    };
    (w, e)
}

impl GridSpec {
    fn ensure_same_grid_shape<T>(&self, g: &Grid<T>) -> Result<()> {
        g.ensure_shape(self, "laplacian")
    }
}

/// Binary dilation by a square window of half-width `radius` gridpoints:
/// a cell is set when any cell within Chebyshev distance `radius` is set.
pub fn dilate_square(mask: &Grid<bool>, radius: usize, wrap_lon: bool) -> Grid<bool> {
    let (nlat, nlon) = mask.shape();
    if radius == 0 {
        return mask.clone();
    }
    let src = mask.as_slice();
    // pass 1: along longitude
    let mut rows = vec![false; src.len()];
    rows.par_chunks_mut(nlon).enumerate().for_each(|(i, out)| {
        let row = &src[i * nlon..(i + 1) * nlon];
        window_any(row, out, radius, wrap_lon);
    });
    // pass 2: along latitude, column by column through a transposed buffer
    let mut cols = vec![false; src.len()];
    for i in 0..nlat {
        for j in 0..nlon {
            cols[j * nlat + i] = rows[i * nlon + j];
        }
    }
    let mut cols_out = vec![false; src.len()];
    cols_out.par_chunks_mut(nlat).enumerate().for_each(|(j, out)| {
        window_any(&cols[j * nlat..(j + 1) * nlat], out, radius, false);
    });
    let mut data = vec![false; src.len()];
    for j in 0..nlon {
        for i in 0..nlat {
            data[i * nlon + j] = cols_out[j * nlat + i];
        }
    }
    Grid::from_vec(nlat, nlon, data).expect("dilated grid shape")
}

/// `out[k] = any(line[k - r ..= k + r])` via prefix counts.
fn window_any(line: &[bool], out: &mut [bool], r: usize, wrap: bool) {
    let n = line.len();
    if wrap && 2 * r + 1 >= n {
        let any = line.iter().any(|&b| b);
        out.iter_mut().for_each(|o| *o = any);
        return;
    }
    let mut prefix = vec![0u32; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + line[k] as u32;
    }
    let count = |lo: usize, hi: usize| prefix[hi] - prefix[lo]; // [lo, hi)
    for (k, o) in out.iter_mut().enumerate() {
        let lo = k as isize - r as isize;
        let hi = k + r + 1;
        let mut c = count(lo.max(0) as usize, hi.min(n));
        if wrap {
            if lo < 0 {
                c += count((n as isize + lo) as usize, n);
            }
            if hi > n {
                c += count(0, hi - n);
            }
        }
        *o = c > 0;
    }
}

/// Area-weighted centre of mass of non-negative `weights`. Latitude is an
/// arithmetic mean; longitude is a circular mean so regions straddling the
/// antimeridian resolve correctly.
pub fn center_of_mass(weights: &Grid<f64>, spec: &GridSpec) -> Result<LatLon> {
    weights.ensure_shape(spec, "center of mass")?;
    let mut acc = ComAccumulator::default();
    for i in 0..spec.nlat {
        let area = cell_area_km2(spec.lat(i), spec);
        for j in 0..spec.nlon {
            let w = weights[(i, j)];
            if w > 0.0 {
                acc.add(spec.point(i, j), w, area);
            }
        }
    }
    acc.finish()
}

pub fn center_of_mass_mask(mask: &Grid<bool>, spec: &GridSpec) -> Result<LatLon> {
    center_of_mass(&mask.map(|&b| if b { 1.0 } else { 0.0 }), spec)
}

/// Centre of mass of a set of flat gridpoint indices with unit weights.
pub(crate) fn center_of_mass_indices(indices: &[usize], spec: &GridSpec) -> Result<LatLon> {
    let mut acc = ComAccumulator::default();
    for &k in indices {
        let (i, j) = spec.unflat(k);
        acc.add(spec.point(i, j), 1.0, cell_area_km2(spec.lat(i), spec));
    }
    acc.finish()
}

#[derive(Default)]
struct ComAccumulator {
    w: f64,
    lat: f64,
    sin: f64,
    cos: f64,
    // fallback when every cell sits on a pole row (zero area)
    n: f64,
    lat_plain: f64,
    sin_plain: f64,
    cos_plain: f64,
}

impl ComAccumulator {
    fn add(&mut self, p: LatLon, weight: f64, area: f64) {
        let w = weight * area;
        let (s, c) = p.lon.to_radians().sin_cos();
        self.w += w;
        self.lat += w * p.lat;
        self.sin += w * s;
        self.cos += w * c;
        self.n += weight;
        self.lat_plain += weight * p.lat;
        self.sin_plain += weight * s;
        self.cos_plain += weight * c;
    }

    fn finish(self) -> Result<LatLon> {
        if self.n <= 0.0 {
            return Err(Error::Empty("center of mass of an empty mask".into()));
        }
        let (w, lat, s, c) = if self.w > 0.0 {
            (self.w, self.lat, self.sin, self.cos)
        } else {
            (self.n, self.lat_plain, self.sin_plain, self.cos_plain)
        };
        Ok(LatLon::new(lat / w, super::wrap_lon(s.atan2(c).to_degrees())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::lon_delta;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flood_fill_oracle(mask: &Grid<bool>, eight: bool) -> Vec<Vec<usize>> {
        // recursive reference; returns member sets sorted
        fn visit(mask: &Grid<bool>, seen: &mut Vec<bool>, i: isize, j: isize, eight: bool, out: &mut Vec<usize>) {
            let (n, m) = (mask.nlat() as isize, mask.nlon() as isize);
            if i < 0 || j < 0 || i >= n || j >= m {
                return;
            }
            let k = (i * m + j) as usize;
            if seen[k] || !mask.as_slice()[k] {
                return;
            }
            seen[k] = true;
            out.push(k);
            for di in -1..=1 {
                for dj in -1..=1 {
                    if (di == 0 && dj == 0) || (!eight && di != 0 && dj != 0) {
                        continue;
                    }
                    visit(mask, seen, i + di, j + dj, eight, out);
                }
            }
        }
        let mut seen = vec![false; mask.len()];
        let mut sets = Vec::new();
        for k in 0..mask.len() {
            if mask.as_slice()[k] && !seen[k] {
                let mut out = Vec::new();
                visit(mask, &mut seen, (k / mask.nlon()) as isize, (k % mask.nlon()) as isize, eight, &mut out);
                out.sort_unstable();
                sets.push(out);
            }
        }
        sets
    }

    #[test]
    fn components_trivial_cases() {
        let empty = Grid::filled(4, 4, false);
        assert_eq!(connected_components(&empty, Connectivity::Four, false).count(), 0);

        let mut diag = Grid::filled(3, 3, false);
        diag[(0, 0)] = true;
        diag[(1, 1)] = true;
        assert_eq!(connected_components(&diag, Connectivity::Four, false).count(), 2);
        assert_eq!(connected_components(&diag, Connectivity::Eight, false).count(), 1);
    }

    #[test]
    fn components_wrap_longitude() {
        let mut m = Grid::filled(3, 6, false);
        m[(1, 0)] = true;
        m[(1, 5)] = true;
        assert_eq!(connected_components(&m, Connectivity::Four, false).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Four, true).count(), 1);
    }

    #[test]
    fn components_match_flood_fill_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let density = 0.3 + 0.02 * trial as f64;
            let mask = Grid::from_fn(32, 32, |_, _| rng.gen_bool(density));
            for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
                let comps = connected_components(&mask, conn, false);
                let mut ours: Vec<Vec<usize>> = comps.all_members();
                ours.iter_mut().for_each(|v| v.sort_unstable());
                let mut oracle = flood_fill_oracle(&mask, eight);
                ours.sort();
                oracle.sort();
                assert_eq!(ours, oracle);
                // labels contiguous
                let max = *comps.labels.as_slice().iter().max().unwrap_or(&0) as usize;
                assert_eq!(max, comps.count());
            }
        }
    }

    #[test]
    fn laplacian_constant_and_quadratic() {
        let c = Grid::filled(5, 6, 3.5);
        let l = laplacian(&c, Spacing::Index, false).unwrap();
        assert!(l.as_slice().iter().all(|&v| v == 0.0));

        let h = 0.5;
        let q = Grid::from_fn(9, 9, |i, j| {
            let (y, x) = (i as f64 * h, j as f64 * h);
            x * x + y * y
        });
        let l = laplacian(&q, Spacing::Uniform { dy: h, dx: h }, false).unwrap();
        for i in 1..8 {
            for j in 1..8 {
                assert!((l[(i, j)] - 4.0).abs() < 1e-6 * 4.0, "{}", l[(i, j)]);
            }
        }
    }

    #[test]
    fn laplacian_impulse_response() {
        let h = 2.0;
        let mut f = Grid::filled(5, 5, 0.0);
        f[(2, 2)] = 1.0;
        let l = laplacian(&f, Spacing::Uniform { dy: h, dx: h }, false).unwrap();
        assert_eq!(l[(2, 2)], -4.0 / (h * h));
        for (i, j) in [(1, 2), (3, 2), (2, 1), (2, 3)] {
            assert_eq!(l[(i, j)], 1.0 / (h * h));
        }
        assert_eq!(l[(1, 1)], 0.0);
    }

    #[test]
    fn laplacian_too_small() {
        assert!(matches!(
            laplacian(&Grid::filled(2, 5, 0.0), Spacing::Index, false),
            Err(Error::GridTooSmall(_))
        ));
    }

    #[test]
    fn laplacian_spherical_units() {
        let spec = GridSpec::new(39.0, -130.0, 0.25, 0.25, 9, 9).unwrap();
        let f = Grid::from_fn(9, 9, |i, _| (i as f64).powi(2));
        let l = laplacian(&f, Spacing::Spherical(spec), false).unwrap();
        let dy = 0.25 * EARTH_RADIUS_KM * 1000.0 * std::f64::consts::PI / 180.0;
        assert!((l[(4, 4)] - 2.0 / (dy * dy)).abs() < 1e-15);
    }

    #[test]
    fn dilation_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for wrap in [false, true] {
            let mask = Grid::from_fn(20, 25, |_, _| rng.gen_bool(0.03));
            let r = 3;
            let fast = dilate_square(&mask, r, wrap);
            for i in 0..20isize {
                for j in 0..25isize {
                    let mut any = false;
                    for di in -(r as isize)..=r as isize {
                        for dj in -(r as isize)..=r as isize {
                            let (ni, mut nj) = (i + di, j + dj);
                            if ni < 0 || ni >= 20 {
                                continue;
                            }
                            if nj < 0 || nj >= 25 {
                                if !wrap {
                                    continue;
                                }
                                nj = nj.rem_euclid(25);
                            }
                            any |= mask[(ni as usize, nj as usize)];
                        }
                    }
                    assert_eq!(fast[(i as usize, j as usize)], any, "wrap={wrap} at {i},{j}");
                }
            }
        }
    }

    #[test]
    fn center_of_mass_cases() {
        let spec = GridSpec::new(-90.0, -180.0, 0.25, 0.25, 721, 1440).unwrap();
        let mut m = Grid::filled(spec.nlat, spec.nlon, false);
        let (i, j) = spec.nearest(LatLon::new(10.0, 20.0)).unwrap();
        m[(i, j)] = true;
        let c = center_of_mass_mask(&m, &spec).unwrap();
        assert!((c.lat - 10.0).abs() < 1e-9 && (c.lon - 20.0).abs() < 1e-9);

        let spec8 = GridSpec::new(-1.0, 179.875, 0.25, 0.25, 9, 2).unwrap();
        let mut m2 = Grid::filled(9, 2, false);
        m2[(4, 0)] = true;
        m2[(4, 1)] = true;
        let c = center_of_mass_mask(&m2, &spec8).unwrap();
        assert!(c.lat.abs() < 1e-12);
        assert!(lon_delta(c.lon, 180.0).abs() < 1e-9, "{c:?}");

        let mut block = Grid::filled(9, 9, false);
        for i in 3..6 {
            for j in 2..5 {
                block[(i, j)] = true;
            }
        }
        let eq = GridSpec::new(-1.0, 30.0, 0.25, 0.25, 9, 9).unwrap();
        let c = center_of_mass_mask(&block, &eq).unwrap();
        assert!((c.lat - eq.lat(4)).abs() < 1e-12);
        assert!((c.lon - eq.lon(3)).abs() < 1e-9);

        assert!(center_of_mass_mask(&Grid::filled(3, 3, false), &GridSpec::new(0.0, 0.0, 1.0, 1.0, 3, 3).unwrap()).is_err());
    }

    proptest! {
        #[test]
        fn component_sizes_sum_to_true_count(bits in proptest::collection::vec(any::<bool>(), 12 * 15)) {
            let mask = Grid::from_vec(12, 15, bits).unwrap();
            for conn in [Connectivity::Four, Connectivity::Eight] {
                let comps = connected_components(&mask, conn, false);
                prop_assert_eq!(comps.sizes.iter().sum::<usize>(), mask.count());
            }
        }

        #[test]
        fn laplacian_of_linear_field_vanishes(a in -100.0f64..100.0, b in -100.0f64..100.0, c in -1e3f64..1e3) {
            let f = Grid::from_fn(8, 10, |i, j| a * i as f64 + b * j as f64 + c);
            let l = laplacian(&f, Spacing::Index, false).unwrap();
            let scale = a.abs().max(b.abs()).max(c.abs()).max(1.0);
            for i in 1..7 {
                for j in 1..9 {
                    prop_assert!(l[(i, j)].abs() <= 1e-9 * scale * 10.0);
                }
            }
        }
    }
}
