//! Raster math for per-agent bird's-eye-view maps.
//!
//! All maps are stored row-major (`[y][x]`) per forecast step. Step indices exposed by the
//! public API are 1-based (`1..=horizon`), matching the forecast sequence.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose2;

/// Class channel order in every forecast.
pub const NUM_CLASSES: usize = 3;
pub const CLASS_NULL: usize = 0;
pub const CLASS_EGO: usize = 1;
pub const CLASS_ALLO: usize = 2;

/// Tolerance on the per-cell class simplex.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "raster {}x{} needs {} cells, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Discretization of a local map: `origin` is the pose of the corner of cell (0, 0) in the
/// owning agent's frame, with grid axes along the origin's axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Pose2,
}

impl GridSpec {
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "grid must be at least 1x1, got {width}x{height}"
            )));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Config(format!(
                "grid resolution must be positive, got {resolution}"
            )));
        }
        Ok(Self {
            width,
            height,
            resolution,
            origin,
        })
    }

    /// Grid centered on the owner's origin and aligned with its axes.
    pub fn centered(width: usize, height: usize, resolution: f64) -> Result<Self> {
        let origin = Pose2::new(
            -0.5 * width as f64 * resolution,
            -0.5 * height as f64 * resolution,
            0.0,
        );
        Self::new(width, height, resolution, origin)
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    /// Fractional cell coordinates of a local-frame point. Cell `(i, j)` spans `[i, i+1) x
    /// [j, j+1)`, so its center sits at `(i + 0.5, j + 0.5)`.
    pub fn world_to_grid(&self, p: [f64; 2]) -> [f64; 2] {
        let q = self.origin.inverse_transform_point(p);
        [q[0] / self.resolution, q[1] / self.resolution]
    }

    pub fn grid_to_world(&self, c: [f64; 2]) -> [f64; 2] {
        self.origin
            .transform_point([c[0] * self.resolution, c[1] * self.resolution])
    }

    pub fn cell_center(&self, x: usize, y: usize) -> [f64; 2] {
        self.grid_to_world([x as f64 + 0.5, y as f64 + 0.5])
    }

    /// Cell containing a local point, if any.
    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let c = self.world_to_grid(p);
        if c[0] < 0.0 || c[1] < 0.0 {
            return None;
        }
        let (x, y) = (c[0].floor() as usize, c[1].floor() as usize);
        (x < self.width && y < self.height).then_some((x, y))
    }

    fn check_raster<T>(&self, r: &Raster<T>) -> Result<()> {
        if r.width() != self.width || r.height() != self.height {
            return Err(Error::Shape(format!(
                "raster {}x{} does not match grid {}x{}",
                r.width(),
                r.height(),
                self.width,
                self.height
            )));
        }
        Ok(())
    }
}

/// A bilinear lookup. `valid` is false when the point falls outside the hull of cell centers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub value: f64,
    pub valid: bool,
}

impl Sample {
    const INVALID: Sample = Sample {
        value: 0.0,
        valid: false,
    };
}

/// Interpolation stencil: four cells and weights, or `None` outside the interpolable region.
fn stencil(spec: &GridSpec, point: [f64; 2]) -> Option<[(usize, usize, f64); 4]> {
    const EDGE_TOL: f64 = 1e-9;
    let c = spec.world_to_grid(point);
    let cx = c[0] - 0.5;
    let cy = c[1] - 0.5;
    let max_x = (spec.width - 1) as f64;
    let max_y = (spec.height - 1) as f64;
    if !(cx >= -EDGE_TOL && cy >= -EDGE_TOL && cx <= max_x + EDGE_TOL && cy <= max_y + EDGE_TOL) {
        return None;
    }
    let cx = cx.clamp(0.0, max_x);
    let cy = cy.clamp(0.0, max_y);
    let x0 = (cx.floor() as usize).min(spec.width.saturating_sub(2));
    let y0 = (cy.floor() as usize).min(spec.height.saturating_sub(2));
    let x1 = (x0 + 1).min(spec.width - 1);
    let y1 = (y0 + 1).min(spec.height - 1);
    let fx = cx - x0 as f64;
    let fy = cy - y0 as f64;
    Some([
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ])
}

/// Bilinear sample of a scalar raster through a per-cell transform.
fn sample_with(
    spec: &GridSpec,
    raster: &Raster<f64>,
    point: [f64; 2],
    cell_value: impl Fn(f64) -> f64,
) -> Sample {
    match stencil(spec, point) {
        Some(st) => {
            let mut value = 0.0;
            for (x, y, w) in st {
                if w != 0.0 {
                    value += w * cell_value(*raster.get(x, y));
                }
            }
            Sample { value, valid: true }
        }
        None => Sample::INVALID,
    }
}

/// Bilinear sample of a plain scalar raster laid out on `spec`.
pub fn sample_raster(spec: &GridSpec, raster: &Raster<f64>, point: [f64; 2]) -> Sample {
    sample_with(spec, raster, point, |v| v)
}

/// Per-step probability rasters over the classes `{null, ego, allo}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyForecast {
    spec: GridSpec,
    probs: Vec<Raster<[f64; NUM_CLASSES]>>,
}

impl OccupancyForecast {
    /// Validates shapes and the per-cell simplex constraint.
    pub fn new(spec: GridSpec, probs: Vec<Raster<[f64; NUM_CLASSES]>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Horizon("forecast horizon must be at least 1".into()));
        }
        for (t, plane) in probs.iter().enumerate() {
            spec.check_raster(plane)?;
            for (i, p) in plane.data().iter().enumerate() {
                let sum: f64 = p.iter().sum();
                if (sum - 1.0).abs() > SIMPLEX_TOL || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Shape(format!(
                        "step {} cell {} is not a probability vector: {:?}",
                        t + 1,
                        i,
                        p
                    )));
                }
            }
        }
        Ok(Self { spec, probs })
    }

    /// Every cell `p_null = 1` for `horizon` steps.
    pub fn all_null(spec: GridSpec, horizon: usize) -> Result<Self> {
        let mut one_hot = [0.0; NUM_CLASSES];
        one_hot[CLASS_NULL] = 1.0;
        let plane = Raster::filled(spec.width, spec.height, one_hot);
        Self::new(spec, vec![plane; horizon])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.probs.len()
    }

    /// Probabilities at 1-based step `t`.
    pub fn step(&self, t: usize) -> Result<&Raster<[f64; NUM_CLASSES]>> {
        check_step(t, self.horizon())?;
        Ok(&self.probs[t - 1])
    }

    pub fn steps(&self) -> impl Iterator<Item = &Raster<[f64; NUM_CLASSES]>> {
        self.probs.iter()
    }

    /// Per-cell most likely class at step `t`; ties go to the lower class index.
    pub fn argmax(&self, t: usize) -> Result<Raster<u8>> {
        Ok(self.step(t)?.map(|p| argmax_class(p) as u8))
    }
}

pub fn argmax_class(p: &[f64; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if p[c] > p[best] {
            best = c;
        }
    }
    best
}

fn check_step(t: usize, horizon: usize) -> Result<()> {
    if t == 0 || t > horizon {
        return Err(Error::Horizon(format!(
            "timestep {t} outside 1..={horizon}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinaryOccupancy {
    pub spec: GridSpec,
    pub occ: Vec<Raster<bool>>,
}

/// Marks a cell occupied when `max(p_ego, p_allo)` strictly exceeds `theta`.
pub fn binarize(forecast: &OccupancyForecast, theta: f64) -> BinaryOccupancy {
    binarize_with(forecast, theta, true)
}

/// Like [`binarize`], optionally leaving out the agent's own class. An agent planning for
/// itself must not treat its own footprint as an obstacle.
pub fn binarize_with(
    forecast: &OccupancyForecast,
    theta: f64,
    include_ego: bool,
) -> BinaryOccupancy {
    let occ = forecast
        .steps()
        .map(|plane| {
            plane.map(|p| {
                let ego = if include_ego { p[CLASS_EGO] } else { 0.0 };
                ego.max(p[CLASS_ALLO]) > theta
            })
        })
        .collect();
    BinaryOccupancy {
        spec: forecast.spec,
        occ,
    }
}

/// Signed distance field per step, with the cost transform `max(0, d_sat - D)` applied on
/// read.
#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    spec: GridSpec,
    d_sat: f64,
    sdf: Vec<Raster<f64>>,
}

impl Costmap {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.sdf.len()
    }

    pub fn d_sat(&self) -> f64 {
        self.d_sat
    }

    /// Signed distance raster (meters) at 1-based step `t`.
    pub fn sdf(&self, t: usize) -> Result<&Raster<f64>> {
        check_step(t, self.horizon())?;
        Ok(&self.sdf[t - 1])
    }

    pub fn cost_of_distance(&self, d: f64) -> f64 {
        (self.d_sat - d).max(0.0)
    }

    /// Cost raster at step `t`.
    pub fn cost(&self, t: usize) -> Result<Raster<f64>> {
        Ok(self.sdf(t)?.map(|&d| self.cost_of_distance(d)))
    }

    /// Bilinear cost sample at a local-frame point. Each corner cell's cost is interpolated,
    /// not the distance.
    pub fn sample(&self, t: usize, point: [f64; 2]) -> Result<Sample> {
        let plane = self.sdf(t)?;
        Ok(sample_with(&self.spec, plane, point, |d| {
            self.cost_of_distance(d)
        }))
    }

    pub fn sample_sdf(&self, t: usize, point: [f64; 2]) -> Result<Sample> {
        Ok(sample_raster(&self.spec, self.sdf(t)?, point))
    }
}

/// Distance reported for every cell of a plane with no occupied (or no free) cell.
pub fn saturation_distance(spec: &GridSpec) -> f64 {
    (spec.width + spec.height) as f64 * spec.resolution
}

/// Exact signed Euclidean distance between cell centers: positive distance to the nearest
/// occupied cell for free cells, negative distance to the nearest free cell for occupied
/// cells. Planes that are entirely free or entirely occupied saturate at
/// `±saturation_distance`.
pub fn signed_distance(occ: &BinaryOccupancy, d_sat: f64) -> Result<Costmap> {
    if !(d_sat > 0.0) {
        return Err(Error::Config(format!(
            "d_sat must be positive, got {d_sat}"
        )));
    }
    if occ.occ.is_empty() {
        return Err(Error::Horizon("occupancy has no timesteps".into()));
    }
    let spec = occ.spec;
    let d_inf = saturation_distance(&spec);
    let mut edt = Edt::new(spec.width, spec.height);
    let mut sdf = Vec::with_capacity(occ.occ.len());
    for plane in &occ.occ {
        spec.check_raster(plane)?;
        let n_occ = plane.data().iter().filter(|&&o| o).count();
        let out = if n_occ == 0 {
            Raster::filled(spec.width, spec.height, d_inf)
        } else if n_occ == spec.num_cells() {
            Raster::filled(spec.width, spec.height, -d_inf)
        } else {
            let to_occ = edt.squared(plane.data(), true).to_vec();
            let to_free = edt.squared(plane.data(), false);
            let data = plane
                .data()
                .iter()
                .zip(to_occ.iter().zip(to_free.iter()))
                .map(|(&o, (&a, &b))| {
                    if o {
                        -b.sqrt() * spec.resolution
                    } else {
                        a.sqrt() * spec.resolution
                    }
                })
                .collect();
            Raster::from_vec(spec.width, spec.height, data)?
        };
        sdf.push(out);
    }
    Ok(Costmap { spec, d_sat, sdf })
}

/// Separable exact squared EDT: a linear scan along rows, then the lower envelope of
/// parabolas along columns.
struct Edt {
    width: usize,
    height: usize,
    /// Row-pass output, transposed so columns are contiguous.
    cols: Vec<f64>,
    out: Vec<f64>,
    d: Vec<f64>,
    v: Vec<usize>,
    z: Vec<f64>,
}

const EDT_INF: f64 = 1e20;

impl Edt {
    fn new(width: usize, height: usize) -> Self {
        let n = width.max(height);
        Self {
            width,
            height,
            cols: vec![0.0; width * height],
            out: vec![0.0; width * height],
            d: vec![0.0; n],
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// Squared distance (in cells) from every cell to the nearest cell whose mask equals
    /// `target`.
    #[allow(clippy::needless_range_loop)]
    fn squared(&mut self, mask: &[bool], target: bool) -> &[f64] {
        let (w, h) = (self.width, self.height);
        for y in 0..h {
            let row = &mask[y * w..(y + 1) * w];
            let mut last: Option<usize> = None;
            for x in 0..w {
                if row[x] == target {
                    last = Some(x);
                }
                self.d[x] = last.map_or(f64::INFINITY, |l| (x - l) as f64);
            }
            let mut next: Option<usize> = None;
            for x in (0..w).rev() {
                if row[x] == target {
                    next = Some(x);
                }
                if let Some(n) = next {
                    self.d[x] = self.d[x].min((n - x) as f64);
                }
                let g = self.d[x];
                self.cols[x * h + y] = if g.is_finite() { g * g } else { EDT_INF };
            }
        }
        for x in 0..w {
            let col = &self.cols[x * h..(x + 1) * h];
            envelope(col, &mut self.d, &mut self.v, &mut self.z);
            for y in 0..h {
                self.out[y * w + x] = self.d[y];
            }
        }
        &self.out
    }
}

/// 1D squared distance transform of sampled function `f` into `d`. Entries at `EDT_INF`
/// contribute no parabola.
#[allow(clippy::needless_range_loop)]
fn envelope(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    let mut any = false;
    for q in 0..n {
        if f[q] >= EDT_INF {
            continue;
        }
        if !any {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            any = true;
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    if !any {
        d[..n].fill(EDT_INF);
        return;
    }
    k = 0;
    for q in 0..n {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        d[q] = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Per-cell Shannon entropy of the class distribution, in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    spec: GridSpec,
    u: Vec<Raster<f64>>,
}

impl EntropyMap {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.u.len()
    }

    pub fn step(&self, t: usize) -> Result<&Raster<f64>> {
        check_step(t, self.horizon())?;
        Ok(&self.u[t - 1])
    }

    pub fn sample(&self, t: usize, point: [f64; 2]) -> Result<Sample> {
        Ok(sample_raster(&self.spec, self.step(t)?, point))
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

pub fn entropy(forecast: &OccupancyForecast) -> EntropyMap {
    let u = forecast
        .steps()
        .map(|plane| plane.map(|p| shannon_entropy(p).max(0.0)))
        .collect();
    EntropyMap {
        spec: forecast.spec,
        u,
    }
}

/// Linear scaling used by a PGM dump, recorded in the sidecar text file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// Writes a binary (P5) PGM with values mapped linearly from `[min, max]` to `0..=255`,
/// plus `<path>.txt` recording the mapping. Row 0 of the image is the top (max y) row.
pub fn write_pgm(path: &Path, raster: &Raster<f64>) -> Result<PgmScale> {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in raster.data() {
        if v.is_finite() {
            min = min.min(v);
            max = max.max(v);
        }
    }
    if !min.is_finite() {
        min = 0.0;
        max = 0.0;
    }
    let span = max - min;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", raster.width(), raster.height())?;
    let mut row = Vec::with_capacity(raster.width());
    for y in (0..raster.height()).rev() {
        row.clear();
        for x in 0..raster.width() {
            let v = *raster.get(x, y);
            let byte = if span > 0.0 && v.is_finite() {
                ((v - min) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            row.push(byte);
        }
        out.write_all(&row)?;
    }
    out.flush()?;
    let scale = if span > 0.0 { span / 255.0 } else { 0.0 };
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    std::fs::write(
        side,
        format!(
            "width {}\nheight {}\nmin {}\nmax {}\nscale {}\n# value = min + byte * scale\n",
            raster.width(),
            raster.height(),
            min,
            max,
            scale
        ),
    )?;
    Ok(PgmScale { min, max })
}
