//! Occupancy forecasters: a constant-velocity analytic baseline and a ground-truth oracle.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::grid::{
    BinaryOccupancy, GridSpec, OccupancyForecast, Raster, CLASS_ALLO, CLASS_EGO, CLASS_NULL,
    NUM_CLASSES,
};
use crate::sim::{
    ground_truth_labels_without, render_lidar, visibility_mask, Scenario, SensorConfig,
};

/// One past observation: a class-labeled raster in the agent's frame at that time, and the
/// agent's global pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedFrame {
    pub labels: Raster<u8>,
    pub pose: Pose2,
}

/// Observation history, oldest first; the last frame is the current one.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastInput {
    pub spec: GridSpec,
    pub horizon: usize,
    pub frame_period: f64,
    pub history: Vec<ObservedFrame>,
}

impl ForecastInput {
    pub fn validate(&self) -> Result<()> {
        if self.history.len() < 2 {
            return Err(Error::Shape(format!(
                "history needs at least 2 frames, got {}",
                self.history.len()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Horizon("forecast horizon must be at least 1".into()));
        }
        if !(self.frame_period > 0.0) {
            return Err(Error::Config("frame period must be positive".into()));
        }
        for (k, f) in self.history.iter().enumerate() {
            if f.labels.width() != self.spec.width || f.labels.height() != self.spec.height {
                return Err(Error::Shape(format!(
                    "history frame {k} is {}x{}, grid is {}x{}",
                    f.labels.width(),
                    f.labels.height(),
                    self.spec.width,
                    self.spec.height
                )));
            }
        }
        Ok(())
    }

    /// Segmentation history rendered by the simulator for frames `t0 - history_len ..= t0`.
    pub fn from_scenario(
        scenario: &Scenario,
        agent: u32,
        t0: usize,
        history_len: usize,
        horizon: usize,
        sensor: &SensorConfig,
    ) -> Result<Self> {
        if t0 < history_len {
            return Err(Error::Horizon(format!(
                "decision frame {t0} has fewer than {history_len} past frames"
            )));
        }
        let history = (t0 - history_len..=t0)
            .map(|frame| {
                let lf = render_lidar(scenario, agent, frame, sensor)?;
                Ok(ObservedFrame {
                    labels: lf.seg,
                    pose: lf.pose,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: sensor.grid()?,
            horizon,
            frame_period: scenario.frame_period,
            history,
        })
    }
}

pub trait Forecaster: Send + Sync {
    fn forecast(&self, input: &ForecastInput) -> Result<OccupancyForecast>;
}

/// A connected blob of one class, as seen in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectTrack {
    pub class: usize,
    /// Local-frame centroid of the cell centers (meters).
    pub centroid: [f64; 2],
    pub velocity: [f64; 2],
    /// Bounding-box size (meters).
    pub extent: [f64; 2],
    pub cells: Vec<(usize, usize)>,
}

/// 8-connected components of cells labeled `class`.
pub fn connected_components(
    labels: &Raster<u8>,
    spec: &GridSpec,
    class: usize,
) -> Vec<ObjectTrack> {
    let (w, h) = (labels.width(), labels.height());
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if seen[start] || labels.data()[start] as usize != class {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut cells = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            cells.push((x, y));
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if !seen[j] && labels.data()[j] as usize == class {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        let mut sum = [0.0; 2];
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for &(x, y) in &cells {
            let c = spec.cell_center(x, y);
            for k in 0..2 {
                sum[k] += c[k];
                lo[k] = lo[k].min(c[k]);
                hi[k] = hi[k].max(c[k]);
            }
        }
        let n = cells.len() as f64;
        out.push(ObjectTrack {
            class,
            centroid: [sum[0] / n, sum[1] / n],
            velocity: [0.0, 0.0],
            extent: [
                hi[0] - lo[0] + spec.resolution,
                hi[1] - lo[1] + spec.resolution,
            ],
            cells,
        });
    }
    out
}

/// Constant-velocity forecaster: blobs in the two latest frames are matched by nearest
/// centroid, then each current blob is translated along its velocity and dilated by an
/// isotropic Gaussian whose width grows with the step.
#[derive(Debug, Clone, PartialEq)]
pub struct CvBaseline {
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub gate_radius: f64,
}

impl Default for CvBaseline {
    fn default() -> Self {
        Self {
            sigma0: 0.4,
            sigma_growth: 0.3,
            gate_radius: 2.0,
        }
    }
}

impl Forecaster for CvBaseline {
    fn forecast(&self, input: &ForecastInput) -> Result<OccupancyForecast> {
        input.validate()?;
        let tracks = self.tracks(input);
        self.render(&input.spec, input.horizon, input.frame_period, &tracks)
    }
}

impl CvBaseline {
    /// Forecast of an explicit set of tracks, e.g. a subset of [`CvBaseline::tracks`].
    pub fn render(
        &self,
        spec: &GridSpec,
        horizon: usize,
        frame_period: f64,
        tracks: &[ObjectTrack],
    ) -> Result<OccupancyForecast> {
        let splats = self.splats(spec, horizon, frame_period, tracks)?;
        compose(spec, &splats, None)
    }

    /// Per-step, per-track intensities, indexed `[step - 1][track]`.
    pub fn splats(
        &self,
        spec: &GridSpec,
        horizon: usize,
        frame_period: f64,
        tracks: &[ObjectTrack],
    ) -> Result<Vec<Vec<Splat>>> {
        if horizon == 0 {
            return Err(Error::Horizon("forecast horizon must be at least 1".into()));
        }
        Ok((1..=horizon)
            .map(|t| {
                let sigma = self.sigma0 + self.sigma_growth * t as f64;
                tracks
                    .iter()
                    .map(|track| {
                        let shift = [
                            track.velocity[0] * frame_period * t as f64,
                            track.velocity[1] * frame_period * t as f64,
                        ];
                        Splat {
                            class: track.class,
                            cells: splat_track(spec, track, shift, sigma),
                        }
                    })
                    .collect()
            })
            .collect())
    }
}

/// Intensity one track contributes at one step, as `(cell index, value)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat {
    pub class: usize,
    pub cells: Vec<(usize, f64)>,
}

fn class_intensities(spec: &GridSpec, step: &[Splat], skip: Option<usize>) -> [Vec<f64>; 2] {
    let mut intensity = [
        vec![0.0f64; spec.num_cells()],
        vec![0.0f64; spec.num_cells()],
    ];
    for (k, splat) in step.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        let slot = if splat.class == CLASS_EGO { 0 } else { 1 };
        for &(i, v) in &splat.cells {
            intensity[slot][i] += v;
        }
    }
    intensity
}

/// Class probabilities from summed intensities: each class clamped to [0, 1], null takes
/// the remainder, then normalized.
fn probabilities(ego: f64, allo: f64) -> [f64; NUM_CLASSES] {
    let s_ego = ego.clamp(0.0, 1.0);
    let s_allo = allo.clamp(0.0, 1.0);
    let s_null = (1.0 - s_ego - s_allo).max(0.0);
    let total = s_null + s_ego + s_allo;
    let mut p = [0.0; NUM_CLASSES];
    p[CLASS_NULL] = s_null / total;
    p[CLASS_EGO] = s_ego / total;
    p[CLASS_ALLO] = s_allo / total;
    p
}

/// Forecast from per-step track intensities, leaving out track `skip`.
pub fn compose(
    spec: &GridSpec,
    splats: &[Vec<Splat>],
    skip: Option<usize>,
) -> Result<OccupancyForecast> {
    let planes = splats
        .iter()
        .map(|step| {
            let [e, a] = class_intensities(spec, step, skip);
            let data = e
                .iter()
                .zip(&a)
                .map(|(&e, &a)| probabilities(e, a))
                .collect();
            Raster::from_vec(spec.width, spec.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    OccupancyForecast::new(*spec, planes)
}

/// `binarize(compose(spec, splats, skip), theta)` without materializing the forecast.
pub fn compose_binary(
    spec: &GridSpec,
    splats: &[Vec<Splat>],
    skip: Option<usize>,
    theta: f64,
) -> Result<BinaryOccupancy> {
    let occ = splats
        .iter()
        .map(|step| {
            let [e, a] = class_intensities(spec, step, skip);
            let data = e
                .iter()
                .zip(&a)
                .map(|(&e, &a)| {
                    let p = probabilities(e, a);
                    p[CLASS_EGO].max(p[CLASS_ALLO]) > theta
                })
                .collect();
            Raster::from_vec(spec.width, spec.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BinaryOccupancy { spec: *spec, occ })
}

impl CvBaseline {
    /// Current blobs with velocities estimated against the previous frame.
    pub fn tracks(&self, input: &ForecastInput) -> Vec<ObjectTrack> {
        let n = input.history.len();
        let cur = &input.history[n - 1];
        let prev = &input.history[n - 2];
        // previous frame -> current frame
        let to_cur = cur.pose.relative(&prev.pose);
        let mut tracks = Vec::new();
        for class in [CLASS_EGO, CLASS_ALLO] {
            let mut now = connected_components(&cur.labels, &input.spec, class);
            let before: Vec<[f64; 2]> = connected_components(&prev.labels, &input.spec, class)
                .iter()
                .map(|c| to_cur.transform_point(c.centroid))
                .collect();
            let mut pairs = Vec::new();
            for (i, c) in now.iter().enumerate() {
                for (j, p) in before.iter().enumerate() {
                    let d = (c.centroid[0] - p[0]).hypot(c.centroid[1] - p[1]);
                    if d <= self.gate_radius {
                        pairs.push((d, i, j));
                    }
                }
            }
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            let mut used_now = vec![false; now.len()];
            let mut used_before = vec![false; before.len()];
            for (_, i, j) in pairs {
                if used_now[i] || used_before[j] {
                    continue;
                }
                used_now[i] = true;
                used_before[j] = true;
                now[i].velocity = [
                    (now[i].centroid[0] - before[j][0]) / input.frame_period,
                    (now[i].centroid[1] - before[j][1]) / input.frame_period,
                ];
            }
            tracks.extend(now);
        }
        tracks
    }
}

fn gaussian_kernel(sigma_cells: f64) -> Vec<f64> {
    if sigma_cells < 1e-6 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma_cells).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma_cells * sigma_cells)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Adds one track's dilated, translated footprint into `acc`. Cells covered by the
/// translated footprint itself keep full intensity; the Gaussian tail spreads around it.
fn splat_track(
    spec: &GridSpec,
    track: &ObjectTrack,
    shift: [f64; 2],
    sigma: f64,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
    for &(x, y) in &track.cells {
        x0 = x0.min(x);
        y0 = y0.min(y);
        x1 = x1.max(x);
        y1 = y1.max(y);
    }
    if track.cells.is_empty() {
        return out;
    }
    let (bw, bh) = (x1 - x0 + 1, y1 - y0 + 1);
    let mut member = vec![false; bw * bh];
    for &(x, y) in &track.cells {
        member[(y - y0) * bw + (x - x0)] = true;
    }

    let kernel = gaussian_kernel(sigma / spec.resolution);
    let r = (kernel.len() / 2) as i64;
    // Shifted footprint in grid cells; the +2 slack covers rounding of a fractional shift.
    let g_shift = {
        let a = spec.world_to_grid([0.0, 0.0]);
        let b = spec.world_to_grid(shift);
        [b[0] - a[0], b[1] - a[1]]
    };
    let ox = x0 as i64 + g_shift[0].floor() as i64 - r - 2;
    let oy = y0 as i64 + g_shift[1].floor() as i64 - r - 2;
    let lw = bw + 2 * r as usize + 5;
    let lh = bh + 2 * r as usize + 5;

    let mut indicator = vec![0.0f64; lw * lh];
    for ly in 0..lh {
        for lx in 0..lw {
            let gx = ox + lx as i64;
            let gy = oy + ly as i64;
            // Source position of this cell's center before the shift.
            let sx = (gx as f64 + 0.5 - g_shift[0]).floor() as i64 - x0 as i64;
            let sy = (gy as f64 + 0.5 - g_shift[1]).floor() as i64 - y0 as i64;
            if sx >= 0
                && sy >= 0
                && (sx as usize) < bw
                && (sy as usize) < bh
                && member[sy as usize * bw + sx as usize]
            {
                indicator[ly * lw + lx] = 1.0;
            }
        }
    }

    let mut tmp = vec![0.0f64; lw * lh];
    for ly in 0..lh {
        for lx in 0..lw {
            let mut s = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = lx as i64 + k as i64 - r;
                if sx >= 0 && (sx as usize) < lw {
                    s += w * indicator[ly * lw + sx as usize];
                }
            }
            tmp[ly * lw + lx] = s;
        }
    }
    for ly in 0..lh {
        let gy = oy + ly as i64;
        if gy < 0 || gy >= spec.height as i64 {
            continue;
        }
        for lx in 0..lw {
            let gx = ox + lx as i64;
            if gx < 0 || gx >= spec.width as i64 {
                continue;
            }
            let mut s = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = ly as i64 + k as i64 - r;
                if sy >= 0 && (sy as usize) < lh {
                    s += w * tmp[sy as usize * lw + lx];
                }
            }
            let v = s.max(indicator[ly * lw + lx]);
            if v > 0.0 {
                out.push((gy as usize * spec.width + gx as usize, v));
            }
        }
    }
    out
}

/// [`CvBaseline`] with the default gate radius.
pub fn cv_baseline_forecast(
    input: &ForecastInput,
    sigma0: f64,
    sigma_growth: f64,
) -> Result<OccupancyForecast> {
    CvBaseline {
        sigma0,
        sigma_growth,
        ..Default::default()
    }
    .forecast(input)
}

/// Upper-bound forecaster backed by simulator ground truth.
pub struct OracleForecaster<'a> {
    pub scenario: &'a Scenario,
    pub agent: u32,
    pub t0: usize,
    pub sensor: SensorConfig,
}

impl Forecaster for OracleForecaster<'_> {
    fn forecast(&self, input: &ForecastInput) -> Result<OccupancyForecast> {
        input.validate()?;
        if input.spec != self.sensor.grid()? {
            return Err(Error::Shape("oracle grid does not match input grid".into()));
        }
        oracle_forecast(
            self.scenario,
            self.agent,
            self.t0,
            input.horizon,
            &self.sensor,
        )
    }
}

/// One-hot future occupancy of every body, restricted to cells visible to `agent` at `t0`;
/// all other cells are null.
pub fn oracle_forecast(
    scenario: &Scenario,
    agent: u32,
    t0: usize,
    horizon: usize,
    sensor: &SensorConfig,
) -> Result<OccupancyForecast> {
    oracle_forecast_without(scenario, agent, t0, horizon, sensor, &[])
}

/// [`oracle_forecast`] with the agents in `exclude` left out of the future.
pub fn oracle_forecast_without(
    scenario: &Scenario,
    agent: u32,
    t0: usize,
    horizon: usize,
    sensor: &SensorConfig,
    exclude: &[u32],
) -> Result<OccupancyForecast> {
    if horizon == 0 {
        return Err(Error::Horizon("forecast horizon must be at least 1".into()));
    }
    if t0 + horizon >= scenario.duration {
        return Err(Error::Horizon(format!(
            "oracle needs frames up to {}, scenario ends at {}",
            t0 + horizon,
            scenario.duration
        )));
    }
    let spec = sensor.grid()?;
    let mask = visibility_mask(scenario, agent, t0, sensor)?;
    let planes = (1..=horizon)
        .map(|t| {
            let labels = ground_truth_labels_without(scenario, agent, t0, t0 + t, sensor, exclude)?;
            let data = labels
                .data()
                .iter()
                .zip(mask.data())
                .map(|(&c, &seen)| {
                    let mut p = [0.0; NUM_CLASSES];
                    p[if seen { c as usize } else { CLASS_NULL }] = 1.0;
                    p
                })
                .collect();
            Raster::from_vec(spec.width, spec.height, data)
        })
        .collect::<Result<Vec<_>>>()?;
    OccupancyForecast::new(spec, planes)
}

/// Forecaster choice by configuration name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    CvBaseline,
    Oracle,
}

impl std::str::FromStr for ForecasterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv_baseline" => Ok(Self::CvBaseline),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::Config(format!(
                "unknown forecaster '{other}' (expected cv_baseline or oracle)"
            ))),
        }
    }
}

impl std::fmt::Display for ForecasterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::CvBaseline => "cv_baseline",
            Self::Oracle => "oracle",
        })
    }
}
