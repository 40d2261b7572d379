//! Shared trajectory dictionary, frame transforms, and map sampling along waypoints.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::grid::{Costmap, EntropyMap, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionaryParams {
    /// m/s
    pub v_max: f64,
    /// m/s²
    pub a_lin_max: f64,
    /// rad/s²
    pub a_ang_max: f64,
    /// 1/m
    pub max_curvature: f64,
    /// s between waypoints
    pub frame_period: f64,
}

impl Default for DictionaryParams {
    fn default() -> Self {
        Self {
            v_max: 10.0,
            a_lin_max: 3.0,
            a_ang_max: 4.0,
            max_curvature: 0.15,
            frame_period: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionaryConfig {
    pub n_speeds: usize,
    pub n_curvatures: usize,
    pub horizon: usize,
    pub params: DictionaryParams,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            n_speeds: 10,
            n_curvatures: 8,
            horizon: 15,
            params: DictionaryParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub speed: f64,
    pub curvature: f64,
    /// Positions at steps `1..=horizon` in the planning agent's frame.
    pub waypoints: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDictionary {
    pub id: u32,
    pub horizon: usize,
    pub params: DictionaryParams,
    pub entries: Vec<Trajectory>,
}

impl TrajectoryDictionary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn waypoints(&self, i: usize) -> &[[f64; 2]] {
        &self.entries[i].waypoints
    }
}

/// Position after arc length `s` on a circle of signed curvature `k` leaving the origin
/// along +x.
pub fn arc_point(s: f64, k: f64) -> [f64; 2] {
    if k.abs() < 1e-12 {
        [s, 0.0]
    } else {
        [(k * s).sin() / k, (1.0 - (k * s).cos()) / k]
    }
}

fn speeds(n: usize, v_max: f64) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|k| v_max * k as f64 / (n - 1) as f64).collect()
}

/// Uniform steps from `-max` toward `+max` that always include straight; with an even count
/// the extra value lands on the negative side.
fn curvatures(n: usize, max: f64) -> Vec<f64> {
    let half = n / 2;
    if half == 0 {
        return vec![0.0];
    }
    (0..n)
        .map(|j| max * (j as f64 - half as f64) / half as f64)
        .collect()
}

/// Checks speed and yaw-rate changes between consecutive waypoint segments. The vehicle is
/// assumed to start at its segment speed with zero yaw rate, heading along +x.
pub fn is_feasible(waypoints: &[[f64; 2]], params: &DictionaryParams) -> bool {
    const TOL: f64 = 1e-9;
    let dt = params.frame_period;
    let mut prev = [0.0, 0.0];
    let mut prev_speed: Option<f64> = None;
    let mut heading = 0.0;
    let mut yaw_rate = 0.0;
    let mut first = true;
    for wp in waypoints {
        let (dx, dy) = (wp[0] - prev[0], wp[1] - prev[1]);
        let dist = dx.hypot(dy);
        let speed = dist / dt;
        if speed > params.v_max + TOL {
            return false;
        }
        if let Some(ps) = prev_speed {
            if (speed - ps).abs() > params.a_lin_max * dt + TOL {
                return false;
            }
        }
        prev_speed = Some(speed);
        if dist > 1e-12 {
            let chord = dy.atan2(dx);
            // The first chord of an arc leaves at half the per-step turn.
            let turn = crate::geometry::normalize_angle(chord - heading);
            let rate = if first { 2.0 * turn / dt } else { turn / dt };
            if (rate - yaw_rate).abs() > params.a_ang_max * dt + TOL {
                return false;
            }
            yaw_rate = rate;
            heading = chord;
        }
        first = false;
        prev = *wp;
    }
    true
}

fn dictionary_id(config: &DictionaryConfig) -> u32 {
    let p = &config.params;
    let mut h = Sha256::new();
    for v in [config.n_speeds, config.n_curvatures, config.horizon] {
        h.update((v as u64).to_le_bytes());
    }
    for v in [
        p.v_max,
        p.a_lin_max,
        p.a_ang_max,
        p.max_curvature,
        p.frame_period,
    ] {
        h.update(v.to_bits().to_le_bytes());
    }
    let digest = h.finalize();
    u32::from_le_bytes([digest[0], digest[1], digest[2], digest[3]])
}

/// Constant-speed, constant-curvature arcs over every (speed, curvature) pair, speed-major.
/// Pairs that break the acceleration limits are dropped.
pub fn generate_dictionary(config: &DictionaryConfig) -> Result<TrajectoryDictionary> {
    let p = &config.params;
    if !(p.v_max > 0.0) {
        return Err(Error::Config(format!(
            "v_max must be positive, got {}",
            p.v_max
        )));
    }
    if !(p.frame_period > 0.0) || !(p.a_lin_max >= 0.0) || !(p.a_ang_max >= 0.0) {
        return Err(Error::Config("invalid dictionary limits".into()));
    }
    if config.n_speeds == 0 || config.n_curvatures == 0 || config.horizon == 0 {
        return Err(Error::Config(
            "dictionary needs at least one speed, curvature and waypoint".into(),
        ));
    }
    let mut entries = Vec::with_capacity(config.n_speeds * config.n_curvatures);
    for &speed in &speeds(config.n_speeds, p.v_max) {
        for &curvature in &curvatures(config.n_curvatures, p.max_curvature) {
            let waypoints: Vec<[f64; 2]> = (1..=config.horizon)
                .map(|t| arc_point(speed * p.frame_period * t as f64, curvature))
                .collect();
            if is_feasible(&waypoints, p) {
                entries.push(Trajectory {
                    speed,
                    curvature,
                    waypoints,
                });
            }
        }
    }
    Ok(TrajectoryDictionary {
        id: dictionary_id(config),
        horizon: config.horizon,
        params: *p,
        entries,
    })
}

/// Maps ego-frame waypoints into another agent's frame; `relative` is the ego frame's pose
/// in that agent's frame.
pub fn transform_trajectory(waypoints: &[[f64; 2]], relative: &Pose2) -> Vec<[f64; 2]> {
    waypoints
        .iter()
        .map(|&p| relative.transform_point(p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    pub cost: f64,
    pub uncertainty: f64,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrajectory {
    pub traj_index: usize,
    pub records: Vec<SampleRecord>,
}

/// Samples the cost and entropy maps along every dictionary trajectory after moving it into
/// the responder's frame. Steps past the map horizon read the last map step.
pub fn score_trajectories(
    dict: &TrajectoryDictionary,
    relative: &Pose2,
    costmap: &Costmap,
    entropy: &EntropyMap,
) -> Result<Vec<SampledTrajectory>> {
    score_trajectories_in_view(dict, relative, costmap, entropy, None)
}

/// [`score_trajectories`], additionally marking samples invalid when they fall in a cell
/// outside `view` (cells the responder has observed).
pub fn score_trajectories_in_view(
    dict: &TrajectoryDictionary,
    relative: &Pose2,
    costmap: &Costmap,
    entropy: &EntropyMap,
    view: Option<&Raster<bool>>,
) -> Result<Vec<SampledTrajectory>> {
    let spec = costmap.spec();
    if spec != entropy.spec() {
        return Err(Error::Shape("costmap and entropy map grids differ".into()));
    }
    if let Some(v) = view {
        if v.width() != spec.width || v.height() != spec.height {
            return Err(Error::Shape("view mask does not match the map grid".into()));
        }
    }
    let in_view = |p: [f64; 2]| match view {
        None => true,
        Some(v) => spec.cell_of(p).is_some_and(|(x, y)| *v.get(x, y)),
    };
    let last = costmap.horizon().min(entropy.horizon());
    dict.entries
        .iter()
        .enumerate()
        .map(|(i, traj)| {
            let records = transform_trajectory(&traj.waypoints, relative)
                .into_iter()
                .enumerate()
                .map(|(k, p)| {
                    let t = (k + 1).min(last);
                    let c = costmap.sample(t, p)?;
                    let u = entropy.sample(t, p)?;
                    let valid = c.valid && u.valid && in_view(p);
                    Ok(SampleRecord {
                        cost: if valid { c.value } else { 0.0 },
                        uncertainty: if valid { u.value.max(0.0) } else { 0.0 },
                        valid,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SampledTrajectory {
                traj_index: i,
                records,
            })
        })
        .collect()
}

const DICT_MAGIC: u32 = 0x5444_4354; // "TCDT" little-endian on the wire
const DICT_VERSION: u8 = 1;

/// Binary export: magic, version, id, count, horizon, five f64 parameters, then `f32`
/// waypoint pairs in trajectory-major order. All little-endian.
pub fn export_dictionary(dict: &TrajectoryDictionary) -> Vec<u8> {
    let mut out = Vec::with_capacity(61 + dict.len() * dict.horizon * 8);
    out.extend_from_slice(&DICT_MAGIC.to_le_bytes());
    out.push(DICT_VERSION);
    out.extend_from_slice(&dict.id.to_le_bytes());
    out.extend_from_slice(&(dict.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dict.horizon as u32).to_le_bytes());
    let p = &dict.params;
    for v in [
        p.v_max,
        p.a_lin_max,
        p.a_ang_max,
        p.max_curvature,
        p.frame_period,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in &dict.entries {
        for wp in &t.waypoints {
            out.extend_from_slice(&(wp[0] as f32).to_le_bytes());
            out.extend_from_slice(&(wp[1] as f32).to_le_bytes());
        }
    }
    out
}

/// Waypoints read back from an exported dictionary blob. Speeds and curvatures are not
/// part of the blob.
#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryBlob {
    pub id: u32,
    pub horizon: usize,
    pub params: DictionaryParams,
    pub waypoints: Vec<Vec<[f32; 2]>>,
}

impl DictionaryBlob {
    /// True when `dict` quantizes to exactly these waypoints under the same id.
    pub fn agrees_with(&self, dict: &TrajectoryDictionary) -> bool {
        self.id == dict.id
            && self.horizon == dict.horizon
            && self.params == dict.params
            && self.waypoints.len() == dict.len()
            && self.waypoints.iter().zip(&dict.entries).all(|(a, b)| {
                a.iter()
                    .zip(&b.waypoints)
                    .all(|(p, q)| p[0] == q[0] as f32 && p[1] == q[1] as f32)
            })
    }
}

pub fn import_dictionary(bytes: &[u8]) -> Result<DictionaryBlob> {
    let mut r = crate::exchange::codec::Reader::new(bytes);
    if r.u32()? != DICT_MAGIC {
        return Err(Error::decode(0, "bad dictionary magic"));
    }
    let version = r.u8()?;
    if version != DICT_VERSION {
        return Err(Error::decode(
            4,
            format!("unsupported dictionary version {version}"),
        ));
    }
    let id = r.u32()?;
    let count = r.u32()? as usize;
    let horizon = r.u32()? as usize;
    let params = DictionaryParams {
        v_max: r.f64()?,
        a_lin_max: r.f64()?,
        a_ang_max: r.f64()?,
        max_curvature: r.f64()?,
        frame_period: r.f64()?,
    };
    let expected = count
        .checked_mul(horizon)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::decode(r.offset(), "dictionary size overflow"))?;
    if r.remaining() != expected {
        return Err(Error::decode(
            r.offset(),
            format!(
                "expected {expected} waypoint bytes, found {}",
                r.remaining()
            ),
        ));
    }
    let mut waypoints = Vec::with_capacity(count);
    for _ in 0..count {
        let mut traj = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            traj.push([r.f32()?, r.f32()?]);
        }
        waypoints.push(traj);
    }
    Ok(DictionaryBlob {
        id,
        horizon,
        params,
        waypoints,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dictionary_shape() {
        let d = generate_dictionary(&DictionaryConfig::default()).unwrap();
        assert_eq!(d.len(), 80);
        assert!(d.entries.iter().all(|t| t.waypoints.len() == 15));
        assert!(d.entries[0].waypoints.iter().all(|w| *w == [0.0, 0.0]));
        assert_eq!(d.entries[0].speed, 0.0);
    }

    #[test]
    fn curvature_set_contains_straight() {
        let ks = curvatures(8, 0.15);
        assert_eq!(ks.len(), 8);
        assert!(ks.contains(&0.0));
        assert_eq!(ks[0], -0.15);
    }

    #[test]
    fn arc_against_fine_euler_integration() {
        let k = 0.5;
        let p = arc_point(0.5, k);
        assert!((p[0] - 0.25f64.sin() / 0.5).abs() < 1e-15);
        assert!((p[1] - (1.0 - 0.25f64.cos()) / 0.5).abs() < 1e-15);
        let steps = 200_000;
        let ds = 0.5 / steps as f64;
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..steps {
            // midpoint rule
            let mid = th + 0.5 * k * ds;
            x += ds * mid.cos();
            y += ds * mid.sin();
            th += k * ds;
        }
        assert!((x - p[0]).abs() < 1e-9 && (y - p[1]).abs() < 1e-9);
    }

    #[test]
    fn tight_yaw_limit_prunes_dictionary() {
        let mut cfg = DictionaryConfig::default();
        cfg.params.a_ang_max = 1.0;
        let d = generate_dictionary(&cfg).unwrap();
        assert!(d.len() < 80 && !d.is_empty());
        assert!(d
            .entries
            .iter()
            .all(|t| is_feasible(&t.waypoints, &cfg.params)));
        assert!(d
            .entries
            .iter()
            .all(|t| (t.speed * t.curvature).abs() / 0.5 <= 1.0 + 1e-9));
    }

    #[test]
    fn non_positive_v_max_is_config_error() {
        let mut cfg = DictionaryConfig::default();
        cfg.params.v_max = 0.0;
        assert!(matches!(generate_dictionary(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn speed_jump_is_infeasible() {
        let p = DictionaryParams::default();
        let wps = [[0.5, 0.0], [5.0, 0.0]];
        assert!(!is_feasible(&wps, &p));
    }

    #[test]
    fn transform_quarter_turn() {
        let out = transform_trajectory(
            &[[1.0, 0.0]],
            &Pose2::new(2.0, 0.0, std::f64::consts::FRAC_PI_2),
        );
        assert!((out[0][0] - 2.0).abs() < 1e-12 && (out[0][1] - 1.0).abs() < 1e-12);
        let same = transform_trajectory(&[[1.5, -2.0]], &Pose2::identity());
        assert_eq!(same, vec![[1.5, -2.0]]);
    }

    #[test]
    fn export_import_agree() {
        let d = generate_dictionary(&DictionaryConfig::default()).unwrap();
        let blob = import_dictionary(&export_dictionary(&d)).unwrap();
        assert!(blob.agrees_with(&d));
        let other = generate_dictionary(&DictionaryConfig {
            n_speeds: 5,
            ..Default::default()
        })
        .unwrap();
        assert_ne!(other.id, d.id);
        assert!(!blob.agrees_with(&other));
    }

    #[test]
    fn truncated_blob_rejected() {
        let d = generate_dictionary(&DictionaryConfig::default()).unwrap();
        let bytes = export_dictionary(&d);
        assert!(matches!(
            import_dictionary(&bytes[..bytes.len() - 3]),
            Err(Error::Decode { .. })
        ));
    }
}
