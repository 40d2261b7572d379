use super::{Body, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Pose2};
use crate::grid::{GridSpec, Raster, CLASS_ALLO, CLASS_EGO, CLASS_NULL};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub n_rays: usize,
    pub r_max: f64,
    pub grid_width: usize,
    pub grid_height: usize,
    pub resolution: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            n_rays: 360,
            r_max: 30.0,
            grid_width: 256,
            grid_height: 256,
            resolution: 0.4,
        }
    }
}

impl SensorConfig {
    /// Ego-centered, heading-aligned grid for one agent.
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::centered(self.grid_width, self.grid_height, self.resolution)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarFrame {
    /// `(angle in the sensor frame, range)` per ray.
    pub scan: Vec<(f64, f64)>,
    pub raster: Raster<bool>,
    /// Class labels (`CLASS_*`) on visible footprint cells, null elsewhere.
    pub seg: Raster<u8>,
    pub pose: Pose2,
}

fn to_local(pose: &Pose2, rect: &OrientedRect) -> OrientedRect {
    OrientedRect {
        center: pose.inverse_transform_point(rect.center),
        heading: rect.heading - pose.theta,
        ..*rect
    }
}

/// Calls `f(x, y)` for every cell whose center lies inside `rect` (local frame).
fn for_cells_in(spec: &GridSpec, rect: &OrientedRect, mut f: impl FnMut(usize, usize)) {
    let corners = rect.corners();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for c in corners {
        let g = spec.world_to_grid(c);
        for k in 0..2 {
            lo[k] = lo[k].min(g[k]);
            hi[k] = hi[k].max(g[k]);
        }
    }
    let x0 = (lo[0] - 1.0).floor().max(0.0) as usize;
    let y0 = (lo[1] - 1.0).floor().max(0.0) as usize;
    let x1 = (hi[0] + 1.0).ceil().min(spec.width as f64) as usize;
    let y1 = (hi[1] + 1.0).ceil().min(spec.height as f64) as usize;
    for y in y0..y1 {
        for x in x0..x1 {
            if rect.contains(spec.cell_center(x, y)) {
                f(x, y);
            }
        }
    }
}

struct LocalScene {
    /// Local-frame rectangles with their owner; the sensing agent itself is excluded.
    others: Vec<(Body, OrientedRect)>,
    own: OrientedRect,
}

fn local_scene(scenario: &Scenario, agent: u32, frame: usize) -> Result<(Pose2, LocalScene)> {
    let pose = scenario.pose_of(agent, frame)?;
    let mut own = None;
    let mut others = Vec::new();
    for (body, rect) in scenario.bodies_at(frame) {
        let local = to_local(&pose, &rect);
        if body == Body::Agent(agent) {
            own = Some(local);
        } else {
            others.push((body, local));
        }
    }
    let own = own.ok_or_else(|| Error::Config(format!("scenario has no agent {agent}")))?;
    Ok((pose, LocalScene { others, own }))
}

impl LocalScene {
    /// Line of sight from the sensor (local origin) to `p`, ignoring the rectangle at
    /// `skip` (the one containing `p`, if any).
    fn line_of_sight(&self, p: [f64; 2], skip: Option<usize>, r_max: f64) -> bool {
        if p[0].hypot(p[1]) > r_max {
            return false;
        }
        self.others
            .iter()
            .enumerate()
            .all(|(i, (_, r))| Some(i) == skip || !r.blocks_segment([0.0, 0.0], p))
    }

    fn near(&self, r_max: f64) -> LocalScene {
        LocalScene {
            others: self
                .others
                .iter()
                .filter(|(_, r)| r.center[0].hypot(r.center[1]) <= r_max + r.circumradius())
                .copied()
                .collect(),
            own: self.own,
        }
    }
}

fn check_frame(scenario: &Scenario, frame: usize) -> Result<()> {
    if frame >= scenario.duration {
        return Err(Error::Horizon(format!(
            "frame {frame} beyond scenario duration {}",
            scenario.duration
        )));
    }
    Ok(())
}

/// Renders the 2D scan, the hit raster and the visibility-aware segmentation for one
/// agent. Only bodies within `r_max` can influence the result.
pub fn render_lidar(
    scenario: &Scenario,
    agent: u32,
    frame: usize,
    sensor: &SensorConfig,
) -> Result<LidarFrame> {
    check_frame(scenario, frame)?;
    let spec = sensor.grid()?;
    let (pose, scene) = local_scene(scenario, agent, frame)?;
    let scene = scene.near(sensor.r_max);

    let mut raster = Raster::filled(spec.width, spec.height, false);
    let mut scan = Vec::with_capacity(sensor.n_rays);
    for k in 0..sensor.n_rays {
        let angle = 2.0 * std::f64::consts::PI * k as f64 / sensor.n_rays as f64;
        let dir = [angle.cos(), angle.sin()];
        let range = scene
            .others
            .iter()
            .filter_map(|(_, r)| r.ray_hit([0.0, 0.0], dir))
            .fold(sensor.r_max, f64::min);
        if range < sensor.r_max {
            if let Some((x, y)) = spec.cell_of([dir[0] * range, dir[1] * range]) {
                raster.set(x, y, true);
            }
        }
        scan.push((angle, range));
    }

    let mut seg = Raster::filled(spec.width, spec.height, CLASS_NULL as u8);
    for_cells_in(&spec, &scene.own, |x, y| {
        if spec.cell_center(x, y)[0].hypot(spec.cell_center(x, y)[1]) <= sensor.r_max {
            seg.set(x, y, CLASS_EGO as u8)
        }
    });
    for (i, (_, rect)) in scene.others.iter().enumerate() {
        for_cells_in(&spec, rect, |x, y| {
            if scene.line_of_sight(spec.cell_center(x, y), Some(i), sensor.r_max) {
                seg.set(x, y, CLASS_ALLO as u8);
            }
        });
    }
    Ok(LidarFrame {
        scan,
        raster,
        seg,
        pose,
    })
}

/// Cells of the agent's grid whose centers are within range and in line of sight at
/// `frame`. A cell inside a footprint is visible when no other footprint blocks it.
pub fn visibility_mask(
    scenario: &Scenario,
    agent: u32,
    frame: usize,
    sensor: &SensorConfig,
) -> Result<Raster<bool>> {
    check_frame(scenario, frame)?;
    let spec = sensor.grid()?;
    let (_, scene) = local_scene(scenario, agent, frame)?;
    let scene = scene.near(sensor.r_max);
    let mut mask = Raster::filled(spec.width, spec.height, false);
    let reach = (sensor.r_max / spec.resolution).ceil() as i64 + 1;
    let center = spec.world_to_grid([0.0, 0.0]);
    let cx = center[0].floor() as i64;
    let cy = center[1].floor() as i64;
    for y in (cy - reach).max(0)..(cy + reach + 1).min(spec.height as i64) {
        for x in (cx - reach).max(0)..(cx + reach + 1).min(spec.width as i64) {
            let (x, y) = (x as usize, y as usize);
            let p = spec.cell_center(x, y);
            let skip = scene.others.iter().position(|(_, r)| r.contains(p));
            if scene.line_of_sight(p, skip, sensor.r_max) {
                mask.set(x, y, true);
            }
        }
    }
    Ok(mask)
}

/// Ground-truth class raster of the world at `frame`, drawn in `agent`'s grid as it stood
/// at `view_frame`. The agent itself is labeled ego; every other body allo.
pub fn ground_truth_labels(
    scenario: &Scenario,
    agent: u32,
    view_frame: usize,
    frame: usize,
    sensor: &SensorConfig,
) -> Result<Raster<u8>> {
    ground_truth_labels_without(scenario, agent, view_frame, frame, sensor, &[])
}

/// [`ground_truth_labels`] with the agents in `exclude` left out.
pub fn ground_truth_labels_without(
    scenario: &Scenario,
    agent: u32,
    view_frame: usize,
    frame: usize,
    sensor: &SensorConfig,
    exclude: &[u32],
) -> Result<Raster<u8>> {
    check_frame(scenario, view_frame)?;
    check_frame(scenario, frame)?;
    let spec = sensor.grid()?;
    let view = scenario.pose_of(agent, view_frame)?;
    let mut labels = Raster::filled(spec.width, spec.height, CLASS_NULL as u8);
    for (body, rect) in scenario.bodies_at(frame) {
        if matches!(body, Body::Agent(id) if exclude.contains(&id)) {
            continue;
        }
        let class = if body == Body::Agent(agent) {
            CLASS_EGO
        } else {
            CLASS_ALLO
        };
        for_cells_in(&spec, &to_local(&view, &rect), |x, y| {
            labels.set(x, y, class as u8)
        });
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{AgentSpec, Template};

    fn parked(id: u32, x: f64, y: f64) -> AgentSpec {
        AgentSpec {
            id,
            length: 4.0,
            width: 2.0,
            start: Pose2::new(x, y, 0.0),
            goal: [x, y],
            speed: 0.0,
            start_delay: 0.0,
            communicating: true,
        }
    }

    fn scenario(agents: Vec<AgentSpec>, statics: Vec<OrientedRect>) -> Scenario {
        let ids = agents.iter().map(|a| a.id).collect();
        Scenario {
            template: Template::CrissCross,
            workspace: [100.0, 100.0],
            frame_period: 0.5,
            duration: 10,
            agents,
            static_obstacles: statics,
            seed: 0,
            comm_order: ids,
        }
    }

    #[test]
    fn empty_scene_maxes_out_every_ray() {
        let s = scenario(vec![parked(0, 50.0, 50.0)], vec![]);
        let f = render_lidar(&s, 0, 0, &SensorConfig::default()).unwrap();
        assert!(f.scan.iter().all(|&(_, r)| r == 30.0));
        assert!(f.raster.data().iter().all(|&h| !h));
        assert!(f.seg.data().iter().all(|&c| c != CLASS_ALLO as u8));
    }

    #[test]
    fn face_at_five_meters() {
        let wall = OrientedRect::new([7.0, 0.0], 0.0, 4.0, 6.0);
        let s = scenario(vec![parked(0, 0.0, 0.0)], vec![wall]);
        let f = render_lidar(&s, 0, 0, &SensorConfig::default()).unwrap();
        assert!((f.scan[0].1 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn occluded_agent_is_not_labeled() {
        let s = scenario(
            vec![
                parked(0, 0.0, 0.0),
                parked(1, 10.0, 0.0),
                parked(2, 20.0, 0.0),
            ],
            vec![],
        );
        let sensor = SensorConfig::default();
        let f = render_lidar(&s, 0, 0, &sensor).unwrap();
        let spec = sensor.grid().unwrap();
        let (bx, by) = spec.cell_of([20.0, 0.0]).unwrap();
        let (ax, ay) = spec.cell_of([10.0, 0.0]).unwrap();
        assert_eq!(*f.seg.get(bx, by), CLASS_NULL as u8);
        assert_eq!(*f.seg.get(ax, ay), CLASS_ALLO as u8);
        let mask = visibility_mask(&s, 0, 0, &sensor).unwrap();
        assert!(!*mask.get(bx, by));
        assert!(*mask.get(ax, ay));
    }

    #[test]
    fn labels_stay_within_range() {
        let s = scenario(vec![parked(0, 0.0, 0.0), parked(1, 40.0, 0.0)], vec![]);
        let f = render_lidar(&s, 0, 0, &SensorConfig::default()).unwrap();
        assert!(f.seg.data().iter().all(|&c| c != CLASS_ALLO as u8));
    }

    #[test]
    fn frame_out_of_range() {
        let s = scenario(vec![parked(0, 0.0, 0.0)], vec![]);
        assert!(matches!(
            render_lidar(&s, 0, 10, &SensorConfig::default()),
            Err(Error::Horizon(_))
        ));
    }
}
