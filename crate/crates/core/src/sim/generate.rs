use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentSpec, Scenario, Template};
use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Pose2};

/// Independent RNG streams derived from one scenario seed.
const STREAM_LAYOUT: u64 = 0;
const STREAM_COMM: u64 = 1;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrissCrossParams {
    pub workspace: [f64; 2],
    pub margin: f64,
    pub min_start_separation: f64,
    pub min_travel: f64,
    pub speed_range: (f64, f64),
    pub delay_range: (f64, f64),
    pub footprint: (f64, f64),
    pub frame_period: f64,
    pub duration: usize,
    /// Extra clearance enforced between scripted agents during generation.
    pub safety_margin: f64,
    pub speed_attempts: usize,
    pub route_budget: usize,
}

impl Default for CrissCrossParams {
    fn default() -> Self {
        Self {
            workspace: [100.0, 100.0],
            margin: 5.0,
            min_start_separation: 10.0,
            min_travel: 40.0,
            speed_range: (2.0, 8.0),
            delay_range: (0.0, 4.0),
            footprint: (4.5, 2.0),
            frame_period: 0.5,
            duration: 60,
            safety_margin: 0.5,
            speed_attempts: 40,
            route_budget: 400,
        }
    }
}

/// Geometry of the blind-corner fixture. The intersection center is the world origin; the
/// ego waits south of it facing north, a slow long crosser drives west through it, and an
/// observer is parked at the north-west corner with a clear view of the crossing lane. A van
/// parked beside the ego makes waiting in place costly.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindCornerParams {
    pub frame_period: f64,
    pub duration: usize,
    /// Frame at which the ego will be asked to plan.
    pub decision_frame: usize,
    pub ego_distance: (f64, f64),
    /// Building occupying the south-east corner block.
    pub building: OrientedRect,
    /// Lateral offset (west) of a van parked beside the ego's waiting position.
    pub van_offset: f64,
    pub crosser_footprint: (f64, f64),
    pub crosser_speed: (f64, f64),
    pub crosser_lane_y: f64,
    /// Seconds after the decision time at which the crosser's front reaches the ego lane.
    pub crosser_arrival: (f64, f64),
    pub observer_anchor: [f64; 2],
    pub observer_jitter: f64,
    pub car: (f64, f64),
    pub trailing_gap: (f64, f64),
    /// Region `(min, max)` where the additional parked agents are dropped.
    pub parked_region: ([f64; 2], [f64; 2]),
    pub attempts: usize,
}

impl Default for BlindCornerParams {
    fn default() -> Self {
        Self {
            frame_period: 0.5,
            duration: 60,
            decision_frame: 10,
            ego_distance: (31.0, 35.0),
            building: OrientedRect::new([14.0, -14.0], 0.0, 20.0, 20.0),
            van_offset: 3.0,
            crosser_footprint: (10.0, 2.5),
            crosser_speed: (2.5, 3.5),
            crosser_lane_y: 2.0,
            crosser_arrival: (1.0, 2.0),
            observer_anchor: [-9.0, 9.0],
            observer_jitter: 1.5,
            car: (4.5, 2.0),
            trailing_gap: (7.0, 10.0),
            parked_region: ([10.0, 9.0], [40.0, 40.0]),
            attempts: 200,
        }
    }
}

/// Samples a scenario with the template's default parameters.
pub fn sample_scenario(
    template: Template,
    n_agents: usize,
    n_com: usize,
    seed: u64,
) -> Result<Scenario> {
    match template {
        Template::CrissCross => {
            sample_scenario_with(&CrissCrossParams::default(), n_agents, n_com, seed)
        }
        Template::BlindCorner => blind_corner(&BlindCornerParams::default(), n_agents, n_com, seed),
    }
}

fn check_counts(n_agents: usize, n_com: usize) -> Result<()> {
    if n_agents == 0 || n_com == 0 || n_com > n_agents {
        return Err(Error::Config(format!(
            "need 1 <= n_com <= n_agents, got n_com={n_com}, n_agents={n_agents}"
        )));
    }
    Ok(())
}

fn collides_with_any(
    candidate: &AgentSpec,
    others: &[AgentSpec],
    statics: &[OrientedRect],
    frame_period: f64,
    duration: usize,
    margin: f64,
) -> bool {
    (0..duration).any(|frame| {
        let t = frame as f64 * frame_period;
        let fp = candidate.footprint_at(t).inflated(margin);
        others
            .iter()
            .any(|o| fp.overlaps(&o.footprint_at(t).inflated(margin)))
            || statics.iter().any(|s| fp.overlaps(s))
    })
}

/// CrissCross: straight-line movers with random routes. Speeds and delays are assigned
/// agent by agent with rejection against every agent already placed; an agent whose route
/// admits no collision-free speed profile gets a fresh route.
pub fn sample_scenario_with(
    params: &CrissCrossParams,
    n_agents: usize,
    n_com: usize,
    seed: u64,
) -> Result<Scenario> {
    check_counts(n_agents, n_com)?;
    let mut rng = rng_for(seed, STREAM_LAYOUT);
    let lo = [params.margin, params.margin];
    let hi = [
        params.workspace[0] - params.margin,
        params.workspace[1] - params.margin,
    ];
    let mut agents: Vec<AgentSpec> = Vec::with_capacity(n_agents);
    let mut routes_left = params.route_budget * n_agents;

    for id in 0..n_agents as u32 {
        'route: loop {
            if routes_left == 0 {
                return Err(Error::Generation {
                    seed,
                    reason: format!("route budget exhausted while placing agent {id}"),
                });
            }
            routes_left -= 1;
            let start = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
            let goal = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
            let travel = (goal[0] - start[0]).hypot(goal[1] - start[1]);
            if travel < params.min_travel {
                continue;
            }
            if agents.iter().any(|a| {
                (a.start.x - start[0]).hypot(a.start.y - start[1]) < params.min_start_separation
            }) {
                continue;
            }
            let heading = (goal[1] - start[1]).atan2(goal[0] - start[0]);
            for _ in 0..params.speed_attempts {
                let candidate = AgentSpec {
                    id,
                    length: params.footprint.0,
                    width: params.footprint.1,
                    start: Pose2::new(start[0], start[1], heading),
                    goal,
                    speed: rng.gen_range(params.speed_range.0..=params.speed_range.1),
                    start_delay: rng.gen_range(params.delay_range.0..=params.delay_range.1),
                    communicating: false,
                };
                if !collides_with_any(
                    &candidate,
                    &agents,
                    &[],
                    params.frame_period,
                    params.duration,
                    params.safety_margin,
                ) {
                    agents.push(candidate);
                    break 'route;
                }
            }
        }
    }

    let mut comm_order: Vec<u32> = (0..n_agents as u32).collect();
    comm_order.shuffle(&mut rng_for(seed, STREAM_COMM));
    Scenario {
        template: Template::CrissCross,
        workspace: params.workspace,
        frame_period: params.frame_period,
        duration: params.duration,
        agents,
        static_obstacles: Vec::new(),
        seed,
        comm_order,
    }
    .with_n_com(n_com)
}

/// BlindCorner fixture. Agent roles: 0 ego, 1 observer, 2 crosser, 3 trailing car behind
/// the ego, 4.. parked cars. Communication is granted in role order, so `n_com = 2` always
/// means ego plus observer.
fn blind_corner(
    params: &BlindCornerParams,
    n_agents: usize,
    n_com: usize,
    seed: u64,
) -> Result<Scenario> {
    check_counts(n_agents, n_com)?;
    if n_agents < 3 {
        return Err(Error::Config(
            "blind corner needs at least 3 agents (ego, observer, crosser)".into(),
        ));
    }
    let mut rng = rng_for(seed, STREAM_LAYOUT);
    let dt = params.frame_period;
    let horizon_end = params.duration as f64 * dt;
    let t_dec = params.decision_frame as f64 * dt;
    let (car_len, car_w) = params.car;
    let north = std::f64::consts::FRAC_PI_2;

    let ego_d = rng.gen_range(params.ego_distance.0..=params.ego_distance.1);
    // The ego holds at its stop line well past the planning window.
    let ego = AgentSpec {
        id: 0,
        length: car_len,
        width: car_w,
        start: Pose2::new(0.0, -ego_d, north),
        goal: [0.0, 60.0],
        speed: 5.0,
        start_delay: t_dec + 20.0,
        communicating: false,
    };

    let observer_pos = [
        params.observer_anchor[0] + rng.gen_range(-params.observer_jitter..=params.observer_jitter),
        params.observer_anchor[1] + rng.gen_range(-params.observer_jitter..=params.observer_jitter),
    ];
    let observer = AgentSpec {
        id: 1,
        length: car_len,
        width: car_w,
        start: Pose2::new(observer_pos[0], observer_pos[1], 0.0),
        goal: observer_pos,
        speed: 0.0,
        start_delay: 0.0,
        communicating: false,
    };

    let (cl, cw) = params.crosser_footprint;
    let speed = rng.gen_range(params.crosser_speed.0..=params.crosser_speed.1);
    let arrival = rng.gen_range(params.crosser_arrival.0..=params.crosser_arrival.1);
    // Front edge reaches x = +car_w/2 at t_dec + arrival; the crosser drives toward -x.
    let center_at_arrival = 0.5 * car_w + 0.5 * cl;
    let start_x = center_at_arrival + speed * (t_dec + arrival);
    let crosser = AgentSpec {
        id: 2,
        length: cl,
        width: cw,
        start: Pose2::new(start_x, params.crosser_lane_y, std::f64::consts::PI),
        goal: [start_x - speed * horizon_end, params.crosser_lane_y],
        speed,
        start_delay: 0.0,
        communicating: false,
    };

    let van = OrientedRect::new([-params.van_offset, -ego_d], north, car_len, car_w);
    let statics = vec![params.building, van];
    let mut agents = vec![ego, observer, crosser];
    if n_agents > 3 {
        let gap = rng.gen_range(params.trailing_gap.0..=params.trailing_gap.1);
        let y = -ego_d - car_len - gap;
        agents.push(AgentSpec {
            id: 3,
            length: car_len,
            width: car_w,
            start: Pose2::new(0.0, y, north),
            goal: [0.0, 60.0],
            speed: 5.0,
            start_delay: t_dec + 21.0,
            communicating: false,
        });
    }
    let (rlo, rhi) = params.parked_region;
    for id in 4..n_agents as u32 {
        let mut placed = false;
        for _ in 0..params.attempts {
            let pos = [rng.gen_range(rlo[0]..rhi[0]), rng.gen_range(rlo[1]..rhi[1])];
            let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
            let candidate = AgentSpec {
                id,
                length: car_len,
                width: car_w,
                start: Pose2::new(pos[0], pos[1], heading),
                goal: pos,
                speed: 0.0,
                start_delay: 0.0,
                communicating: false,
            };
            if !collides_with_any(&candidate, &agents, &statics, dt, params.duration, 1.0) {
                agents.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Generation {
                seed,
                reason: format!("could not place parked agent {id}"),
            });
        }
    }

    let scenario = Scenario {
        template: Template::BlindCorner,
        workspace: [100.0, 100.0],
        frame_period: dt,
        duration: params.duration,
        agents,
        static_obstacles: statics,
        seed,
        comm_order: (0..n_agents as u32).collect(),
    };
    if let Some((frame, a, b)) = scenario.first_scripted_collision() {
        return Err(Error::Generation {
            seed,
            reason: format!("scripted collision between {a:?} and {b:?} at frame {frame}"),
        });
    }
    scenario.with_n_com(n_com)
}
