use super::{Body, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RolloutResult {
    pub hard_collision: bool,
    /// Offset from `t0` (1-based waypoint index) of the first overlapping frame.
    pub first_collision_frame: Option<usize>,
}

/// Replays `waypoints` (ego frame at `t0`, one per frame starting at `t0 + 1`) with the
/// ego footprint while every other body follows its script. The ego's heading follows the
/// segment direction and is held when the ego does not move.
pub fn rollout_and_check(
    scenario: &Scenario,
    ego: u32,
    waypoints: &[[f64; 2]],
    t0: usize,
) -> Result<RolloutResult> {
    if t0 + waypoints.len() >= scenario.duration {
        return Err(Error::Horizon(format!(
            "rollout from frame {t0} over {} steps exceeds duration {}",
            waypoints.len(),
            scenario.duration
        )));
    }
    let spec = scenario.agent(ego)?;
    let start = scenario.pose_of(ego, t0)?;
    let mut prev = [0.0, 0.0];
    let mut heading = 0.0;
    for (k, wp) in waypoints.iter().enumerate() {
        let (dx, dy) = (wp[0] - prev[0], wp[1] - prev[1]);
        if dx.hypot(dy) > 1e-9 {
            heading = dy.atan2(dx);
        }
        prev = *wp;
        let pose = start.compose(&Pose2::new(wp[0], wp[1], heading));
        let footprint = OrientedRect::from_pose(&pose, spec.length, spec.width);
        let frame = t0 + k + 1;
        let hit = scenario
            .bodies_at(frame)
            .iter()
            .any(|(body, rect)| *body != Body::Agent(ego) && footprint.overlaps(rect));
        if hit {
            return Ok(RolloutResult {
                hard_collision: true,
                first_collision_frame: Some(k + 1),
            });
        }
    }
    Ok(RolloutResult {
        hard_collision: false,
        first_collision_frame: None,
    })
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

    fn world(agents: Vec<AgentSpec>) -> Scenario {
        let ids = agents.iter().map(|a| a.id).collect();
        Scenario {
            template: Template::CrissCross,
            workspace: [50.0, 50.0],
            frame_period: 0.5,
            duration: 20,
            agents,
            static_obstacles: vec![],
            seed: 0,
            comm_order: ids,
        }
    }

    #[test]
    fn stop_trajectory_in_empty_neighbourhood() {
        let s = world(vec![parked(0, 0.0, 0.0), parked(1, 20.0, 0.0)]);
        let r = rollout_and_check(&s, 0, &[[0.0, 0.0]; 15], 2).unwrap();
        assert!(!r.hard_collision);
    }

    #[test]
    fn overlap_detected_on_first_frame() {
        let s = world(vec![parked(0, 0.0, 0.0), parked(1, 5.0, 0.0)]);
        let r = rollout_and_check(&s, 0, &[[5.0, 0.0]; 3], 0).unwrap();
        assert_eq!(r.first_collision_frame, Some(1));
    }

    #[test]
    fn touching_edge_is_legal() {
        // ego length 4 placed so its front edge meets the other car's rear edge
        let s = world(vec![parked(0, 0.0, 0.0), parked(1, 10.0, 0.0)]);
        let r = rollout_and_check(&s, 0, &[[6.0, 0.0]], 0).unwrap();
        assert!(!r.hard_collision);
        let r = rollout_and_check(&s, 0, &[[6.01, 0.0]], 0).unwrap();
        assert!(r.hard_collision);
    }

    #[test]
    fn horizon_beyond_duration() {
        let s = world(vec![parked(0, 0.0, 0.0)]);
        assert!(matches!(
            rollout_and_check(&s, 0, &[[0.0, 0.0]; 15], 5),
            Err(Error::Horizon(_))
        ));
    }
}
