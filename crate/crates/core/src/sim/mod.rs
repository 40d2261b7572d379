//! Scripted multi-agent world: scenario generation, lidar/segmentation rendering, and
//! trajectory rollout with hard-collision detection.

mod generate;
mod io;
mod lidar;
mod rollout;

pub use generate::{sample_scenario, sample_scenario_with, BlindCornerParams, CrissCrossParams};
pub use io::{
    load_scenario, save_scenario, scenario_from_str, scenario_to_string, SCENARIO_FORMAT_VERSION,
};
pub use lidar::{
    ground_truth_labels, ground_truth_labels_without, render_lidar, visibility_mask, LidarFrame,
    SensorConfig,
};
pub use rollout::{rollout_and_check, RolloutResult};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedRect, Pose2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    CrissCross,
    BlindCorner,
}

impl std::str::FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "crisscross" => Ok(Template::CrissCross),
            "blindcorner" => Ok(Template::BlindCorner),
            _ => Err(Error::Config(format!("unknown scenario template '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    pub length: f64,
    pub width: f64,
    pub start: Pose2,
    pub goal: [f64; 2],
    pub speed: f64,
    pub start_delay: f64,
    pub communicating: bool,
}

impl AgentSpec {
    fn route(&self) -> ([f64; 2], f64) {
        let dx = self.goal[0] - self.start.x;
        let dy = self.goal[1] - self.start.y;
        let len = dx.hypot(dy);
        if len < 1e-12 {
            ([self.start.theta.cos(), self.start.theta.sin()], 0.0)
        } else {
            ([dx / len, dy / len], len)
        }
    }

    /// Ground-truth pose: parked at start until `start_delay`, straight line to the goal at
    /// constant speed, parked at the goal afterwards.
    pub fn pose_at(&self, time: f64) -> Pose2 {
        let (dir, len) = self.route();
        let travelled = (self.speed * (time - self.start_delay)).clamp(0.0, len);
        let heading = if len > 0.0 {
            dir[1].atan2(dir[0])
        } else {
            self.start.theta
        };
        Pose2::new(
            self.start.x + dir[0] * travelled,
            self.start.y + dir[1] * travelled,
            heading,
        )
    }

    pub fn footprint_at(&self, time: f64) -> OrientedRect {
        OrientedRect::from_pose(&self.pose_at(time), self.length, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.width > 0.0) {
            return Err(Error::Config(format!(
                "agent {} footprint must be positive",
                self.id
            )));
        }
        if !(self.speed >= 0.0) || !(self.start_delay >= 0.0) {
            return Err(Error::Config(format!(
                "agent {} speed and delay must be non-negative",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub template: Template,
    pub workspace: [f64; 2],
    pub frame_period: f64,
    pub duration: usize,
    pub agents: Vec<AgentSpec>,
    pub static_obstacles: Vec<OrientedRect>,
    pub seed: u64,
    /// Agents ids in the order they become communicating as `n_com` grows.
    pub comm_order: Vec<u32>,
}

/// What a rectangle in the world belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Body {
    Agent(u32),
    Static(usize),
}

impl Scenario {
    pub fn time_of(&self, frame: usize) -> f64 {
        frame as f64 * self.frame_period
    }

    pub fn agent(&self, id: u32) -> Result<&AgentSpec> {
        self.agents
            .iter()
            .find(|a| a.id == id)
            .ok_or_else(|| Error::Config(format!("scenario has no agent {id}")))
    }

    pub fn pose_of(&self, id: u32, frame: usize) -> Result<Pose2> {
        Ok(self.agent(id)?.pose_at(self.time_of(frame)))
    }

    /// Every footprint at a frame, agents first.
    pub fn bodies_at(&self, frame: usize) -> Vec<(Body, OrientedRect)> {
        let time = self.time_of(frame);
        self.agents
            .iter()
            .map(|a| (Body::Agent(a.id), a.footprint_at(time)))
            .chain(
                self.static_obstacles
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (Body::Static(i), *r)),
            )
            .collect()
    }

    pub fn communicating_ids(&self) -> Vec<u32> {
        self.agents
            .iter()
            .filter(|a| a.communicating)
            .map(|a| a.id)
            .collect()
    }

    /// Copy with the first `n_com` agents of `comm_order` flagged as communicating.
    pub fn with_n_com(&self, n_com: usize) -> Result<Scenario> {
        if n_com == 0 || n_com > self.agents.len() {
            return Err(Error::Config(format!(
                "n_com must be in 1..={}, got {n_com}",
                self.agents.len()
            )));
        }
        let chosen = &self.comm_order[..n_com];
        let mut out = self.clone();
        for a in &mut out.agents {
            a.communicating = chosen.contains(&a.id);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_period > 0.0) {
            return Err(Error::Config("frame period must be positive".into()));
        }
        if self.duration == 0 {
            return Err(Error::Config("scenario duration must be positive".into()));
        }
        for a in &self.agents {
            a.validate()?;
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.agents.len() {
            return Err(Error::Config("duplicate agent ids".into()));
        }
        let mut order = self.comm_order.clone();
        order.sort_unstable();
        if order != ids {
            return Err(Error::Config(
                "comm_order must be a permutation of agent ids".into(),
            ));
        }
        Ok(())
    }

    /// First frame at which two scripted footprints (or an agent and a static obstacle)
    /// overlap, if any.
    pub fn first_scripted_collision(&self) -> Option<(usize, Body, Body)> {
        for frame in 0..self.duration {
            let bodies = self.bodies_at(frame);
            for i in 0..bodies.len() {
                for j in (i + 1)..bodies.len() {
                    if matches!(
                        (bodies[i].0, bodies[j].0),
                        (Body::Static(_), Body::Static(_))
                    ) {
                        continue;
                    }
                    if bodies[i].1.overlaps(&bodies[j].1) {
                        return Some((frame, bodies[i].0, bodies[j].0));
                    }
                }
            }
        }
        None
    }
}
