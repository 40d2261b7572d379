//! Query/response protocol between agents, cost fusion and trajectory ranking.

pub mod codec;
mod network;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use codec::{decode_query, decode_response, encode_query, encode_response};
pub use network::{BandwidthLedger, LinkRecord, MessageKind, Network};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::grid::{Costmap, EntropyMap, Raster};
use crate::trajectory::{score_trajectories_in_view, TrajectoryDictionary};

/// Score given to trajectories without a single valid sample.
pub const SENTINEL_SCORE: f64 = f64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    VerbatimSum,
    #[default]
    WeightedMean,
}

impl std::str::FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim_sum" => Ok(FusionMode::VerbatimSum),
            "weighted_mean" => Ok(FusionMode::WeightedMean),
            _ => Err(Error::Config(format!("unknown fusion mode '{s}'"))),
        }
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::VerbatimSum => "verbatim_sum",
            FusionMode::WeightedMean => "weighted_mean",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub theta: f64,
    pub d_sat: f64,
    pub entropy_floor: f64,
    pub fusion_mode: FusionMode,
    pub comm_range: f64,
    /// Whether the ego answers its own query.
    pub include_self: bool,
    pub k_values: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            d_sat: 3.0,
            entropy_floor: 1e-3,
            fusion_mode: FusionMode::WeightedMean,
            comm_range: 100.0,
            include_self: true,
            k_values: vec![1, 10],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_floor > 0.0) {
            return Err(Error::Config("entropy floor must be positive".into()));
        }
        if !(self.comm_range > 0.0) {
            return Err(Error::Config("comm range must be positive".into()));
        }
        if !(self.d_sat > 0.0) {
            return Err(Error::Config("d_sat must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::Config("theta must be in [0, 1)".into()));
        }
        if self.k_values.contains(&0) {
            return Err(Error::Config("k values must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostQuery {
    pub ego_id: u32,
    /// Global x, y, theta of the querying agent.
    pub ego_pose: [f32; 3],
    pub dict_id: u32,
    pub n: u16,
    pub t: u16,
}

impl CostQuery {
    pub fn new(ego_id: u32, pose: &Pose2, dict: &TrajectoryDictionary) -> Result<Self> {
        let n = u16::try_from(dict.len())
            .map_err(|_| Error::Config("dictionary too large for the wire format".into()))?;
        let t = u16::try_from(dict.horizon)
            .map_err(|_| Error::Config("horizon too large for the wire format".into()))?;
        Ok(Self {
            ego_id,
            ego_pose: [pose.x as f32, pose.y as f32, pose.theta as f32],
            dict_id: dict.id,
            n,
            t,
        })
    }

    pub fn pose(&self) -> Pose2 {
        Pose2::new(
            self.ego_pose[0] as f64,
            self.ego_pose[1] as f64,
            self.ego_pose[2] as f64,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ResponseStatus {
    Ok = 0,
    UnknownDictionary = 1,
    ShapeMismatch = 2,
    MapUnavailable = 3,
}

impl ResponseStatus {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Ok),
            1 => Some(Self::UnknownDictionary),
            2 => Some(Self::ShapeMismatch),
            3 => Some(Self::MapUnavailable),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub cost: f32,
    pub uncertainty: f32,
    pub valid: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostResponse {
    pub responder_id: u32,
    pub status: ResponseStatus,
    /// `n·t` records, trajectory-major.
    pub records: Vec<Record>,
}

impl CostResponse {
    pub fn error(responder_id: u32, status: ResponseStatus) -> Self {
        Self {
            responder_id,
            status,
            records: Vec::new(),
        }
    }
}

/// Costmaps an agent serves. A querier's own body is not an obstacle to it, so a source
/// may tailor the map to the querier.
pub trait CostmapSource: Send + Sync {
    /// Costmap served to `querier`, whose pose is given in the serving agent's frame.
    fn costmap_for(&self, querier: u32, querier_pose: &Pose2) -> Result<Arc<Costmap>>;
}

/// One shared costmap for every other agent plus one for the owner's own queries.
#[derive(Debug, Clone)]
pub struct FixedCostmaps {
    pub owner: u32,
    pub shared: Arc<Costmap>,
    pub own: Arc<Costmap>,
}

impl CostmapSource for FixedCostmaps {
    fn costmap_for(&self, querier: u32, _querier_pose: &Pose2) -> Result<Arc<Costmap>> {
        Ok(if querier == self.owner {
            Arc::clone(&self.own)
        } else {
            Arc::clone(&self.shared)
        })
    }
}

/// One agent's view of the world at the decision frame: its global pose, its maps in its
/// own grid, and the shared dictionary.
#[derive(Clone)]
pub struct AgentEndpoint {
    pub id: u32,
    pub pose: Pose2,
    pub costmaps: Arc<dyn CostmapSource>,
    pub entropy: Arc<EntropyMap>,
    /// Cells the agent observed; samples elsewhere are reported invalid. `None` trusts the
    /// whole grid.
    pub view: Option<Arc<Raster<bool>>>,
    pub dictionary: Arc<TrajectoryDictionary>,
}

impl AgentEndpoint {
    /// Endpoint serving the same costmap to everyone, itself included.
    pub fn with_costmap(
        id: u32,
        pose: Pose2,
        costmap: Arc<Costmap>,
        entropy: Arc<EntropyMap>,
        dictionary: Arc<TrajectoryDictionary>,
    ) -> Self {
        Self {
            id,
            pose,
            costmaps: Arc::new(FixedCostmaps {
                owner: id,
                shared: Arc::clone(&costmap),
                own: costmap,
            }),
            entropy,
            view: None,
            dictionary,
        }
    }

    /// Samples this agent's maps along the querying agent's trajectories. A query from the
    /// agent itself uses the identity transform.
    pub fn handle_query(&self, query: &CostQuery) -> CostResponse {
        if query.dict_id != self.dictionary.id {
            return CostResponse::error(self.id, ResponseStatus::UnknownDictionary);
        }
        if query.n as usize != self.dictionary.len() || query.t as usize != self.dictionary.horizon
        {
            return CostResponse::error(self.id, ResponseStatus::ShapeMismatch);
        }
        let relative = if query.ego_id == self.id {
            Pose2::identity()
        } else {
            self.pose.relative(&query.pose())
        };
        let sampled = self
            .costmaps
            .costmap_for(query.ego_id, &relative)
            .and_then(|c| {
                score_trajectories_in_view(
                    &self.dictionary,
                    &relative,
                    &c,
                    &self.entropy,
                    self.view.as_deref(),
                )
            });
        match sampled {
            Ok(sampled) => CostResponse {
                responder_id: self.id,
                status: ResponseStatus::Ok,
                records: sampled
                    .iter()
                    .flat_map(|s| s.records.iter())
                    .map(|r| Record {
                        cost: r.cost as f32,
                        uncertainty: r.uncertainty as f32,
                        valid: r.valid,
                    })
                    .collect(),
            },
            Err(e) => {
                log::warn!(
                    "agent {} cannot answer agent {}: {e}",
                    self.id,
                    query.ego_id
                );
                CostResponse::error(self.id, ResponseStatus::MapUnavailable)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRanking {
    pub scores: Vec<f64>,
    /// Trajectory indices by ascending score, ties by index.
    pub order: Vec<usize>,
    pub contributing_agents: Vec<u32>,
}

impl FusedRanking {
    pub fn top_k(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }
}

/// Stable ascending argsort.
pub fn argsort(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order
}

/// Fuses `n × t` responses into one score per trajectory. Error responses are skipped;
/// responses are summed in responder-id order so the result does not depend on arrival
/// order.
pub fn fuse(
    responses: &[CostResponse],
    n: usize,
    t: usize,
    config: &PipelineConfig,
) -> Result<FusedRanking> {
    if responses.is_empty() {
        return Err(Error::Protocol("no responses to fuse".into()));
    }
    if !(config.entropy_floor > 0.0) {
        return Err(Error::Config("entropy floor must be positive".into()));
    }
    let mut usable: Vec<&CostResponse> = responses
        .iter()
        .filter(|r| r.status == ResponseStatus::Ok)
        .collect();
    usable.sort_by_key(|r| r.responder_id);
    if usable
        .windows(2)
        .any(|w| w[0].responder_id == w[1].responder_id)
    {
        return Err(Error::Protocol("duplicate responder id".into()));
    }
    if let Some(bad) = usable.iter().find(|r| r.records.len() != n * t) {
        return Err(Error::Protocol(format!(
            "responder {} sent {} records, expected {}",
            bad.responder_id,
            bad.records.len(),
            n * t
        )));
    }
    if usable.is_empty() {
        return Err(Error::Protocol("every response was an error".into()));
    }

    let eps = config.entropy_floor;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            let mut any = false;
            for resp in &usable {
                for rec in &resp.records[i * t..(i + 1) * t] {
                    if rec.valid {
                        let w = 1.0 / (rec.uncertainty as f64).max(eps);
                        num += rec.cost as f64 * w;
                        den += w;
                        any = true;
                    }
                }
            }
            match (any, config.fusion_mode) {
                (false, _) => SENTINEL_SCORE,
                (true, FusionMode::VerbatimSum) => num,
                (true, FusionMode::WeightedMean) => num / den,
            }
        })
        .collect();
    Ok(FusedRanking {
        order: argsort(&scores),
        scores,
        contributing_agents: usable.iter().map(|r| r.responder_id).collect(),
    })
}

/// Runs one ego's query through the network: every endpoint within range answers, the ego
/// fuses what arrives. Link traffic is appended to `ledger`.
pub fn ego_round(
    ego: &AgentEndpoint,
    endpoints: &[AgentEndpoint],
    network: &Network,
    round: u64,
    config: &PipelineConfig,
    ledger: &mut BandwidthLedger,
) -> Result<FusedRanking> {
    let query = CostQuery::new(ego.id, &ego.pose, &ego.dictionary)?;
    let query_bytes = encode_query(&query);
    let mut responses = Vec::new();
    if config.include_self {
        responses.push(ego.handle_query(&query));
    }
    for peer in endpoints {
        if peer.id == ego.id || peer.pose.distance_to(&ego.pose) > config.comm_range {
            continue;
        }
        let delivered = network.delivers(round, ego.id, peer.id, MessageKind::Query);
        ledger.record(LinkRecord {
            round,
            from: ego.id,
            to: peer.id,
            kind: MessageKind::Query,
            bytes: query_bytes.len(),
            delivered,
        });
        if !delivered {
            continue;
        }
        let reply = encode_response(&peer.handle_query(&decode_query(&query_bytes)?));
        let delivered = network.delivers(round, peer.id, ego.id, MessageKind::Response);
        ledger.record(LinkRecord {
            round,
            from: peer.id,
            to: ego.id,
            kind: MessageKind::Response,
            bytes: reply.len(),
            delivered,
        });
        if delivered {
            responses.push(decode_response(&reply)?);
        }
    }
    fuse(
        &responses,
        ego.dictionary.len(),
        ego.dictionary.horizon,
        config,
    )
}

/// One round for every endpoint acting as ego. Rounds are independent, so the output does
/// not depend on the order of `endpoints`.
pub fn broadcast_round(
    endpoints: &[AgentEndpoint],
    network: &Network,
    round: u64,
    config: &PipelineConfig,
    ledger: &mut BandwidthLedger,
) -> Result<BTreeMap<u32, FusedRanking>> {
    config.validate()?;
    network.validate()?;
    let mut out = BTreeMap::new();
    for ego in endpoints {
        out.insert(
            ego.id,
            ego_round(ego, endpoints, network, round, config, ledger)?,
        );
    }
    Ok(out)
}
