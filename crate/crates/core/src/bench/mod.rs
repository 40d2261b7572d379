//! Evaluation harness: runs the full forecast, map, exchange and rollout pipeline over a
//! generated suite and aggregates collision, ranking and segmentation metrics.

mod metrics;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{
    random_baseline, rank_cost_curve, segmentation_metrics, spearman, topk_collision_rate,
    topk_single, RankPoint, SegmentationCounts,
};

use crate::error::{Error, Result};
use crate::exchange::{
    ego_round, fuse, AgentEndpoint, BandwidthLedger, CostResponse, CostmapSource, FusedRanking,
    FusionMode, Network, PipelineConfig, Record, ResponseStatus, SENTINEL_SCORE,
};
use crate::forecast::{
    compose, compose_binary, oracle_forecast_without, CvBaseline, ForecastInput, ForecasterKind,
    ObjectTrack, Splat,
};
use crate::geometry::Pose2;
use crate::grid::{
    binarize, binarize_with, entropy, signed_distance, Costmap, EntropyMap, GridSpec,
    OccupancyForecast, Raster, CLASS_ALLO,
};
use crate::sim::{
    ground_truth_labels, rollout_and_check, sample_scenario, visibility_mask, Scenario,
    SensorConfig, Template,
};
use crate::trajectory::{
    generate_dictionary, score_trajectories_in_view, DictionaryConfig, TrajectoryDictionary,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub template: Template,
    pub n_agents: usize,
    pub n_com: Vec<usize>,
    pub n_scenarios: usize,
    /// First scenario seed; scenario `i` uses `seed + i` unless `seeds` is set.
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub k: Vec<usize>,
    pub fusion_mode: FusionMode,
    pub forecaster: ForecasterKind,
    pub theta: f64,
    pub d_sat: f64,
    pub entropy_floor: f64,
    pub comm_range: f64,
    pub include_self: bool,
    pub decision_frame: usize,
    /// Observed frames handed to the forecaster, current frame included.
    pub history_frames: usize,
    pub forecast_horizon: usize,
    pub segmentation: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            template: Template::CrissCross,
            n_agents: 20,
            n_com: vec![1, 5, 10, 15],
            n_scenarios: 100,
            seed: 0,
            seeds: Vec::new(),
            k: p.k_values,
            fusion_mode: p.fusion_mode,
            forecaster: ForecasterKind::CvBaseline,
            theta: p.theta,
            d_sat: p.d_sat,
            entropy_floor: p.entropy_floor,
            comm_range: p.comm_range,
            include_self: p.include_self,
            decision_frame: 10,
            history_frames: 2,
            forecast_horizon: 5,
            segmentation: true,
        }
    }
}

impl SuiteConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            theta: self.theta,
            d_sat: self.d_sat,
            entropy_floor: self.entropy_floor,
            fusion_mode: self.fusion_mode,
            comm_range: self.comm_range,
            include_self: self.include_self,
            k_values: self.k.clone(),
        }
    }

    pub fn scenario_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (0..self.n_scenarios as u64)
                .map(|i| self.seed + i)
                .collect()
        } else {
            self.seeds.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        if self.n_scenarios == 0 && self.seeds.is_empty() {
            return Err(Error::Config("n_scenarios must be at least 1".into()));
        }
        if self.n_com.is_empty() {
            return Err(Error::Config("n_com list is empty".into()));
        }
        if let Some(&bad) = self.n_com.iter().find(|&&n| n == 0 || n > self.n_agents) {
            return Err(Error::Config(format!(
                "n_com {bad} outside 1..={}",
                self.n_agents
            )));
        }
        if self.history_frames < 2 {
            return Err(Error::Config("history_frames must be at least 2".into()));
        }
        if self.decision_frame + 1 < self.history_frames {
            return Err(Error::Config(
                "decision frame leaves too little history".into(),
            ));
        }
        if self.forecast_horizon == 0 {
            return Err(Error::Config("forecast horizon must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedOutcome {
    pub trajectory: usize,
    /// `None` for trajectories without a single valid sample.
    pub score: Option<f64>,
    pub collided: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub ego: u32,
    pub n_com: usize,
    pub topk: BTreeMap<usize, f64>,
    pub random_baseline: f64,
    /// Every trajectory in ranked order.
    pub ranked: Vec<RankedOutcome>,
    pub responders: Vec<u32>,
    /// Per forecast step, over the cells the ego saw at the decision frame.
    pub segmentation: Vec<SegmentationCounts>,
    pub bytes_exchanged: usize,
}

impl MetricsRecord {
    pub fn ranking(&self) -> FusedRanking {
        let n = self.ranked.len();
        let mut scores = vec![0.0; n];
        for r in &self.ranked {
            scores[r.trajectory] = r.score.unwrap_or(SENTINEL_SCORE);
        }
        FusedRanking {
            scores,
            order: self.ranked.iter().map(|r| r.trajectory).collect(),
            contributing_agents: self.responders.clone(),
        }
    }

    pub fn collided(&self) -> Vec<bool> {
        let mut c = vec![false; self.ranked.len()];
        for r in &self.ranked {
            c[r.trajectory] = r.collided;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSegmentation {
    pub step: usize,
    pub accuracy: Option<f64>,
    pub miou: Option<f64>,
    pub allo_iou: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n_records: usize,
    pub topk: BTreeMap<usize, f64>,
    pub random_baseline: f64,
    pub rank_curve: Vec<RankPoint>,
    /// Spearman correlation between rank position and collision frequency.
    pub rank_collision_spearman: Option<f64>,
    pub segmentation: Vec<StepSegmentation>,
    pub mean_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub by_n_com: BTreeMap<usize, GroupSummary>,
    /// All records regardless of `n_com`.
    pub pooled: Option<GroupSummary>,
    pub failed_seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutput {
    pub records: Vec<MetricsRecord>,
    pub summary: SuiteSummary,
}

impl SuiteOutput {
    pub fn jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write(&self, jsonl: &Path, summary: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(jsonl)?);
        f.write_all(self.jsonl()?.as_bytes())?;
        f.flush()?;
        let text =
            serde_json::to_string_pretty(&self.summary).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(summary, text + "\n")?;
        Ok(())
    }
}

/// A querier whose visible blob has its centroid this close to the querier's pose is taken
/// to be that blob (meters).
pub const QUERIER_RADIUS: f64 = 2.5;

enum MapBasis {
    Cv {
        spec: GridSpec,
        tracks: Vec<ObjectTrack>,
        splats: Vec<Vec<Splat>>,
    },
    Oracle {
        scenario: Arc<Scenario>,
        sensor: SensorConfig,
    },
}

/// Costmaps rebuilt for each querier from the owner's forecast inputs with the querier's own
/// body left out. Built maps are cached per querier.
pub struct ForecastCostmaps {
    owner: u32,
    t0: usize,
    horizon: usize,
    theta: f64,
    d_sat: f64,
    own: Arc<Costmap>,
    shared: Arc<Costmap>,
    basis: MapBasis,
    cache: Mutex<BTreeMap<u32, Arc<Costmap>>>,
}

impl ForecastCostmaps {
    fn build(&self, querier: u32, querier_pose: &Pose2) -> Result<Arc<Costmap>> {
        let occupancy = match &self.basis {
            MapBasis::Cv {
                spec,
                tracks,
                splats,
            } => {
                let q = querier_pose.translation();
                let dist = |t: &ObjectTrack| (t.centroid[0] - q[0]).hypot(t.centroid[1] - q[1]);
                let skip = tracks
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| t.class == CLASS_ALLO && dist(t) <= QUERIER_RADIUS)
                    .min_by(|a, b| dist(a.1).total_cmp(&dist(b.1)))
                    .map(|(i, _)| i);
                if skip.is_none() {
                    return Ok(Arc::clone(&self.shared));
                }
                compose_binary(spec, splats, skip, self.theta)?
            }
            MapBasis::Oracle { scenario, sensor } => binarize(
                &oracle_forecast_without(
                    scenario,
                    self.owner,
                    self.t0,
                    self.horizon,
                    sensor,
                    &[querier],
                )?,
                self.theta,
            ),
        };
        Ok(Arc::new(signed_distance(&occupancy, self.d_sat)?))
    }
}

impl CostmapSource for ForecastCostmaps {
    fn costmap_for(&self, querier: u32, querier_pose: &Pose2) -> Result<Arc<Costmap>> {
        if querier == self.owner {
            return Ok(Arc::clone(&self.own));
        }
        if let Some(c) = self.cache.lock().expect("cache poisoned").get(&querier) {
            return Ok(Arc::clone(c));
        }
        let map = self.build(querier, querier_pose)?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(querier, Arc::clone(&map));
        Ok(map)
    }
}

/// Forecast and maps of one agent at the decision frame.
pub struct AgentMaps {
    pub pose: Pose2,
    pub forecast: OccupancyForecast,
    /// Every class as an obstacle.
    pub costmap: Arc<Costmap>,
    /// Without the agent's own class; what the agent plans against by itself.
    pub self_costmap: Arc<Costmap>,
    pub entropy: Arc<EntropyMap>,
    /// Cells visible to the agent at the decision frame.
    pub view: Arc<Raster<bool>>,
    pub sources: Arc<ForecastCostmaps>,
}

pub fn agent_maps(
    scenario: &Arc<Scenario>,
    agent: u32,
    config: &SuiteConfig,
    sensor: &SensorConfig,
) -> Result<AgentMaps> {
    let t0 = config.decision_frame;
    let (forecast, basis) = match config.forecaster {
        ForecasterKind::CvBaseline => {
            let input = ForecastInput::from_scenario(
                scenario,
                agent,
                t0,
                config.history_frames - 1,
                config.forecast_horizon,
                sensor,
            )?;
            input.validate()?;
            let model = CvBaseline::default();
            let tracks = model.tracks(&input);
            let splats = model.splats(&input.spec, input.horizon, input.frame_period, &tracks)?;
            let forecast = compose(&input.spec, &splats, None)?;
            let basis = MapBasis::Cv {
                spec: input.spec,
                tracks,
                splats,
            };
            (forecast, basis)
        }
        ForecasterKind::Oracle => {
            let forecast =
                oracle_forecast_without(scenario, agent, t0, config.forecast_horizon, sensor, &[])?;
            let basis = MapBasis::Oracle {
                scenario: Arc::clone(scenario),
                sensor: sensor.clone(),
            };
            (forecast, basis)
        }
    };
    let costmap = Arc::new(signed_distance(
        &binarize(&forecast, config.theta),
        config.d_sat,
    )?);
    let self_costmap = Arc::new(signed_distance(
        &binarize_with(&forecast, config.theta, false),
        config.d_sat,
    )?);
    let sources = Arc::new(ForecastCostmaps {
        owner: agent,
        t0,
        horizon: config.forecast_horizon,
        theta: config.theta,
        d_sat: config.d_sat,
        own: Arc::clone(&self_costmap),
        shared: Arc::clone(&costmap),
        basis,
        cache: Mutex::new(BTreeMap::new()),
    });
    Ok(AgentMaps {
        pose: scenario.pose_of(agent, t0)?,
        entropy: Arc::new(entropy(&forecast)),
        view: Arc::new(visibility_mask(scenario, agent, t0, sensor)?),
        forecast,
        costmap,
        self_costmap,
        sources,
    })
}

/// Rollout outcome of every dictionary trajectory for one ego.
pub fn rollout_all(
    scenario: &Scenario,
    ego: u32,
    dict: &TrajectoryDictionary,
    t0: usize,
) -> Result<Vec<bool>> {
    dict.entries
        .iter()
        .map(|t| Ok(rollout_and_check(scenario, ego, &t.waypoints, t0)?.hard_collision))
        .collect()
}

fn segmentation_counts(
    scenario: &Scenario,
    ego: u32,
    maps: &AgentMaps,
    config: &SuiteConfig,
    sensor: &SensorConfig,
) -> Result<Vec<SegmentationCounts>> {
    if !config.segmentation {
        return Ok(Vec::new());
    }
    let t0 = config.decision_frame;
    (1..=config.forecast_horizon)
        .map(|t| {
            let truth = ground_truth_labels(scenario, ego, t0, t0 + t, sensor)?;
            segmentation_metrics(&maps.forecast.argmax(t)?, &truth, Some(&maps.view))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn record(
    seed: u64,
    ego: u32,
    n_com: usize,
    ranking: &FusedRanking,
    collided: &[bool],
    segmentation: Vec<SegmentationCounts>,
    bytes_exchanged: usize,
    config: &SuiteConfig,
) -> Result<MetricsRecord> {
    let topk = config
        .k
        .iter()
        .map(|&k| Ok((k, topk_single(ranking, collided, k)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsRecord {
        seed,
        ego,
        n_com,
        topk,
        random_baseline: random_baseline(collided),
        ranked: ranking
            .order
            .iter()
            .map(|&i| RankedOutcome {
                trajectory: i,
                score: (ranking.scores[i] < SENTINEL_SCORE).then_some(ranking.scores[i]),
                collided: collided[i],
            })
            .collect(),
        responders: ranking.contributing_agents.clone(),
        segmentation,
        bytes_exchanged,
    })
}

/// Ego-only evaluation that bypasses the exchange layer: the agent scores the dictionary
/// on its own maps and ranks by the fused score of that single response.
pub fn single_agent_record(
    scenario: &Arc<Scenario>,
    ego: u32,
    config: &SuiteConfig,
    sensor: &SensorConfig,
    dict: &TrajectoryDictionary,
) -> Result<MetricsRecord> {
    let maps = agent_maps(scenario, ego, config, sensor)?;
    let sampled = score_trajectories_in_view(
        dict,
        &Pose2::identity(),
        &maps.self_costmap,
        &maps.entropy,
        Some(&maps.view),
    )?;
    let response = CostResponse {
        responder_id: ego,
        status: ResponseStatus::Ok,
        records: sampled
            .iter()
            .flat_map(|s| &s.records)
            .map(|r| Record {
                cost: r.cost as f32,
                uncertainty: r.uncertainty as f32,
                valid: r.valid,
            })
            .collect(),
    };
    let ranking = fuse(&[response], dict.len(), dict.horizon, &config.pipeline())?;
    let collided = rollout_all(scenario, ego, dict, config.decision_frame)?;
    let seg = segmentation_counts(scenario, ego, &maps, config, sensor)?;
    record(scenario.seed, ego, 1, &ranking, &collided, seg, 0, config)
}

/// All records of one scenario, ordered by `n_com` then ego id.
pub fn run_scenario(
    scenario: &Arc<Scenario>,
    config: &SuiteConfig,
    sensor: &SensorConfig,
    dict: &Arc<TrajectoryDictionary>,
    network: &Network,
) -> Result<Vec<MetricsRecord>> {
    let max_com = config.n_com.iter().copied().max().unwrap_or(1);
    let agents: Vec<u32> = scenario.comm_order[..max_com].to_vec();
    let t0 = config.decision_frame;
    let pipeline = config.pipeline();

    let prepared = agents
        .par_iter()
        .map(|&id| {
            let maps = agent_maps(scenario, id, config, sensor)?;
            let collided = rollout_all(scenario, id, dict, t0)?;
            let seg = segmentation_counts(scenario, id, &maps, config, sensor)?;
            Ok((id, (maps, collided, seg)))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;

    let mut records = Vec::new();
    for &n_com in &config.n_com {
        let mut members: Vec<u32> = scenario.comm_order[..n_com].to_vec();
        members.sort_unstable();
        let endpoints: Vec<AgentEndpoint> = members
            .iter()
            .map(|id| {
                let (maps, _, _) = &prepared[id];
                AgentEndpoint {
                    id: *id,
                    pose: maps.pose,
                    costmaps: Arc::clone(&maps.sources) as Arc<dyn CostmapSource>,
                    entropy: Arc::clone(&maps.entropy),
                    view: Some(Arc::clone(&maps.view)),
                    dictionary: Arc::clone(dict),
                }
            })
            .collect();
        for ego in &endpoints {
            let mut ledger = BandwidthLedger::default();
            let ranking = ego_round(ego, &endpoints, network, t0 as u64, &pipeline, &mut ledger)?;
            let (_, collided, seg) = &prepared[&ego.id];
            records.push(record(
                scenario.seed,
                ego.id,
                n_com,
                &ranking,
                collided,
                seg.clone(),
                ledger.total_bytes(),
                config,
            )?);
        }
    }
    Ok(records)
}

/// Generates and evaluates every scenario of the suite. Scenarios run in parallel; output
/// order depends only on the configuration.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteOutput> {
    run_suite_with(config, &SensorConfig::default(), &Network::default())
}

pub fn run_suite_with(
    config: &SuiteConfig,
    sensor: &SensorConfig,
    network: &Network,
) -> Result<SuiteOutput> {
    config.validate()?;
    network.validate()?;
    let dict = Arc::new(generate_dictionary(&DictionaryConfig::default())?);
    let max_com = config.n_com.iter().copied().max().unwrap_or(1);
    let results: Vec<(u64, Result<Vec<MetricsRecord>>)> = config
        .scenario_seeds()
        .into_par_iter()
        .map(|seed| {
            let out = sample_scenario(config.template, config.n_agents, max_com, seed)
                .and_then(|s| run_scenario(&Arc::new(s), config, sensor, &dict, network));
            (seed, out)
        })
        .collect();

    let mut records = Vec::new();
    let mut failed_seeds = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(e @ Error::Generation { .. }) => {
                log::warn!("{e}");
                failed_seeds.push(seed);
            }
            Err(e) => return Err(e),
        }
    }
    let mut summary = summarize(&records, &config.k)?;
    summary.failed_seeds = failed_seeds;
    Ok(SuiteOutput { records, summary })
}

fn group_summary(records: &[&MetricsRecord], ks: &[usize]) -> Result<GroupSummary> {
    let n = records.len();
    let rankings: Vec<FusedRanking> = records.iter().map(|r| r.ranking()).collect();
    let collided: Vec<Vec<bool>> = records.iter().map(|r| r.collided()).collect();
    let topk = ks
        .iter()
        .map(|&k| Ok((k, topk_collision_rate(&rankings, &collided, k)?)))
        .collect::<Result<_>>()?;
    let rank_curve = rank_cost_curve(&rankings, &collided)?;
    let positions: Vec<f64> = rank_curve.iter().map(|p| p.rank as f64).collect();
    let freqs: Vec<f64> = rank_curve.iter().map(|p| p.collision_frequency).collect();
    let steps = records
        .iter()
        .map(|r| r.segmentation.len())
        .max()
        .unwrap_or(0);
    let segmentation = (0..steps)
        .map(|s| {
            let mut c = SegmentationCounts::default();
            for r in records {
                if let Some(x) = r.segmentation.get(s) {
                    c.add(x);
                }
            }
            StepSegmentation {
                step: s + 1,
                accuracy: c.accuracy(),
                miou: c.miou(),
                allo_iou: c.iou(crate::grid::CLASS_ALLO),
            }
        })
        .collect();
    let denom = n.max(1) as f64;
    Ok(GroupSummary {
        n_records: n,
        topk,
        random_baseline: records.iter().map(|r| r.random_baseline).sum::<f64>() / denom,
        rank_curve,
        rank_collision_spearman: spearman(&positions, &freqs),
        segmentation,
        mean_bytes: records
            .iter()
            .map(|r| r.bytes_exchanged as f64)
            .sum::<f64>()
            / denom,
    })
}

/// Aggregates records per `n_com` and pooled. Records are put in canonical order first,
/// so the result does not depend on input order.
pub fn summarize(records: &[MetricsRecord], ks: &[usize]) -> Result<SuiteSummary> {
    let mut sorted: Vec<&MetricsRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.n_com, r.seed, r.ego));
    let mut groups: BTreeMap<usize, Vec<&MetricsRecord>> = BTreeMap::new();
    for r in &sorted {
        groups.entry(r.n_com).or_default().push(r);
    }
    let by_n_com = groups
        .iter()
        .map(|(&n, rs)| Ok((n, group_summary(rs, ks)?)))
        .collect::<Result<_>>()?;
    let pooled = if sorted.is_empty() {
        None
    } else {
        Some(group_summary(&sorted, ks)?)
    };
    Ok(SuiteSummary {
        by_n_com,
        pooled,
        failed_seeds: Vec::new(),
    })
}
