//! Multi-agent episode orchestration.
//!
//! Every optimized cell runs an agent instance; all instances read the same
//! [`QNetwork`]. Within a step every agent observes the same pre-action
//! snapshot, all tilt changes are applied jointly, the network is evaluated
//! again and each agent is rewarded with the relative change of its own
//! cell's reward metric. When learning, the step's experiences are pushed
//! and the shared network takes a gradient step before the next step, so
//! every instance sees the updated policy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::expert::{expert_action, ExpertThresholds};
use crate::kpi::{self, KpiRecord, KpiThresholds, NeighborMode, StateVector};
use crate::radiosim::{drop_users, LinkBudget, RadioParams};
use crate::rlcore::{select_action, Action, EpsilonSchedule, Experience, QNetwork, ReplayBuffer, RlConfig};
use crate::topology::{generate_hex_grid, optimized_cells, sample_episode_config, EpisodeConfig, ParameterRanges, SiteLayout};
use crate::{CellId, SimRng};

/// Optimization scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Variant {
    /// Rule-based expert system.
    #[cfg_attr(feature = "serde", serde(rename = "ES"))]
    Expert,
    /// RL without neighbour information in state and reward.
    #[cfg_attr(feature = "serde", serde(rename = "RLEN"))]
    Rlen,
    /// RL with neighbour information.
    #[cfg_attr(feature = "serde", serde(rename = "RLIN"))]
    Rlin,
    /// RLIN that keeps learning while optimizing the test network.
    #[cfg_attr(feature = "serde", serde(rename = "RLIN+"))]
    RlinPlus,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Expert, Variant::Rlen, Variant::Rlin, Variant::RlinPlus];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Expert => "ES",
            Variant::Rlen => "RLEN",
            Variant::Rlin => "RLIN",
            Variant::RlinPlus => "RLIN+",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
    }

    pub fn neighbor_mode(self) -> NeighborMode {
        match self {
            Variant::Rlen => NeighborMode::Exclude,
            _ => NeighborMode::Include,
        }
    }

    pub fn is_rl(self) -> bool {
        self != Variant::Expert
    }

    /// Variant whose pre-trained network this variant uses.
    pub fn checkpoint_variant(self) -> Option<Variant> {
        match self {
            Variant::Expert => None,
            Variant::Rlen => Some(Variant::Rlen),
            Variant::Rlin | Variant::RlinPlus => Some(Variant::Rlin),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    Pretrain,
    Evaluate,
}

/// Network and simulation settings of one campaign.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub rings: u32,
    pub optimized_rings: u32,
    pub steps_per_episode: usize,
    pub ranges: ParameterRanges,
    pub radio: RadioParams,
    pub kpi: KpiThresholds,
}

impl Scenario {
    pub fn training() -> Self {
        Scenario {
            rings: 2,
            optimized_rings: 1,
            steps_per_episode: 20,
            ranges: ParameterRanges::default(),
            radio: RadioParams::default(),
            kpi: KpiThresholds::default(),
        }
    }

    pub fn test() -> Self {
        Scenario {
            rings: 5,
            optimized_rings: 4,
            ..Scenario::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.optimized_rings >= self.rings {
            return Err(Error::Config(format!(
                "optimized_rings ({}) must be smaller than rings ({})",
                self.optimized_rings, self.rings
            )));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps_per_episode must be positive".into()));
        }
        self.ranges.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSpec {
    pub variant: Variant,
    pub mode: Mode,
    pub episodes: usize,
    pub seed: u64,
    pub scenario: Scenario,
    pub rl: RlConfig,
    pub expert: ExpertThresholds,
    /// Skip learning from cells that look settled (RLIN+ only).
    pub freeze_heuristic: bool,
}

impl CampaignSpec {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        match (self.mode, self.variant) {
            (Mode::Pretrain, Variant::Expert) => {
                return Err(Error::Config("the expert system has nothing to pre-train".into()))
            }
            (Mode::Pretrain, Variant::RlinPlus) => {
                return Err(Error::Config("RLIN+ is only valid in evaluate mode".into()))
            }
            _ => {}
        }
        if self.freeze_heuristic && self.variant != Variant::RlinPlus {
            return Err(Error::Config("the freeze heuristic applies to RLIN+ only".into()));
        }
        if self.rl.batch_size == 0 || self.rl.replay_capacity < self.rl.batch_size {
            return Err(Error::Config("replay capacity must hold at least one batch".into()));
        }
        if !self.expert.is_valid() {
            return Err(Error::Config("expert thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Whether this campaign updates the shared network.
    pub fn learns(&self) -> bool {
        self.mode == Mode::Pretrain || self.variant == Variant::RlinPlus
    }

    pub fn total_env_steps(&self) -> u64 {
        (self.episodes * self.scenario.steps_per_episode) as u64
    }
}

/// Seed of episode `index` in a campaign seeded with `campaign_seed`
/// (splitmix64 finaliser). Every variant evaluated with the same campaign
/// seed sees the same networks and UE drops.
pub fn episode_seed(campaign_seed: u64, index: usize) -> u64 {
    let mut z = campaign_seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG stream for one purpose within an episode or campaign.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const ENV_STREAM: u64 = 0;
const POLICY_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const REPLAY_STREAM: u64 = 3;

/// Sampled network of one episode with its cached link budget.
#[derive(Debug, Clone)]
pub struct EpisodeNetwork {
    pub layout: SiteLayout,
    pub config: EpisodeConfig,
    pub budget: LinkBudget,
}

impl EpisodeNetwork {
    /// Samples configuration and UE drop from the episode seed.
    pub fn sample(scenario: &Scenario, seed: u64) -> Result<Self> {
        let unit = generate_hex_grid(scenario.rings, 1.0);
        let optimized = optimized_cells(&unit, scenario.optimized_rings)?;
        let mut rng = stream_rng(seed, ENV_STREAM);
        let config = sample_episode_config(&unit, &optimized, &mut rng, &scenario.ranges, seed)?;
        let layout = unit.rescaled(config.inter_site_distance);
        let drop = drop_users(&layout, &config, &scenario.radio, &mut rng)?;
        let budget = LinkBudget::new(&layout, &config, &drop, &scenario.radio)?;
        Ok(EpisodeNetwork { layout, config, budget })
    }
}

/// Mean KPIs over the optimized cells.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NetworkAggregate {
    pub good_traffic: f64,
    pub good_coverage: f64,
    pub good_quality: f64,
    pub congestion_rate: f64,
    /// Every optimized cell has zero congestion.
    pub congestion_free: bool,
}

impl NetworkAggregate {
    pub fn from_kpis<'a>(kpis: impl Iterator<Item = &'a KpiRecord>) -> Self {
        let mut agg = NetworkAggregate {
            congestion_free: true,
            ..NetworkAggregate::default()
        };
        let mut n = 0usize;
        for k in kpis {
            n += 1;
            agg.good_traffic += k.good_traffic;
            agg.good_coverage += k.good_coverage;
            agg.good_quality += k.good_quality;
            agg.congestion_rate += k.congestion_rate;
            agg.congestion_free &= k.congestion_rate == 0.0;
        }
        if n > 0 {
            let n = n as f64;
            agg.good_traffic /= n;
            agg.good_coverage /= n;
            agg.good_quality /= n;
            agg.congestion_rate /= n;
        }
        agg
    }
}

/// One optimized cell at one step. At step 0 only the baseline KPIs and tilt
/// are present.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellStep {
    pub cell: CellId,
    pub state: Option<StateVector>,
    pub action: Option<Action>,
    pub reward: Option<f64>,
    /// Electrical tilt after the step's action.
    pub electrical_tilt: f64,
    pub kpi: KpiRecord,
    /// Whether this cell's experience was withheld from learning.
    pub skipped_learning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub cells: Vec<CellStep>,
    pub network: NetworkAggregate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub episode: usize,
    pub seed: u64,
    pub variant: Variant,
    pub rings: u32,
    pub num_cells: usize,
    pub optimized_cells: Vec<CellId>,
    /// `steps[0]` is the baseline.
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrace {
    /// Number of (state, action, reward) triples recorded.
    pub fn num_transitions(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| &s.cells)
            .filter(|c| c.action.is_some())
            .count()
    }

    pub fn actions_of(&self, cell: CellId) -> Vec<Action> {
        self.steps
            .iter()
            .filter_map(|s| s.cells.iter().find(|c| c.cell == cell).and_then(|c| c.action))
            .collect()
    }
}

/// One row of the training log; one per environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogEntry {
    pub env_step: u64,
    /// Mean pre-update loss over the step's gradient steps, if any ran.
    pub loss: Option<f64>,
    pub mean_reward: f64,
    pub epsilon: f64,
}

/// Exploration rate used by a learning agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    Scheduled { schedule: EpsilonSchedule, total_steps: u64 },
    Fixed(f64),
}

/// Mutable learning state threaded through a sequence of episodes.
#[derive(Debug, Clone)]
pub struct Learner {
    pub net: QNetwork,
    pub buffer: ReplayBuffer,
    pub exploration: Exploration,
    pub batch_size: usize,
    pub train_steps_per_env_step: usize,
    pub reward_clip: f64,
    pub freeze_heuristic: bool,
    pub env_steps: u64,
    pub log: Vec<TrainLogEntry>,
    rng: SimRng,
}

impl Learner {
    pub fn new(net: QNetwork, rl: &RlConfig, exploration: Exploration, freeze_heuristic: bool, seed: u64) -> Self {
        Learner {
            net,
            buffer: ReplayBuffer::new(rl.replay_capacity),
            exploration,
            batch_size: rl.batch_size,
            train_steps_per_env_step: rl.train_steps_per_env_step,
            reward_clip: rl.reward_clip,
            freeze_heuristic,
            env_steps: 0,
            log: Vec::new(),
            rng: stream_rng(seed, REPLAY_STREAM),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self.exploration {
            Exploration::Scheduled { schedule, total_steps } => schedule.value(self.env_steps, total_steps),
            Exploration::Fixed(e) => e,
        }
    }

    /// Pushes the step's experiences and runs the configured gradient steps.
    fn learn(&mut self, experiences: &[Experience], epsilon: f64) -> Result<()> {
        for e in experiences {
            self.buffer.push(Experience {
                reward: e.reward.clamp(-self.reward_clip, self.reward_clip),
                ..*e
            });
        }
        let mut losses = 0.0;
        let mut trained = 0usize;
        for _ in 0..self.train_steps_per_env_step {
            let Some(batch) = self.buffer.sample(self.batch_size, &mut self.rng) else {
                break;
            };
            losses += self.net.train_step(&batch)?;
            trained += 1;
        }
        let mean_reward = if experiences.is_empty() {
            0.0
        } else {
            experiences.iter().map(|e| e.reward).sum::<f64>() / experiences.len() as f64
        };
        self.log.push(TrainLogEntry {
            env_step: self.env_steps,
            loss: (trained > 0).then(|| losses / trained as f64),
            mean_reward,
            epsilon,
        });
        self.env_steps += 1;
        Ok(())
    }
}

/// How agents pick actions during an episode.
pub enum Policy<'a> {
    Expert(ExpertThresholds),
    /// Shared network, read-only, greedy.
    Frozen(&'a QNetwork),
    /// Shared network that is updated after every step.
    Learning(&'a mut Learner),
    /// Every agent always proposes the same action.
    Fixed(Action),
}

/// Whether a cell's latest experience should be withheld from learning:
/// its last three actions were all "keep", or its last four strictly
/// alternate between uptilt and downtilt.
pub fn freeze_heuristic(actions: &[Action]) -> bool {
    let n = actions.len();
    if n >= 3 && actions[n - 3..].iter().all(|&a| a == Action::Keep) {
        return true;
    }
    if n >= 4 {
        let tail = &actions[n - 4..];
        let moving = tail.iter().all(|&a| a != Action::Keep);
        let alternating = tail.windows(2).all(|w| w[0] != w[1]);
        return moving && alternating;
    }
    false
}

fn check_finite(kpis: &[KpiRecord], episode: usize, step: usize) -> Result<()> {
    if let Some(c) = kpis.iter().position(|k| !k.is_finite()) {
        return Err(Error::Divergence(format!(
            "non-finite KPI at episode {episode}, step {step}, cell {c}"
        )));
    }
    Ok(())
}

/// Runs one episode of `spec` with the given policy.
pub fn run_episode(spec: &CampaignSpec, episode: usize, policy: &mut Policy<'_>) -> Result<EpisodeTrace> {
    let seed = episode_seed(spec.seed, episode);
    let net = EpisodeNetwork::sample(&spec.scenario, seed)?;
    run_episode_on(spec, episode, &net, policy)
}

/// Runs one episode on an already sampled network.
pub fn run_episode_on(
    spec: &CampaignSpec,
    episode: usize,
    network: &EpisodeNetwork,
    policy: &mut Policy<'_>,
) -> Result<EpisodeTrace> {
    let scenario = &spec.scenario;
    let mode = spec.variant.neighbor_mode();
    let layout = &network.layout;
    let mut config = network.config.clone();
    let optimized = config.optimized_cells.clone();
    let tilt_range = scenario.ranges.optimized_electrical_tilt;
    let mut policy_rng = stream_rng(config.rng_seed, POLICY_STREAM);

    let evaluate = |tilts: &[f64]| -> Result<Vec<KpiRecord>> {
        let snap = network.budget.evaluate(tilts)?;
        Ok(kpi::network_kpis(&snap, layout, &scenario.kpi))
    };

    let mut kpis = evaluate(&config.electrical_tilt)?;
    check_finite(&kpis, episode, 0)?;
    let mut steps = Vec::with_capacity(scenario.steps_per_episode + 1);
    steps.push(StepRecord {
        step: 0,
        cells: optimized
            .iter()
            .map(|&c| CellStep {
                cell: c,
                state: None,
                action: None,
                reward: None,
                electrical_tilt: config.electrical_tilt[c],
                kpi: kpis[c],
                skipped_learning: false,
            })
            .collect(),
        network: NetworkAggregate::from_kpis(optimized.iter().map(|&c| &kpis[c])),
    });
    let mut history: Vec<Vec<Action>> = alloc::vec![Vec::new(); optimized.len()];

    for step in 1..=scenario.steps_per_episode {
        let epsilon = match policy {
            Policy::Learning(l) => l.epsilon(),
            _ => 0.0,
        };
        let states: Vec<StateVector> = optimized
            .iter()
            .map(|&c| kpi::build_state(&config, layout, &kpis[c], c, mode))
            .collect();
        let rm_before: Vec<f64> = optimized
            .iter()
            .map(|&c| kpi::reward_metric_for(&kpis[c], mode))
            .collect();

        let actions: Vec<Action> = optimized
            .iter()
            .zip(&states)
            .map(|(&c, s)| match policy {
                Policy::Expert(thr) => expert_action(&kpis[c], thr),
                Policy::Frozen(net) => select_action(&net.q_values(&s.0), 0.0, &mut policy_rng),
                Policy::Learning(l) => select_action(&l.net.q_values(&s.0), epsilon, &mut policy_rng),
                Policy::Fixed(a) => *a,
            })
            .collect();

        for (&c, a) in optimized.iter().zip(&actions) {
            let t = config.electrical_tilt[c] + a.tilt_delta();
            config.electrical_tilt[c] = t.clamp(tilt_range.min, tilt_range.max);
        }

        kpis = evaluate(&config.electrical_tilt)?;
        check_finite(&kpis, episode, step)?;

        let mut cells = Vec::with_capacity(optimized.len());
        let mut experiences = Vec::with_capacity(optimized.len());
        for (i, &c) in optimized.iter().enumerate() {
            let r = kpi::reward(rm_before[i], kpi::reward_metric_for(&kpis[c], mode));
            if !r.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite reward at episode {episode}, step {step}, cell {c}"
                )));
            }
            history[i].push(actions[i]);
            let skip = matches!(policy, Policy::Learning(l) if l.freeze_heuristic) && freeze_heuristic(&history[i]);
            if !skip {
                experiences.push(Experience {
                    state: states[i],
                    action: actions[i],
                    reward: r,
                });
            }
            cells.push(CellStep {
                cell: c,
                state: Some(states[i]),
                action: Some(actions[i]),
                reward: Some(r),
                electrical_tilt: config.electrical_tilt[c],
                kpi: kpis[c],
                skipped_learning: skip,
            });
        }
        if let Policy::Learning(l) = policy {
            l.learn(&experiences, epsilon)?;
        }
        steps.push(StepRecord {
            step,
            cells,
            network: NetworkAggregate::from_kpis(optimized.iter().map(|&c| &kpis[c])),
        });
    }

    Ok(EpisodeTrace {
        episode,
        seed: config.rng_seed,
        variant: spec.variant,
        rings: scenario.rings,
        num_cells: layout.num_cells(),
        optimized_cells: optimized,
        steps,
    })
}

/// Freshly initialised shared network for a campaign.
pub fn init_network(spec: &CampaignSpec) -> Result<QNetwork> {
    let mut rng = stream_rng(spec.seed, INIT_STREAM);
    QNetwork::new(&spec.rl.architecture, spec.rl.adam, &mut rng)
}

#[derive(Debug, Clone)]
pub struct CampaignOutcome {
    pub traces: Vec<EpisodeTrace>,
    /// Final shared network for learning campaigns, else the input network.
    pub network: Option<QNetwork>,
    pub log: Vec<TrainLogEntry>,
}

/// Runs every episode of a campaign sequentially.
///
/// Pre-training starts from `checkpoint` when given, otherwise from a fresh
/// network, and threads one network and replay buffer through all episodes.
/// Evaluation of RL variants requires a checkpoint; RLIN+ keeps learning
/// across the episode sequence with exploration disabled.
pub fn run_campaign(spec: &CampaignSpec, checkpoint: Option<&QNetwork>) -> Result<CampaignOutcome> {
    spec.validate()?;
    if spec.mode == Mode::Evaluate && spec.variant.is_rl() && checkpoint.is_none() {
        return Err(Error::Config(format!(
            "variant {} needs a pre-trained checkpoint",
            spec.variant.as_str()
        )));
    }
    let mut traces = Vec::with_capacity(spec.episodes);

    if spec.learns() {
        let net = match checkpoint {
            Some(n) => n.clone(),
            None => init_network(spec)?,
        };
        let exploration = match spec.mode {
            Mode::Pretrain => Exploration::Scheduled {
                schedule: spec.rl.epsilon,
                total_steps: spec.total_env_steps(),
            },
            Mode::Evaluate => Exploration::Fixed(0.0),
        };
        let mut learner = Learner::new(net, &spec.rl, exploration, spec.freeze_heuristic, spec.seed);
        for e in 0..spec.episodes {
            traces.push(run_episode(spec, e, &mut Policy::Learning(&mut learner))?);
        }
        return Ok(CampaignOutcome {
            traces,
            network: Some(learner.net),
            log: learner.log,
        });
    }

    for e in 0..spec.episodes {
        let mut policy = match checkpoint {
            Some(net) if spec.variant.is_rl() => Policy::Frozen(net),
            _ => Policy::Expert(spec.expert),
        };
        traces.push(run_episode(spec, e, &mut policy)?);
    }
    Ok(CampaignOutcome {
        traces,
        network: checkpoint.cloned(),
        log: Vec::new(),
    })
}

/// Means of consecutive non-overlapping windows; a trailing partial window
/// is dropped.
pub fn window_means(values: &[f64], window: usize) -> Vec<f64> {
    if window == 0 {
        return Vec::new();
    }
    values
        .chunks_exact(window)
        .map(|w| w.iter().sum::<f64>() / window as f64)
        .collect()
}

/// Human-readable one-line description of a campaign.
pub fn describe(spec: &CampaignSpec) -> String {
    format!(
        "{} {:?}: {} episodes x {} steps, {} rings ({} optimized), seed {}",
        spec.variant.as_str(),
        spec.mode,
        spec.episodes,
        spec.scenario.steps_per_episode,
        spec.scenario.rings,
        spec.scenario.optimized_rings,
        spec.seed
    )
}
