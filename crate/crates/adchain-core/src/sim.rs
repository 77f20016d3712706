//! Deterministic discrete-event simulation binding the host and verifier
//! agents: synthetic ad traffic, a stand-in for the header-bidding auction
//! (ad registration plus verifier assignment), clock and deadline
//! scheduling, and metrics. The experiment drivers sweep the honesty,
//! node-count, and Sybil grids.
//!
//! Everything runs on simulated time: a single thread drains one totally
//! ordered event queue, and all randomness flows from per-run ChaCha streams
//! derived from the configured seed. Identical config and seed give a
//! bit-identical run. Independent grid cells carry derived seeds and
//! isolated state, so callers may execute them in parallel and merge rows in
//! cell order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use thiserror::Error;

use crate::agent::{AgentPolicy, Interaction, PixelEvent, VerifierAgent};
use crate::host::{Host, HostConfig, PropositionRequest};
use crate::protocol::{AdId, Currency, PlayerId, Points, Proposition, PropositionId, TimestampMs};

/// One simulation run's knobs. Serializes as the flat JSON config document;
/// unknown keys are rejected, absent keys take the defaults below (the
/// reference deployment parameters).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub total_nodes: u32,
    pub verifiers_per_ad: u32,
    /// Probability in [0,1] that a node completes an assigned task.
    pub honesty_rate: f64,
    /// Fraction of nodes marked as corrupted (Sybil) identities.
    pub corrupted_fraction: f64,
    pub ad_count: u32,
    /// Ad events per second of simulated time.
    pub ad_rate: f64,
    /// Fraction of generated events that are phantoms seen by a single
    /// endpoint only; the network should decide those False.
    pub bogus_event_fraction: f64,
    pub proposition_price: Currency,
    pub proposition_deadline_ms: u64,
    pub proposition_delay_ms: u64,
    pub ban_threshold: Points,
    pub initial_balance: Currency,
    pub initial_pcd: u32,
    pub retention_ms: u64,
    pub tie_to_true: bool,
    pub initial_fund: Currency,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            total_nodes: 100,
            verifiers_per_ad: 15,
            honesty_rate: 1.0,
            corrupted_fraction: 0.0,
            ad_count: 1_000,
            ad_rate: 10.0,
            bogus_event_fraction: 0.0,
            proposition_price: 1,
            proposition_deadline_ms: 2_000,
            proposition_delay_ms: 1_000,
            ban_threshold: -5,
            initial_balance: 10_000,
            initial_pcd: 100,
            retention_ms: 30 * 24 * 3_600 * 1_000,
            tie_to_true: true,
            initial_fund: 0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn host_config(&self) -> HostConfig {
        HostConfig {
            verifiers_per_ad: self.verifiers_per_ad,
            proposition_price: self.proposition_price,
            proposition_deadline_ms: self.proposition_deadline_ms,
            proposition_delay_ms: self.proposition_delay_ms,
            ban_threshold: self.ban_threshold,
            initial_balance: self.initial_balance,
            initial_pcd: self.initial_pcd,
            retention_ms: self.retention_ms,
            tie_to_true: self.tie_to_true,
            initial_fund: self.initial_fund,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.verifiers_per_ad == 0 || self.verifiers_per_ad > self.total_nodes {
            return Err(SimError::Infeasible(format!(
                "verifiers_per_ad {} must be in 1..={}",
                self.verifiers_per_ad, self.total_nodes
            )));
        }
        for (name, value) in [
            ("honesty_rate", self.honesty_rate),
            ("corrupted_fraction", self.corrupted_fraction),
            ("bogus_event_fraction", self.bogus_event_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(SimError::Infeasible(format!("{name} {value} outside [0, 1]")));
            }
        }
        if self.ad_rate <= 0.0 {
            return Err(SimError::Infeasible(format!("ad_rate {} must be > 0", self.ad_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("infeasible config: {0}")]
    Infeasible(String),
    #[error("accounting violation: {0}")]
    Accounting(String),
}

/// Derive an independent child seed for a grid cell or sweep point.
pub fn derive_seed(base: u64, salt_a: u64, salt_b: u64) -> u64 {
    let mut hasher = Sha3_256::new();
    hasher.update(base.to_le_bytes());
    hasher.update(salt_a.to_le_bytes());
    hasher.update(salt_b.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

struct QueueEntry<T> {
    time: TimestampMs,
    seq: u64,
    payload: T,
}

impl<T> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl<T> Eq for QueueEntry<T> {}
impl<T> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T> Ord for QueueEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for earliest-first.
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Time-ordered event queue. Pops in nondecreasing timestamp order with ties
/// broken by insertion sequence, so a drain order is fully deterministic.
pub struct EventQueue<T> {
    heap: BinaryHeap<QueueEntry<T>>,
    next_seq: u64,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), next_seq: 0 }
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, time: TimestampMs, payload: T) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(QueueEntry { time, seq, payload });
    }

    pub fn pop(&mut self) -> Option<(TimestampMs, T)> {
        self.heap.pop().map(|e| (e.time, e.payload))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// One scheduled ad event in the synthetic traffic stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdEvent {
    pub ad_id: AdId,
    pub user_id: String,
    pub timestamp: TimestampMs,
    pub bogus: bool,
}

/// Generate `count` ad events with deterministic `1/rate`-second spacing and
/// a fresh ad id and user id per event.
pub fn gen_ad_stream(count: u32, rate: f64, rng: &mut ChaCha8Rng) -> Vec<AdEvent> {
    (0..count)
        .map(|i| {
            let nonce: u32 = rng.gen();
            AdEvent {
                ad_id: AdId(i as u64),
                user_id: format!("visitor-{i}-{nonce:08x}"),
                timestamp: (i as f64 * 1_000.0 / rate).round() as TimestampMs,
                bogus: false,
            }
        })
        .collect()
}

/// Wall-clock percentiles for per-event processing (informational; excluded
/// from equality and from deterministic outputs).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct WallLatency {
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
}

/// Per-run counters. Two runs with the same config and seed compare equal;
/// the wall-latency field is measurement noise and excluded from equality.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimMetrics {
    pub grid_key: String,
    pub propositions_created: u64,
    pub true_outcomes: u64,
    pub false_outcomes: u64,
    pub unraised_events: u64,
    pub void_votes: u64,
    pub bans: u64,
    /// Events whose impression genuinely happened (non-phantom).
    pub ground_truth_true: u64,
    /// Ground-truth-true events whose proposition was decided True.
    pub genuine_true_outcomes: u64,
    pub events_processed: u64,
    pub sim_horizon_ms: TimestampMs,
    pub wall_latency: WallLatency,
}

impl PartialEq for SimMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.grid_key == other.grid_key
            && self.propositions_created == other.propositions_created
            && self.true_outcomes == other.true_outcomes
            && self.false_outcomes == other.false_outcomes
            && self.unraised_events == other.unraised_events
            && self.void_votes == other.void_votes
            && self.bans == other.bans
            && self.ground_truth_true == other.ground_truth_true
            && self.genuine_true_outcomes == other.genuine_true_outcomes
            && self.events_processed == other.events_processed
            && self.sim_horizon_ms == other.sim_horizon_ms
    }
}

impl SimMetrics {
    /// Fraction of ground-truth-true events the network decided True.
    pub fn accuracy(&self) -> f64 {
        if self.ground_truth_true == 0 {
            return 0.0;
        }
        self.genuine_true_outcomes as f64 / self.ground_truth_true as f64
    }

    /// Fraction of ground-truth-true events prevented or decided False.
    pub fn attack_success_rate(&self) -> f64 {
        if self.ground_truth_true == 0 {
            return 0.0;
        }
        1.0 - self.accuracy()
    }

    /// Events processed per second of simulated time (deterministic).
    pub fn events_per_simulated_sec(&self) -> f64 {
        if self.sim_horizon_ms == 0 {
            return 0.0;
        }
        self.events_processed as f64 / (self.sim_horizon_ms as f64 / 1_000.0)
    }
}

enum SimEvent {
    AdServed { index: u32 },
    PixelDelivery { player: PlayerId, event: PixelEvent },
    Request { request: PropositionRequest },
    VoteCast { player: PlayerId, proposition: Proposition },
    Deadline { proposition_id: PropositionId },
}

/// Run one simulation to quiescence and return its metrics.
///
/// Registers `total_nodes` players (the first `floor(corrupted_fraction *
/// total_nodes)` of them corrupted), streams `ad_count` ad events at
/// `ad_rate`, and for each event registers the ad, assigns verifiers,
/// delivers pixels to every endpoint plus the host, and lets agents raise
/// and decide propositions until the queue drains.
pub fn run_simulation(config: &SimConfig) -> Result<SimMetrics, SimError> {
    config.validate()?;

    let mut host_rng = ChaCha8Rng::seed_from_u64(config.seed);
    host_rng.set_stream(0);
    let mut schedule_rng = ChaCha8Rng::seed_from_u64(config.seed);
    schedule_rng.set_stream(1);

    let mut host = Host::new(config.host_config());
    let corrupted_count = (config.corrupted_fraction * config.total_nodes as f64).floor() as u64;
    let mut agents: Vec<VerifierAgent> = (0..config.total_nodes as u64)
        .map(|i| {
            let policy = if i < corrupted_count {
                AgentPolicy::corrupted()
            } else {
                AgentPolicy::with_honesty(config.honesty_rate)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(2 + i);
            host.register_player(PlayerId(i)).expect("fresh ids");
            VerifierAgent::new(PlayerId(i), policy, config.retention_ms, rng)
        })
        .collect();

    let mut schedule = gen_ad_stream(config.ad_count, config.ad_rate, &mut schedule_rng);
    for event in &mut schedule {
        event.bogus = schedule_rng.gen::<f64>() < config.bogus_event_fraction;
    }

    let mut queue: EventQueue<SimEvent> = EventQueue::new();
    for (i, ad) in schedule.iter().enumerate() {
        queue.push(ad.timestamp, SimEvent::AdServed { index: i as u32 });
    }

    let mut metrics = SimMetrics {
        ground_truth_true: schedule.iter().filter(|e| !e.bogus).count() as u64,
        ..SimMetrics::default()
    };
    let mut latencies_us: Vec<f64> = Vec::with_capacity(4096);
    let mut horizon: TimestampMs = 0;

    while let Some((now, event)) = queue.pop() {
        let started = Instant::now();
        horizon = horizon.max(now);
        match event {
            SimEvent::AdServed { index } => {
                let ad = &schedule[index as usize];
                match host.assign_verifiers(ad.ad_id, now, &mut host_rng) {
                    Err(_) => {
                        // Not enough eligible endpoints; the ad goes
                        // unmonitored and is counted as unraised at drain.
                    }
                    Ok(registration) => {
                        let verifier_ids = registration.verifier_ids.clone();
                        for id in &verifier_ids {
                            agents[id.0 as usize].on_assigned(ad.ad_id);
                        }
                        let recipients: &[PlayerId] = if ad.bogus {
                            // A phantom event fires at a single endpoint.
                            &verifier_ids[..1]
                        } else {
                            &verifier_ids
                        };
                        for (pixel_index, id) in recipients.iter().enumerate() {
                            let event = PixelEvent {
                                ad_id: ad.ad_id,
                                user_id: ad.user_id.clone(),
                                timestamp: ad.timestamp,
                                interaction: Interaction::Impression,
                                pixel_index: pixel_index as u32,
                            };
                            queue.push(now, SimEvent::PixelDelivery { player: *id, event });
                        }
                        if !ad.bogus {
                            // The host is one of the pixel endpoints too.
                            host.record_pixel_delivery(&PixelEvent {
                                ad_id: ad.ad_id,
                                user_id: ad.user_id.clone(),
                                timestamp: ad.timestamp,
                                interaction: Interaction::Impression,
                                pixel_index: recipients.len() as u32,
                            });
                        }
                    }
                }
            }
            SimEvent::PixelDelivery { player, event } => {
                if let Some(request) = agents[player.0 as usize].on_pixel_event(&event, now) {
                    queue.push(now, SimEvent::Request { request });
                }
            }
            SimEvent::Request { request } => {
                if let Ok(proposition) = host.submit_proposition_request(&request, now) {
                    metrics.propositions_created += 1;
                    for id in &proposition.verifier_ids {
                        if *id != proposition.submitter_id {
                            queue.push(
                                now,
                                SimEvent::VoteCast { player: *id, proposition: proposition.clone() },
                            );
                        }
                    }
                    queue.push(
                        proposition.deadline,
                        SimEvent::Deadline { proposition_id: proposition.proposition_id },
                    );
                }
            }
            SimEvent::VoteCast { player, proposition } => {
                if let Some(vote) = agents[player.0 as usize].on_proposition(&proposition, now) {
                    // Rejections (for example a ban while the proposition
                    // was open) leave the voter Absent at the deadline.
                    let _ = host.submit_vote(
                        proposition.proposition_id,
                        vote.voter_id,
                        vote.choice,
                        vote.proof,
                        now,
                    );
                }
            }
            SimEvent::Deadline { proposition_id } => {
                let result = host
                    .close_proposition(proposition_id, now)
                    .map_err(|e| SimError::Accounting(format!("close failed: {e}")))?;
                if result.outcome {
                    metrics.true_outcomes += 1;
                    let ad = host
                        .proposition(proposition_id)
                        .map(|p| p.ad_id)
                        .expect("proposition exists");
                    if !schedule[ad.0 as usize].bogus {
                        metrics.genuine_true_outcomes += 1;
                    }
                } else {
                    metrics.false_outcomes += 1;
                }
            }
        }
        metrics.events_processed += 1;
        latencies_us.push(started.elapsed().as_secs_f64() * 1e6);
    }

    metrics.unraised_events = config.ad_count as u64 - metrics.propositions_created;
    metrics.void_votes = host.void_votes_total();
    metrics.bans = host.bans_total();
    metrics.sim_horizon_ms = horizon;

    if metrics.true_outcomes + metrics.false_outcomes != metrics.propositions_created {
        return Err(SimError::Accounting(format!(
            "{} true + {} false != {} created",
            metrics.true_outcomes, metrics.false_outcomes, metrics.propositions_created
        )));
    }
    if metrics.propositions_created + metrics.unraised_events != config.ad_count as u64 {
        return Err(SimError::Accounting("created + unraised != ad_count".into()));
    }

    latencies_us.sort_by(|a, b| a.total_cmp(b));
    let pct = |q: f64| -> f64 {
        if latencies_us.is_empty() {
            0.0
        } else {
            latencies_us[((latencies_us.len() - 1) as f64 * q) as usize]
        }
    };
    metrics.wall_latency = WallLatency { p50_us: pct(0.50), p95_us: pct(0.95), p99_us: pct(0.99) };

    Ok(metrics)
}

/// One cell of the honesty-rate / verifier-count grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HonestyCell {
    pub honesty_pct: u32,
    pub verifiers: u32,
    pub config: SimConfig,
}

/// Grid cells for the honesty experiment: honesty 0..=100 by 5 crossed with
/// 1..=20 verifiers (420 cells), or the desk-scale subsample (honesty by 10,
/// verifiers {5, 10, 15, 20}; 44 cells).
pub fn honesty_grid_cells(base: &SimConfig, full_grid: bool) -> Vec<HonestyCell> {
    let honesty_steps: Vec<u32> =
        if full_grid { (0..=100).step_by(5).collect() } else { (0..=100).step_by(10).collect() };
    let verifier_steps: Vec<u32> =
        if full_grid { (1..=20).collect() } else { vec![5, 10, 15, 20] };
    let mut cells = Vec::new();
    for &honesty_pct in &honesty_steps {
        for &verifiers in &verifier_steps {
            let mut config = base.clone();
            config.honesty_rate = honesty_pct as f64 / 100.0;
            config.verifiers_per_ad = verifiers;
            config.seed = derive_seed(base.seed, honesty_pct as u64, verifiers as u64);
            cells.push(HonestyCell { honesty_pct, verifiers, config });
        }
    }
    cells
}

/// One cell of the node-scaling experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeScalingCell {
    pub nodes: u32,
    pub verifiers: u32,
    pub config: SimConfig,
}

/// Grid cells for the node-count experiment: 50..=1000 nodes by 50, with 15
/// and 19 verifiers per ad, honesty fixed at 85%.
pub fn node_scaling_cells(base: &SimConfig) -> Vec<NodeScalingCell> {
    let mut cells = Vec::new();
    for verifiers in [15u32, 19] {
        for nodes in (50..=1_000).step_by(50) {
            let mut config = base.clone();
            config.total_nodes = nodes;
            config.verifiers_per_ad = verifiers;
            config.honesty_rate = 0.85;
            config.seed = derive_seed(base.seed, nodes as u64, verifiers as u64);
            cells.push(NodeScalingCell { nodes, verifiers, config });
        }
    }
    cells
}

/// One cell of the Sybil experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct SybilCell {
    pub corrupted_pct: u32,
    pub honesty_pct: u32,
    pub nodes: u32,
    pub config: SimConfig,
}

/// Grid cells for the Sybil experiment: corrupted fraction 0..=100% by 5,
/// uncorrupted honesty in {85, 100}, 15 verifiers drawn from 200 or 1000
/// nodes.
pub fn sybil_cells(base: &SimConfig) -> Vec<SybilCell> {
    let mut cells = Vec::new();
    for nodes in [200u32, 1_000] {
        for honesty_pct in [85u32, 100] {
            for corrupted_pct in (0..=100).step_by(5) {
                let mut config = base.clone();
                config.total_nodes = nodes;
                config.verifiers_per_ad = 15;
                config.honesty_rate = honesty_pct as f64 / 100.0;
                config.corrupted_fraction = corrupted_pct as f64 / 100.0;
                config.seed = derive_seed(
                    base.seed,
                    (nodes as u64) << 32 | honesty_pct as u64,
                    corrupted_pct as u64,
                );
                cells.push(SybilCell { corrupted_pct, honesty_pct, nodes, config });
            }
        }
    }
    cells
}

pub const HONESTY_CSV_HEADER: &str =
    "honesty_rate,verifiers,propositions_created,true_outcomes,false_outcomes,unraised";
pub const NODE_SCALING_CSV_HEADER: &str = "nodes,verifiers,accuracy,events_per_sec";
pub const SYBIL_CSV_HEADER: &str = "corrupted_pct,honesty,nodes,attack_success_rate";

pub fn honesty_csv_row(cell: &HonestyCell, metrics: &SimMetrics) -> String {
    format!(
        "{:.6},{},{},{},{},{}",
        cell.honesty_pct as f64,
        cell.verifiers,
        metrics.propositions_created,
        metrics.true_outcomes,
        metrics.false_outcomes,
        metrics.unraised_events
    )
}

pub fn node_scaling_csv_row(cell: &NodeScalingCell, metrics: &SimMetrics) -> String {
    format!(
        "{},{},{:.6},{:.6}",
        cell.nodes,
        cell.verifiers,
        metrics.accuracy(),
        metrics.events_per_simulated_sec()
    )
}

pub fn sybil_csv_row(cell: &SybilCell, metrics: &SimMetrics) -> String {
    format!(
        "{:.6},{:.6},{},{:.6}",
        cell.corrupted_pct as f64,
        cell.honesty_pct as f64,
        cell.nodes,
        metrics.attack_success_rate()
    )
}
