//! The host's state machine: verifier assignment per ad, proposition-request
//! validation and creation, vote intake, deadline-driven closure, ledger and
//! pool mutation, impression counters, audit log, and redemption.
//!
//! The host is a single-writer state machine. All mutating operations go
//! through `&mut self` in event-time order; reads can run on snapshots.
//! Stakes are escrowed from every obligated verifier when a proposition is
//! created, which is what makes the absent-voter forfeiture enforceable at
//! the deadline.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use thiserror::Error;

use crate::agent::{hash_user_id, PixelEvent};
use crate::protocol::{
    adjudicate, check_ban, compute_prize, AdId, AdjudicationResult, Currency, DurationMs, Player,
    PlayerId, Points, PrizePool, Proposition, PropositionId, PropositionStatus, ProtocolError,
    TimestampMs, UserHash, Vote, VoteChoice,
};

/// Owner-set parameters for one host instance. Defaults follow the reference
/// deployment: 15 verifiers per ad, unit proposition price, 2 s deadline,
/// 1 s delay, ban threshold -5, initial balance 10,000.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HostConfig {
    pub verifiers_per_ad: u32,
    pub proposition_price: Currency,
    pub proposition_deadline_ms: DurationMs,
    /// Half-width of the committed window `[t_a, t_b]` around the request
    /// timestamp, absorbing pixel-delivery delays.
    pub proposition_delay_ms: DurationMs,
    pub ban_threshold: Points,
    pub initial_balance: Currency,
    pub initial_pcd: u32,
    pub retention_ms: DurationMs,
    /// Resolve exact vote ties to True (the submitter's side).
    pub tie_to_true: bool,
    /// Publisher-provided initial prize-pool fund.
    pub initial_fund: Currency,
    pub seed: u64,
}

impl Default for HostConfig {
    fn default() -> Self {
        HostConfig {
            verifiers_per_ad: 15,
            proposition_price: 1,
            proposition_deadline_ms: 2_000,
            proposition_delay_ms: 1_000,
            ban_threshold: -5,
            initial_balance: 10_000,
            initial_pcd: 100,
            retention_ms: 30 * 24 * 3_600 * 1_000, // one month
            tie_to_true: true,
            initial_fund: 0,
            seed: 0,
        }
    }
}

/// The verifier endpoints picked for one ad's invisible pixels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdRegistration {
    pub ad_id: AdId,
    pub verifier_ids: Vec<PlayerId>,
    pub created_at: TimestampMs,
}

/// A verifier's claim that a valid ad event occurred, sent to the host.
/// The host accepts it only if `SHA3-256(user_id)` equals `user_hash`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropositionRequest {
    pub ad_id: AdId,
    pub user_id: String,
    pub user_hash: UserHash,
    pub timestamp: TimestampMs,
    pub player_id: PlayerId,
}

/// Log-level record of one decided proposition: every vote with its proof,
/// the pixel deliveries the host itself received for the ad, and the
/// adjudication. Immutable once written; removable after `retention_until`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub proposition_id: PropositionId,
    pub proposition: Proposition,
    pub votes: Vec<Vote>,
    pub pixel_deliveries: Vec<PixelEvent>,
    pub result: AdjudicationResult,
    pub retention_until: TimestampMs,
}

/// An open proposition plus its vote intake and per-player escrow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct PropositionRecord {
    proposition: Proposition,
    votes: BTreeMap<PlayerId, Vote>,
    escrow: BTreeMap<PlayerId, Currency>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum HostError {
    #[error("player {0} is already registered")]
    DuplicatePlayer(PlayerId),
    #[error("unknown player {0}")]
    UnknownPlayer(PlayerId),
    #[error("player {0} is banned")]
    PlayerBanned(PlayerId),
    #[error("ad {0} is already registered")]
    DuplicateAd(AdId),
    #[error("unknown ad {0}")]
    UnknownAd(AdId),
    #[error("not enough eligible players: need {needed}, have {available}")]
    NotEnoughEligible { needed: usize, available: usize },
    #[error("player {0} is not an assigned verifier")]
    NotAVerifier(PlayerId),
    #[error("player {player} has balance {balance}, below the proposition price {price}")]
    InsufficientBalance { player: PlayerId, balance: Currency, price: Currency },
    #[error("request hash does not match SHA3-256 of the supplied user id")]
    InvalidUserHash,
    #[error("an equivalent proposition already exists for this ad event")]
    DuplicateProposition(PropositionId),
    #[error("unknown proposition {0}")]
    UnknownProposition(PropositionId),
    #[error("proposition {0} is already decided")]
    PropositionDecided(PropositionId),
    #[error("vote arrived after the deadline ({deadline} ms)")]
    PastDeadline { deadline: TimestampMs },
    #[error("proposition deadline {deadline} ms has not passed yet")]
    BeforeDeadline { deadline: TimestampMs },
    #[error("player {0} has already voted on this proposition")]
    AlreadyVoted(PlayerId),
    #[error("agents may only submit true or false votes")]
    InvalidChoice,
    #[error("proposition countdown is {remaining}, redemption requires 0")]
    PcdNotZero { remaining: u32 },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Full host state. Serializes to a canonical JSON snapshot (struct field
/// order is fixed and every map is ordered), so equal states hash equally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Host {
    config: HostConfig,
    players: BTreeMap<PlayerId, Player>,
    ads: BTreeMap<AdId, AdRegistration>,
    propositions: BTreeMap<PropositionId, PropositionRecord>,
    props_by_ad: BTreeMap<AdId, Vec<PropositionId>>,
    pool: PrizePool,
    impression_counters: BTreeMap<AdId, u64>,
    audit_log: Vec<AuditRecord>,
    /// Pixel deliveries received by the host's own endpoint, per ad.
    pixel_log: BTreeMap<AdId, Vec<PixelEvent>>,
    next_proposition_id: u64,
    bans_total: u64,
    void_votes_total: u64,
}

impl Host {
    pub fn new(config: HostConfig) -> Self {
        let pool = PrizePool::new(config.initial_fund);
        Host {
            config,
            players: BTreeMap::new(),
            ads: BTreeMap::new(),
            propositions: BTreeMap::new(),
            props_by_ad: BTreeMap::new(),
            pool,
            impression_counters: BTreeMap::new(),
            audit_log: Vec::new(),
            pixel_log: BTreeMap::new(),
            next_proposition_id: 0,
            bans_total: 0,
            void_votes_total: 0,
        }
    }

    pub fn config(&self) -> &HostConfig {
        &self.config
    }

    pub fn pool(&self) -> &PrizePool {
        &self.pool
    }

    pub fn player(&self, id: PlayerId) -> Option<&Player> {
        self.players.get(&id)
    }

    pub fn players(&self) -> impl Iterator<Item = &Player> {
        self.players.values()
    }

    pub fn proposition(&self, id: PropositionId) -> Option<&Proposition> {
        self.propositions.get(&id).map(|r| &r.proposition)
    }

    pub fn ad_registration(&self, ad_id: AdId) -> Option<&AdRegistration> {
        self.ads.get(&ad_id)
    }

    pub fn audit_log(&self) -> &[AuditRecord] {
        &self.audit_log
    }

    pub fn bans_total(&self) -> u64 {
        self.bans_total
    }

    pub fn void_votes_total(&self) -> u64 {
        self.void_votes_total
    }

    /// Ids of propositions still awaiting closure.
    pub fn open_propositions(&self) -> Vec<PropositionId> {
        self.propositions
            .values()
            .filter(|r| r.proposition.status == PropositionStatus::Open)
            .map(|r| r.proposition.proposition_id)
            .collect()
    }

    /// Sum of player balances, outstanding escrow, pool, and total payouts.
    /// Constant across every operation except registration and funding.
    pub fn ledger_total(&self) -> u128 {
        let balances: u128 = self.players.values().map(|p| p.balance as u128).sum();
        let escrow: u128 = self
            .propositions
            .values()
            .filter(|r| r.proposition.status == PropositionStatus::Open)
            .flat_map(|r| r.escrow.values())
            .map(|e| *e as u128)
            .sum();
        balances + escrow + self.pool.pool as u128 + self.pool.paid_out_total as u128
    }

    fn is_eligible(&self, player: &Player) -> bool {
        !player.banned && player.balance >= self.config.proposition_price
    }

    /// Sign up a new node with the configured starting balance and PCD.
    /// Banned ids stay in the ledger, so they can never re-register.
    pub fn register_player(&mut self, player_id: PlayerId) -> Result<&Player, HostError> {
        if self.players.contains_key(&player_id) {
            return Err(HostError::DuplicatePlayer(player_id));
        }
        let player = Player {
            player_id,
            balance: self.config.initial_balance,
            points: 0,
            pcd: self.config.initial_pcd,
            banned: false,
        };
        Ok(self.players.entry(player_id).or_insert(player))
    }

    /// Pick `verifiers_per_ad` distinct eligible players uniformly at random
    /// to be the ad's pixel endpoints. Deterministic for a given rng state.
    pub fn assign_verifiers<R: Rng + ?Sized>(
        &mut self,
        ad_id: AdId,
        now: TimestampMs,
        rng: &mut R,
    ) -> Result<&AdRegistration, HostError> {
        if self.ads.contains_key(&ad_id) {
            return Err(HostError::DuplicateAd(ad_id));
        }
        let eligible: Vec<PlayerId> = self
            .players
            .values()
            .filter(|p| self.is_eligible(p))
            .map(|p| p.player_id)
            .collect();
        let needed = self.config.verifiers_per_ad as usize;
        if eligible.len() < needed {
            return Err(HostError::NotEnoughEligible { needed, available: eligible.len() });
        }
        let verifier_ids: Vec<PlayerId> =
            eligible.choose_multiple(rng, needed).copied().collect();
        let registration = AdRegistration { ad_id, verifier_ids, created_at: now };
        Ok(self.ads.entry(ad_id).or_insert(registration))
    }

    /// The host is itself one of the pixel endpoints; it keeps a copy of
    /// every delivery for its audit trail. The host never votes.
    pub fn record_pixel_delivery(&mut self, event: &PixelEvent) {
        self.pixel_log.entry(event.ad_id).or_default().push(event.clone());
    }

    fn window_of(&self, timestamp: TimestampMs) -> (TimestampMs, TimestampMs) {
        let delay = self.config.proposition_delay_ms;
        (timestamp.saturating_sub(delay), timestamp + delay)
    }

    fn find_duplicate(&self, ad_id: AdId, user_hash: UserHash, t_a: TimestampMs, t_b: TimestampMs) -> Option<PropositionId> {
        let ids = self.props_by_ad.get(&ad_id)?;
        ids.iter()
            .filter_map(|id| self.propositions.get(id))
            .map(|r| &r.proposition)
            .find(|p| p.user_hash == user_hash && p.t_a <= t_b && t_a <= p.t_b)
            .map(|p| p.proposition_id)
    }

    /// Validate a proposition request and, when it is the first valid one for
    /// its ad event, create the proposition: escrow the price from every
    /// still-eligible assigned verifier, commit the window around the request
    /// timestamp, and count the submitter's accepted request as an implicit
    /// True vote (it also decrements the submitter's PCD).
    ///
    /// A request whose hash does not match costs the sender two points and
    /// its stake, which is what makes request flooding unprofitable.
    pub fn submit_proposition_request(
        &mut self,
        request: &PropositionRequest,
        now: TimestampMs,
    ) -> Result<Proposition, HostError> {
        let sender = request.player_id;
        let registration =
            self.ads.get(&request.ad_id).ok_or(HostError::UnknownAd(request.ad_id))?;
        if !registration.verifier_ids.contains(&sender) {
            return Err(HostError::NotAVerifier(sender));
        }
        let verifier_ids = registration.verifier_ids.clone();
        let price = self.config.proposition_price;
        let player = self.players.get(&sender).ok_or(HostError::UnknownPlayer(sender))?;
        if player.banned {
            return Err(HostError::PlayerBanned(sender));
        }
        if player.balance < price {
            return Err(HostError::InsufficientBalance {
                player: sender,
                balance: player.balance,
                price,
            });
        }

        if hash_user_id(&request.user_id) != request.user_hash {
            // Denial-of-service deterrent: stake to the pool, two points off.
            let player = self.players.get_mut(&sender).expect("checked above");
            player.balance -= price;
            player.points -= 2;
            self.pool.credit_forfeit(price);
            self.apply_ban_checks(&[sender]);
            return Err(HostError::InvalidUserHash);
        }

        let (t_a, t_b) = self.window_of(request.timestamp);
        if let Some(existing) = self.find_duplicate(request.ad_id, request.user_hash, t_a, t_b) {
            // First valid request wins; later duplicates carry no penalty.
            return Err(HostError::DuplicateProposition(existing));
        }

        // Obligated voters: assigned verifiers still unbanned and able to
        // stake at creation time. The sender qualifies by the checks above.
        let obligated: Vec<PlayerId> = verifier_ids
            .iter()
            .copied()
            .filter(|id| self.players.get(id).is_some_and(|p| self.is_eligible(p)))
            .collect();

        let proposition_id = PropositionId(self.next_proposition_id);
        self.next_proposition_id += 1;

        let mut escrow = BTreeMap::new();
        for id in &obligated {
            let player = self.players.get_mut(id).expect("filtered above");
            player.balance -= price;
            escrow.insert(*id, price);
        }

        let submitter = self.players.get_mut(&sender).expect("checked above");
        submitter.pcd = submitter.pcd.saturating_sub(1);

        let proposition = Proposition {
            proposition_id,
            ad_id: request.ad_id,
            user_hash: request.user_hash,
            t_a,
            t_b,
            deadline: now + self.config.proposition_deadline_ms,
            submitter_id: sender,
            verifier_ids: obligated,
            price,
            status: PropositionStatus::Open,
        };

        let mut votes = BTreeMap::new();
        votes.insert(
            sender,
            Vote::new(proposition_id, sender, VoteChoice::True, Some(request.user_id.clone())),
        );

        self.props_by_ad.entry(request.ad_id).or_default().push(proposition_id);
        self.propositions
            .insert(proposition_id, PropositionRecord { proposition: proposition.clone(), votes, escrow });
        Ok(proposition)
    }

    /// Record one verifier's vote. True votes must carry the user id as
    /// proof; a proof that does not hash to the commitment is recorded as a
    /// Void vote. Returns the choice as recorded.
    pub fn submit_vote(
        &mut self,
        proposition_id: PropositionId,
        player_id: PlayerId,
        choice: VoteChoice,
        proof: Option<String>,
        now: TimestampMs,
    ) -> Result<VoteChoice, HostError> {
        if !matches!(choice, VoteChoice::True | VoteChoice::False) {
            return Err(HostError::InvalidChoice);
        }
        let record = self
            .propositions
            .get_mut(&proposition_id)
            .ok_or(HostError::UnknownProposition(proposition_id))?;
        if record.proposition.status != PropositionStatus::Open {
            return Err(HostError::PropositionDecided(proposition_id));
        }
        if now > record.proposition.deadline {
            return Err(HostError::PastDeadline { deadline: record.proposition.deadline });
        }
        if !record.proposition.verifier_ids.contains(&player_id) {
            return Err(HostError::NotAVerifier(player_id));
        }
        if record.votes.contains_key(&player_id) {
            return Err(HostError::AlreadyVoted(player_id));
        }
        let banned = self
            .players
            .get(&player_id)
            .ok_or(HostError::UnknownPlayer(player_id))?
            .banned;
        if banned {
            // A verifier banned mid-flight ends up Absent at the deadline.
            return Err(HostError::PlayerBanned(player_id));
        }

        let recorded = match choice {
            VoteChoice::True => match &proof {
                Some(user_id) if hash_user_id(user_id) == record.proposition.user_hash => {
                    VoteChoice::True
                }
                // Wrong or missing proof: an unproven True claim is void.
                _ => VoteChoice::Void,
            },
            other => other,
        };
        if recorded == VoteChoice::Void {
            self.void_votes_total += 1;
        }
        record
            .votes
            .insert(player_id, Vote::new(proposition_id, player_id, recorded, proof));
        Ok(recorded)
    }

    /// Close a proposition at or after its deadline: synthesize Absent votes
    /// for the missing verifiers, adjudicate, apply the point and stake
    /// deltas, move forfeitures into the pool, bump the impression counter on
    /// a True outcome, write the audit record, and evaluate bans.
    pub fn close_proposition(
        &mut self,
        proposition_id: PropositionId,
        now: TimestampMs,
    ) -> Result<AdjudicationResult, HostError> {
        let record = self
            .propositions
            .get_mut(&proposition_id)
            .ok_or(HostError::UnknownProposition(proposition_id))?;
        if record.proposition.status != PropositionStatus::Open {
            return Err(HostError::PropositionDecided(proposition_id));
        }
        if now < record.proposition.deadline {
            return Err(HostError::BeforeDeadline { deadline: record.proposition.deadline });
        }

        for id in record.proposition.verifier_ids.clone() {
            record.votes.entry(id).or_insert_with(|| {
                Vote::new(proposition_id, id, VoteChoice::Absent, None)
            });
        }
        let ordered_votes: Vec<Vote> = record
            .proposition
            .verifier_ids
            .iter()
            .map(|id| record.votes[id].clone())
            .collect();

        let result = adjudicate(
            &record.proposition.verifier_ids,
            record.proposition.submitter_id,
            &ordered_votes,
            record.proposition.price,
            self.config.tie_to_true,
        )?;

        record.proposition.status = PropositionStatus::Decided { outcome: result.outcome };
        let proposition = record.proposition.clone();
        let escrow = std::mem::take(&mut record.escrow);

        for delta in &result.deltas {
            let staked = escrow.get(&delta.player_id).copied().unwrap_or(0);
            let player = self
                .players
                .get_mut(&delta.player_id)
                .expect("verifiers are registered players");
            if delta.stake_forfeited {
                self.pool.credit_forfeit(staked);
            } else {
                player.balance += staked;
            }
            if player.banned {
                // Banned players accrue no new points and no PCD progress;
                // their stake still resolves so the ledger stays closed.
                continue;
            }
            player.points += delta.point_delta;
            if delta.player_id != proposition.submitter_id {
                // The submitter's countdown moved when the request was
                // accepted; everyone else moves at adjudication.
                player.pcd = player.pcd.saturating_sub(1);
            }
        }

        if result.outcome {
            *self.impression_counters.entry(proposition.ad_id).or_insert(0) += 1;
        }

        self.audit_log.push(AuditRecord {
            proposition_id,
            proposition: proposition.clone(),
            votes: ordered_votes,
            pixel_deliveries: self
                .pixel_log
                .get(&proposition.ad_id)
                .cloned()
                .unwrap_or_default(),
            result: result.clone(),
            retention_until: now + self.config.retention_ms,
        });

        self.apply_ban_checks(&proposition.verifier_ids);
        Ok(result)
    }

    fn apply_ban_checks(&mut self, candidates: &[PlayerId]) {
        for id in candidates {
            if let Some(player) = self.players.get_mut(id) {
                if !player.banned && check_ban(player.points, self.config.ban_threshold) {
                    player.banned = true;
                    self.bans_total += 1;
                }
            }
        }
    }

    /// Redeem a finished countdown: pays the prize-pool share for positive
    /// points (the payout leaves the staking ledger), then resets points to
    /// zero and the countdown to its initial value.
    pub fn redeem(&mut self, player_id: PlayerId) -> Result<Currency, HostError> {
        let player =
            self.players.get(&player_id).ok_or(HostError::UnknownPlayer(player_id))?;
        if player.pcd != 0 {
            return Err(HostError::PcdNotZero { remaining: player.pcd });
        }
        let points_by_player: BTreeMap<PlayerId, Points> =
            self.players.values().map(|p| (p.player_id, p.points)).collect();
        let payout = compute_prize(self.pool.pool, &points_by_player, player_id).unwrap_or(0);
        if payout > 0 {
            self.pool.pay_out(payout)?;
        }
        let player = self.players.get_mut(&player_id).expect("checked above");
        player.points = 0;
        player.pcd = self.config.initial_pcd;
        Ok(payout)
    }

    /// Number of True-decided propositions for an ad.
    pub fn impression_count(&self, ad_id: AdId) -> Result<u64, HostError> {
        if !self.ads.contains_key(&ad_id) {
            return Err(HostError::UnknownAd(ad_id));
        }
        Ok(self.impression_counters.get(&ad_id).copied().unwrap_or(0))
    }

    /// Total impressions across all ads.
    pub fn total_impressions(&self) -> u64 {
        self.impression_counters.values().sum()
    }

    /// Drop audit records past their retention deadline (and pixel-log
    /// entries past the retention window). Impression counters are
    /// unaffected. Returns the number of audit records removed.
    pub fn purge_expired(&mut self, now: TimestampMs) -> usize {
        let before = self.audit_log.len();
        self.audit_log.retain(|r| r.retention_until >= now);
        let cutoff = now.saturating_sub(self.config.retention_ms);
        self.pixel_log.retain(|_, events| {
            events.retain(|e| e.timestamp >= cutoff);
            !events.is_empty()
        });
        before - self.audit_log.len()
    }

    /// Canonical JSON snapshot of the full host state.
    pub fn snapshot_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_snapshot_json(snapshot: &str) -> serde_json::Result<Host> {
        serde_json::from_str(snapshot)
    }

    /// SHA3-256 over the canonical snapshot; equal states hash equally.
    pub fn state_hash(&self) -> String {
        let snapshot = self.snapshot_json().expect("host state serializes");
        let mut hasher = Sha3_256::new();
        hasher.update(snapshot.as_bytes());
        hex::encode(hasher.finalize())
    }

    /// Audit log export, one JSON record per line.
    pub fn export_audit_ndjson(&self, mut writer: impl Write) -> io::Result<()> {
        for record in &self.audit_log {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}
