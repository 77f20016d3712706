//! Player-side logic: receive pixel events, detect valid ads, issue
//! proposition requests, and answer propositions by reverse lookup of user
//! ids inside the committed window.
//!
//! Behavior is parameterized for simulation: `honesty_rate` is a
//! task-completion rate (a dishonest "miss" skips the request or abstains
//! from the vote, it never casts an actively wrong vote), while `corrupted`
//! models a Sybil identity that never raises propositions and always votes
//! False.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};
use std::collections::BTreeMap;

use crate::host::PropositionRequest;
use crate::protocol::{
    AdId, DurationMs, PlayerId, Proposition, TimestampMs, UserHash, Vote, VoteChoice,
};

/// SHA3-256 of a user id; the commitment scheme for proposition proofs.
pub fn hash_user_id(user_id: impl AsRef<[u8]>) -> UserHash {
    let mut hasher = Sha3_256::new();
    hasher.update(user_id.as_ref());
    UserHash(hasher.finalize().into())
}

/// Kinds of pixel interaction delivered to an endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interaction {
    Impression,
    Click,
    Scroll,
}

/// One ad interaction record delivered to a verifier endpoint.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelEvent {
    pub ad_id: AdId,
    pub user_id: String,
    pub timestamp: TimestampMs,
    pub interaction: Interaction,
    /// Which of the ad's injected pixels fired.
    pub pixel_index: u32,
}

/// Predicate deciding whether pixel data constitutes a valid, billable ad
/// event. Owner-defined; the default accepts impressions.
pub type ValidAdPredicate = fn(&PixelEvent) -> bool;

pub fn default_valid_ad(event: &PixelEvent) -> bool {
    event.interaction == Interaction::Impression
}

/// Per-ad, time-indexed store of received pixel events. Supports exact
/// retrieval of all events for an ad within a closed window, and prunes
/// entries past the retention horizon.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LocalAdStore {
    events: BTreeMap<AdId, Vec<PixelEvent>>,
    pub retention_ms: DurationMs,
}

impl LocalAdStore {
    pub fn new(retention_ms: DurationMs) -> Self {
        LocalAdStore { events: BTreeMap::new(), retention_ms }
    }

    pub fn insert(&mut self, event: PixelEvent) {
        let per_ad = self.events.entry(event.ad_id).or_default();
        let at = per_ad.partition_point(|e| e.timestamp <= event.timestamp);
        per_ad.insert(at, event);
    }

    /// All stored events for `ad_id` with timestamp in `[t_a, t_b]`.
    pub fn events_in_window(&self, ad_id: AdId, t_a: TimestampMs, t_b: TimestampMs) -> &[PixelEvent] {
        match self.events.get(&ad_id) {
            None => &[],
            Some(per_ad) => {
                let lo = per_ad.partition_point(|e| e.timestamp < t_a);
                let hi = per_ad.partition_point(|e| e.timestamp <= t_b);
                &per_ad[lo..hi]
            }
        }
    }

    /// Drop events older than the retention window. Returns how many were
    /// removed.
    pub fn prune(&mut self, now: TimestampMs) -> usize {
        let cutoff = now.saturating_sub(self.retention_ms);
        let mut removed = 0;
        self.events.retain(|_, per_ad| {
            let before = per_ad.len();
            per_ad.retain(|e| e.timestamp >= cutoff);
            removed += before - per_ad.len();
            !per_ad.is_empty()
        });
        removed
    }

    pub fn len(&self) -> usize {
        self.events.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Behavior model for one agent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentPolicy {
    /// Probability of completing an assigned task (submit/vote). 1.0 is a
    /// fully honest node, 0.0 never acts.
    pub honesty_rate: f64,
    /// Sybil identity: never emits requests and always votes False,
    /// regardless of `honesty_rate`.
    pub corrupted: bool,
}

impl AgentPolicy {
    pub fn honest() -> Self {
        AgentPolicy { honesty_rate: 1.0, corrupted: false }
    }

    pub fn with_honesty(honesty_rate: f64) -> Self {
        AgentPolicy { honesty_rate, corrupted: false }
    }

    pub fn corrupted() -> Self {
        AgentPolicy { honesty_rate: 0.0, corrupted: true }
    }
}

/// An independent sequential reactor for one player: consumes pixel events
/// and proposition notifications, produces requests and votes. All
/// randomness comes from its own seeded stream, so behavior is a pure
/// function of (event history, policy, rng state).
#[derive(Clone, Debug)]
pub struct VerifierAgent {
    pub player_id: PlayerId,
    pub policy: AgentPolicy,
    pub store: LocalAdStore,
    assigned_ads: BTreeMap<AdId, ()>,
    valid_ad: ValidAdPredicate,
    rng: ChaCha8Rng,
    /// Pixel events received for ads this agent was never assigned.
    pub unassigned_events: u64,
}

impl VerifierAgent {
    pub fn new(
        player_id: PlayerId,
        policy: AgentPolicy,
        retention_ms: DurationMs,
        rng: ChaCha8Rng,
    ) -> Self {
        VerifierAgent {
            player_id,
            policy,
            store: LocalAdStore::new(retention_ms),
            assigned_ads: BTreeMap::new(),
            valid_ad: default_valid_ad,
            rng,
            unassigned_events: 0,
        }
    }

    /// Replace the owner-defined valid-ad predicate.
    pub fn with_valid_ad_predicate(mut self, predicate: ValidAdPredicate) -> Self {
        self.valid_ad = predicate;
        self
    }

    /// The host picked this agent as a pixel endpoint for `ad_id`.
    pub fn on_assigned(&mut self, ad_id: AdId) {
        self.assigned_ads.insert(ad_id, ());
    }

    pub fn is_assigned(&self, ad_id: AdId) -> bool {
        self.assigned_ads.contains_key(&ad_id)
    }

    fn completes_task(&mut self) -> bool {
        if self.policy.corrupted {
            return false;
        }
        // Draw even for rate 1.0 so a policy change never shifts the stream.
        let draw: f64 = self.rng.gen();
        draw < self.policy.honesty_rate
    }

    /// Handle one pixel delivery. Stores the event (a dishonest miss still
    /// records data; only the emission is skipped) and, for a valid ad event,
    /// emits a proposition request with probability `honesty_rate`.
    pub fn on_pixel_event(&mut self, event: &PixelEvent, now: TimestampMs) -> Option<PropositionRequest> {
        if !self.is_assigned(event.ad_id) {
            self.unassigned_events += 1;
            return None;
        }
        self.store.insert(event.clone());
        self.store.prune(now);
        if !(self.valid_ad)(event) {
            return None;
        }
        if !self.completes_task() {
            return None;
        }
        Some(PropositionRequest {
            ad_id: event.ad_id,
            user_id: event.user_id.clone(),
            user_hash: hash_user_id(&event.user_id),
            timestamp: event.timestamp,
            player_id: self.player_id,
        })
    }

    /// Answer a proposition this agent was assigned to (and did not submit).
    /// `None` means abstention; the host will record the agent as Absent.
    pub fn on_proposition(&mut self, prop: &Proposition, _now: TimestampMs) -> Option<Vote> {
        if self.policy.corrupted {
            // Sybil strategy: push outcomes toward False.
            return Some(Vote::new(prop.proposition_id, self.player_id, VoteChoice::False, None));
        }
        if !self.completes_task() {
            return None;
        }
        let choice = self
            .store
            .events_in_window(prop.ad_id, prop.t_a, prop.t_b)
            .iter()
            .find(|e| hash_user_id(&e.user_id) == prop.user_hash);
        Some(match choice {
            Some(event) => Vote::new(
                prop.proposition_id,
                self.player_id,
                VoteChoice::True,
                Some(event.user_id.clone()),
            ),
            None => Vote::new(prop.proposition_id, self.player_id, VoteChoice::False, None),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::PropositionId;
    use rand::SeedableRng;

    fn agent(policy: AgentPolicy) -> VerifierAgent {
        VerifierAgent::new(PlayerId(1), policy, 3_600_000, ChaCha8Rng::seed_from_u64(42))
    }

    fn impression(ad: u64, user: &str, ts: TimestampMs) -> PixelEvent {
        PixelEvent {
            ad_id: AdId(ad),
            user_id: user.to_string(),
            timestamp: ts,
            interaction: Interaction::Impression,
            pixel_index: 0,
        }
    }

    fn proposition_for(ad: u64, user: &str, t_a: TimestampMs, t_b: TimestampMs) -> Proposition {
        Proposition {
            proposition_id: PropositionId(7),
            ad_id: AdId(ad),
            user_hash: hash_user_id(user),
            t_a,
            t_b,
            deadline: t_b + 2_000,
            submitter_id: PlayerId(0),
            verifier_ids: vec![PlayerId(0), PlayerId(1)],
            price: 1,
            status: crate::protocol::PropositionStatus::Open,
        }
    }

    #[test]
    fn sha3_matches_reference_vector() {
        // Digest of "abc" frozen from an independent SHA3-256 implementation.
        assert_eq!(
            hash_user_id("abc").to_hex(),
            "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532"
        );
        assert_eq!(hash_user_id("abc"), hash_user_id("abc"));
        assert_ne!(hash_user_id("abc"), hash_user_id("abd"));
    }

    #[test]
    fn honest_agent_emits_request_with_matching_hash() {
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        let req = a.on_pixel_event(&impression(3, "user-9", 5_000), 5_000).unwrap();
        assert_eq!(req.user_hash, hash_user_id("user-9"));
        assert_eq!(req.timestamp, 5_000);
        assert_eq!(req.player_id, PlayerId(1));
    }

    #[test]
    fn zero_honesty_and_corrupted_never_emit() {
        for policy in [AgentPolicy::with_honesty(0.0), AgentPolicy::corrupted()] {
            let mut a = agent(policy);
            a.on_assigned(AdId(3));
            for i in 0..200 {
                assert!(a.on_pixel_event(&impression(3, "u", 1_000 + i), 1_000 + i).is_none());
            }
        }
    }

    #[test]
    fn unassigned_ad_is_ignored_with_metric() {
        let mut a = agent(AgentPolicy::honest());
        assert!(a.on_pixel_event(&impression(5, "u", 0), 0).is_none());
        assert_eq!(a.unassigned_events, 1);
        assert!(a.store.is_empty());
    }

    #[test]
    fn invalid_interaction_is_stored_but_not_raised() {
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        let mut ev = impression(3, "u", 100);
        ev.interaction = Interaction::Scroll;
        assert!(a.on_pixel_event(&ev, 100).is_none());
        assert_eq!(a.store.len(), 1);
    }

    #[test]
    fn emission_fraction_tracks_honesty_rate() {
        // Law of large numbers against the Bernoulli draw: 10,000 events at
        // honesty 0.5 emit 0.5 +/- 0.02.
        let mut a = agent(AgentPolicy::with_honesty(0.5));
        a.on_assigned(AdId(1));
        let mut emitted = 0u32;
        for i in 0..10_000u64 {
            if a.on_pixel_event(&impression(1, &format!("u{i}"), i), i).is_some() {
                emitted += 1;
            }
        }
        let fraction = emitted as f64 / 10_000.0;
        assert!((fraction - 0.5).abs() < 0.02, "fraction {fraction}");
    }

    #[test]
    fn vote_true_with_proof_when_event_in_window() {
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        a.on_pixel_event(&impression(3, "visitor", 5_000), 5_000);
        let prop = proposition_for(3, "visitor", 4_000, 6_000);
        let vote = a.on_proposition(&prop, 5_100).unwrap();
        assert_eq!(vote.choice, VoteChoice::True);
        assert_eq!(vote.proof.as_deref(), Some("visitor"));
    }

    #[test]
    fn vote_false_when_no_event_matches() {
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        a.on_pixel_event(&impression(3, "someone-else", 5_000), 5_000);
        let prop = proposition_for(3, "visitor", 4_000, 6_000);
        assert_eq!(a.on_proposition(&prop, 5_100).unwrap().choice, VoteChoice::False);
    }

    #[test]
    fn window_bounds_are_inclusive_and_exact() {
        // Oracle: exhaustive scan over the full store with explicit bounds.
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        for ts in [3_999u64, 4_000, 5_000, 6_000, 6_001] {
            a.on_pixel_event(&impression(3, &format!("u{ts}"), ts), ts);
        }
        let in_window = |t_a: u64, t_b: u64, user: &str| {
            let prop = proposition_for(3, user, t_a, t_b);
            a.clone().on_proposition(&prop, 6_100).unwrap().choice == VoteChoice::True
        };
        assert!(!in_window(4_000, 6_000, "u3999"));
        assert!(in_window(4_000, 6_000, "u4000"));
        assert!(in_window(4_000, 6_000, "u5000"));
        assert!(in_window(4_000, 6_000, "u6000"));
        // Event at t_b + 1ms only: excluded.
        assert!(!in_window(4_000, 6_000, "u6001"));

        // Cross-check against a brute-force scan for every stored event.
        for ts in [3_999u64, 4_000, 5_000, 6_000, 6_001] {
            let brute = (4_000..=6_000).contains(&ts);
            assert_eq!(in_window(4_000, 6_000, &format!("u{ts}")), brute, "ts {ts}");
        }
    }

    #[test]
    fn corrupted_agent_always_votes_false() {
        let mut a = agent(AgentPolicy::corrupted());
        a.on_assigned(AdId(3));
        a.store.insert(impression(3, "visitor", 5_000));
        let prop = proposition_for(3, "visitor", 4_000, 6_000);
        for _ in 0..50 {
            let vote = a.on_proposition(&prop, 5_100).unwrap();
            assert_eq!(vote.choice, VoteChoice::False);
            assert!(vote.proof.is_none());
        }
    }

    #[test]
    fn honest_agent_never_casts_void() {
        // Every True vote an honest agent emits re-hashes to the commitment.
        let mut a = agent(AgentPolicy::honest());
        a.on_assigned(AdId(3));
        for i in 0..100u64 {
            a.on_pixel_event(&impression(3, &format!("u{i}"), 1_000 + i), 1_000 + i);
        }
        for i in 0..100u64 {
            let prop = proposition_for(3, &format!("u{i}"), 1_000, 1_100);
            if let Some(v) = a.on_proposition(&prop, 1_200) {
                if v.choice == VoteChoice::True {
                    assert_eq!(hash_user_id(v.proof.as_deref().unwrap()), prop.user_hash);
                }
            }
        }
    }

    #[test]
    fn replay_determinism_with_same_rng_state() {
        let make = || {
            let mut a = VerifierAgent::new(
                PlayerId(2),
                AgentPolicy::with_honesty(0.4),
                1_000_000,
                ChaCha8Rng::seed_from_u64(7),
            );
            a.on_assigned(AdId(1));
            let mut log = Vec::new();
            for i in 0..500u64 {
                log.push(a.on_pixel_event(&impression(1, &format!("u{i}"), i), i).is_some());
            }
            log
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn store_prunes_expired_events() {
        let mut store = LocalAdStore::new(1_000);
        store.insert(impression(1, "old", 100));
        store.insert(impression(1, "fresh", 1_500));
        assert_eq!(store.prune(2_000), 1);
        assert_eq!(store.events_in_window(AdId(1), 0, 10_000).len(), 1);
        assert_eq!(store.events_in_window(AdId(1), 0, 10_000)[0].user_id, "fresh");
    }
}
