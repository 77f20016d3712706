//! Pure protocol rules shared by the host engine, the agents, and the
//! analytic models. Everything here is a function over immutable inputs;
//! all state mutation lives in [`crate::host`].
//!
//! The reward/penalty table (applied by [`adjudicate`]):
//!
//! | Outcome | True voters | False/Absent voters        | Submitter                  |
//! |---------|-------------|----------------------------|----------------------------|
//! | True    | +1 point    | -1 point, stake forfeited  | +4 points                  |
//! | False   | 0 points    | 0 points                   | -2 points, stake forfeited |
//!
//! Void votes (a True vote whose proof fails the hash check) are excluded
//! from the tally and cost -2 points plus the stake, regardless of outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Currency in integral minor units. Prize rounding is floor, so conservation
/// checks stay exact.
pub type Currency = u64;

/// Accumulated player points (signed; negative points lead to bans).
pub type Points = i64;

/// Milliseconds since the simulation epoch.
pub type TimestampMs = u64;

/// A duration in milliseconds.
pub type DurationMs = u64;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }

        impl From<u64> for $name {
            fn from(raw: u64) -> Self {
                Self(raw)
            }
        }
    };
}

id_newtype!(
    /// Unique identifier of a participating node.
    PlayerId
);
id_newtype!(
    /// Unique identifier of an ad placement.
    AdId
);
id_newtype!(
    /// Unique identifier of a proposition.
    PropositionId
);

/// SHA3-256 digest committing to a user id without revealing it.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserHash(pub [u8; 32]);

impl UserHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, hex::FromHexError> {
        let mut bytes = [0u8; 32];
        hex::decode_to_slice(s, &mut bytes)?;
        Ok(UserHash(bytes))
    }
}

impl fmt::Debug for UserHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "UserHash({})", self.to_hex())
    }
}

impl fmt::Display for UserHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for UserHash {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for UserHash {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        UserHash::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A node's ledger entry: identity, staking balance, points, proposition
/// countdown, and ban status.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Player {
    pub player_id: PlayerId,
    /// Staking balance in minor currency units; escrow may never overdraw it.
    pub balance: Currency,
    pub points: Points,
    /// Proposition countdown: remaining verifications before the player may
    /// redeem points. Decrements once per accepted request or adjudicated
    /// vote slot, resets only at redemption.
    pub pcd: u32,
    pub banned: bool,
}

/// Lifecycle of a proposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropositionStatus {
    Open,
    Decided { outcome: bool },
}

/// A hash-committed claim that one valid ad impression occurred within
/// `[t_a, t_b]`. The public record carries only the hash of the user id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposition {
    pub proposition_id: PropositionId,
    pub ad_id: AdId,
    pub user_hash: UserHash,
    pub t_a: TimestampMs,
    pub t_b: TimestampMs,
    pub deadline: TimestampMs,
    pub submitter_id: PlayerId,
    /// Ordered set of obligated voters; all were unbanned with balance >=
    /// `price` when the proposition was created, and all escrowed `price`.
    pub verifier_ids: Vec<PlayerId>,
    pub price: Currency,
    pub status: PropositionStatus,
}

/// How a verifier answered a proposition. `Void` and `Absent` are host
/// classifications, never submitted by an agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteChoice {
    True,
    False,
    /// A True vote whose proof failed the hash check.
    Void,
    /// Synthesized by the host for verifiers that missed the deadline.
    Absent,
}

/// One verifier's answer to a proposition. A True vote must carry the
/// plaintext user id as proof.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub proposition_id: PropositionId,
    pub voter_id: PlayerId,
    pub choice: VoteChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof: Option<String>,
}

impl Vote {
    pub fn new(
        proposition_id: PropositionId,
        voter_id: PlayerId,
        choice: VoteChoice,
        proof: Option<String>,
    ) -> Self {
        Vote { proposition_id, voter_id, choice, proof }
    }
}

/// Per-player consequence of an adjudication. `stake_delta` is the net
/// currency change across the whole proposition (escrow plus resolution):
/// zero when the stake comes back, `-price` when it is forfeited to the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlayerDelta {
    pub player_id: PlayerId,
    pub point_delta: Points,
    pub stake_delta: i64,
    pub stake_forfeited: bool,
}

/// Outcome of a decided proposition plus the point/stake deltas per the
/// reward table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationResult {
    /// `true` when the majority decided the impression happened.
    pub outcome: bool,
    /// One entry per assigned verifier, in verifier-set order.
    pub deltas: Vec<PlayerDelta>,
}

impl AdjudicationResult {
    /// Total currency credited to the prize pool by this adjudication.
    pub fn forfeited_total(&self) -> Currency {
        self.deltas
            .iter()
            .filter(|d| d.stake_forfeited)
            .map(|d| (-d.stake_delta) as Currency)
            .sum()
    }
}

/// The system fund: initial fund plus forfeited stakes, minus redemptions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrizePool {
    pub pool: Currency,
    pub initial_fund: Currency,
    pub forfeited_total: Currency,
    pub paid_out_total: Currency,
}

impl PrizePool {
    pub fn new(initial_fund: Currency) -> Self {
        PrizePool { pool: initial_fund, initial_fund, forfeited_total: 0, paid_out_total: 0 }
    }

    pub fn credit_forfeit(&mut self, amount: Currency) {
        self.pool += amount;
        self.forfeited_total += amount;
    }

    pub fn pay_out(&mut self, amount: Currency) -> Result<(), ProtocolError> {
        if amount > self.pool {
            return Err(ProtocolError::PoolOverdraw { requested: amount, available: self.pool });
        }
        self.pool -= amount;
        self.paid_out_total += amount;
        Ok(())
    }

    /// pool = initial_fund + forfeited_total - paid_out_total, never negative.
    pub fn is_consistent(&self) -> bool {
        (self.initial_fund + self.forfeited_total)
            .checked_sub(self.paid_out_total)
            .map_or(false, |expected| expected == self.pool)
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("duplicate vote from player {0}")]
    DuplicateVote(PlayerId),
    #[error("vote from player {0}, who is not an assigned verifier")]
    NonVerifierVote(PlayerId),
    #[error("no vote entry for verifier {0}")]
    MissingVote(PlayerId),
    #[error("submitter {0} is not among the assigned verifiers")]
    SubmitterNotVerifier(PlayerId),
    #[error("submitter {0} must appear as an implicit true vote")]
    SubmitterVoteNotTrue(PlayerId),
    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("prize pool overdraw: requested {requested}, pool holds {available}")]
    PoolOverdraw { requested: Currency, available: Currency },
}

/// Decide a proposition by majority vote and produce the point/stake deltas.
///
/// Every assigned verifier must have exactly one vote entry; the host
/// synthesizes `Absent` for non-voters and passes the submitter's accepted
/// request as an implicit `True` vote. Absent votes count on the False side
/// of the tally; Void votes count on neither side but are penalized.
/// A tie (possible when the live tally has even size) resolves to True when
/// `tie_to_true` is set.
pub fn adjudicate(
    verifier_ids: &[PlayerId],
    submitter_id: PlayerId,
    votes: &[Vote],
    price: Currency,
    tie_to_true: bool,
) -> Result<AdjudicationResult, ProtocolError> {
    let verifier_set: BTreeSet<PlayerId> = verifier_ids.iter().copied().collect();
    if !verifier_set.contains(&submitter_id) {
        return Err(ProtocolError::SubmitterNotVerifier(submitter_id));
    }

    let mut by_voter: BTreeMap<PlayerId, VoteChoice> = BTreeMap::new();
    for vote in votes {
        if !verifier_set.contains(&vote.voter_id) {
            return Err(ProtocolError::NonVerifierVote(vote.voter_id));
        }
        if by_voter.insert(vote.voter_id, vote.choice).is_some() {
            return Err(ProtocolError::DuplicateVote(vote.voter_id));
        }
    }
    for id in &verifier_set {
        if !by_voter.contains_key(id) {
            return Err(ProtocolError::MissingVote(*id));
        }
    }
    if by_voter[&submitter_id] != VoteChoice::True {
        return Err(ProtocolError::SubmitterVoteNotTrue(submitter_id));
    }

    let mut true_count = 0usize;
    let mut false_count = 0usize;
    for choice in by_voter.values() {
        match choice {
            VoteChoice::True => true_count += 1,
            VoteChoice::False | VoteChoice::Absent => false_count += 1,
            VoteChoice::Void => {}
        }
    }
    let outcome = true_count > false_count || (true_count == false_count && tie_to_true);

    let deltas = verifier_ids
        .iter()
        .map(|&id| {
            let choice = by_voter[&id];
            let (point_delta, stake_forfeited) = if choice == VoteChoice::Void {
                (-2, true)
            } else if id == submitter_id {
                if outcome {
                    (4, false)
                } else {
                    (-2, true)
                }
            } else if outcome {
                match choice {
                    VoteChoice::True => (1, false),
                    _ => (-1, true),
                }
            } else {
                // False majority: minority True voters keep their stake; the
                // wasted verification work is the only penalty.
                (0, false)
            };
            let stake_delta = if stake_forfeited { -(price as i64) } else { 0 };
            PlayerDelta { player_id: id, point_delta, stake_delta, stake_forfeited }
        })
        .collect();

    Ok(AdjudicationResult { outcome, deltas })
}

/// Prize for one player: `pool * p_i / sum of positive points`, floored to a
/// minor unit. Returns `None` when the player has no positive points (the
/// no-payout signal).
pub fn compute_prize(
    pool: Currency,
    points_by_player: &BTreeMap<PlayerId, Points>,
    player_id: PlayerId,
) -> Option<Currency> {
    let own = *points_by_player.get(&player_id)?;
    if own <= 0 {
        return None;
    }
    let denominator: u128 =
        points_by_player.values().filter(|p| **p > 0).map(|p| *p as u128).sum();
    Some((pool as u128 * own as u128 / denominator) as Currency)
}

/// A player is banned once its points fall strictly below the threshold.
pub fn check_ban(points: Points, threshold: Points) -> bool {
    points < threshold
}

/// Non-submitter voting strategies considered by the payoff model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteStrategy {
    /// Vote True with a proof that passes the hash check.
    TrueWithProof,
    False,
}

/// Expected points and expected stake loss for one vote.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VotePayoff {
    pub expected_points: f64,
    pub expected_stake_loss: f64,
}

/// Expected payoff of a non-submitter vote given the probability that the
/// majority lands on True.
///
/// A proven True vote earns +1 when the majority is True and nothing (no
/// stake loss) otherwise; a False vote earns -1 plus a stake loss when the
/// majority is True and nothing otherwise. At p = 1/2 this is +1/2 points
/// with no loss versus -1/2 points with half the price lost.
pub fn expected_vote_payoff(
    strategy: VoteStrategy,
    p_true_majority: f64,
    price: Currency,
) -> Result<VotePayoff, ProtocolError> {
    if !(0.0..=1.0).contains(&p_true_majority) {
        return Err(ProtocolError::ProbabilityOutOfRange(p_true_majority));
    }
    let p = p_true_majority;
    Ok(match strategy {
        VoteStrategy::TrueWithProof => {
            VotePayoff { expected_points: p, expected_stake_loss: 0.0 }
        }
        VoteStrategy::False => {
            VotePayoff { expected_points: -p, expected_stake_loss: price as f64 * p }
        }
    })
}

/// Expected payoff of submitting a proposition: +4 on a True outcome, -2 and
/// the stake on a False outcome.
pub fn expected_submitter_payoff(
    p_true_majority: f64,
    price: Currency,
) -> Result<VotePayoff, ProtocolError> {
    if !(0.0..=1.0).contains(&p_true_majority) {
        return Err(ProtocolError::ProbabilityOutOfRange(p_true_majority));
    }
    let p = p_true_majority;
    Ok(VotePayoff {
        expected_points: 4.0 * p - 2.0 * (1.0 - p),
        expected_stake_loss: price as f64 * (1.0 - p),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<PlayerId> {
        (0..n).map(PlayerId).collect()
    }

    fn vote(voter: u64, choice: VoteChoice) -> Vote {
        Vote::new(PropositionId(1), PlayerId(voter), choice, None)
    }

    /// Independent brute-force tally used as the oracle for `adjudicate`.
    fn reference_adjudicate(
        verifiers: &[PlayerId],
        submitter: PlayerId,
        choices: &BTreeMap<PlayerId, VoteChoice>,
        price: Currency,
        tie_to_true: bool,
    ) -> (bool, BTreeMap<PlayerId, (Points, bool)>) {
        let t = choices.values().filter(|c| **c == VoteChoice::True).count();
        let f = choices
            .values()
            .filter(|c| matches!(c, VoteChoice::False | VoteChoice::Absent))
            .count();
        let outcome = t > f || (t == f && tie_to_true);
        let mut out = BTreeMap::new();
        for &v in verifiers {
            let c = choices[&v];
            let entry = if c == VoteChoice::Void {
                (-2, true)
            } else if v == submitter {
                if outcome { (4, false) } else { (-2, true) }
            } else if outcome {
                if c == VoteChoice::True { (1, false) } else { (-1, true) }
            } else {
                (0, false)
            };
            out.insert(v, entry);
        }
        let _ = price;
        (outcome, out)
    }

    fn assert_matches_reference(
        verifiers: &[PlayerId],
        submitter: PlayerId,
        votes: &[Vote],
        tie_to_true: bool,
    ) {
        let price = 1;
        let got = adjudicate(verifiers, submitter, votes, price, tie_to_true).unwrap();
        let choices: BTreeMap<PlayerId, VoteChoice> =
            votes.iter().map(|v| (v.voter_id, v.choice)).collect();
        let (want_outcome, want) =
            reference_adjudicate(verifiers, submitter, &choices, price, tie_to_true);
        assert_eq!(got.outcome, want_outcome);
        for d in &got.deltas {
            let (points, forfeited) = want[&d.player_id];
            assert_eq!(d.point_delta, points, "player {}", d.player_id);
            assert_eq!(d.stake_forfeited, forfeited, "player {}", d.player_id);
            assert_eq!(d.stake_delta, if forfeited { -(price as i64) } else { 0 });
        }
    }

    #[test]
    fn fifteen_verifiers_ten_true_five_false() {
        // Submitter among the ten True voters: +4 for the submitter, +1 for
        // the other nine, -1 and one price unit forfeited for each of the five.
        let verifiers = ids(15);
        let mut votes: Vec<Vote> =
            (0..10).map(|i| vote(i, VoteChoice::True)).collect();
        votes.extend((10..15).map(|i| vote(i, VoteChoice::False)));
        let result = adjudicate(&verifiers, PlayerId(0), &votes, 1, true).unwrap();
        assert!(result.outcome);
        let delta_of = |id: u64| result.deltas.iter().find(|d| d.player_id.0 == id).unwrap();
        assert_eq!(delta_of(0).point_delta, 4);
        for i in 1..10 {
            assert_eq!(delta_of(i).point_delta, 1);
            assert!(!delta_of(i).stake_forfeited);
        }
        for i in 10..15 {
            assert_eq!(delta_of(i).point_delta, -1);
            assert!(delta_of(i).stake_forfeited);
            assert_eq!(delta_of(i).stake_delta, -1);
        }
        assert_eq!(result.forfeited_total(), 5);
    }

    #[test]
    fn unanimous_true_has_no_forfeitures() {
        let verifiers = ids(8);
        let votes: Vec<Vote> = (0..8).map(|i| vote(i, VoteChoice::True)).collect();
        let result = adjudicate(&verifiers, PlayerId(3), &votes, 7, true).unwrap();
        assert!(result.outcome);
        assert_eq!(result.forfeited_total(), 0);
        assert_eq!(
            result.deltas.iter().map(|d| d.point_delta).sum::<i64>(),
            4 + 7 // submitter +4, seven voters +1
        );
    }

    #[test]
    fn tie_with_even_verifiers_resolves_to_true() {
        // Two True (submitter implicit plus one) versus two Absent.
        let verifiers = ids(4);
        let votes = vec![
            vote(0, VoteChoice::True),
            vote(1, VoteChoice::True),
            vote(2, VoteChoice::Absent),
            vote(3, VoteChoice::Absent),
        ];
        let result = adjudicate(&verifiers, PlayerId(0), &votes, 1, true).unwrap();
        assert!(result.outcome);
        for absent in [2u64, 3] {
            let d = result.deltas.iter().find(|d| d.player_id.0 == absent).unwrap();
            assert_eq!(d.point_delta, -1);
            assert!(d.stake_forfeited);
        }

        let result = adjudicate(&verifiers, PlayerId(0), &votes, 1, false).unwrap();
        assert!(!result.outcome);
    }

    #[test]
    fn false_majority_penalizes_only_submitter_and_void() {
        let verifiers = ids(5);
        let votes = vec![
            vote(0, VoteChoice::True),
            vote(1, VoteChoice::False),
            vote(2, VoteChoice::False),
            vote(3, VoteChoice::False),
            vote(4, VoteChoice::Void),
        ];
        let result = adjudicate(&verifiers, PlayerId(0), &votes, 3, true).unwrap();
        assert!(!result.outcome);
        let delta_of = |id: u64| result.deltas.iter().find(|d| d.player_id.0 == id).unwrap();
        assert_eq!(delta_of(0).point_delta, -2);
        assert!(delta_of(0).stake_forfeited);
        for i in 1..4 {
            assert_eq!(delta_of(i).point_delta, 0);
            assert!(!delta_of(i).stake_forfeited);
        }
        assert_eq!(delta_of(4).point_delta, -2);
        assert!(delta_of(4).stake_forfeited);
        assert_eq!(result.forfeited_total(), 6);
    }

    #[test]
    fn void_votes_count_toward_neither_side() {
        // One True (submitter) vs one False, three Void: 1 > 1 is false, tie
        // resolves per flag.
        let verifiers = ids(5);
        let votes = vec![
            vote(0, VoteChoice::True),
            vote(1, VoteChoice::False),
            vote(2, VoteChoice::Void),
            vote(3, VoteChoice::Void),
            vote(4, VoteChoice::Void),
        ];
        let tied = adjudicate(&verifiers, PlayerId(0), &votes, 1, true).unwrap();
        assert!(tied.outcome);
        let broken = adjudicate(&verifiers, PlayerId(0), &votes, 1, false).unwrap();
        assert!(!broken.outcome);
        // Void voters are penalized under both outcomes.
        for r in [&tied, &broken] {
            for id in [2u64, 3, 4] {
                let d = r.deltas.iter().find(|d| d.player_id.0 == id).unwrap();
                assert_eq!((d.point_delta, d.stake_forfeited), (-2, true));
            }
        }
    }

    #[test]
    fn exhaustive_small_tallies_match_reference() {
        // Every vote pattern for up to five verifiers, checked against the
        // brute-force oracle, both tie flags.
        let all = [VoteChoice::True, VoteChoice::False, VoteChoice::Void, VoteChoice::Absent];
        for n in 1..=5usize {
            let verifiers = ids(n as u64);
            let mut pattern = vec![0usize; n - 1];
            loop {
                let mut votes = vec![vote(0, VoteChoice::True)]; // submitter implicit True
                for (i, &p) in pattern.iter().enumerate() {
                    votes.push(vote(i as u64 + 1, all[p]));
                }
                for tie in [true, false] {
                    assert_matches_reference(&verifiers, PlayerId(0), &votes, tie);
                }
                // advance the mixed-radix counter
                let mut i = 0;
                loop {
                    if i == pattern.len() {
                        break;
                    }
                    pattern[i] += 1;
                    if pattern[i] < all.len() {
                        break;
                    }
                    pattern[i] = 0;
                    i += 1;
                }
                if i == pattern.len() {
                    break;
                }
            }
        }
    }

    #[test]
    fn adjudicate_rejects_bad_inputs() {
        let verifiers = ids(3);
        let ok = vec![
            vote(0, VoteChoice::True),
            vote(1, VoteChoice::False),
            vote(2, VoteChoice::False),
        ];
        // duplicate vote
        let mut dup = ok.clone();
        dup.push(vote(1, VoteChoice::True));
        assert_eq!(
            adjudicate(&verifiers, PlayerId(0), &dup, 1, true),
            Err(ProtocolError::DuplicateVote(PlayerId(1)))
        );
        // vote from a non-verifier
        let mut foreign = ok.clone();
        foreign[2].voter_id = PlayerId(9);
        assert_eq!(
            adjudicate(&verifiers, PlayerId(0), &foreign, 1, true),
            Err(ProtocolError::NonVerifierVote(PlayerId(9)))
        );
        // missing verifier entry
        assert_eq!(
            adjudicate(&verifiers, PlayerId(0), &ok[..2], 1, true),
            Err(ProtocolError::MissingVote(PlayerId(2)))
        );
        // submitter outside the verifier set
        assert_eq!(
            adjudicate(&verifiers, PlayerId(7), &ok, 1, true),
            Err(ProtocolError::SubmitterNotVerifier(PlayerId(7)))
        );
    }

    #[test]
    fn currency_conservation_per_adjudication() {
        let verifiers = ids(15);
        let mut votes: Vec<Vote> = (0..9).map(|i| vote(i, VoteChoice::True)).collect();
        votes.extend((9..13).map(|i| vote(i, VoteChoice::Absent)));
        votes.extend((13..15).map(|i| vote(i, VoteChoice::Void)));
        let price = 5;
        let result = adjudicate(&verifiers, PlayerId(0), &votes, price, true).unwrap();
        let escrowed = price * verifiers.len() as u64;
        let returned: Currency = result
            .deltas
            .iter()
            .filter(|d| !d.stake_forfeited)
            .map(|_| price)
            .sum();
        assert_eq!(returned + result.forfeited_total(), escrowed);
    }

    #[test]
    fn prize_examples() {
        let mut points = BTreeMap::new();
        points.insert(PlayerId(0), 10); // A
        points.insert(PlayerId(1), 30); // B
        points.insert(PlayerId(2), -5); // C
        points.insert(PlayerId(3), 10); // D
        // Oracle: exhaustive positive summation, direct formula evaluation.
        let denom: i64 = points.values().filter(|p| **p > 0).sum();
        assert_eq!(denom, 50);
        assert_eq!(compute_prize(100, &points, PlayerId(1)), Some(100 * 30 / 50));
        assert_eq!(compute_prize(100, &points, PlayerId(1)), Some(60));
        assert_eq!(compute_prize(100, &points, PlayerId(2)), None);
        assert_eq!(compute_prize(0, &points, PlayerId(0)), Some(0));

        // Single positive-point player takes the whole pool.
        let mut solo = BTreeMap::new();
        solo.insert(PlayerId(9), 7);
        assert_eq!(compute_prize(123, &solo, PlayerId(9)), Some(123));
    }

    #[test]
    fn prize_payouts_never_exceed_pool() {
        let mut points = BTreeMap::new();
        for i in 0..7 {
            points.insert(PlayerId(i), (i as i64 * 13 + 1) % 17 - 3);
        }
        let pool = 1000;
        let total: Currency = points
            .keys()
            .filter_map(|id| compute_prize(pool, &points, *id))
            .sum();
        assert!(total <= pool, "rounding may lose dust but never overpay");
    }

    #[test]
    fn ban_threshold_is_strict() {
        assert!(check_ban(-6, -5));
        assert!(!check_ban(-5, -5));
        assert!(!check_ban(0, -5));
    }

    #[test]
    fn nash_payoffs_at_even_odds() {
        let t = expected_vote_payoff(VoteStrategy::TrueWithProof, 0.5, 1).unwrap();
        assert_eq!(t.expected_points, 0.5);
        assert_eq!(t.expected_stake_loss, 0.0);

        let f = expected_vote_payoff(VoteStrategy::False, 0.5, 1).unwrap();
        assert_eq!(f.expected_points, -0.5);
        assert_eq!(f.expected_stake_loss, 0.5);

        let certain_false = expected_vote_payoff(VoteStrategy::False, 0.0, 1).unwrap();
        assert_eq!(certain_false.expected_points, 0.0);
        assert_eq!(certain_false.expected_stake_loss, 0.0);

        assert!(expected_vote_payoff(VoteStrategy::False, 1.2, 1).is_err());

        let s = expected_submitter_payoff(0.5, 10).unwrap();
        assert_eq!(s.expected_points, 1.0);
        assert_eq!(s.expected_stake_loss, 5.0);
    }

    #[test]
    fn pool_accounting() {
        let mut pool = PrizePool::new(100);
        pool.credit_forfeit(40);
        assert_eq!(pool.pool, 140);
        pool.pay_out(60).unwrap();
        assert_eq!(pool.pool, 80);
        assert_eq!(pool.paid_out_total, 60);
        assert!(pool.is_consistent());
        assert!(pool.pay_out(1000).is_err());
        assert!(pool.is_consistent());
    }
}
