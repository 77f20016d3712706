//! Core library for AdChain-style decentralized ad-impression verification.
//!
//! The protocol counts ad impressions through a network of staking verifier
//! nodes: randomly assigned verifiers receive pixel data for an ad, raise
//! hash-committed propositions when they observe a valid impression, and
//! decide each proposition by stake-weighted majority vote. Honest behavior
//! earns points redeemable from a prize pool; dishonest behavior forfeits
//! stakes and eventually gets a node banned.
//!
//! Module layout:
//!
//! - [`protocol`] — pure, side-effect-free rules: vote adjudication,
//!   reward/penalty deltas, prize computation, ban checks, payoff arithmetic.
//! - [`host`] — the host's state machine: verifier assignment, proposition
//!   lifecycle, ledger and pool mutation, impression counters, audit log.
//! - [`agent`] — player-side logic: pixel-event intake, proposition requests,
//!   reverse-lookup voting, parameterized honesty/corruption models.
//! - [`sim`] — deterministic discrete-event simulation binding host and
//!   agents, plus the experiment grid drivers.
//! - [`analytics`] — closed-form Sybil attack probability with Monte Carlo
//!   cross-validation, and the node economics model.
//! - [`wire`] — newline-delimited JSON message surface for running the host
//!   against out-of-process agents, plus record/replay support.

pub mod agent;
pub mod analytics;
pub mod host;
pub mod protocol;
pub mod sim;
pub mod wire;

pub use agent::{hash_user_id, AgentPolicy, LocalAdStore, PixelEvent, VerifierAgent};
pub use host::{AdRegistration, AuditRecord, Host, HostConfig, HostError, PropositionRequest};
pub use protocol::{
    adjudicate, check_ban, compute_prize, expected_submitter_payoff, expected_vote_payoff,
    AdId, AdjudicationResult, Currency, PlayerDelta, PlayerId, Points, PrizePool, Proposition,
    PropositionId, PropositionStatus, ProtocolError, TimestampMs, UserHash, Vote, VoteChoice,
    VoteStrategy,
};
pub use sim::{EventQueue, SimConfig, SimError, SimMetrics};
