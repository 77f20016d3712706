//! Newline-delimited JSON message surface for the host, used by the
//! multi-process mode and by record/replay verification.
//!
//! Inbound message types: `register`, `assign`, `pixel`, `request`, `vote`,
//! `close`. Outbound: `proposition` (reply to an accepted request) and
//! `result` (everything else). One JSON document per line; field order is
//! canonical (struct order), so recorded lines hash reproducibly.

use std::io::{self, BufRead, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PixelEvent;
use crate::host::{AdRegistration, Host, HostConfig, PropositionRequest};
use crate::protocol::{
    AdId, AdjudicationResult, Player, PlayerId, Proposition, PropositionId, TimestampMs,
    VoteChoice,
};

/// Messages a client may send to the host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WireRequest {
    Register { player_id: PlayerId },
    Assign { ad_id: AdId, now: TimestampMs },
    Pixel { event: PixelEvent },
    Request { request: PropositionRequest, now: TimestampMs },
    Vote {
        proposition_id: PropositionId,
        player_id: PlayerId,
        choice: VoteChoice,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proof: Option<String>,
        now: TimestampMs,
    },
    Close { proposition_id: PropositionId, now: TimestampMs },
}

/// Host replies, one per inbound line. `state_hash` is the host-state hash
/// after the message was applied, which is what replay verification checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireResponse {
    Proposition {
        proposition: Proposition,
        state_hash: String,
    },
    Result {
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        player: Option<Player>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        registration: Option<AdRegistration>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        recorded: Option<VoteChoice>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        adjudication: Option<AdjudicationResult>,
        state_hash: String,
    },
}

impl WireResponse {
    pub fn is_ok(&self) -> bool {
        match self {
            WireResponse::Proposition { .. } => true,
            WireResponse::Result { ok, .. } => *ok,
        }
    }

    pub fn state_hash(&self) -> &str {
        match self {
            WireResponse::Proposition { state_hash, .. } => state_hash,
            WireResponse::Result { state_hash, .. } => state_hash,
        }
    }
}

/// One line of a replay script: the event plus the expected post-event state
/// hash captured at record time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptLine {
    pub event: WireRequest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_hash: Option<String>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: state diverged applying {event}: expected {expected}, got {actual}")]
    Divergence { line: usize, event: String, expected: String, actual: String },
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Summary of a completed replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub events_applied: usize,
    pub final_state_hash: String,
}

/// A host plus the seeded generator that drives verifier assignment. The
/// pair is what gets snapshotted, so a restored session reproduces the same
/// assignments a continued one would.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HostSession {
    pub host: Host,
    rng: ChaCha8Rng,
}

impl HostSession {
    pub fn new(config: HostConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        HostSession { host: Host::new(config), rng }
    }

    pub fn snapshot_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_snapshot_json(snapshot: &str) -> serde_json::Result<Self> {
        serde_json::from_str(snapshot)
    }

    /// Apply one message and produce the reply.
    pub fn apply(&mut self, message: &WireRequest) -> WireResponse {
        let mut player = None;
        let mut registration = None;
        let mut recorded = None;
        let mut adjudication = None;
        let outcome: Result<(), String> = match message {
            WireRequest::Register { player_id } => self
                .host
                .register_player(*player_id)
                .map(|p| player = Some(p.clone()))
                .map_err(|e| e.to_string()),
            WireRequest::Assign { ad_id, now } => self
                .host
                .assign_verifiers(*ad_id, *now, &mut self.rng)
                .map(|r| registration = Some(r.clone()))
                .map_err(|e| e.to_string()),
            WireRequest::Pixel { event } => {
                self.host.record_pixel_delivery(event);
                Ok(())
            }
            WireRequest::Request { request, now } => {
                match self.host.submit_proposition_request(request, *now) {
                    Ok(proposition) => {
                        return WireResponse::Proposition {
                            proposition,
                            state_hash: self.host.state_hash(),
                        }
                    }
                    Err(e) => Err(e.to_string()),
                }
            }
            WireRequest::Vote { proposition_id, player_id, choice, proof, now } => self
                .host
                .submit_vote(*proposition_id, *player_id, *choice, proof.clone(), *now)
                .map(|r| recorded = Some(r))
                .map_err(|e| e.to_string()),
            WireRequest::Close { proposition_id, now } => self
                .host
                .close_proposition(*proposition_id, *now)
                .map(|r| adjudication = Some(r))
                .map_err(|e| e.to_string()),
        };
        WireResponse::Result {
            ok: outcome.is_ok(),
            error: outcome.err(),
            player,
            registration,
            recorded,
            adjudication,
            state_hash: self.host.state_hash(),
        }
    }

    /// Apply a message and capture it as a replayable script line.
    pub fn apply_recording(&mut self, message: WireRequest) -> (WireResponse, ScriptLine) {
        let response = self.apply(&message);
        let line = ScriptLine {
            event: message,
            state_hash: Some(response.state_hash().to_string()),
        };
        (response, line)
    }

    /// Serve NDJSON messages from `reader`, writing one reply line per
    /// message to `writer`. Malformed lines get an error reply and leave the
    /// session untouched.
    pub fn serve(&mut self, reader: impl BufRead, mut writer: impl Write) -> io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let response = match serde_json::from_str::<WireRequest>(&line) {
                Ok(message) => self.apply(&message),
                Err(e) => WireResponse::Result {
                    ok: false,
                    error: Some(format!("malformed message: {e}")),
                    player: None,
                    registration: None,
                    recorded: None,
                    adjudication: None,
                    state_hash: self.host.state_hash(),
                },
            };
            serde_json::to_writer(&mut writer, &response)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Replay an NDJSON event script against a session, verifying each recorded
/// state hash. Stops at the first divergent event.
pub fn replay_script(
    session: &mut HostSession,
    reader: impl BufRead,
) -> Result<ReplayReport, ReplayError> {
    let mut events_applied = 0usize;
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let script_line: ScriptLine = serde_json::from_str(&line)
            .map_err(|source| ReplayError::Parse { line: number, source })?;
        let response = session.apply(&script_line.event);
        events_applied += 1;
        if let Some(expected) = &script_line.state_hash {
            let actual = response.state_hash();
            if actual != expected {
                return Err(ReplayError::Divergence {
                    line: number,
                    event: serde_json::to_string(&script_line.event)
                        .unwrap_or_else(|_| "<unprintable>".into()),
                    expected: expected.clone(),
                    actual: actual.to_string(),
                });
            }
        }
    }
    Ok(ReplayReport { events_applied, final_state_hash: session.host.state_hash() })
}
