//! The interactive record/mimic protocol as a sans-IO state machine.
//!
//! A transport feeds [`Connection::handle`] with decoded client messages
//! and calls [`Connection::tick`] when [`Connection::next_wakeup`] passes;
//! both return the messages to send. Time is milliseconds on a clock
//! owned by the caller, so the same logic runs against real sockets and
//! simulated clients.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::choice::{DataSource, Dataset, Observation};
use crate::error::Result;
use crate::mdp::{ValueFunction, ValueMode};
use crate::rng::{self, RngStream};
use crate::tetris::{feature_r_matrix, map_predicted_action, observe, BoardSettings, TetrisAction, TetrisGame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    Record,
    Mimic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAction {
    pub rot: u16,
    pub col: u8,
}

impl From<TetrisAction> for WireAction {
    fn from(a: TetrisAction) -> Self {
        WireAction { rot: a.degrees(), col: a.col }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Start {
        mode: SessionMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tau_s: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        blocks: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Action {
        rot: u16,
        col: u8,
        /// Sequence number of the state being answered.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    Download,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State {
        /// Rows top to bottom, 1 for occupied.
        board: Vec<Vec<u8>>,
        piece: u8,
        legal: Vec<WireAction>,
        /// Time left for this decision, absent without a deadline.
        deadline_ms: Option<u64>,
        seq: u64,
    },
    Cleared {
        rows: usize,
    },
    MimicAction {
        rot: u16,
        col: u8,
        seq: u64,
    },
    Rejected {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seq: Option<u64>,
    },
    End {
        reason: String,
        observations: usize,
    },
    /// The session dataset as JSON Lines text.
    Dataset {
        jsonl: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable message")
    }
}

/// End reasons that close the connection.
pub const PROTOCOL_ERROR_PREFIX: &str = "protocol:";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSettings {
    pub board: BoardSettings,
    pub default_blocks: usize,
    pub max_blocks: usize,
    /// Delay between streamed mimic moves.
    pub mimic_interval_ms: u64,
    /// At most this many evenly spaced posterior draws vote per mimic move.
    pub mimic_draws: usize,
    /// Seed used when the client does not send one.
    pub seed: u64,
}

impl Default for SessionSettings {
    fn default() -> Self {
        SessionSettings {
            board: BoardSettings::default(),
            default_blocks: 100,
            max_blocks: 10_000,
            mimic_interval_ms: 300,
            mimic_draws: 200,
            seed: 0,
        }
    }
}

struct Session {
    mode: SessionMode,
    tau_ms: Option<u64>,
    tau_s: Option<f64>,
    blocks: usize,
    blocks_done: usize,
    seed: u64,
    game: TetrisGame,
    observations: Vec<Observation>,
    seq: u64,
    deadline_at: Option<u64>,
    next_mimic_at: Option<u64>,
    restarts: usize,
    noise: rng::Rng,
    ended: bool,
}

/// One client connection; holds at most one live session at a time.
pub struct Connection {
    settings: SessionSettings,
    posterior: Option<Arc<Vec<ValueFunction>>>,
    session: Option<Session>,
    closed: bool,
}

impl Connection {
    /// `posterior` draws enable mimic sessions.
    pub fn new(settings: SessionSettings, posterior: Option<Arc<Vec<ValueFunction>>>) -> Self {
        Connection { settings, posterior, session: None, closed: false }
    }

    /// A protocol violation or a finished transport ends the connection.
    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn session_finished(&self) -> bool {
        self.session.as_ref().is_some_and(|s| s.ended)
    }

    /// Earliest time at which [`Connection::tick`] has work to do.
    pub fn next_wakeup(&self) -> Option<u64> {
        let s = self.session.as_ref().filter(|s| !s.ended)?;
        match s.mode {
            SessionMode::Record => s.deadline_at,
            SessionMode::Mimic => s.next_mimic_at,
        }
    }

    /// Observations recorded by the current or last session.
    pub fn dataset(&self) -> Option<Dataset> {
        let s = self.session.as_ref()?;
        let meta = serde_json::json!({
            "mode": s.mode,
            "tau_s": s.tau_s,
            "blocks": s.blocks,
            "blocks_played": s.blocks_done,
            "restarts": s.restarts,
            "seed": s.seed,
            "height": self.settings.board.height,
            "width": self.settings.board.width,
            "preview": false,
        });
        Some(
            Dataset::new(ValueMode::Basis, 3, s.observations.clone())
                .expect("consistent observations")
                .with_source(DataSource::Human)
                .with_meta(meta),
        )
    }

    fn violation(&mut self, what: &str) -> Vec<ServerMessage> {
        self.closed = true;
        let observations = self.session.as_ref().map_or(0, |s| s.observations.len());
        vec![ServerMessage::End { reason: format!("{PROTOCOL_ERROR_PREFIX}{what}"), observations }]
    }

    /// A message that failed to decode.
    pub fn malformed(&mut self, detail: &str) -> Vec<ServerMessage> {
        self.violation(&format!("bad_message: {detail}"))
    }

    pub fn handle(&mut self, msg: ClientMessage, now: u64) -> Vec<ServerMessage> {
        if self.closed {
            return Vec::new();
        }
        let mut out = self.tick(now);
        match msg {
            ClientMessage::Start { mode, tau_s, blocks, seed } => {
                if self.session.as_ref().is_some_and(|s| !s.ended) {
                    return self.violation("session_already_running");
                }
                if let Some(t) = tau_s {
                    if !(t > 0.0 && t.is_finite()) {
                        return self.violation("tau_s must be positive");
                    }
                }
                let blocks = blocks.unwrap_or(self.settings.default_blocks);
                if blocks == 0 || blocks > self.settings.max_blocks {
                    return self.violation("blocks out of range");
                }
                if mode == SessionMode::Mimic && self.posterior.is_none() {
                    out.push(ServerMessage::End { reason: "no_posterior".into(), observations: 0 });
                    return out;
                }
                let seed = seed.unwrap_or(self.settings.seed);
                let game = match TetrisGame::new(self.settings.board.height, self.settings.board.width, seed) {
                    Ok(g) => g,
                    Err(e) => return self.violation(&e.to_string()),
                };
                self.session = Some(Session {
                    mode,
                    tau_ms: tau_s.map(|t| (t * 1000.0).round() as u64),
                    tau_s,
                    blocks,
                    blocks_done: 0,
                    seed,
                    game,
                    observations: Vec::new(),
                    seq: 0,
                    deadline_at: None,
                    next_mimic_at: None,
                    restarts: 0,
                    noise: RngStream::new(seed, 2).rng(),
                    ended: false,
                });
                out.extend(self.emit_state(now));
            }
            ClientMessage::Action { rot, col, seq } => {
                let Some(s) = self.session.as_mut() else {
                    return self.violation("action_before_start");
                };
                if s.ended {
                    out.push(ServerMessage::Rejected { reason: "ended".into(), seq });
                    return out;
                }
                if s.mode == SessionMode::Mimic {
                    out.push(ServerMessage::Rejected { reason: "mimic".into(), seq });
                    return out;
                }
                if let Some(q) = seq {
                    if q != s.seq {
                        // Answers to a state whose deadline already passed.
                        let reason = if q < s.seq { "deadline" } else { "stale" };
                        out.push(ServerMessage::Rejected { reason: reason.into(), seq });
                        return out;
                    }
                }
                let action = TetrisAction::from_degrees(rot, col).ok();
                let legal = action.is_some_and(|a| s.game.state().board.is_legal(s.game.state().piece, a));
                if !legal {
                    out.push(ServerMessage::Rejected { reason: "illegal".into(), seq });
                    out.extend(self.resend_state(now));
                    return out;
                }
                let action = action.expect("checked");
                let t = s.observations.len();
                match observe(t, s.game.state(), action) {
                    Ok(o) => s.observations.push(o),
                    Err(e) => return self.violation(&e.to_string()),
                }
                let outcome = s.game.apply(action).expect("legal action");
                s.blocks_done += 1;
                if outcome.rows_cleared > 0 {
                    out.push(ServerMessage::Cleared { rows: outcome.rows_cleared });
                }
                out.extend(self.advance(now));
            }
            ClientMessage::Download => match self.dataset() {
                Some(d) => out.push(ServerMessage::Dataset { jsonl: d.to_jsonl_string() }),
                None => return self.violation("download_before_start"),
            },
        }
        out
    }

    /// Fire any expired deadline or due mimic move.
    pub fn tick(&mut self, now: u64) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        while let Some(at) = self.next_wakeup() {
            if at > now {
                break;
            }
            let s = self.session.as_mut().expect("live session");
            match s.mode {
                SessionMode::Record => {
                    // Missed decision: untouched fall, nothing recorded.
                    s.blocks_done += 1;
                    match s.game.apply_untouched() {
                        Ok(o) if o.rows_cleared > 0 => out.push(ServerMessage::Cleared { rows: o.rows_cleared }),
                        _ => {}
                    }
                    out.extend(self.advance(at));
                }
                SessionMode::Mimic => {
                    out.extend(self.mimic_move(at));
                }
            }
        }
        out
    }

    fn mimic_move(&mut self, now: u64) -> Vec<ServerMessage> {
        let draws = Arc::clone(self.posterior.as_ref().expect("mimic needs a posterior"));
        let limit = self.settings.mimic_draws.max(1);
        let stride = draws.len().div_ceil(limit).max(1);
        let voters: Vec<&ValueFunction> = draws.iter().step_by(stride).collect();
        let s = self.session.as_mut().expect("live session");
        let mut out = Vec::new();
        let (actions, r) = match feature_r_matrix(s.game.state()) {
            Ok(x) => x,
            Err(_) => return self.advance(now),
        };
        let idx = match map_predicted_action(&voters, &r, 1.0, &mut s.noise) {
            Ok(i) => i,
            Err(e) => return self.violation(&e.to_string()),
        };
        let a = actions[idx];
        out.push(ServerMessage::MimicAction { rot: a.degrees(), col: a.col, seq: s.seq });
        let outcome = s.game.apply(a).expect("legal action");
        s.blocks_done += 1;
        if outcome.rows_cleared > 0 {
            out.push(ServerMessage::Cleared { rows: outcome.rows_cleared });
        }
        out.extend(self.advance(now));
        out
    }

    /// After a block: end, restart after game over, or present the next
    /// piece.
    fn advance(&mut self, now: u64) -> Vec<ServerMessage> {
        let s = self.session.as_mut().expect("live session");
        if s.blocks_done >= s.blocks {
            s.ended = true;
            s.deadline_at = None;
            s.next_mimic_at = None;
            return vec![ServerMessage::End { reason: "complete".into(), observations: s.observations.len() }];
        }
        if s.game.state().is_over() {
            s.game.restart();
            s.restarts += 1;
        }
        self.emit_state(now)
    }

    fn state_message(&self, now: u64) -> ServerMessage {
        let s = self.session.as_ref().expect("live session");
        let st = s.game.state();
        ServerMessage::State {
            board: st.board.to_matrix(),
            piece: st.piece,
            legal: st.legal_actions().into_iter().map(WireAction::from).collect(),
            deadline_ms: s.deadline_at.map(|d| d.saturating_sub(now)),
            seq: s.seq,
        }
    }

    fn emit_state(&mut self, now: u64) -> Vec<ServerMessage> {
        let interval = self.settings.mimic_interval_ms;
        let s = self.session.as_mut().expect("live session");
        s.seq += 1;
        match s.mode {
            SessionMode::Record => s.deadline_at = s.tau_ms.map(|t| now + t),
            SessionMode::Mimic => s.next_mimic_at = Some(now + interval),
        }
        vec![self.state_message(now)]
    }

    fn resend_state(&self, now: u64) -> Vec<ServerMessage> {
        vec![self.state_message(now)]
    }
}

/// Decode a client text frame.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, String> {
    serde_json::from_str(text).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start(mode: SessionMode, tau_s: Option<f64>, blocks: usize) -> ClientMessage {
        ClientMessage::Start { mode, tau_s, blocks: Some(blocks), seed: Some(1) }
    }

    fn first_legal(msgs: &[ServerMessage]) -> (WireAction, u64) {
        msgs.iter()
            .rev()
            .find_map(|m| match m {
                ServerMessage::State { legal, seq, .. } => Some((legal[0], *seq)),
                _ => None,
            })
            .expect("a state message")
    }

    #[test]
    fn wire_format() {
        let m = parse_client_message(r#"{"type":"start","mode":"record","tau_s":5,"blocks":20}"#).unwrap();
        assert_eq!(m, ClientMessage::Start { mode: SessionMode::Record, tau_s: Some(5.0), blocks: Some(20), seed: None });
        let m = parse_client_message(r#"{"type":"action","rot":90,"col":3}"#).unwrap();
        assert_eq!(m, ClientMessage::Action { rot: 90, col: 3, seq: None });
        assert!(parse_client_message(r#"{"type":"jump"}"#).is_err());
        let s = ServerMessage::Rejected { reason: "deadline".into(), seq: None }.to_json();
        assert_eq!(s, r#"{"type":"rejected","reason":"deadline"}"#);
        let e = ServerMessage::End { reason: "complete".into(), observations: 3 }.to_json();
        assert_eq!(e, r#"{"type":"end","reason":"complete","observations":3}"#);
    }

    #[test]
    fn timely_session_records_every_block() {
        let mut c = Connection::new(SessionSettings::default(), None);
        let mut msgs = c.handle(start(SessionMode::Record, Some(10.0), 100), 0);
        let mut now = 0;
        while !c.session_finished() {
            now += 50;
            let (a, seq) = first_legal(&msgs);
            msgs = c.handle(ClientMessage::Action { rot: a.rot, col: a.col, seq: Some(seq) }, now);
        }
        assert!(matches!(msgs.last(), Some(ServerMessage::End { observations: 100, .. })));
        assert_eq!(c.dataset().unwrap().len(), 100);
    }

    #[test]
    fn silent_client_records_nothing() {
        let mut c = Connection::new(SessionSettings::default(), None);
        c.handle(start(SessionMode::Record, Some(1.0), 30), 0);
        let mut now = 0;
        let mut states = 0;
        while !c.session_finished() {
            now = c.next_wakeup().unwrap();
            states += c.tick(now).iter().filter(|m| matches!(m, ServerMessage::State { .. })).count();
        }
        assert_eq!(now, 30_000);
        assert_eq!(states, 29);
        assert_eq!(c.dataset().unwrap().len(), 0);
    }

    #[test]
    fn late_and_illegal_actions_are_rejected() {
        let mut c = Connection::new(SessionSettings::default(), None);
        let msgs = c.handle(start(SessionMode::Record, Some(1.0), 10), 0);
        let (a, seq) = first_legal(&msgs);
        let late = c.handle(ClientMessage::Action { rot: a.rot, col: a.col, seq: Some(seq) }, 1500);
        assert!(late.iter().any(|m| matches!(m, ServerMessage::Rejected { reason, .. } if reason == "deadline")));
        assert_eq!(c.dataset().unwrap().len(), 0);
        let bad = c.handle(ClientMessage::Action { rot: 0, col: 9, seq: None }, 1600);
        assert!(matches!(&bad[0], ServerMessage::Rejected { reason, .. } if reason == "illegal"));
        assert!(matches!(&bad[1], ServerMessage::State { deadline_ms: Some(400), .. }));
        let skew = c.handle(ClientMessage::Action { rot: 45, col: 0, seq: None }, 1700);
        assert!(matches!(&skew[0], ServerMessage::Rejected { reason, .. } if reason == "illegal"));
    }

    #[test]
    fn protocol_violations_close_the_connection() {
        let mut c = Connection::new(SessionSettings::default(), None);
        let out = c.handle(ClientMessage::Action { rot: 0, col: 0, seq: None }, 0);
        assert!(matches!(&out[0], ServerMessage::End { reason, .. } if reason.starts_with(PROTOCOL_ERROR_PREFIX)));
        assert!(c.is_closed());
        let mut c = Connection::new(SessionSettings::default(), None);
        c.handle(start(SessionMode::Record, None, 5), 0);
        c.handle(start(SessionMode::Record, None, 5), 1);
        assert!(c.is_closed());
        let mut c = Connection::new(SessionSettings::default(), None);
        let out = c.handle(start(SessionMode::Mimic, None, 5), 0);
        assert!(matches!(&out[0], ServerMessage::End { reason, .. } if reason == "no_posterior"));
    }

    #[test]
    fn mimic_streams_legal_actions() {
        let draws = Arc::new(vec![ValueFunction::basis(vec![-3.0, -15.0, -1.0]); 5]);
        let settings = SessionSettings { mimic_interval_ms: 10, ..Default::default() };
        let mut c = Connection::new(settings, Some(draws));
        let mut last_legal = match &c.handle(start(SessionMode::Mimic, None, 100), 0)[0] {
            ServerMessage::State { legal, .. } => legal.clone(),
            other => panic!("{other:?}"),
        };
        let mut moves = 0;
        while !c.session_finished() {
            let now = c.next_wakeup().unwrap();
            for m in c.tick(now) {
                match m {
                    ServerMessage::MimicAction { rot, col, .. } => {
                        assert!(last_legal.contains(&WireAction { rot, col }));
                        moves += 1;
                    }
                    ServerMessage::State { legal, .. } => last_legal = legal,
                    _ => {}
                }
            }
        }
        assert_eq!(moves, 100);
        assert!(c.dataset().unwrap().is_empty());
    }

    #[test]
    fn download_returns_the_dataset() {
        let mut c = Connection::new(SessionSettings::default(), None);
        let msgs = c.handle(start(SessionMode::Record, None, 2), 0);
        let (a, _) = first_legal(&msgs);
        c.handle(ClientMessage::Action { rot: a.rot, col: a.col, seq: None }, 5);
        let out = c.handle(ClientMessage::Download, 6);
        let ServerMessage::Dataset { jsonl } = &out[0] else { panic!() };
        let d = Dataset::read_jsonl(jsonl.as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.source, DataSource::Human);
    }
}
