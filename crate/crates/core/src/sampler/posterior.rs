//! Stored posterior draws and their JSON Lines form.
//!
//! Layout: a header line `{"config":…, "mode":…, "dim":…}`, one
//! `{"iter":…, "v":[…]}` line per kept draw, and a trailing
//! `{"summary":…}` line. Wall time is kept out so files are reproducible.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chain::AcceptanceCount;
use super::config::SamplerConfig;
use crate::error::{Error, Result};
use crate::mdp::{ValueFunction, ValueMode};
use crate::util::fmt17_array;

/// Growth of the draw norm across the kept chain. A large ratio suggests an
/// improper posterior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    /// Mean `‖v‖` over the last quarter divided by that over the first.
    pub norm_growth: f64,
    pub flagged: bool,
}

impl DivergenceCheck {
    pub const GROWTH_LIMIT: f64 = 10.0;

    pub fn from_draws(draws: &[ValueFunction]) -> Self {
        let q = draws.len() / 4;
        if q == 0 {
            return DivergenceCheck { norm_growth: 1.0, flagged: false };
        }
        let mean_norm = |ds: &[ValueFunction]| {
            ds.iter().map(|d| d.values().iter().map(|x| x * x).sum::<f64>().sqrt()).sum::<f64>() / ds.len() as f64
        };
        let first = mean_norm(&draws[..q]);
        let last = mean_norm(&draws[draws.len() - q..]);
        let norm_growth = if first > 0.0 { last / first } else if last > 0.0 { f64::INFINITY } else { 1.0 };
        DivergenceCheck { norm_growth, flagged: norm_growth > Self::GROWTH_LIMIT }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSamples {
    pub config: SamplerConfig,
    pub mode: ValueMode,
    pub dim: usize,
    /// Iteration index of each kept draw.
    pub iterations: Vec<usize>,
    pub draws: Vec<ValueFunction>,
    pub acceptance: Vec<AcceptanceCount>,
    pub newton_fallbacks: u64,
    pub divergence: DivergenceCheck,
    pub wall_time_secs: f64,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    config: SamplerConfig,
    mode: ValueMode,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct DrawLine {
    iter: usize,
    v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub draws: usize,
    pub acceptance_rate: Option<f64>,
    pub accepted: Vec<u64>,
    pub proposed: Vec<u64>,
    pub newton_fallbacks: u64,
    pub divergence: DivergenceCheck,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: Summary,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Component `i` across draws.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d.values()[i]).collect()
    }

    pub fn mean(&self) -> Result<ValueFunction> {
        if self.draws.is_empty() {
            return Err(Error::EmptyPosterior);
        }
        let n = self.draws.len() as f64;
        let mean: Vec<f64> = (0..self.dim).map(|i| self.draws.iter().map(|d| d.values()[i]).sum::<f64>() / n).collect();
        Ok(match self.mode {
            ValueMode::Tabular { sum_zero: true } => {
                let m = mean.iter().sum::<f64>() / self.dim as f64;
                ValueFunction::tabular_sum_zero(mean.iter().map(|x| x - m).collect())
            }
            ValueMode::Tabular { sum_zero: false } => ValueFunction::tabular(mean),
            ValueMode::Basis => ValueFunction::basis(mean),
        })
    }

    /// Pooled acceptance rate over all observations.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let total = self.acceptance.iter().fold(AcceptanceCount::default(), |acc, c| AcceptanceCount {
            accepted: acc.accepted + c.accepted,
            proposed: acc.proposed + c.proposed,
        });
        total.rate()
    }

    /// Every `k`-th draw.
    pub fn thinned(&self, k: usize) -> Vec<&ValueFunction> {
        self.draws.iter().step_by(k.max(1)).collect()
    }

    pub fn summary(&self) -> Summary {
        Summary {
            draws: self.draws.len(),
            acceptance_rate: self.acceptance_rate(),
            accepted: self.acceptance.iter().map(|c| c.accepted).collect(),
            proposed: self.acceptance.iter().map(|c| c.proposed).collect(),
            newton_fallbacks: self.newton_fallbacks,
            divergence: self.divergence,
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header = HeaderLine { config: self.config.clone(), mode: self.mode, dim: self.dim };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for (it, d) in self.iterations.iter().zip(&self.draws) {
            writeln!(out, "{{\"iter\":{},\"v\":{}}}", it, fmt17_array(d.values()))?;
        }
        writeln!(out, "{}", serde_json::to_string(&SummaryLine { summary: self.summary() })?)
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let parse = |line: usize, e: serde_json::Error| Error::Parse { line, message: e.to_string() };
        let mut header: Option<HeaderLine> = None;
        let mut iterations = Vec::new();
        let mut draws = Vec::new();
        let mut summary: Option<Summary> = None;
        for (i, line) in input.lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| Error::Parse { line: n, message: e.to_string() })?;
            if line.trim().is_empty() {
                continue;
            }
            if header.is_none() {
                header = Some(serde_json::from_str(&line).map_err(|e| parse(n, e))?);
                continue;
            }
            if summary.is_some() {
                return Err(Error::Parse { line: n, message: "content after the summary line".into() });
            }
            if line.starts_with("{\"summary\"") {
                let s: SummaryLine = serde_json::from_str(&line).map_err(|e| parse(n, e))?;
                summary = Some(s.summary);
                continue;
            }
            let d: DrawLine = serde_json::from_str(&line).map_err(|e| parse(n, e))?;
            let h = header.as_ref().expect("header parsed");
            if d.v.len() != h.dim {
                return Err(Error::Parse { line: n, message: format!("expected {} values", h.dim) });
            }
            iterations.push(d.iter);
            draws.push(ValueFunction::new(d.v, h.mode).map_err(|e| Error::Parse { line: n, message: e.to_string() })?);
        }
        let header = header.ok_or(Error::Parse { line: 1, message: "missing header line".into() })?;
        let summary = summary.ok_or(Error::Parse { line: 0, message: "missing summary line".into() })?;
        if summary.accepted.len() != summary.proposed.len() {
            return Err(Error::Parse { line: 0, message: "acceptance arrays differ in length".into() });
        }
        Ok(PosteriorSamples {
            config: header.config,
            mode: header.mode,
            dim: header.dim,
            iterations,
            draws,
            acceptance: summary
                .accepted
                .iter()
                .zip(&summary.proposed)
                .map(|(&accepted, &proposed)| AcceptanceCount { accepted, proposed })
                .collect(),
            newton_fallbacks: summary.newton_fallbacks,
            divergence: summary.divergence,
            wall_time_secs: 0.0,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}
