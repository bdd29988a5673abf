//! Scripted end-to-end pipelines: the synthetic toy comparison of data
//! augmentation variants, recovery of Tetris controllers from self-play,
//! and time-pressured recording through the session protocol.
//!
//! Every pipeline is a pure function of its config (seeds included) and
//! returns a serializable report; writing files is left to the caller.

use std::sync::Arc;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::choice::{simulate_dataset, sample_action, Dataset};
use crate::diagnostics::{autocorrelation_of, compare_chains, ComparisonReport};
use crate::error::{Error, Result};
use crate::mdp::{TransitionModel, ValueFunction};
use crate::probability::{sample_sum_zero_gaussian, InverseGammaParams, Kappa, SumZeroGaussianPrior};
use crate::rng::RngStream;
use crate::sampler::{run_chain, Moves, PosteriorSamples, SamplerConfig, SamplerMode};
use crate::session::{ClientMessage, Connection, ServerMessage, SessionMode, SessionSettings};
use crate::tetris::{
    action_error, feature_r_matrix, generate_data, map_predicted_action, play, predict_dataset, state_from_ref,
    uniform_guess_error, BoardSettings, GameState, TetrisAction,
};

/// Run length presets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Minutes on a laptop.
    #[default]
    Desk,
    /// Long chains: 5×10⁵ iterations after 10⁴ burn-in.
    Paper,
}

impl Scale {
    pub fn iterations(self) -> (usize, usize) {
        match self {
            Scale::Desk => (20_000, 5_000),
            Scale::Paper => (500_000, 10_000),
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}`"))),
        }
    }
}

/// Evenly spaced subset of at most `limit` draws.
pub fn spaced_draws(samples: &PosteriorSamples, limit: usize) -> Vec<&ValueFunction> {
    let stride = samples.len().div_ceil(limit.max(1)).max(1);
    samples.draws.iter().step_by(stride).collect()
}

/// Lower quartile, median, upper quartile by linear interpolation.
pub fn quartiles(xs: &[f64]) -> [f64; 3] {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (s.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        s[lo] + (h - lo as f64) * (s[hi] - s[lo])
    };
    [q(0.25), q(0.5), q(0.75)]
}

// ---------------------------------------------------------------------------
// Toy comparison

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub states: usize,
    pub actions: usize,
    pub observations: usize,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub max_lag: usize,
    pub variants: Vec<Moves>,
    /// Seeds the MDP, the true value function and the trajectory.
    pub data_seed: u64,
    /// Every chain uses this seed.
    pub seed: u64,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            states: 7,
            actions: 3,
            observations: 20,
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 1.0, b: 1.0 },
            iterations: 20_000,
            burn_in: 5_000,
            max_lag: 50,
            variants: vec![Moves::None, Moves::Scale, Moves::Translate, Moves::ScaleTranslate],
            data_seed: 1,
            seed: 1,
        }
    }
}

impl ToyConfig {
    pub fn at_scale(scale: Scale) -> Self {
        let (iterations, burn_in) = scale.iterations();
        ToyConfig { iterations, burn_in, ..Default::default() }
    }

    pub fn sampler(&self, moves: Moves) -> SamplerConfig {
        SamplerConfig {
            mode: SamplerMode::Tabular,
            moves,
            kappa: self.kappa,
            ig: self.ig,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct ToyReport {
    pub config: ToyConfig,
    pub model: TransitionModel,
    pub truth: ValueFunction,
    pub dataset: Dataset,
    /// One chain per variant, in config order.
    pub chains: Vec<(Moves, PosteriorSamples)>,
    /// One comparison per value component, chains in config order.
    pub comparisons: Vec<ComparisonReport>,
}

impl ToyReport {
    pub fn chain(&self, moves: Moves) -> Option<&PosteriorSamples> {
        self.chains.iter().find(|(m, _)| *m == moves).map(|(_, s)| s)
    }

    fn index(&self, moves: Moves) -> Option<usize> {
        self.chains.iter().position(|(m, _)| *m == moves)
    }

    /// Components whose ACF for `better` is nowhere significantly above
    /// that of `worse` at lags `1..=max_lag`.
    pub fn dominated_components(&self, better: Moves, worse: Moves) -> Option<usize> {
        let (i, j) = (self.index(better)?, self.index(worse)?);
        Some(
            self.comparisons
                .iter()
                .filter(|c| c.dominates(i, j, 1..=self.config.max_lag))
                .count(),
        )
    }
}

pub fn toy_dataset(config: &ToyConfig) -> Result<(TransitionModel, ValueFunction, Dataset)> {
    let mut rng = RngStream::new(config.data_seed, 0).rng();
    let model = TransitionModel::random(config.states, config.actions, &mut rng);
    let prior = SumZeroGaussianPrior::new(config.states, config.kappa)?;
    let truth = sample_sum_zero_gaussian(&prior, &mut rng)?;
    let dataset = simulate_dataset(&model, &truth, config.observations, 0, &mut rng)?;
    Ok((model, truth, dataset))
}

pub fn run_toy(config: &ToyConfig) -> Result<ToyReport> {
    let (model, truth, dataset) = toy_dataset(config)?;
    let chains = config
        .variants
        .iter()
        .map(|&m| Ok((m, run_chain(&dataset, &config.sampler(m))?)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = config.variants.iter().map(|m| m.to_string()).collect();
    let comparisons = (0..config.states)
        .map(|k| {
            let reports = chains
                .iter()
                .map(|(_, s)| autocorrelation_of(&s.component(k), k, config.max_lag))
                .collect::<Result<Vec<_>>>()?;
            compare_chains(&reports, &labels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyReport { config: config.clone(), model, truth, dataset, chains, comparisons })
}

// ---------------------------------------------------------------------------
// Tetris recovery from self-play

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp1Config {
    pub truths: Vec<[f64; 3]>,
    pub board: BoardSettings,
    pub observations: usize,
    pub train: usize,
    pub inference_sizes: Vec<usize>,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    /// Posterior draws voting in each MAP prediction.
    pub prediction_draws: usize,
    pub self_play_seeds: usize,
    pub self_play_steps: usize,
    /// Seeds the data; chains use `seed + 1`, self-play uses `seed + 2 + i`.
    pub seed: u64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Exp1Config {
            truths: vec![[-3.0, -15.0, -1.0], [0.0, 5.0, 0.0], [-20.0, 0.0, 1.0]],
            board: BoardSettings::default(),
            observations: 500,
            train: 100,
            inference_sizes: vec![10, 20, 50, 100],
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 3.0, b: 1e5 },
            iterations: 20_000,
            burn_in: 5_000,
            prediction_draws: 500,
            self_play_seeds: 100,
            self_play_steps: 250,
            seed: 1,
        }
    }
}

impl Exp1Config {
    pub fn at_scale(scale: Scale) -> Self {
        let (iterations, burn_in) = scale.iterations();
        Exp1Config { iterations, burn_in, ..Default::default() }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            mode: SamplerMode::Basis,
            moves: Moves::Scale,
            kappa: self.kappa,
            ig: self.ig,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed + 1,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeResult {
    pub size: usize,
    pub action_error: f64,
    pub acceptance_rate: Option<f64>,
    pub posterior_mean: Vec<f64>,
    pub quartiles: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthResult {
    pub truth: [f64; 3],
    pub game_overs: usize,
    pub uniform_error: f64,
    /// Error of MAP prediction with the true value function.
    pub oracle_error: f64,
    pub sizes: Vec<SizeResult>,
    /// Per component, posterior mass within ±50% of the truth for the
    /// largest inference size.
    pub mass_near_truth: Vec<f64>,
    /// Pieces placed by MAP self-play for each seed, capped at the step
    /// budget.
    pub self_play: Vec<usize>,
    #[serde(skip)]
    pub dataset: Option<Dataset>,
    #[serde(skip)]
    pub posterior: Option<PosteriorSamples>,
}

impl TruthResult {
    pub fn survivors(&self, steps: usize) -> usize {
        self.self_play.iter().filter(|&&s| s >= steps).count()
    }

    /// Error never rises by more than `slack` from one size to the next.
    pub fn error_decreases(&self, slack: f64) -> bool {
        self.sizes.windows(2).all(|w| w[1].action_error <= w[0].action_error + slack)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exp1Report {
    pub config: Exp1Config,
    pub results: Vec<TruthResult>,
}

impl Exp1Report {
    /// `truth,size,action_error,acceptance,mean_1,mean_2,mean_3`
    pub fn error_table_csv(&self) -> String {
        let mut out = String::from("truth,size,action_error,uniform_error,acceptance,mean_1,mean_2,mean_3\n");
        for r in &self.results {
            for s in &r.sizes {
                out.push_str(&format!(
                    "\"{:?}\",{},{},{},{},{},{},{}\n",
                    r.truth,
                    s.size,
                    s.action_error,
                    r.uniform_error,
                    s.acceptance_rate.map_or(String::new(), |a| a.to_string()),
                    s.posterior_mean[0],
                    s.posterior_mean[1],
                    s.posterior_mean[2]
                ));
            }
        }
        out
    }
}

fn fraction_within(xs: &[f64], center: f64, rel: f64) -> f64 {
    let half = (center * rel).abs();
    xs.iter().filter(|x| (*x - center).abs() <= half).count() as f64 / xs.len() as f64
}

/// MAP self-play from an empty board.
pub fn map_self_play(draws: &[&ValueFunction], seed: u64, board: BoardSettings, steps: usize) -> Result<usize> {
    let mut rng = RngStream::new(seed, 3).rng();
    play(seed, board, steps, |_, _, r| map_predicted_action(draws, r, 1.0, &mut rng))
}

pub fn run_exp1_truth(config: &Exp1Config, truth: [f64; 3]) -> Result<TruthResult> {
    if config.train > config.observations || config.inference_sizes.iter().any(|&n| n == 0 || n > config.train) {
        return Err(Error::Config("inference sizes must lie in 1..=train <= observations".into()));
    }
    let v = ValueFunction::basis(truth.to_vec());
    let generated = generate_data(&v, config.observations, config.seed, config.board, true)?;
    let data = generated.dataset;
    let holdout = data.tail_from(config.train);
    let actual: Vec<usize> = holdout.observations.iter().map(|o| o.action).collect();
    let mut rng = RngStream::new(config.seed, 4).rng();
    let oracle = predict_dataset(&[&v], &holdout, &mut rng)?;
    let oracle_error = action_error(&oracle, &actual)?;
    let mut sizes = Vec::new();
    let mut last = None;
    for &n in &config.inference_sizes {
        let posterior = run_chain(&data.head(n), &config.sampler())?;
        let draws = spaced_draws(&posterior, config.prediction_draws);
        let predictions = predict_dataset(&draws, &holdout, &mut rng)?;
        sizes.push(SizeResult {
            size: n,
            action_error: action_error(&predictions, &actual)?,
            acceptance_rate: posterior.acceptance_rate(),
            posterior_mean: posterior.mean()?.into_values(),
            quartiles: (0..3).map(|k| quartiles(&posterior.component(k))).collect(),
        });
        last = Some(posterior);
    }
    let posterior = last.ok_or_else(|| Error::Config("no inference sizes".into()))?;
    let mass_near_truth = (0..3).map(|k| fraction_within(&posterior.component(k), truth[k], 0.5)).collect();
    let draws = spaced_draws(&posterior, config.prediction_draws);
    let self_play = (0..config.self_play_seeds)
        .map(|i| map_self_play(&draws, config.seed + 2 + i as u64, config.board, config.self_play_steps))
        .collect::<Result<Vec<_>>>()?;
    Ok(TruthResult {
        truth,
        game_overs: generated.game_overs.len(),
        uniform_error: uniform_guess_error(&holdout),
        oracle_error,
        sizes,
        mass_near_truth,
        self_play,
        dataset: Some(data),
        posterior: Some(posterior),
    })
}

pub fn run_exp1(config: &Exp1Config) -> Result<Exp1Report> {
    let results = config.truths.iter().map(|&t| run_exp1_truth(config, t)).collect::<Result<Vec<_>>>()?;
    Ok(Exp1Report { config: config.clone(), results })
}

// ---------------------------------------------------------------------------
// Time-pressured recording

/// A simulated player: noisy argmax of a fixed value function after a
/// lognormal think time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedClient {
    pub v: [f64; 3],
    pub median_latency_s: f64,
    pub latency_sigma: f64,
    pub seed: u64,
}

impl Default for ScriptedClient {
    fn default() -> Self {
        ScriptedClient { v: [-3.0, -15.0, -1.0], median_latency_s: 3.2, latency_sigma: 0.8, seed: 7 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordingStats {
    pub observations: usize,
    pub missed: usize,
    pub rejected_late: usize,
    pub desync: usize,
    pub end_reason: String,
}

/// Drive a record session to completion on a simulated clock. Think time
/// for the `i`-th presented block is the `i`-th latency draw, so runs at
/// different deadlines share their random numbers.
pub fn record_scripted(
    client: &ScriptedClient,
    settings: SessionSettings,
    tau_s: Option<f64>,
    blocks: usize,
    game_seed: u64,
) -> Result<(Dataset, RecordingStats)> {
    let latency = LogNormal::new(client.median_latency_s.ln(), client.latency_sigma)
        .map_err(|e| Error::Config(format!("latency distribution: {e}")))?;
    let mut latencies = RngStream::new(client.seed, 0).rng();
    let mut noise = RngStream::new(client.seed, 1).rng();
    let v = client.v;
    let mut conn = Connection::new(settings, None);
    let mut stats = RecordingStats::default();
    let mut now = 0u64;
    let mut pending = conn.handle(ClientMessage::Start { mode: SessionMode::Record, tau_s, blocks: Some(blocks), seed: Some(game_seed) }, now);
    let mut shadow: Option<GameState> = None;
    loop {
        let mut latest = None;
        for m in pending.drain(..) {
            match m {
                ServerMessage::State { board, piece, legal, seq, .. } => {
                    let rows: Vec<String> = board
                        .iter()
                        .map(|r| r.iter().map(|&c| if c == 1 { '#' } else { '.' }).collect())
                        .collect();
                    let state = state_from_ref(&crate::choice::StateRef::Board { piece, board: rows })?;
                    let mine: Vec<TetrisAction> = state.legal_actions();
                    if mine.len() != legal.len()
                        || mine.iter().zip(&legal).any(|(a, w)| a.degrees() != w.rot || a.col != w.col)
                    {
                        stats.desync += 1;
                    }
                    shadow = Some(state);
                    latest = Some(seq);
                }
                ServerMessage::Rejected { reason, .. } if reason == "deadline" => stats.rejected_late += 1,
                ServerMessage::End { reason, .. } => stats.end_reason = reason,
                _ => {}
            }
        }
        if conn.session_finished() || conn.is_closed() {
            break;
        }
        let (Some(seq), Some(state)) = (latest, shadow.as_ref()) else {
            return Err(Error::invalid("session produced no state"));
        };
        let think = (latency.sample(&mut latencies) * 1000.0).round() as u64;
        let (actions, r) = feature_r_matrix(state)?;
        let (a, _) = sample_action(&v, &r, &mut noise)?;
        let answer_at = now + think;
        match conn.next_wakeup() {
            Some(deadline) if deadline < answer_at => {
                stats.missed += 1;
                now = deadline;
                pending = conn.tick(now);
            }
            _ => {
                now = answer_at;
                let choice = actions[a];
                pending = conn.handle(ClientMessage::Action { rot: choice.degrees(), col: choice.col, seq: Some(seq) }, now);
            }
        }
    }
    let dataset = conn.dataset().ok_or_else(|| Error::invalid("no session"))?;
    stats.observations = dataset.len();
    Ok((dataset, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp3Config {
    pub taus: Vec<f64>,
    pub blocks: usize,
    pub client: ScriptedClient,
    pub board: BoardSettings,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Exp3Config {
            taus: vec![10.0, 5.0, 3.0, 1.0],
            blocks: 100,
            client: ScriptedClient::default(),
            board: BoardSettings::default(),
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 3.0, b: 1e5 },
            iterations: 20_000,
            burn_in: 5_000,
            seed: 3,
        }
    }
}

impl Exp3Config {
    pub fn at_scale(scale: Scale) -> Self {
        let (iterations, burn_in) = scale.iterations();
        Exp3Config { iterations, burn_in, ..Default::default() }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            mode: SamplerMode::Basis,
            moves: Moves::Scale,
            kappa: self.kappa,
            ig: self.ig,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed + 1,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TauResult {
    pub tau_s: f64,
    pub stats: RecordingStats,
    pub acceptance_rate: Option<f64>,
    pub quartiles: Vec<[f64; 3]>,
    pub iqr: Vec<f64>,
    #[serde(skip)]
    pub dataset: Option<Dataset>,
    #[serde(skip)]
    pub posterior: Option<PosteriorSamples>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exp3Report {
    pub config: Exp3Config,
    pub results: Vec<TauResult>,
}

impl Exp3Report {
    pub fn counts(&self) -> Vec<usize> {
        self.results.iter().map(|r| r.stats.observations).collect()
    }

    /// Observation counts fall strictly as the deadline tightens.
    pub fn counts_strictly_decrease(&self) -> bool {
        self.counts().windows(2).all(|w| w[1] < w[0])
    }

    /// Each component's IQR never shrinks by more than the relative
    /// `slack` from one deadline to the next tighter one, and ends wider
    /// than it started.
    pub fn iqr_widens(&self, slack: f64) -> bool {
        (0..3).all(|k| {
            let iqr: Vec<f64> = self.results.iter().map(|r| r.iqr[k]).collect();
            iqr.windows(2).all(|w| w[1] >= w[0] * (1.0 - slack)) && iqr.last() > iqr.first()
        })
    }

    pub fn table_csv(&self) -> String {
        let mut out = String::from("tau_s,observations,missed,acceptance,iqr_1,iqr_2,iqr_3\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.tau_s,
                r.stats.observations,
                r.stats.missed,
                r.acceptance_rate.map_or(String::new(), |a| a.to_string()),
                r.iqr[0],
                r.iqr[1],
                r.iqr[2]
            ));
        }
        out
    }
}

pub fn run_exp3(config: &Exp3Config) -> Result<Exp3Report> {
    let settings = SessionSettings { board: config.board, ..Default::default() };
    let results = config
        .taus
        .iter()
        .map(|&tau| {
            let (dataset, stats) = record_scripted(&config.client, settings.clone(), Some(tau), config.blocks, config.seed)?;
            let (posterior, acceptance_rate) = if dataset.is_empty() {
                (None, None)
            } else {
                let p = run_chain(&dataset, &config.sampler())?;
                let a = p.acceptance_rate();
                (Some(p), a)
            };
            // Without data the marginals are the prior's, unbounded in width.
            let quartiles: Vec<[f64; 3]> = match &posterior {
                Some(p) => (0..3).map(|k| quartiles(&p.component(k))).collect(),
                None => vec![[f64::NEG_INFINITY, 0.0, f64::INFINITY]; 3],
            };
            let iqr = quartiles.iter().map(|q| q[2] - q[0]).collect();
            Ok(TauResult { tau_s: tau, stats, acceptance_rate, quartiles, iqr, dataset: Some(dataset), posterior })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Exp3Report { config: config.clone(), results })
}

// ---------------------------------------------------------------------------
// Inference and prediction from one recorded player

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Exp2Config {
    pub blocks: usize,
    pub train_fraction: f64,
    pub client: ScriptedClient,
    pub board: BoardSettings,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub prediction_draws: usize,
    pub self_play_seeds: usize,
    pub self_play_steps: usize,
    pub seed: u64,
}

impl Default for Exp2Config {
    fn default() -> Self {
        Exp2Config {
            blocks: 200,
            train_fraction: 0.5,
            client: ScriptedClient { v: [-4.0, -10.0, -0.5], ..Default::default() },
            board: BoardSettings::default(),
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 3.0, b: 1e5 },
            iterations: 20_000,
            burn_in: 5_000,
            prediction_draws: 500,
            self_play_seeds: 20,
            self_play_steps: 250,
            seed: 2,
        }
    }
}

impl Exp2Config {
    pub fn at_scale(scale: Scale) -> Self {
        let (iterations, burn_in) = scale.iterations();
        Exp2Config { iterations, burn_in, ..Default::default() }
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            mode: SamplerMode::Basis,
            moves: Moves::Scale,
            kappa: self.kappa,
            ig: self.ig,
            iterations: self.iterations,
            burn_in: self.burn_in,
            seed: self.seed + 1,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Exp2Report {
    pub config: Exp2Config,
    pub recording: RecordingStats,
    pub train: usize,
    pub holdout: usize,
    pub acceptance_rate: Option<f64>,
    pub posterior_mean: Vec<f64>,
    pub action_error: f64,
    pub uniform_error: f64,
    pub self_play: Vec<usize>,
    #[serde(skip)]
    pub dataset: Option<Dataset>,
    #[serde(skip)]
    pub posterior: Option<PosteriorSamples>,
}

/// Record an unhurried scripted player, infer from the first part and
/// predict the rest, then let the posterior play.
pub fn run_exp2(config: &Exp2Config) -> Result<Exp2Report> {
    if !(config.train_fraction > 0.0 && config.train_fraction < 1.0) {
        return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
    }
    let settings = SessionSettings { board: config.board, ..Default::default() };
    let (dataset, recording) = record_scripted(&config.client, settings, None, config.blocks, config.seed)?;
    let train = ((dataset.len() as f64) * config.train_fraction).round() as usize;
    let (fit, holdout) = (dataset.head(train), dataset.tail_from(train));
    if fit.is_empty() || holdout.is_empty() {
        return Err(Error::invalid("recording too short to split"));
    }
    let posterior = run_chain(&fit, &config.sampler())?;
    let draws = spaced_draws(&posterior, config.prediction_draws);
    let mut rng = RngStream::new(config.seed, 4).rng();
    let actual: Vec<usize> = holdout.observations.iter().map(|o| o.action).collect();
    let predictions = predict_dataset(&draws, &holdout, &mut rng)?;
    let self_play = (0..config.self_play_seeds)
        .map(|i| map_self_play(&draws, config.seed + 2 + i as u64, config.board, config.self_play_steps))
        .collect::<Result<Vec<_>>>()?;
    Ok(Exp2Report {
        config: config.clone(),
        recording,
        train: fit.len(),
        holdout: holdout.len(),
        acceptance_rate: posterior.acceptance_rate(),
        posterior_mean: posterior.mean()?.into_values(),
        action_error: action_error(&predictions, &actual)?,
        uniform_error: uniform_guess_error(&holdout),
        self_play,
        dataset: Some(dataset),
        posterior: Some(posterior),
    })
}

/// Serve-side mimic draws from a posterior.
pub fn mimic_draws(posterior: &PosteriorSamples, limit: usize) -> Arc<Vec<ValueFunction>> {
    Arc::new(spaced_draws(posterior, limit).into_iter().cloned().collect())
}
