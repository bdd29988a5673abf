//! `infer`, `predict` and `diag`.

use std::path::PathBuf;

use noisy_mdp::choice::Dataset;
use noisy_mdp::diagnostics::{
    acf_csv, autocorrelation_of, compare_chains, histogram_csv, summarize, trace_csv, AcfReport,
};
use noisy_mdp::experiments::spaced_draws;
use noisy_mdp::probability::{InverseGammaParams, Kappa};
use noisy_mdp::rng::RngStream;
use noisy_mdp::sampler::{
    run_chain, InitPreset, Moves, PosteriorSamples, SamplerConfig, SamplerMode, Step1Method,
};
use noisy_mdp::tetris::{action_error, predict_dataset, uniform_guess_error};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{DiagArgs, InferArgs, PredictArgs};
use crate::config::{kappa_value, resolve, Flags};
use crate::error::{CliError, Result};
use crate::Output;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub data: Option<PathBuf>,
    pub head: Option<usize>,
    /// Follows the dataset when unset.
    pub mode: Option<SamplerMode>,
    /// `scale+translate` for tabular data and `scale` for basis data when
    /// unset.
    pub moves: Option<Moves>,
    pub kappa: Kappa,
    pub ig: InverseGammaParams,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub step1: Step1Method,
    pub defensive_weight: f64,
    pub init: InitPreset,
    pub seed: u64,
    pub max_lag: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        InferConfig {
            data: None,
            head: None,
            mode: None,
            moves: None,
            kappa: Kappa::finite(2500.0).expect("positive"),
            ig: InverseGammaParams { a: 3.0, b: 1e5 },
            iterations: 20_000,
            burn_in: 5_000,
            thinning: 1,
            step1: s.step1,
            defensive_weight: s.defensive_weight,
            init: InitPreset::Zero,
            seed: 1,
            max_lag: 50,
        }
    }
}

impl InferConfig {
    pub fn sampler(&self) -> SamplerConfig {
        let mode = self.mode.unwrap_or_default();
        SamplerConfig {
            mode,
            moves: self.moves.unwrap_or(match mode {
                SamplerMode::Tabular => Moves::ScaleTranslate,
                SamplerMode::Basis => Moves::Scale,
            }),
            kappa: self.kappa,
            ig: self.ig,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thinning: self.thinning,
            step1: self.step1,
            defensive_weight: self.defensive_weight,
            init: self.init.clone(),
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_value(Value::from(text)).map_err(|_| CliError::Config(format!("unknown {what} `{text}`")))
}

pub fn load_dataset(path: &std::path::Path) -> Result<Dataset> {
    Ok(Dataset::load(path)?)
}

fn required(path: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    path.clone().ok_or_else(|| CliError::Config(format!("no {what} given")))
}

pub fn resolve_infer(args: &InferArgs, file: Option<Value>, seed: Option<u64>) -> Result<(InferConfig, Dataset)> {
    let mut flags = Flags::default();
    flags
        .set("data", args.data.clone())
        .set("head", args.head)
        .set("moves", args.moves.as_deref().map(|m| m.parse::<Moves>()).transpose()?)
        .set("kappa", args.kappa.as_deref().map(kappa_value).transpose()?)
        .set("iterations", args.iterations)
        .set("burn_in", args.burn_in)
        .set("thinning", args.thinning)
        .set("max_lag", args.max_lag)
        .set("step1", args.step1.as_deref().map(|s| parse_enum::<Step1Method>("Step-1 method", s)).transpose()?);
    let mut ig = Flags::default();
    ig.set("a", args.ig_a).set("b", args.ig_b);
    flags.set("ig", Some(ig.into_value()));
    let mut config = resolve(&InferConfig::default(), file, flags, seed, "/seed")?;
    let mut dataset = load_dataset(&required(&config.data, "dataset")?)?;
    if let Some(n) = config.head {
        dataset = dataset.head(n);
    }
    let data_mode = if dataset.mode.is_tabular() { SamplerMode::Tabular } else { SamplerMode::Basis };
    config.mode = Some(config.mode.unwrap_or(data_mode));
    config.moves = Some(config.sampler().moves);
    config.sampler().validate_for(&dataset)?;
    Ok((config, dataset))
}

fn acf_reports(post: &PosteriorSamples, max_lag: usize) -> Vec<Option<AcfReport>> {
    (0..post.dim)
        .map(|k| autocorrelation_of(&post.component(k), k, max_lag).ok())
        .collect()
}

fn write_diagnostics(post: &PosteriorSamples, out: &Output, prefix: &str, max_lag: usize, bins: Option<usize>) -> Result<()> {
    let summary = serde_json::json!({
        "chain": summarize(post)?,
        "sampler": post.summary(),
    });
    out.write_json(&format!("{prefix}summary.json"), &summary)?;
    out.write(&format!("{prefix}trace.csv"), trace_csv(post))?;
    for (k, r) in acf_reports(post, max_lag).iter().enumerate() {
        match r {
            Some(r) => {
                out.write(&format!("{prefix}acf_v{}.csv", k + 1), acf_csv(r))?;
            }
            None => tracing::warn!(component = k + 1, "constant or short series; no autocorrelation"),
        }
        if let Some(b) = bins {
            out.write(&format!("{prefix}hist_v{}.csv", k + 1), histogram_csv(&post.component(k), b)?)?;
        }
    }
    Ok(())
}

pub fn run_infer(args: InferArgs, file: Option<Value>, seed: Option<u64>, out: &Output) -> Result<()> {
    let (config, dataset) = resolve_infer(&args, file, seed)?;
    out.manifest("infer", &config)?;
    let sampler = config.sampler();
    tracing::info!(observations = dataset.len(), iterations = sampler.iterations, moves = %sampler.moves, "sampling");
    let post = run_chain(&dataset, &sampler)?;
    post.save(&out.path("posterior.jsonl"))?;
    write_diagnostics(&post, out, "", config.max_lag, None)?;
    if post.divergence.flagged {
        tracing::warn!(growth = post.divergence.norm_growth, "value-function norm keeps growing; the posterior may be improper");
    }
    tracing::info!(draws = post.len(), acceptance = ?post.acceptance_rate(), "done");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictConfig {
    pub posterior: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub from: usize,
    pub draws: usize,
    pub seed: u64,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig { posterior: None, data: None, from: 0, draws: 500, seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub observations: usize,
    pub draws: usize,
    pub action_error: f64,
    pub uniform_error: f64,
}

pub fn run_predict(args: PredictArgs, file: Option<Value>, seed: Option<u64>, out: &Output) -> Result<()> {
    let mut flags = Flags::default();
    flags
        .set("posterior", args.posterior)
        .set("data", args.data)
        .set("from", args.from)
        .set("draws", args.draws);
    let config = resolve(&PredictConfig::default(), file, flags, seed, "/seed")?;
    out.manifest("predict", &config)?;
    let post = PosteriorSamples::load(&required(&config.posterior, "posterior")?)?;
    let dataset = load_dataset(&required(&config.data, "dataset")?)?;
    if post.mode != dataset.mode || post.dim != dataset.dim {
        return Err(CliError::Config(format!(
            "posterior is {:?} with {} components but the dataset is {:?} with {}",
            post.mode, post.dim, dataset.mode, dataset.dim
        )));
    }
    let holdout = dataset.tail_from(config.from);
    if holdout.is_empty() {
        return Err(CliError::Config("no held-out observations to predict".into()));
    }
    let draws = spaced_draws(&post, config.draws);
    let mut rng = RngStream::new(config.seed, 0).rng();
    let predictions = predict_dataset(&draws, &holdout, &mut rng)?;
    let actual: Vec<usize> = holdout.observations.iter().map(|o| o.action).collect();
    let mut csv = String::from("t,predicted,actual\n");
    for ((o, p), a) in holdout.observations.iter().zip(&predictions).zip(&actual) {
        csv.push_str(&format!("{},{p},{a}\n", o.t));
    }
    out.write("predictions.csv", csv)?;
    let report = PredictReport {
        observations: holdout.len(),
        draws: draws.len(),
        action_error: action_error(&predictions, &actual)?,
        uniform_error: uniform_guess_error(&holdout),
    };
    out.write_json("report.json", &report)?;
    tracing::info!(error = report.action_error, uniform = report.uniform_error, "predicted");
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagConfig {
    pub posteriors: Vec<PathBuf>,
    pub max_lag: usize,
    pub bins: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig { posteriors: Vec::new(), max_lag: 50, bins: 40 }
    }
}

pub fn run_diag(args: DiagArgs, file: Option<Value>, out: &Output) -> Result<()> {
    let mut flags = Flags::default();
    flags
        .set("posteriors", (!args.posteriors.is_empty()).then_some(args.posteriors))
        .set("max_lag", args.max_lag)
        .set("bins", args.bins);
    let config = resolve(&DiagConfig::default(), file, flags, None, "")?;
    if config.posteriors.is_empty() {
        return Err(CliError::Config("no posterior files given".into()));
    }
    out.manifest("diag", &config)?;
    let posts = config
        .posteriors
        .iter()
        .map(|p| PosteriorSamples::load(p).map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    let several = posts.len() > 1;
    for (i, post) in posts.iter().enumerate() {
        let prefix = if several { format!("chain{}/", i + 1) } else { String::new() };
        write_diagnostics(post, out, &prefix, config.max_lag, Some(config.bins))?;
    }
    if several {
        let dim = posts[0].dim;
        if posts.iter().any(|p| p.dim != dim) {
            return Err(CliError::Config("posteriors to compare must share their dimension".into()));
        }
        let labels: Vec<String> = (1..=posts.len()).map(|i| format!("chain{i}")).collect();
        for k in 0..dim {
            let reports = posts
                .iter()
                .map(|p| autocorrelation_of(&p.component(k), k, config.max_lag))
                .collect::<noisy_mdp::Result<Vec<_>>>()?;
            out.write(&format!("compare_v{}.csv", k + 1), compare_chains(&reports, &labels)?.to_csv())?;
        }
    }
    Ok(())
}
