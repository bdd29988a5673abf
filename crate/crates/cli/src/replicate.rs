//! `replicate`: scripted experiments with every acceptance measurement in
//! the report.

use std::collections::BTreeMap;

use noisy_mdp::experiments::{
    run_exp1, run_exp2, run_exp3, run_toy, Exp1Config, Exp2Config, Exp3Config, Scale, ToyConfig,
};
use noisy_mdp::sampler::Moves;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{Experiment, ReplicateArgs, ScaleArg};
use crate::config::{merge, Flags};
use crate::error::{CliError, Result};
use crate::Output;

/// Slack on consecutive prediction errors.
pub const ERROR_SLACK: f64 = 0.05;
/// Relative slack on consecutive interquartile ranges.
pub const IQR_SLACK: f64 = 0.10;
pub const SURVIVAL_STEPS: usize = 250;

fn params<T: Serialize + DeserializeOwned>(defaults: T, overlay: Option<Value>, flags: Value) -> Result<T> {
    let mut v = serde_json::to_value(defaults).expect("serializable");
    if let Some(o) = overlay {
        merge(&mut v, o);
    }
    merge(&mut v, flags);
    serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
}

fn field<T: DeserializeOwned>(file: &Value, key: &str) -> Result<Option<T>> {
    file.get(key)
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| CliError::Config(format!("{key}: {e}")))
}

fn manifest<T: Serialize>(out: &Output, experiment: Experiment, scale: Scale, config: &T) -> Result<()> {
    out.manifest("replicate", &json!({"experiment": experiment, "scale": scale, "params": config}))?;
    Ok(())
}

pub fn run(args: ReplicateArgs, file: Option<Value>, seed: Option<u64>, out: &Output) -> Result<()> {
    let mut file = file.unwrap_or_else(|| json!({}));
    let experiment = match args.experiment {
        Some(e) => e,
        None => field(&file, "experiment")?.ok_or_else(|| CliError::Config("no experiment given".into()))?,
    };
    let scale = match args.scale {
        Some(ScaleArg::Desk) => Scale::Desk,
        Some(ScaleArg::Paper) => Scale::Paper,
        None => field(&file, "scale")?.unwrap_or_default(),
    };
    let overlay = file.as_object_mut().and_then(|m| m.remove("params"));
    let mut flags = Flags::default();
    flags.set("iterations", args.iterations).set("burn_in", args.burn_in).set("seed", seed);
    let flags = flags.into_value();
    match experiment {
        Experiment::Toy => {
            let config = params(ToyConfig::at_scale(scale), overlay, flags)?;
            manifest(out, experiment, scale, &config)?;
            toy(&config, out)
        }
        Experiment::Exp1 => {
            let config = params(Exp1Config::at_scale(scale), overlay, flags)?;
            manifest(out, experiment, scale, &config)?;
            exp1(&config, out)
        }
        Experiment::Exp2Protocol => {
            let config = params(Exp2Config::at_scale(scale), overlay, flags)?;
            manifest(out, experiment, scale, &config)?;
            exp2(&config, out)
        }
        Experiment::Exp3Protocol => {
            let config = params(Exp3Config::at_scale(scale), overlay, flags)?;
            manifest(out, experiment, scale, &config)?;
            exp3(&config, out)
        }
    }
}

fn toy(config: &ToyConfig, out: &Output) -> Result<()> {
    tracing::info!(iterations = config.iterations, "toy comparison");
    let report = run_toy(config)?;
    report.dataset.save(&out.path("dataset.jsonl"))?;
    out.write("model.json", report.model.to_json())?;
    for (k, c) in report.comparisons.iter().enumerate() {
        out.write(&format!("acf_v{}.csv", k + 1), c.to_csv())?;
    }
    let mut acceptance = BTreeMap::new();
    let mut means = BTreeMap::new();
    for (m, s) in &report.chains {
        acceptance.insert(m.to_string(), s.acceptance_rate());
        means.insert(m.to_string(), s.mean()?.into_values());
    }
    let min_acceptance = report
        .chains
        .iter()
        .filter_map(|(_, s)| s.acceptance_rate())
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "truth": report.truth.values(),
        "acceptance_rate": acceptance,
        "posterior_mean": means,
        "criteria": {
            "min_acceptance_rate": min_acceptance,
            "acf_dominated_components": report.dominated_components(Moves::ScaleTranslate, Moves::None),
            "components": config.states,
            "lags": config.max_lag,
        },
    });
    out.write_json("report.json", &summary)?;
    Ok(())
}

fn exp1(config: &Exp1Config, out: &Output) -> Result<()> {
    tracing::info!(truths = config.truths.len(), iterations = config.iterations, "recovery experiment");
    let report = run_exp1(config)?;
    out.write("errors.csv", report.error_table_csv())?;
    let criteria: Vec<Value> = report
        .results
        .iter()
        .map(|r| {
            json!({
                "truth": r.truth,
                "mass_near_truth": r.mass_near_truth,
                "error_decreases": r.error_decreases(ERROR_SLACK),
                "survivors": r.survivors(SURVIVAL_STEPS),
                "acceptance_rate": r.sizes.last().and_then(|s| s.acceptance_rate),
            })
        })
        .collect();
    for (i, r) in report.results.iter().enumerate() {
        if let Some(d) = &r.dataset {
            d.save(&out.path(&format!("dataset_{}.jsonl", i + 1)))?;
        }
    }
    out.write_json("report.json", &json!({"results": report.results, "criteria": criteria}))?;
    Ok(())
}

fn exp2(config: &Exp2Config, out: &Output) -> Result<()> {
    tracing::info!(blocks = config.blocks, "recorded-player experiment");
    let report = run_exp2(config)?;
    if let Some(d) = &report.dataset {
        d.save(&out.path("dataset.jsonl"))?;
    }
    if let Some(p) = &report.posterior {
        p.save(&out.path("posterior.jsonl"))?;
    }
    out.write_json("report.json", &report)?;
    Ok(())
}

fn exp3(config: &Exp3Config, out: &Output) -> Result<()> {
    tracing::info!(taus = ?config.taus, "time-pressure experiment");
    let report = run_exp3(config)?;
    out.write("table.csv", report.table_csv())?;
    for r in &report.results {
        if let Some(d) = &r.dataset {
            d.save(&out.path(&format!("dataset_tau{}.jsonl", r.tau_s)))?;
        }
    }
    let criteria = json!({
        "counts": report.counts(),
        "counts_strictly_decrease": report.counts_strictly_decrease(),
        "iqr_widens": report.iqr_widens(IQR_SLACK),
    });
    out.write_json("report.json", &json!({"results": report.results, "criteria": criteria}))?;
    Ok(())
}
