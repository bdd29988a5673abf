//! `generate`: synthetic datasets from a known value function.

use noisy_mdp::choice::simulate_dataset;
use noisy_mdp::experiments::{toy_dataset, ToyConfig};
use noisy_mdp::mdp::{TransitionModel, ValueFunction};
use noisy_mdp::probability::Kappa;
use noisy_mdp::rng::RngStream;
use noisy_mdp::tetris::{generate_data, BoardSettings};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{Environment, GenerateArgs};
use crate::config::{resolve, Flags};
use crate::error::{CliError, Result};
use crate::Output;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub env: Environment,
    /// Tetris feature weights, or tabular state values. Without it a
    /// tabular truth is drawn from the prior.
    pub v: Option<Vec<f64>>,
    pub observations: usize,
    pub seed: u64,
    pub board: BoardSettings,
    pub restart_on_termination: bool,
    pub states: usize,
    pub actions: usize,
    pub kappa: Kappa,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            env: Environment::Tetris,
            v: None,
            observations: 500,
            seed: 1,
            board: BoardSettings::default(),
            restart_on_termination: true,
            states: 7,
            actions: 3,
            kappa: Kappa::finite(2500.0).expect("positive"),
        }
    }
}

pub fn resolve_config(args: &GenerateArgs, file: Option<Value>, seed: Option<u64>) -> Result<GenerateConfig> {
    let mut flags = Flags::default();
    flags
        .set("env", args.env)
        .set("v", args.v.clone())
        .set("observations", args.observations)
        .set("states", args.states)
        .set("actions", args.actions)
        .set("restart_on_termination", args.no_restart.then_some(false));
    let mut board = Flags::default();
    board.set("height", args.height).set("width", args.width);
    flags.set("board", Some(board.into_value()));
    let mut config = resolve(&GenerateConfig::default(), file, flags, seed, "/seed")?;
    if config.env == Environment::Tetris && config.v.is_none() {
        config.v = Some(vec![-3.0, -15.0, -1.0]);
    }
    Ok(config)
}

pub fn run(args: GenerateArgs, file: Option<Value>, seed: Option<u64>, out: &Output) -> Result<()> {
    let config = resolve_config(&args, file, seed)?;
    out.manifest("generate", &config)?;
    match config.env {
        Environment::Tetris => {
            let v = ValueFunction::basis(config.v.clone().expect("resolved"));
            if v.len() != 3 {
                return Err(CliError::Config(format!("Tetris needs 3 feature weights, got {}", v.len())));
            }
            let g = generate_data(&v, config.observations, config.seed, config.board, config.restart_on_termination)?;
            g.dataset.save(&out.path("dataset.jsonl"))?;
            out.write_json("replay.json", &g.replay)?;
            tracing::info!(observations = g.dataset.len(), game_overs = g.game_overs.len(), "generated");
        }
        Environment::Tabular => {
            let (model, truth, dataset) = match &config.v {
                None => toy_dataset(&ToyConfig {
                    states: config.states,
                    actions: config.actions,
                    observations: config.observations,
                    kappa: config.kappa,
                    data_seed: config.seed,
                    ..Default::default()
                })?,
                Some(v) => {
                    if v.len() != config.states {
                        return Err(CliError::Config(format!("v has {} entries for {} states", v.len(), config.states)));
                    }
                    let mut rng = RngStream::new(config.seed, 0).rng();
                    let model = TransitionModel::random(config.states, config.actions, &mut rng);
                    let truth = ValueFunction::tabular(v.clone());
                    let dataset = simulate_dataset(&model, &truth, config.observations, 0, &mut rng)?;
                    (model, truth, dataset)
                }
            };
            let dataset = dataset.with_meta(serde_json::json!({"seed": config.seed, "v": truth.values()}));
            dataset.save(&out.path("dataset.jsonl"))?;
            out.write("model.json", model.to_json())?;
            out.write_json("truth.json", &truth)?;
            tracing::info!(observations = dataset.len(), "generated");
        }
    }
    Ok(())
}
