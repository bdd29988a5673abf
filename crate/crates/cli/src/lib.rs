//! Command-line runner for the noisy-MDP inference library.
//!
//! Every subcommand resolves its configuration from built-in defaults, an
//! optional `--config` JSON file and its flags, writes the resolved
//! configuration to `run.json` in the output directory, and then writes its
//! artifacts next to it.

pub mod args;
pub mod config;
pub mod error;
pub mod generate;
pub mod infer;
pub mod replicate;
pub mod serve;

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use args::{Cli, Command};
pub use error::{CliError, Result};

/// Destination for one run's artifacts.
#[derive(Clone, Debug)]
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Output { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        self.write(name, text)
    }

    /// `run.json`: the subcommand, the crate version and the resolved
    /// configuration.
    pub fn manifest<T: Serialize>(&self, command: &str, config: &T) -> Result<PathBuf> {
        self.write_json(
            "run.json",
            &serde_json::json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "config": config,
            }),
        )
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref().map(config::load_file).transpose()?;
    let out = Output::create(&cli.out)?;
    match cli.command {
        Command::Generate(a) => generate::run(a, file, cli.seed, &out),
        Command::Infer(a) => infer::run_infer(a, file, cli.seed, &out),
        Command::Predict(a) => infer::run_predict(a, file, cli.seed, &out),
        Command::Diag(a) => infer::run_diag(a, file, &out),
        Command::Replicate(a) => replicate::run(a, file, cli.seed, &out),
        Command::Serve(a) => serve::run(a, file, cli.seed, &out),
    }
}
