//! Layered configuration: built-in defaults, then a JSON file, then flags.
//!
//! The file may be a bare config object or a `run.json` manifest written by
//! an earlier run, in which case its `config` field is used.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{CliError, Result};

/// Recursively overlay `top` onto `base`; objects merge key by key, every
/// other value replaces.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

pub fn load_file(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match value {
        Value::Object(mut m) if m.contains_key("command") && m.contains_key("config") => {
            Ok(m.remove("config").expect("checked"))
        }
        Value::Object(_) => Ok(value),
        _ => Err(CliError::Config(format!("{}: expected a JSON object", path.display()))),
    }
}

/// Flag values that were actually given.
#[derive(Default)]
pub struct Flags(Map<String, Value>);

impl Flags {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_string(), serde_json::to_value(v).expect("serializable flag"));
        }
        self
    }

    pub fn into_value(self) -> Value {
        Value::Object(self.0)
    }
}

/// Defaults, then the file, then flags, then the global seed at `seed_at`
/// (a JSON pointer).
pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    file: Option<Value>,
    flags: Flags,
    seed: Option<u64>,
    seed_at: &str,
) -> Result<T> {
    let mut value = serde_json::to_value(defaults).expect("serializable defaults");
    if let Some(f) = file {
        merge(&mut value, f);
    }
    merge(&mut value, flags.into_value());
    if let Some(s) = seed {
        set_pointer(&mut value, seed_at, Value::from(s))?;
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
}

fn set_pointer(value: &mut Value, pointer: &str, new: Value) -> Result<()> {
    let mut cur = value;
    for key in pointer.split('/').skip(1) {
        let Value::Object(m) = cur else {
            return Err(CliError::Config(format!("cannot set {pointer}")));
        };
        cur = m.entry(key.to_string()).or_insert(Value::Object(Map::new()));
    }
    *cur = new;
    Ok(())
}

/// A `κ` flag: a number or `inf`.
pub fn kappa_value(text: &str) -> Result<Value> {
    match text.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Value::from(x)),
        _ if matches!(text, "inf" | "infinity") => Ok(Value::from("inf")),
        _ => Err(CliError::Config(format!("kappa must be a positive number or `inf`, got `{text}`"))),
    }
}
