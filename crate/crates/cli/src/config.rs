//! Config files: a bare command config (TOML or JSON), an echoed `meta`
//! record, or a CSV output whose first line carries the meta record.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::CliError;

pub const META_PREFIX: &str = "# meta ";

/// Command config plus any seed and thread count recorded alongside it.
pub struct Loaded<T> {
    pub config: T,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
}

pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<Loaded<T>, CliError> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: T::default(),
            seed: None,
            threads: None,
        });
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    let doc = parse(&text, path.extension().is_some_and(|e| e == "toml"))
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?;
    from_value(doc, command)
}

fn parse(text: &str, is_toml: bool) -> Result<Value, String> {
    if let Some(line) = text.lines().next().and_then(|l| l.strip_prefix(META_PREFIX)) {
        return serde_json::from_str(line).map_err(|e| e.to_string());
    }
    if is_toml {
        toml::from_str(text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(text).map_err(|e| e.to_string())
    }
}

pub fn from_value<T: DeserializeOwned + Default>(mut doc: Value, command: &str) -> Result<Loaded<T>, CliError> {
    let (mut seed, mut threads) = (None, None);
    if let Some(obj) = doc.as_object_mut() {
        if let (Some(cmd), Some(cfg)) = (obj.get("command").cloned(), obj.remove("config")) {
            if cmd.as_str() != Some(command) {
                return Err(CliError::Invalid(format!(
                    "config was recorded for '{cmd}', not '{command}'"
                )));
            }
            seed = obj.get("seed").and_then(Value::as_u64);
            threads = obj.get("threads").and_then(Value::as_u64).map(|t| t as usize);
            doc = cfg;
        }
    }
    let config = serde_json::from_value(doc).map_err(|e| CliError::Invalid(format!("config: {e}")))?;
    Ok(Loaded { config, seed, threads })
}
