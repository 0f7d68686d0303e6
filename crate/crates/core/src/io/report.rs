use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const TOOLKIT_NAME: &str = "sscprune";
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// JSON document wrapping a report body with the toolkit version and the
/// configuration that produced it. No timestamps, so identical runs give
/// identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile<T> {
    pub toolkit: String,
    pub version: String,
    pub config: RunConfig,
    #[serde(flatten)]
    pub body: T,
}

impl<T: Serialize + DeserializeOwned> ReportFile<T> {
    pub fn new(config: RunConfig, body: T) -> Self {
        Self {
            toolkit: TOOLKIT_NAME.to_string(),
            version: TOOLKIT_VERSION.to_string(),
            config,
            body,
        }
    }

    /// Pretty JSON with a trailing newline. Fails on non-finite numbers,
    /// which JSON cannot carry.
    pub fn to_json(&self) -> Result<String> {
        let value = serde_json::to_value(self)?;
        if let Some(path) = find_null(&value, String::new()) {
            return Err(Error::Input(format!("report field `{path}` is not a finite number")));
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = self.to_json()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

// optional fields are skipped when absent, so any null is a NaN or infinity
fn find_null(v: &serde_json::Value, path: String) -> Option<String> {
    use serde_json::Value;
    match v {
        Value::Null => Some(path),
        Value::Array(items) => items
            .iter()
            .enumerate()
            .find_map(|(i, x)| find_null(x, format!("{path}[{i}]"))),
        Value::Object(map) => map.iter().find_map(|(k, x)| {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            find_null(x, p)
        }),
        _ => None,
    }
}

/// Reads and validates a JSON run configuration; missing fields take defaults.
pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
