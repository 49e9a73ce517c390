//! Run configuration file: training keys at top level, plus optional
//! `[baseline]` and `[llm]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::error::{Error, Result};
use crate::requirement::LlmConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub baseline: BaselineConfig,
    pub llm: LlmConfig,
}

#[derive(Serialize)]
struct Sections<'a> {
    baseline: &'a BaselineConfig,
    llm: &'a LlmConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let baseline = section::<BaselineConfig>(&mut table, "baseline")?;
        let llm = section::<LlmConfig>(&mut table, "llm")?;
        let train = TrainConfig::deserialize(table).map_err(|e| Error::Config(e.to_string()))?;
        train.validate()?;
        baseline.validate()?;
        Ok(Self { train, baseline, llm })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        let mut s = self.train.to_toml();
        s.push('\n');
        s.push_str(
            &toml::to_string(&Sections {
                baseline: &self.baseline,
                llm: &self.llm,
            })
            .expect("config serializes"),
        );
        s
    }
}

fn section<T: Default + for<'de> Deserialize<'de>>(table: &mut toml::Table, key: &str) -> Result<T> {
    match table.remove(key) {
        None => Ok(T::default()),
        Some(toml::Value::Table(t)) => T::deserialize(t).map_err(|e| Error::Config(format!("[{key}]: {e}"))),
        Some(_) => Err(Error::Config(format!("{key} must be a table"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::from_toml(
            "epochs = 5\nseed = 1\n[baseline]\nepochs = 3\n[llm]\nendpoint = \"http://localhost:9/v1\"\n",
        )
        .unwrap();
        assert_eq!((c.train.epochs, c.train.seed, c.baseline.epochs), (5, 1, 3));
        assert_eq!(c.llm.endpoint.as_deref(), Some("http://localhost:9/v1"));
        assert_eq!(c.llm.model, "gpt-4");
    }

    #[test]
    fn round_trip_and_errors() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(RunConfig::from_toml("epochs = \"many\"").is_err());
        assert!(RunConfig::from_toml("llm = 3").is_err());
        assert!(RunConfig::from_toml("[baseline]\nlora_dropout = 1.5").is_err());
        assert!(RunConfig::from_toml("[baseline]\nbogus = 1").is_err());
    }
}
