//! Whole-pipeline configuration, loadable from TOML or JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::CorpusConfig;
use crate::eval::SplitConfig;
use crate::features::FeatureConfig;
use crate::mapnet::{TileConfig, TrainConfig};
use crate::oracle::OracleParams;
use crate::tonemap::TmoParams;
use crate::{Error, Result};

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "TMQA_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub hdr_dir: Option<PathBuf>,
    pub corpus_dir: Option<PathBuf>,
    pub models_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed, copied into each stage by [`PipelineConfig::apply_seed`].
    pub seed: u64,
    pub tonemap: TmoParams,
    pub oracle: OracleParams,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub tiles: TileConfig,
    pub features: FeatureConfig,
    pub eval: SplitConfig,
    pub paths: Paths,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tonemap.validate()?;
        self.oracle.validate()?;
        self.corpus.validate()?;
        self.train.validate()?;
        self.tiles.validate()?;
        self.features.validate()?;
        self.eval.validate()
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.corpus.seed = seed;
        self.train.seed = seed;
        self.eval.seed = seed;
    }

    pub fn parse(text: &str, format: Format) -> Result<Self> {
        let cfg: Self = match format {
            Format::Json => serde_json::from_str(text)?,
            Format::Toml => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self, format: Format) -> Result<String> {
        match format {
            Format::Json => Ok(serde_json::to_string_pretty(self)?),
            Format::Toml => toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string())),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Format::from_path(path))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render(Format::from_path(path))?).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tonemap::{Operator, WhitePoint};

    fn custom() -> PipelineConfig {
        let mut c = PipelineConfig::default();
        c.seed = 42;
        c.tonemap.operator = Operator::Durand;
        c.tonemap.l_white = WhitePoint::Fixed(3.5);
        c.train.max_steps = Some(10);
        c.train.learning_rate = 0.123456789012345;
        c.eval.trials = 3;
        c.paths.models_dir = Some("models".into());
        c
    }

    #[test]
    fn round_trips_in_both_formats() {
        let c = custom();
        for f in [Format::Toml, Format::Json] {
            let text = c.render(f).unwrap();
            assert_eq!(PipelineConfig::parse(&text, f).unwrap(), c, "{f:?}");
        }
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let c = PipelineConfig::parse("seed = 9\n[train]\nepochs = 2\n", Format::Toml).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.patch, 128);
    }

    #[test]
    fn invalid_nested_records_are_rejected() {
        assert!(PipelineConfig::parse("[train]\npatch = 130\n", Format::Toml).is_err());
        assert!(PipelineConfig::parse("[eval]\ntrials = 0\n", Format::Toml).is_err());
        assert!(PipelineConfig::parse("bogus = 1\n", Format::Toml).is_err());
        assert!(PipelineConfig::parse("{\"oracle\": {\"sigma1\": -1}}", Format::Json).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = custom();
        for name in ["a.toml", "a.json"] {
            let p = dir.path().join(name);
            c.save(&p).unwrap();
            assert_eq!(PipelineConfig::load(&p).unwrap(), c);
        }
    }
}
