//! Pipeline configuration file and backend construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crisis_scope_core::encoder::DEFAULT_DIMENSION;
use crisis_scope_core::linguistic::{AnnotatorRegistry, LexiconAnnotator, SharedAnnotator};
use crisis_scope_core::models::{ModelConfig, RankOptions};
use crisis_scope_core::summarize::{GenerationBackend, LeadGenerator, SummaryConfig};
use crisis_scope_core::{CategoryId, EncoderBackend, MockEncoder};
use serde::{Deserialize, Serialize};

pub const CONFIG_ENV: &str = "CRISIS_SCOPE_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "crisis-scope.json";

pub type SharedEncoder = Arc<dyn EncoderBackend + Send + Sync>;
pub type SharedGenerator = Arc<dyn GenerationBackend + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("configured path does not exist: {0}")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum EncoderConfig {
    /// Hashing encoder; `aliases` maps foreign words onto shared pivots.
    Mock {
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        aliases: BTreeMap<String, String>,
        #[serde(default)]
        languages: Option<Vec<String>>,
    },
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Mock {
            dimension: DEFAULT_DIMENSION,
            seed: 0,
            aliases: BTreeMap::new(),
            languages: None,
        }
    }
}

impl EncoderConfig {
    pub fn dimension(&self) -> usize {
        match self {
            EncoderConfig::Mock { dimension, .. } => *dimension,
        }
    }

    pub fn build(&self) -> SharedEncoder {
        match self {
            EncoderConfig::Mock {
                dimension,
                seed,
                aliases,
                languages,
            } => {
                let mut enc = MockEncoder::new(*dimension, *seed).with_aliases(aliases.clone());
                if let Some(langs) = languages {
                    enc = enc.with_languages(langs.clone());
                }
                Arc::new(enc)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorConfig {
    Lead {
        #[serde(default = "default_max_input")]
        max_input_tokens: usize,
    },
}

fn default_max_input() -> usize {
    LeadGenerator::default().max_input_tokens
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Lead {
            max_input_tokens: default_max_input(),
        }
    }
}

impl GeneratorConfig {
    pub fn build(&self) -> SharedGenerator {
        match self {
            GeneratorConfig::Lead { max_input_tokens } => Arc::new(LeadGenerator {
                max_input_tokens: *max_input_tokens,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorPreset {
    /// Lexicon annotator with the English starter vocabulary.
    English,
    /// Shape rules only, no vocabulary.
    Basic,
}

impl AnnotatorPreset {
    fn build(self) -> SharedAnnotator {
        match self {
            AnnotatorPreset::English => Arc::new(LexiconAnnotator::english()),
            AnnotatorPreset::Basic => Arc::new(LexiconAnnotator::empty()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    /// JSONL message files.
    pub messages: Vec<PathBuf>,
    /// Directory holding `<event_id>.report.txt` files.
    pub reports: Option<PathBuf>,
    /// Directory of query JSON files; the built-in starter set otherwise.
    pub queries: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub rankers: BTreeMap<CategoryId, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub encoder: EncoderConfig,
    pub generator: GeneratorConfig,
    pub annotators: BTreeMap<String, AnnotatorPreset>,
    /// Used for languages without an entry in `annotators`.
    pub fallback_annotator: Option<AnnotatorPreset>,
    pub model: ModelConfig,
    pub summary: SummaryConfig,
    pub k: usize,
    pub near_duplicate_threshold: f64,
    pub data: DataPaths,
    pub seed: u64,
    pub request_timeout_secs: u64,
    /// Train rankers for categories without a checkpoint when a session
    /// loads.
    pub train_missing_rankers: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            encoder: EncoderConfig::default(),
            generator: GeneratorConfig::default(),
            annotators: BTreeMap::from([("en".to_string(), AnnotatorPreset::English)]),
            fallback_annotator: Some(AnnotatorPreset::Basic),
            model: ModelConfig::default(),
            summary: SummaryConfig::default(),
            k: 100,
            near_duplicate_threshold: 0.95,
            data: DataPaths::default(),
            seed: 0,
            request_timeout_secs: 30,
            train_missing_rankers: true,
        }
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Parses a config file; relative data paths are taken relative to the
    /// file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut config: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let d = &mut config.data;
        d.messages.iter_mut().for_each(|p| resolve(base, p));
        for p in [&mut d.reports, &mut d.queries, &mut d.classifier].into_iter().flatten() {
            resolve(base, p);
        }
        d.rankers.values_mut().for_each(|p| resolve(base, p));
        Ok(config)
    }

    /// `explicit` wins, then `$CRISIS_SCOPE_CONFIG`, then `crisis-scope.json`
    /// in the working directory; with none of them present the defaults are
    /// used.
    pub fn locate(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        if let Some(p) = explicit {
            return Self::from_file(p);
        }
        if let Some(p) = std::env::var_os(CONFIG_ENV) {
            return Self::from_file(Path::new(&p));
        }
        let default = Path::new(DEFAULT_CONFIG_FILE);
        if default.exists() {
            return Self::from_file(default);
        }
        Ok(Self::default())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.summary
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.encoder.dimension() != self.model.embedding_dim {
            return Err(ConfigError::Invalid(format!(
                "encoder dimension {} differs from model.embedding_dim {}",
                self.encoder.dimension(),
                self.model.embedding_dim
            )));
        }
        if self.encoder.dimension() == 0 {
            return Err(ConfigError::Invalid("encoder dimension must be positive".into()));
        }
        if self.k == 0 {
            return Err(ConfigError::Invalid("k must be at least 1".into()));
        }
        if !(self.near_duplicate_threshold > 0.0 && self.near_duplicate_threshold <= 1.0) {
            return Err(ConfigError::Invalid(
                "near_duplicate_threshold must be in (0, 1]".into(),
            ));
        }
        let d = &self.data;
        let paths = d
            .messages
            .iter()
            .chain(&d.reports)
            .chain(&d.queries)
            .chain(&d.classifier)
            .chain(d.rankers.values());
        for p in paths {
            if !p.exists() {
                return Err(ConfigError::MissingPath(p.clone()));
            }
        }
        Ok(())
    }

    pub fn rank_options(&self) -> RankOptions {
        RankOptions {
            k: self.k,
            near_duplicate_threshold: self.near_duplicate_threshold,
        }
    }

    /// Registers an annotator for every language in `langs`.
    pub fn annotator_registry<'a, I>(&self, langs: I) -> Result<AnnotatorRegistry, ConfigError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut reg = AnnotatorRegistry::new();
        for (lang, preset) in &self.annotators {
            reg.register(lang.clone(), preset.build());
        }
        for lang in langs {
            if reg.get(lang).is_none() {
                match self.fallback_annotator {
                    Some(preset) => reg.register(lang, preset.build()),
                    None => {
                        return Err(ConfigError::Invalid(format!(
                            "no annotator configured for language `{lang}`"
                        )))
                    }
                }
            }
        }
        Ok(reg)
    }
}
