//! Loaded corpus, backends and models shared by the CLI and the HTTP
//! service.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, RwLock};

use crisis_scope_core::linguistic::AnnotatorRegistry;
use crisis_scope_core::models::{
    fit_ranker, Featurizer, ModelError, PreparedMessage, RankedCandidate, TrainedClassifier,
    TrainedRanker,
};
use crisis_scope_core::queries::{QueryEmbeddingCache, QueryError};
use crisis_scope_core::summarize::{summarize, SummarizeError, Summary, SummaryMode};
use crisis_scope_core::{CategoryId, EventCollection, Message, Query, ReferenceReport};
use serde::Serialize;

use crate::checkpoint::{load_classifier, load_ranker, CheckpointError};
use crate::config::{ConfigError, PipelineConfig, SharedEncoder, SharedGenerator};
use crate::io::{load_corpus, load_query_dir, load_report, report_path, IoError};
use crate::starter::starter_queries;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("{0}")]
    Invalid(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl From<ModelError> for SessionError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BackendMismatch { .. }
            | ModelError::Encoder(_)
            | ModelError::Query(QueryError::Encoder(_)) => SessionError::Backend(e.to_string()),
            other => SessionError::Invalid(other.to_string()),
        }
    }
}

impl From<SummarizeError> for SessionError {
    fn from(e: SummarizeError) -> Self {
        match e {
            SummarizeError::Generation(_) | SummarizeError::BudgetExceeded { .. } => {
                SessionError::Backend(e.to_string())
            }
            other => SessionError::Invalid(other.to_string()),
        }
    }
}

/// Seed and backend identities attached to every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub encoder: String,
    pub generator: String,
}

/// Per-event inputs derived once and reused across requests.
struct EventCache {
    prepared: Vec<PreparedMessage>,
    /// Candidate mask from the informative classifier (all true without one).
    candidate: Vec<bool>,
}

pub struct Session {
    config: PipelineConfig,
    collections: Vec<EventCollection>,
    reports: BTreeMap<String, ReferenceReport>,
    encoder: SharedEncoder,
    generator: SharedGenerator,
    annotators: AnnotatorRegistry,
    classifier: Option<TrainedClassifier>,
    rankers: BTreeMap<CategoryId, TrainedRanker>,
    ranker_errors: BTreeMap<CategoryId, String>,
    queries: RwLock<BTreeMap<String, Query>>,
    query_cache: Mutex<QueryEmbeddingCache>,
    events: Mutex<BTreeMap<String, Arc<EventCache>>>,
    /// Held around inference when a backend is not safe to call concurrently.
    exclusive: Option<Mutex<()>>,
    next_query: Mutex<usize>,
}

impl Session {
    /// Reads every configured file and prepares models.
    pub fn load(config: PipelineConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let collections = load_corpus(&config.data.messages)?;
        let mut reports = BTreeMap::new();
        if let Some(dir) = &config.data.reports {
            for c in &collections {
                if report_path(dir, c.event_id()).exists() {
                    reports.insert(c.event_id().to_string(), load_report(dir, c.event_id())?);
                }
            }
        }
        let queries = match &config.data.queries {
            Some(dir) => load_query_dir(dir)?,
            None => starter_queries(),
        };
        Self::new(config, collections, reports, queries)
    }

    /// Builds a session from already loaded data. Ranker checkpoints are
    /// loaded; categories without one get a ranker trained on the labelled
    /// messages when `train_missing_rankers` is set.
    pub fn new(
        config: PipelineConfig,
        collections: Vec<EventCollection>,
        reports: BTreeMap<String, ReferenceReport>,
        queries: Vec<(String, Query)>,
    ) -> Result<Self, SessionError> {
        Self::with_rankers(config, collections, reports, queries, &CategoryId::ALL)
    }

    /// Like [`Session::new`], training missing rankers only for `categories`.
    /// The first query of a category is the one its ranker is trained with.
    pub fn with_rankers(
        config: PipelineConfig,
        collections: Vec<EventCollection>,
        reports: BTreeMap<String, ReferenceReport>,
        queries: Vec<(String, Query)>,
        categories: &[CategoryId],
    ) -> Result<Self, SessionError> {
        config.validate()?;
        let encoder = config.encoder.build();
        let generator = config.generator.build();
        let langs: Vec<String> = collections
            .iter()
            .flat_map(|c| c.languages().iter().cloned())
            .collect();
        let annotators = config.annotator_registry(langs.iter().map(String::as_str))?;
        let classifier = match &config.data.classifier {
            Some(p) => Some(load_classifier(p, &*encoder)?.model),
            None => None,
        };
        let mut rankers = BTreeMap::new();
        for (cat, p) in &config.data.rankers {
            let ranker = load_ranker(p, &*encoder)?.model;
            if ranker.category != *cat {
                return Err(SessionError::Invalid(format!(
                    "{} holds a {} ranker, configured for {cat}",
                    p.display(),
                    ranker.category
                )));
            }
            rankers.insert(*cat, ranker);
        }
        let mut ranker_errors = BTreeMap::new();
        if config.train_missing_rankers {
            let all: Vec<Message> = collections
                .iter()
                .flat_map(|c| c.messages().iter().cloned())
                .collect();
            let featurizer = Featurizer::new(&annotators, &*encoder);
            for &cat in categories {
                if rankers.contains_key(&cat) {
                    continue;
                }
                let Some((_, query)) = queries.iter().find(|(_, q)| q.category == cat) else {
                    ranker_errors.insert(cat, "no query for this category".to_string());
                    continue;
                };
                match fit_ranker(&all, query, &featurizer, &config.model, config.seed) {
                    Ok(r) => {
                        rankers.insert(cat, r);
                    }
                    Err(e) => {
                        tracing::warn!(category = %cat, error = %e, "ranker not trained");
                        ranker_errors.insert(cat, e.to_string());
                    }
                }
            }
        }
        let exclusive = (!encoder.concurrent() || !generator.concurrent()).then(|| Mutex::new(()));
        Ok(Session {
            config,
            collections,
            reports,
            encoder,
            generator,
            annotators,
            classifier,
            rankers,
            ranker_errors,
            queries: RwLock::new(queries.into_iter().collect()),
            query_cache: Mutex::new(QueryEmbeddingCache::new()),
            events: Mutex::new(BTreeMap::new()),
            exclusive,
            next_query: Mutex::new(1),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            seed: self.config.seed,
            encoder: self.encoder.identity(),
            generator: self.generator.name().to_string(),
        }
    }

    pub fn collections(&self) -> &[EventCollection] {
        &self.collections
    }

    pub fn event(&self, id: &str) -> Result<&EventCollection, SessionError> {
        self.collections
            .iter()
            .find(|c| c.event_id() == id)
            .ok_or_else(|| SessionError::NotFound(format!("event `{id}`")))
    }

    pub fn report(&self, event_id: &str) -> Option<&ReferenceReport> {
        self.reports.get(event_id)
    }

    pub fn featurizer(&self) -> Featurizer<'_> {
        Featurizer::new(&self.annotators, &*self.encoder)
    }

    pub fn encoder(&self) -> &SharedEncoder {
        &self.encoder
    }

    pub fn classifier(&self) -> Option<&TrainedClassifier> {
        self.classifier.as_ref()
    }

    pub fn ranker(&self, category: CategoryId) -> Result<&TrainedRanker, SessionError> {
        self.rankers.get(&category).ok_or_else(|| {
            let why = self
                .ranker_errors
                .get(&category)
                .cloned()
                .unwrap_or_else(|| "no checkpoint configured".into());
            SessionError::Unavailable(format!("no ranker for {category}: {why}"))
        })
    }

    pub fn queries(&self) -> BTreeMap<String, Query> {
        self.queries.read().expect("query lock").clone()
    }

    pub fn query(&self, id: &str) -> Result<Query, SessionError> {
        self.queries
            .read()
            .expect("query lock")
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(format!("query `{id}`")))
    }

    /// Stores a query under `id` (or a fresh id) and returns the id.
    pub fn upsert_query(&self, id: Option<String>, query: Query) -> Result<String, SessionError> {
        let query = query
            .validated()
            .map_err(|e| SessionError::Invalid(e.to_string()))?;
        let mut queries = self.queries.write().expect("query lock");
        let id = match id {
            Some(id) if !id.trim().is_empty() => id,
            _ => {
                let mut n = self.next_query.lock().expect("id lock");
                loop {
                    let candidate = format!("q{}", *n);
                    *n += 1;
                    if !queries.contains_key(&candidate) {
                        break candidate;
                    }
                }
            }
        };
        queries.insert(id.clone(), query);
        Ok(id)
    }

    fn guard(&self) -> Option<std::sync::MutexGuard<'_, ()>> {
        self.exclusive.as_ref().map(|m| m.lock().expect("inference lock"))
    }

    fn event_cache(&self, event_id: &str) -> Result<Arc<EventCache>, SessionError> {
        if let Some(c) = self.events.lock().expect("event cache").get(event_id) {
            return Ok(c.clone());
        }
        let collection = self.event(event_id)?;
        let featurizer = self.featurizer();
        let prepared = featurizer.prepare_all(collection.messages())?;
        let candidate = match &self.classifier {
            Some(clf) => prepared
                .iter()
                .map(|p| clf.predict_prepared(p).map(|s| s > 0.5))
                .collect::<Result<_, _>>()?,
            None => vec![true; prepared.len()],
        };
        let cache = Arc::new(EventCache { prepared, candidate });
        self.events
            .lock()
            .expect("event cache")
            .insert(event_id.to_string(), cache.clone());
        Ok(cache)
    }

    /// Informative probabilities for every message of an event.
    pub fn classify(&self, event_id: &str) -> Result<Vec<(String, f64)>, SessionError> {
        let clf = self
            .classifier
            .as_ref()
            .ok_or_else(|| SessionError::Unavailable("no classifier checkpoint configured".into()))?;
        let _g = self.guard();
        let cache = self.event_cache(event_id)?;
        cache
            .prepared
            .iter()
            .map(|p| Ok((p.id.clone(), clf.predict_prepared(p)?)))
            .collect()
    }

    /// Top-`k` candidates of an event for a query.
    pub fn rank(
        &self,
        query: &Query,
        event_id: &str,
        k: Option<usize>,
    ) -> Result<Vec<RankedCandidate>, SessionError> {
        let collection = self.event(event_id)?;
        let ranker = self.ranker(query.category)?;
        let mut options = self.config.rank_options();
        if let Some(k) = k {
            options.k = k;
        }
        let _g = self.guard();
        let cache = self.event_cache(event_id)?;
        let qe = self
            .query_cache
            .lock()
            .expect("query cache")
            .get_or_embed(query, &*self.encoder)
            .map_err(ModelError::from)?
            .clone();
        let mut prepared = Vec::new();
        let mut langs = Vec::new();
        for ((p, m), keep) in cache.prepared.iter().zip(collection.messages()).zip(&cache.candidate) {
            if *keep {
                prepared.push(p.clone());
                langs.push(m.lang.as_str());
            }
        }
        Ok(ranker.rank_prepared(&prepared, &langs, &qe, options)?)
    }

    pub fn summarize(
        &self,
        query: &Query,
        event_id: &str,
        mode: Option<SummaryMode>,
        budget: Option<usize>,
        k: Option<usize>,
    ) -> Result<Summary, SessionError> {
        let candidates = self.rank(query, event_id, k)?;
        let mut config = self.config.summary.clone();
        if let Some(m) = mode {
            config.mode = m;
        }
        if let Some(b) = budget {
            config.budget = b;
        }
        config.seed = self.config.seed;
        let _g = self.guard();
        Ok(summarize(&candidates, &*self.generator, &config)?)
    }
}
