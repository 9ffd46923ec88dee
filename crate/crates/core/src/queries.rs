//! Structured information-need queries and query-similarity features.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::CategoryId;
use crate::encoder::{cosine, Embedding, EncoderBackend, EncoderError};
use crate::rng::fnv1a;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("query has no keywords, templates or prototypes")]
    Empty,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Placeholder tokens allowed inside templates and prototypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateToken {
    Number,
    Location,
}

impl TemplateToken {
    /// Recognizes `NUMBER`/`NUM` and `LOCATION`/`LOC` (uppercase only).
    pub fn parse(word: &str) -> Option<TemplateToken> {
        match word {
            "NUMBER" | "NUM" => Some(TemplateToken::Number),
            "LOCATION" | "LOC" => Some(TemplateToken::Location),
            _ => None,
        }
    }
}

/// Placeholders appearing in a template fragment, in order.
pub fn template_tokens(fragment: &str) -> Vec<TemplateToken> {
    fragment
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(TemplateToken::parse)
        .collect()
}

/// An information need for one category: keywords, template fragments and
/// full prototype sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub category: CategoryId,
    pub keywords: Vec<String>,
    pub templates: Vec<String>,
    pub prototypes: Vec<String>,
}

fn clean(items: Vec<String>) -> Vec<String> {
    items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl Query {
    /// Trims every element, drops blank ones and rejects a query left with
    /// no component at all.
    pub fn new(
        category: CategoryId,
        keywords: Vec<String>,
        templates: Vec<String>,
        prototypes: Vec<String>,
    ) -> Result<Self, QueryError> {
        let q = Query {
            category,
            keywords: clean(keywords),
            templates: clean(templates),
            prototypes: clean(prototypes),
        };
        if q.keywords.is_empty() && q.templates.is_empty() && q.prototypes.is_empty() {
            return Err(QueryError::Empty);
        }
        Ok(q)
    }

    pub fn validated(self) -> Result<Self, QueryError> {
        Query::new(self.category, self.keywords, self.templates, self.prototypes)
    }

    /// Content hash used as cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = fnv1a(0, self.category.name().as_bytes());
        for (tag, list) in [(1u8, &self.keywords), (2, &self.templates), (3, &self.prototypes)] {
            h = fnv1a(h, &[tag]);
            for s in list {
                h = fnv1a(h, s.as_bytes());
                h = fnv1a(h, &[0]);
            }
        }
        h
    }
}

/// One embedding per keyword, template and prototype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryEmbeddings {
    pub keywords: Vec<Embedding>,
    pub templates: Vec<Embedding>,
    pub prototypes: Vec<Embedding>,
}

fn encode_all<E: EncoderBackend + ?Sized>(
    backend: &E,
    items: &[String],
) -> Result<Vec<Embedding>, EncoderError> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let refs: Vec<&str> = items.iter().map(String::as_str).collect();
    backend.encode(&refs)
}

/// Embeds every query element on its own; placeholder tokens are embedded
/// verbatim as words.
pub fn embed_query<E: EncoderBackend + ?Sized>(
    query: &Query,
    backend: &E,
) -> Result<QueryEmbeddings, QueryError> {
    Ok(QueryEmbeddings {
        keywords: encode_all(backend, &query.keywords)?,
        templates: encode_all(backend, &query.templates)?,
        prototypes: encode_all(backend, &query.prototypes)?,
    })
}

/// Query embeddings memoized per (backend identity, query content).
#[derive(Debug, Clone, Default)]
pub struct QueryEmbeddingCache {
    entries: BTreeMap<(String, u64), QueryEmbeddings>,
    hits: usize,
}

impl QueryEmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_embed<E: EncoderBackend + ?Sized>(
        &mut self,
        query: &Query,
        backend: &E,
    ) -> Result<&QueryEmbeddings, QueryError> {
        let key = (backend.identity(), query.fingerprint());
        if self.entries.contains_key(&key) {
            self.hits += 1;
        } else {
            let qe = embed_query(query, backend)?;
            self.entries.insert(key.clone(), qe);
        }
        Ok(&self.entries[&key])
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub const SIMILARITY_COUNT: usize = 6;

/// `[kw_avg, kw_max, tpl_avg, tpl_max, proto_avg, proto_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimilarityFeatures(pub [f64; SIMILARITY_COUNT]);

impl SimilarityFeatures {
    pub fn kw_avg(&self) -> f64 {
        self.0[0]
    }
    pub fn kw_max(&self) -> f64 {
        self.0[1]
    }
    pub fn tpl_avg(&self) -> f64 {
        self.0[2]
    }
    pub fn tpl_max(&self) -> f64 {
        self.0[3]
    }
    pub fn proto_avg(&self) -> f64 {
        self.0[4]
    }
    pub fn proto_max(&self) -> f64 {
        self.0[5]
    }
}

fn avg_max(message: &[f64], component: &[Embedding]) -> (f64, f64) {
    if component.is_empty() {
        return (0.0, 0.0);
    }
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for e in component {
        let c = cosine(message, e);
        sum += c;
        max = max.max(c);
    }
    (sum / component.len() as f64, max)
}

/// Mean and maximum cosine similarity between the message embedding and the
/// elements of each query component; an empty component contributes (0, 0).
pub fn similarity_features(message: &Embedding, qe: &QueryEmbeddings) -> SimilarityFeatures {
    let (ka, km) = avg_max(message, &qe.keywords);
    let (ta, tm) = avg_max(message, &qe.templates);
    let (pa, pm) = avg_max(message, &qe.prototypes);
    SimilarityFeatures([ka, km, ta, tm, pa, pm])
}
