//! Sentence-embedding backends and vector helpers.
//!
//! Real multilingual encoders are plugged in through [`EncoderBackend`]. The
//! crate ships [`MockEncoder`], a deterministic feature-hashing encoder whose
//! alias table maps words of different (pseudo-)languages onto a shared
//! canonical form, so "translations" embed to the same vector.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::corpus::split_sentences;
use crate::rng::fnv1a;

pub const DEFAULT_DIMENSION: usize = 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncoderError {
    #[error("input {index} is empty")]
    EmptyText { index: usize },
    #[error("backend failed on input {index}: {reason}")]
    Backend { index: usize, reason: String },
}

/// Dense sentence vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Embedding(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.0)
    }

    /// Returns the vector scaled to unit length; the zero vector is returned
    /// unchanged.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.0.iter_mut().for_each(|x| *x /= n);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Embedding {
    fn from(v: Vec<f64>) -> Self {
        Embedding(v)
    }
}

/// A multilingual sentence encoder producing fixed-length vectors.
///
/// Implementations must return exactly [`dimension`](Self::dimension)
/// entries per input, in input order, and must be deterministic.
pub trait EncoderBackend {
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn supports(&self, lang: &str) -> bool;

    fn encode(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError>;

    /// Whether `encode` may be called from several threads at once.
    fn concurrent(&self) -> bool {
        true
    }

    /// Stable identity string recorded in checkpoints; models refuse to run
    /// under a backend with a different identity.
    fn identity(&self) -> String {
        format!("{}/{}", self.name(), self.dimension())
    }
}

/// Encodes every sentence of an (already normalized) message.
pub fn sentence_sequence<E: EncoderBackend + ?Sized>(
    text: &str,
    backend: &E,
) -> Result<Vec<Embedding>, EncoderError> {
    let sentences = split_sentences(text);
    if sentences.is_empty() {
        return Err(EncoderError::EmptyText { index: 0 });
    }
    backend.encode(&sentences)
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn l2_norm(u: &[f64]) -> f64 {
    libm::sqrt(dot(u, u))
}

pub fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn euclidean(u: &[f64], v: &[f64]) -> f64 {
    libm::sqrt(squared_distance(u, v))
}

/// Cosine similarity together with a flag set when either vector had zero
/// norm (the value is then 0.0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cosine {
    pub value: f64,
    pub degenerate: bool,
}

pub fn cosine_checked(u: &[f64], v: &[f64]) -> Cosine {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different dimensions");
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Cosine {
            value: 0.0,
            degenerate: true,
        };
    }
    Cosine {
        value: (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0),
        degenerate: false,
    }
}

/// `dot(u, v) / (|u| |v|)`, or 0.0 if either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    cosine_checked(u, v).value
}

/// Feature-hashing encoder over word-level character trigrams.
///
/// Each word is lowercased, rewritten through the alias table, padded with
/// spaces and cut into character 3-grams. Every gram is hashed with the seed
/// to a signed bucket; the bucket counts are L2-normalized. Texts whose
/// aliased words form the same multiset therefore map to identical vectors.
#[derive(Debug, Clone)]
pub struct MockEncoder {
    seed: u64,
    dim: usize,
    aliases: BTreeMap<String, String>,
    languages: Option<BTreeSet<String>>,
}

impl MockEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        MockEncoder {
            seed,
            dim,
            aliases: BTreeMap::new(),
            languages: None,
        }
    }

    /// Words on the left are embedded as if they were the word on the right.
    pub fn with_aliases<I, K, V>(mut self, aliases: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        for (k, v) in aliases {
            let k: String = k.into();
            let v: String = v.into();
            self.aliases.insert(k.to_lowercase(), v.to_lowercase());
        }
        self
    }

    /// Restricts [`supports`](EncoderBackend::supports) to these codes.
    pub fn with_languages<I: IntoIterator<Item = S>, S: Into<String>>(mut self, langs: I) -> Self {
        self.languages = Some(langs.into_iter().map(Into::into).collect());
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn aliases(&self) -> &BTreeMap<String, String> {
        &self.aliases
    }

    /// Canonical word sequence the hashing operates on.
    pub fn canonical_words(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(|w| {
                let lower = w.to_lowercase();
                self.aliases.get(&lower).cloned().unwrap_or(lower)
            })
            .collect()
    }

    fn encode_one(&self, text: &str) -> Embedding {
        let mut words = self.canonical_words(text);
        if words.is_empty() {
            words.push(text.trim().to_lowercase());
        }
        let mut v = vec![0.0; self.dim];
        let mut gram = String::new();
        for word in &words {
            let padded: Vec<char> = core::iter::once(' ')
                .chain(word.chars())
                .chain(core::iter::once(' '))
                .collect();
            for w in padded.windows(3) {
                gram.clear();
                gram.extend(w.iter());
                let h = fnv1a(self.seed, gram.as_bytes());
                let bucket = (h % self.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[bucket] += sign;
            }
        }
        Embedding(v).normalized()
    }

    fn alias_fingerprint(&self) -> u64 {
        let mut h = 0u64;
        for (k, v) in &self.aliases {
            h = fnv1a(h, k.as_bytes());
            h = fnv1a(h, v.as_bytes());
        }
        h
    }
}

impl EncoderBackend for MockEncoder {
    fn name(&self) -> &str {
        "mock"
    }

    fn dimension(&self) -> usize {
        self.dim
    }

    fn supports(&self, lang: &str) -> bool {
        self.languages.as_ref().is_none_or(|l| l.contains(lang))
    }

    fn encode(&self, texts: &[&str]) -> Result<Vec<Embedding>, EncoderError> {
        texts
            .iter()
            .enumerate()
            .map(|(index, t)| {
                if t.trim().is_empty() {
                    Err(EncoderError::EmptyText { index })
                } else {
                    Ok(self.encode_one(t))
                }
            })
            .collect()
    }

    fn identity(&self) -> String {
        format!(
            "mock/{}/seed={}/aliases={:016x}",
            self.dim,
            self.seed,
            self.alias_fingerprint()
        )
    }
}
