//! Classification metrics, claim recall, report similarity and the
//! leave-one-language-out / leave-one-event-out harnesses.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    split_leave_one_event_out, split_leave_one_language_out, CategoryId, CorpusError,
    EventCollection, SplitPair,
};
use crate::encoder::{cosine, Embedding, EncoderBackend, EncoderError};
use crate::models::{fit_classifier, Featurizer, ModelConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("need at least two examples")]
    TooFewExamples,
    #[error("labels must be 0 or 1")]
    InvalidLabel,
    #[error("empty text")]
    EmptyText,
    #[error("no claims in any summary")]
    EmptyUnion,
    #[error("summary `{0}` is not among the compared summaries")]
    TargetMissing(String),
    #[error("no category summaries")]
    NoSummaries,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc: f64,
    pub f1_weighted: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
}

/// Area under the ROC curve from midranks (Mann-Whitney U). `None` unless
/// both classes occur.
pub fn auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = alloc::vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their mean.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = (0..labels.len()).filter(|&k| labels[k] == 1).map(|k| ranks[k]).sum();
    let (p, n) = (pos as f64, neg as f64);
    Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Accuracy and support-weighted F1 with a score above 0.5 predicted
/// positive, plus AUC.
pub fn classification_metrics(scores: &[f64], labels: &[u8]) -> Result<ClassificationMetrics, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.len() < 2 {
        return Err(EvalError::TooFewExamples);
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(EvalError::InvalidLabel);
    }
    let n = labels.len() as f64;
    // confusion[truth][predicted]
    let mut confusion = [[0usize; 2]; 2];
    for (&s, &l) in scores.iter().zip(labels) {
        confusion[l as usize][usize::from(s > 0.5)] += 1;
    }
    let acc = (confusion[0][0] + confusion[1][1]) as f64 / n;
    let mut f1_weighted = 0.0;
    for c in 0..2 {
        let support = confusion[c][0] + confusion[c][1];
        if support == 0 {
            continue;
        }
        let tp = confusion[c][c];
        let fp = confusion[1 - c][c];
        let fn_ = confusion[c][1 - c];
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        f1_weighted += f1 * support as f64 / n;
    }
    Ok(ClassificationMetrics {
        acc,
        f1_weighted,
        auc: auc(scores, labels),
    })
}

/// Column means over rows that have metrics; AUC over rows where it is
/// defined.
pub fn average_metrics<'a, I>(rows: I) -> Option<ClassificationMetrics>
where
    I: IntoIterator<Item = &'a ClassificationMetrics>,
{
    let rows: Vec<&ClassificationMetrics> = rows.into_iter().collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let aucs: Vec<f64> = rows.iter().filter_map(|m| m.auc).collect();
    Some(ClassificationMetrics {
        acc: rows.iter().map(|m| m.acc).sum::<f64>() / n,
        f1_weighted: rows.iter().map(|m| m.f1_weighted).sum::<f64>() / n,
        auc: (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64),
    })
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_claim(claim: &str) -> String {
    claim
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSet {
    pub summary_id: String,
    pub claims: BTreeSet<String>,
}

impl ClaimSet {
    /// Normalizes every claim and drops blank ones.
    pub fn new<I, S>(summary_id: impl Into<String>, claims: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        ClaimSet {
            summary_id: summary_id.into(),
            claims: claims
                .into_iter()
                .map(|c| normalize_claim(c.as_ref()))
                .filter(|c| !c.is_empty())
                .collect(),
        }
    }
}

/// Share of all distinct claims (across every compared summary) that the
/// target summary contains.
pub fn claim_recall(target: &ClaimSet, all: &[ClaimSet]) -> Result<f64, EvalError> {
    if !all.iter().any(|s| s.summary_id == target.summary_id) {
        return Err(EvalError::TargetMissing(target.summary_id.clone()));
    }
    let union: BTreeSet<String> = all
        .iter()
        .chain(core::iter::once(target))
        .flat_map(|s| s.claims.iter().map(|c| normalize_claim(c)))
        .collect();
    if union.is_empty() {
        return Err(EvalError::EmptyUnion);
    }
    let own: BTreeSet<String> = target.claims.iter().map(|c| normalize_claim(c)).collect();
    Ok(own.len() as f64 / union.len() as f64)
}

/// Per-token embeddings for report similarity.
pub trait TokenEncoder {
    fn encode_tokens(&self, text: &str) -> Result<Vec<Embedding>, EncoderError>;
}

/// Sentence encoders double as token encoders by embedding every
/// whitespace token on its own.
impl<E: EncoderBackend + ?Sized> TokenEncoder for E {
    fn encode_tokens(&self, text: &str) -> Result<Vec<Embedding>, EncoderError> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        self.encode(&tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportSimilarity {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn greedy_side(from: &[Embedding], to: &[Embedding]) -> f64 {
    let total: f64 = from
        .iter()
        .map(|a| {
            to.iter()
                .map(|b| cosine(a, b))
                .fold(0.0, f64::max)
                .min(1.0)
        })
        .sum();
    total / from.len() as f64
}

/// Greedy token matching: precision averages, over summary tokens, the best
/// cosine to any reference token (floored at 0); recall does the same from
/// the reference side.
pub fn report_similarity<T: TokenEncoder + ?Sized>(
    summary: &str,
    reference: &str,
    encoder: &T,
) -> Result<ReportSimilarity, EvalError> {
    if summary.trim().is_empty() || reference.trim().is_empty() {
        return Err(EvalError::EmptyText);
    }
    let s = encoder.encode_tokens(summary)?;
    let r = encoder.encode_tokens(reference)?;
    if s.is_empty() || r.is_empty() {
        return Err(EvalError::EmptyText);
    }
    let precision = greedy_side(&s, &r);
    let recall = greedy_side(&r, &s);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ReportSimilarity {
        precision,
        recall,
        f1,
    })
}

/// Scores one train/test split.
pub trait FoldEvaluator {
    fn evaluate(&self, split: &SplitPair) -> Result<ClassificationMetrics, String>;
}

impl<F: Fn(&SplitPair) -> Result<ClassificationMetrics, String>> FoldEvaluator for F {
    fn evaluate(&self, split: &SplitPair) -> Result<ClassificationMetrics, String> {
        self(split)
    }
}

/// One harness row. Exactly one of `metrics` and `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldRow {
    pub event: String,
    /// Held-out language; `None` for leave-one-event-out rows.
    pub language: Option<String>,
    pub metrics: Option<ClassificationMetrics>,
    pub error: Option<String>,
}

impl FoldRow {
    fn new(event: &str, language: Option<&str>, outcome: Result<ClassificationMetrics, String>) -> Self {
        let (metrics, error) = match outcome {
            Ok(m) => (Some(m), None),
            Err(e) => (None, Some(e)),
        };
        FoldRow {
            event: event.to_string(),
            language: language.map(str::to_string),
            metrics,
            error,
        }
    }
}

/// One fold per (event, language): train on the event's other languages and
/// test on the held-out one. Failing folds are recorded, not fatal.
pub fn run_lolo<E: FoldEvaluator + ?Sized>(
    collections: &[EventCollection],
    evaluator: &E,
) -> Result<Vec<FoldRow>, EvalError> {
    for c in collections {
        if c.languages().len() < 2 {
            return Err(CorpusError::TooFewLanguages(c.languages().len()).into());
        }
    }
    let mut rows = Vec::new();
    for c in collections {
        for lang in c.languages() {
            let split = split_leave_one_language_out(c, lang)?;
            rows.push(FoldRow::new(c.event_id(), Some(lang), evaluator.evaluate(&split)));
        }
    }
    Ok(rows)
}

/// One fold per event, trained on all other events.
pub fn run_loeo<E: FoldEvaluator + ?Sized>(
    collections: &[EventCollection],
    evaluator: &E,
) -> Result<Vec<FoldRow>, EvalError> {
    if collections.len() < 2 {
        return Err(CorpusError::TooFewEvents(collections.len()).into());
    }
    collections
        .iter()
        .map(|c| {
            let split = split_leave_one_event_out(collections, c.event_id())?;
            Ok(FoldRow::new(c.event_id(), None, evaluator.evaluate(&split)))
        })
        .collect()
}

/// Trains the informative-message classifier on each fold's training side
/// and scores the labelled messages of its test side.
pub struct ClassifierEvaluator<'a> {
    pub featurizer: Featurizer<'a>,
    pub config: ModelConfig,
    pub seed: u64,
}

impl FoldEvaluator for ClassifierEvaluator<'_> {
    fn evaluate(&self, split: &SplitPair) -> Result<ClassificationMetrics, String> {
        let model = fit_classifier(&split.train, &self.featurizer, &self.config, self.seed)
            .map_err(|e| e.to_string())?;
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for m in split.test.iter().filter(|m| m.informative.is_some()) {
            let prepared = self.featurizer.prepare(m).map_err(|e| e.to_string())?;
            scores.push(model.predict_prepared(&prepared).map_err(|e| e.to_string())?);
            labels.push(u8::from(m.informative == Some(true)));
        }
        classification_metrics(&scores, &labels).map_err(|e| e.to_string())
    }
}

/// Per-category summaries joined by newlines in category order.
pub fn event_level_summary(summaries: &BTreeMap<CategoryId, String>) -> Result<String, EvalError> {
    if summaries.is_empty() {
        return Err(EvalError::NoSummaries);
    }
    Ok(summaries.values().map(String::as_str).collect::<Vec<_>>().join("\n"))
}
