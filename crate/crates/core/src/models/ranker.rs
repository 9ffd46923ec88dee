use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::classifier::{check_backend, Featurizer, PreparedMessage};
use super::train::{train_network, History, LabeledSample};
use super::{FusionNetwork, ModelConfig, ModelError, NEGATIVE, POSITIVE};
use crate::corpus::{CategoryId, Message};
use crate::encoder::{cosine, Embedding};
use crate::linguistic::{FeatureScaler, RawFeatures};
use crate::queries::{embed_query, similarity_features, Query, QueryEmbeddings, SimilarityFeatures};

/// Query-conditioned relevance model for one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedRanker {
    pub category: CategoryId,
    pub network: FusionNetwork,
    pub scaler: FeatureScaler,
    pub backend_identity: String,
    pub seed: u64,
    pub history: History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub message_id: String,
    pub lang: String,
    /// Normalized message text.
    pub text: String,
    /// Positive-class probability of the ranker.
    pub score: f64,
    pub similarity: SimilarityFeatures,
    /// 1-based rank.
    pub position: usize,
    #[serde(skip)]
    pub embedding: Embedding,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankOptions {
    pub k: usize,
    /// Candidates whose message embeddings reach this cosine with a
    /// better-scored survivor are dropped.
    pub near_duplicate_threshold: f64,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            k: 100,
            near_duplicate_threshold: 0.95,
        }
    }
}

fn is_informative(m: &Message) -> bool {
    m.informative == Some(true) || !m.categories.is_empty()
}

fn ranker_samples(
    train: &[Message],
    prepared: &[PreparedMessage],
    category: CategoryId,
    scaler: &FeatureScaler,
    qe: &QueryEmbeddings,
) -> Vec<LabeledSample> {
    train
        .iter()
        .zip(prepared)
        .map(|(m, p)| LabeledSample {
            input: p.input(scaler, Some(similarity_features(&p.embedding, qe).0)),
            label: if m.categories.contains(&category) {
                POSITIVE
            } else {
                NEGATIVE
            },
        })
        .collect()
}

/// Positives carry the query category; negatives are informative messages
/// without it. Everything else is ignored.
fn ranker_pool(train: &[Message], category: CategoryId) -> Result<Vec<Message>, ModelError> {
    let pool: Vec<Message> = train.iter().filter(|m| is_informative(m)).cloned().collect();
    let positives = pool.iter().filter(|m| m.categories.contains(&category)).count();
    if positives == 0 {
        return Err(ModelError::SingleClass("negative"));
    }
    if positives == pool.len() {
        return Err(ModelError::SingleClass("positive"));
    }
    Ok(pool)
}

pub fn train_ranker(
    mut model: FusionNetwork,
    train: &[Message],
    query: &Query,
    scaler: &FeatureScaler,
    featurizer: &Featurizer<'_>,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedRanker, ModelError> {
    if !model.has_similarity_branch() {
        return Err(ModelError::Config("the ranker needs a similarity branch".into()));
    }
    let pool = ranker_pool(train, query.category)?;
    let prepared = featurizer.prepare_all(&pool)?;
    let qe = embed_query(query, featurizer.encoder)?;
    let samples = ranker_samples(&pool, &prepared, query.category, scaler, &qe);
    let history = train_network(&mut model, &samples, config, seed)?;
    Ok(TrainedRanker {
        category: query.category,
        network: model,
        scaler: scaler.clone(),
        backend_identity: featurizer.encoder.identity(),
        seed,
        history,
    })
}

/// Builds a ranker network and fits its scaler on the ranker's own training
/// pool before training.
pub fn fit_ranker(
    train: &[Message],
    query: &Query,
    featurizer: &Featurizer<'_>,
    config: &ModelConfig,
    seed: u64,
) -> Result<TrainedRanker, ModelError> {
    let mut model = FusionNetwork::build(config, true, seed)?;
    let pool = ranker_pool(train, query.category)?;
    let prepared = featurizer.prepare_all(&pool)?;
    let raws: Vec<RawFeatures> = prepared.iter().map(|p| p.raw).collect();
    let scaler = FeatureScaler::fit(&raws)?;
    let qe = embed_query(query, featurizer.encoder)?;
    let samples = ranker_samples(&pool, &prepared, query.category, &scaler, &qe);
    let history = train_network(&mut model, &samples, config, seed)?;
    Ok(TrainedRanker {
        category: query.category,
        network: model,
        scaler,
        backend_identity: featurizer.encoder.identity(),
        seed,
        history,
    })
}

impl TrainedRanker {
    pub fn score(&self, prepared: &PreparedMessage, qe: &QueryEmbeddings) -> Result<(f64, SimilarityFeatures), ModelError> {
        let sim = similarity_features(&prepared.embedding, qe);
        let p = self.network.predict(&prepared.input(&self.scaler, Some(sim.0)))?;
        Ok((p[POSITIVE], sim))
    }

    /// Ranks already prepared candidates against precomputed query
    /// embeddings. `langs` gives each candidate's language, in order.
    pub fn rank_prepared(
        &self,
        candidates: &[PreparedMessage],
        langs: &[&str],
        qe: &QueryEmbeddings,
        options: RankOptions,
    ) -> Result<Vec<RankedCandidate>, ModelError> {
        if options.k == 0 {
            return Err(ModelError::InvalidK);
        }
        let mut scored = Vec::with_capacity(candidates.len());
        for (p, lang) in candidates.iter().zip(langs) {
            let (score, similarity) = self.score(p, qe)?;
            scored.push(RankedCandidate {
                message_id: p.id.clone(),
                lang: String::from(*lang),
                text: p.normalized.clone(),
                score,
                similarity,
                position: 0,
                embedding: p.embedding.clone(),
            });
        }
        scored.sort_by(compare_candidates);

        let mut seen_texts = BTreeSet::new();
        let mut kept: Vec<RankedCandidate> = Vec::new();
        for c in scored {
            if kept.len() == options.k {
                break;
            }
            if !seen_texts.insert(String::from(c.text.trim())) {
                continue;
            }
            let near_dup = kept
                .iter()
                .any(|k| cosine(&k.embedding, &c.embedding) >= options.near_duplicate_threshold);
            if near_dup {
                continue;
            }
            kept.push(c);
        }
        for (i, c) in kept.iter_mut().enumerate() {
            c.position = i + 1;
        }
        Ok(kept)
    }
}

/// Score descending, then `kw_max` descending, then message id ascending.
fn compare_candidates(a: &RankedCandidate, b: &RankedCandidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.similarity.kw_max().total_cmp(&a.similarity.kw_max()))
        .then_with(|| a.message_id.cmp(&b.message_id))
}

/// Scores candidate messages with the ranker, removes exact and near
/// duplicates (keeping the better-scored copy) and returns the top `k`.
pub fn rank(
    candidates: &[Message],
    query: &Query,
    ranker: &TrainedRanker,
    featurizer: &Featurizer<'_>,
    options: RankOptions,
) -> Result<Vec<RankedCandidate>, ModelError> {
    if options.k == 0 {
        return Err(ModelError::InvalidK);
    }
    check_backend(&ranker.backend_identity, featurizer.encoder)?;
    if ranker.category != query.category {
        return Err(ModelError::Config(format!(
            "ranker was trained for {}, query is for {}",
            ranker.category, query.category
        )));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let prepared = featurizer.prepare_all(candidates)?;
    let langs: Vec<&str> = candidates.iter().map(|m| m.lang.as_str()).collect();
    let qe = embed_query(query, featurizer.encoder)?;
    ranker.rank_prepared(&prepared, &langs, &qe, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::MockEncoder;
    use crate::linguistic::{AnnotatorRegistry, LexiconAnnotator};
    use alloc::sync::Arc;
    use alloc::vec;

    fn setup() -> (AnnotatorRegistry, MockEncoder) {
        let reg = AnnotatorRegistry::new().with("en", Arc::new(LexiconAnnotator::english()));
        (reg, MockEncoder::new(32, 9).with_languages(["en"]))
    }

    fn config() -> ModelConfig {
        ModelConfig {
            embedding_dim: 32,
            lstm_units: 8,
            embedding_layers: vec![16, 8, 8],
            text_layers: vec![8, 4],
            similarity_layers: vec![8, 4],
            learning_rate: 0.01,
            batch_size: 8,
            epochs: 40,
            patience: 0,
            ..ModelConfig::default()
        }
    }

    fn corpus() -> Vec<Message> {
        let mut out = Vec::new();
        let pos = [
            "Heavy rain and strong wind tonight",
            "Storm brings rain and flooding wind",
            "Wind gusts and heavy rain expected",
            "Rain keeps falling with strong wind",
        ];
        let neg = [
            "Volunteers donate food at the shelter",
            "Donate money to the relief fund",
            "Three people injured near the bridge",
            "Roads closed after the collapse",
        ];
        for (i, t) in pos.iter().enumerate() {
            out.push(Message::new(format!("p{i}"), *t, "en", "e").with_category(CategoryId::Weather));
        }
        for (i, t) in neg.iter().enumerate() {
            out.push(Message::new(format!("n{i}"), *t, "en", "e").with_category(CategoryId::Service));
        }
        out.push(Message::new("u0", "unlabelled rain wind", "en", "e"));
        out
    }

    fn weather() -> Query {
        Query::new(
            CategoryId::Weather,
            vec!["rain".into(), "wind".into()],
            vec![],
            vec!["heavy rain and strong wind".into()],
        )
        .unwrap()
    }

    #[test]
    fn needs_both_classes() {
        let (reg, enc) = setup();
        let f = Featurizer::new(&reg, &enc);
        let only_pos: Vec<Message> = corpus().into_iter().filter(|m| m.id.starts_with('p')).collect();
        assert_eq!(
            fit_ranker(&only_pos, &weather(), &f, &config(), 1).unwrap_err(),
            ModelError::SingleClass("positive")
        );
        let none: Vec<Message> = corpus().into_iter().filter(|m| m.id.starts_with('n')).collect();
        assert_eq!(
            fit_ranker(&none, &weather(), &f, &config(), 1).unwrap_err(),
            ModelError::SingleClass("negative")
        );
    }

    #[test]
    fn ranks_planted_messages_first_and_dedups() {
        let (reg, enc) = setup();
        let f = Featurizer::new(&reg, &enc);
        let ranker = fit_ranker(&corpus(), &weather(), &f, &config(), 3).unwrap();
        let mut candidates = corpus();
        candidates.push(Message::new("dup", "Heavy rain and strong wind tonight", "en", "e"));
        let out = rank(&candidates, &weather(), &ranker, &f, RankOptions { k: 4, ..Default::default() })
            .unwrap();
        assert_eq!(out.len(), 4);
        let copies = out.iter().filter(|c| c.message_id == "dup" || c.message_id == "p0").count();
        assert_eq!(copies, 1);
        assert!(out.iter().all(|c| !c.message_id.starts_with('n')));
        for (i, c) in out.iter().enumerate() {
            assert_eq!(c.position, i + 1);
        }
        for w in out.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn rank_rejects_bad_k_and_foreign_backend() {
        let (reg, enc) = setup();
        let f = Featurizer::new(&reg, &enc);
        let ranker = fit_ranker(&corpus(), &weather(), &f, &config(), 3).unwrap();
        let opts = RankOptions { k: 0, ..Default::default() };
        assert_eq!(rank(&corpus(), &weather(), &ranker, &f, opts), Err(ModelError::InvalidK));
        assert_eq!(
            rank(&[], &weather(), &ranker, &f, RankOptions::default()),
            Ok(Vec::new())
        );
        let other = MockEncoder::new(32, 10).with_languages(["en"]);
        let g = Featurizer::new(&reg, &other);
        assert!(matches!(
            rank(&corpus(), &weather(), &ranker, &g, RankOptions::default()),
            Err(ModelError::BackendMismatch { .. })
        ));
    }

    #[test]
    fn ties_break_on_keyword_similarity_then_id() {
        let mk = |id: &str, score: f64, kw: f64| RankedCandidate {
            message_id: id.into(),
            lang: "en".into(),
            text: String::new(),
            score,
            similarity: SimilarityFeatures([0.0, kw, 0.0, 0.0, 0.0, 0.0]),
            position: 0,
            embedding: Embedding::default(),
        };
        let mut v = [mk("b", 0.5, 0.1), mk("a", 0.5, 0.1), mk("c", 0.5, 0.9), mk("d", 0.9, 0.0)];
        v.sort_by(compare_candidates);
        let ids: Vec<&str> = v.iter().map(|c| c.message_id.as_str()).collect();
        assert_eq!(ids, ["d", "c", "a", "b"]);
    }
}
