//! Regular and diversified summaries over ranked candidates.
//!
//! Regular mode feeds every candidate text, in rank order, to one generation
//! call. Diversified mode clusters the candidate embeddings with k-means
//! (cluster count picked by silhouette over 2..=4), summarizes each cluster
//! with a share of the budget and concatenates the pieces, largest cluster
//! first.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::split_sentences;
use crate::encoder::{euclidean, squared_distance, Embedding};
use crate::models::RankedCandidate;
use crate::rng::seeded;

pub const MAX_CLUSTERS: usize = 4;
const MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SummarizeError {
    #[error("no candidates to summarize")]
    NoCandidates,
    #[error("invalid summary config: {0}")]
    Config(String),
    #[error("cannot form {k} clusters from {n} points")]
    InvalidK { k: usize, n: usize },
    #[error("generation backend failed: {0}")]
    Generation(String),
    #[error("generator produced {produced} tokens for a budget of {budget}")]
    BudgetExceeded { budget: usize, produced: usize },
}

/// Number of whitespace-separated tokens.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Abstractive (or test) text generator.
pub trait GenerationBackend {
    fn name(&self) -> &str;

    /// Longest source, in whitespace tokens, the backend accepts.
    fn max_input_tokens(&self) -> usize;

    /// Must return at most `max_tokens` whitespace tokens.
    fn generate(&self, source: &str, max_tokens: usize) -> Result<String, SummarizeError>;

    fn concurrent(&self) -> bool {
        true
    }
}

/// Extractive stand-in: emits leading sentences of the source while they fit
/// the budget, cutting the first sentence if it alone is too long.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LeadGenerator {
    pub max_input_tokens: usize,
}

impl Default for LeadGenerator {
    fn default() -> Self {
        LeadGenerator {
            max_input_tokens: 512,
        }
    }
}

impl GenerationBackend for LeadGenerator {
    fn name(&self) -> &str {
        "lead"
    }

    fn max_input_tokens(&self) -> usize {
        self.max_input_tokens
    }

    fn generate(&self, source: &str, max_tokens: usize) -> Result<String, SummarizeError> {
        let mut out: Vec<&str> = Vec::new();
        for sentence in source.lines().flat_map(split_sentences) {
            let words: Vec<&str> = sentence.split_whitespace().collect();
            if out.len() + words.len() <= max_tokens {
                out.extend(words);
            } else {
                if out.is_empty() {
                    out.extend(&words[..max_tokens]);
                }
                break;
            }
        }
        Ok(out.join(" "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryMode {
    #[default]
    Regular,
    Diversified,
}

impl fmt::Display for SummaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SummaryMode::Regular => "regular",
            SummaryMode::Diversified => "diversified",
        })
    }
}

impl FromStr for SummaryMode {
    type Err = SummarizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regular" => Ok(SummaryMode::Regular),
            "diversified" => Ok(SummaryMode::Diversified),
            other => Err(SummarizeError::Config(alloc::format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub mode: SummaryMode,
    /// Total output budget in whitespace tokens.
    pub budget: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
    /// Below this many candidates no clustering is attempted.
    pub min_candidates: usize,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        SummaryConfig {
            mode: SummaryMode::Regular,
            budget: 150,
            k_max: MAX_CLUSTERS,
            seed: 0,
            restarts: 10,
            min_candidates: 8,
        }
    }
}

impl SummaryConfig {
    pub fn validate(&self) -> Result<(), SummarizeError> {
        if self.budget < 10 {
            return Err(SummarizeError::Config("budget must be at least 10".into()));
        }
        if self.k_max == 0 || self.k_max > MAX_CLUSTERS {
            return Err(SummarizeError::Config("k_max must be in 1..=4".into()));
        }
        if self.restarts == 0 {
            return Err(SummarizeError::Config("restarts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub text: String,
    pub cluster_size: usize,
    pub source_ids: Vec<String>,
    /// Set when lower-ranked texts were dropped to fit the generator input.
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: SummaryMode,
    pub full_text: String,
    pub segments: Vec<Segment>,
}

impl Summary {
    fn from_segments(mode: SummaryMode, segments: Vec<Segment>) -> Self {
        let full_text = segments
            .iter()
            .map(|s| s.text.as_str())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n");
        Summary {
            mode,
            full_text,
            segments,
        }
    }
}

/// Joins texts with newlines, keeping whole texts in order while they fit
/// `max_tokens`. Returns the document and whether anything was cut.
pub fn source_document(texts: &[&str], max_tokens: usize) -> (String, bool) {
    let mut kept: Vec<String> = Vec::new();
    let mut used = 0;
    for t in texts {
        let n = token_count(t);
        if used + n <= max_tokens {
            kept.push(t.to_string());
            used += n;
        } else {
            if kept.is_empty() {
                let head: Vec<&str> = t.split_whitespace().take(max_tokens).collect();
                kept.push(head.join(" "));
            }
            return (kept.join("\n"), true);
        }
    }
    (kept.join("\n"), false)
}

fn generate_segment<G: GenerationBackend + ?Sized>(
    members: &[&RankedCandidate],
    budget: usize,
    backend: &G,
) -> Result<Segment, SummarizeError> {
    let texts: Vec<&str> = members.iter().map(|c| c.text.as_str()).collect();
    let (source, truncated) = source_document(&texts, backend.max_input_tokens());
    let text = backend.generate(&source, budget)?;
    let produced = token_count(&text);
    if produced > budget {
        return Err(SummarizeError::BudgetExceeded { budget, produced });
    }
    Ok(Segment {
        text,
        cluster_size: members.len(),
        source_ids: members.iter().map(|c| c.message_id.clone()).collect(),
        truncated,
    })
}

/// One generation call over all candidates (given in rank order).
pub fn summarize_regular<G: GenerationBackend + ?Sized>(
    candidates: &[RankedCandidate],
    backend: &G,
    config: &SummaryConfig,
) -> Result<Summary, SummarizeError> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(SummarizeError::NoCandidates);
    }
    let members: Vec<&RankedCandidate> = candidates.iter().collect();
    let segment = generate_segment(&members, config.budget, backend)?;
    Ok(Summary::from_segments(SummaryMode::Regular, vec![segment]))
}

/// Mean silhouette coefficient of a labelling under Euclidean distance.
/// Points alone in their cluster score 0; with fewer than two non-empty
/// clusters the result is 0.
pub fn silhouette(points: &[Embedding], labels: &[usize]) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclidean(&points[i], &points[j]);
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    total / n as f64
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus<R: Rng>(points: &[Embedding], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].to_vec()];
    while centroids.len() < k {
        let d2: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].to_vec());
    }
    centroids
}

fn lloyd(points: &[Embedding], mut centroids: Vec<Vec<f64>>) -> (Vec<usize>, f64) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        // Re-seed empty clusters with the point farthest from its centroid.
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .map(|i| (i, squared_distance(&points[i], &centroids[labels[i]])))
                .fold(None, |acc: Option<(usize, f64)>, (i, d)| match acc {
                    Some((_, bd)) if bd >= d => acc,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                sizes[labels[i]] -= 1;
                labels[i] = c;
                sizes[c] = 1;
                changed = true;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if sizes[c] == 0 {
                continue;
            }
            let mut sum = vec![0.0; dim];
            for (p, _) in points.iter().zip(&labels).filter(|(_, &l)| l == c) {
                for (s, x) in sum.iter_mut().zip(p.iter()) {
                    *s += x;
                }
            }
            *centroid = sum.into_iter().map(|s| s / sizes[c] as f64).collect();
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum();
    (labels, inertia)
}

/// Renumbers clusters by first appearance.
fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(from, _)| *from == l) {
            Some(&(_, to)) => to,
            None => {
                let to = map.len();
                map.push((l, to));
                to
            }
        })
        .collect()
}

/// Seeded k-means++ with restarts; the labelling with the lowest inertia is
/// kept and clusters are numbered in order of first appearance.
pub fn cluster(
    points: &[Embedding],
    k: usize,
    config: &SummaryConfig,
) -> Result<Vec<usize>, SummarizeError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(SummarizeError::InvalidK { k, n });
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    let mut rng = seeded(config.seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..config.restarts.max(1) {
        let init = kmeans_plus_plus(points, k, &mut rng);
        let (labels, inertia) = lloyd(points, init);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    Ok(canonical(&best.expect("at least one restart").0))
}

/// Silhouette of the k-means solution for every candidate cluster count.
/// Empty when the input is below the clustering minimum.
pub fn silhouette_by_k(
    points: &[Embedding],
    config: &SummaryConfig,
) -> Result<Vec<(usize, f64)>, SummarizeError> {
    let n = points.len();
    if n < config.min_candidates.max(3) {
        return Ok(Vec::new());
    }
    let top = config.k_max.min(MAX_CLUSTERS).min(n - 1);
    (2..=top)
        .map(|k| Ok((k, silhouette(points, &cluster(points, k, config)?))))
        .collect()
}

/// 1 below the clustering minimum, otherwise the silhouette argmax over
/// 2..=k_max (ties go to the smaller k).
pub fn choose_num_clusters(
    points: &[Embedding],
    config: &SummaryConfig,
) -> Result<usize, SummarizeError> {
    let scores = silhouette_by_k(points, config)?;
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in scores {
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    Ok(best.map_or(1, |(k, _)| k))
}

/// Clusters the candidates, orders clusters by size (ties: the cluster with
/// the best-ranked member first) and summarizes each with an equal share of
/// the budget, the remainder going to the first cluster.
pub fn summarize_diversified<G: GenerationBackend + ?Sized>(
    candidates: &[RankedCandidate],
    backend: &G,
    config: &SummaryConfig,
) -> Result<Summary, SummarizeError> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(SummarizeError::NoCandidates);
    }
    let points: Vec<Embedding> = candidates.iter().map(|c| c.embedding.clone()).collect();
    let k = choose_num_clusters(&points, config)?;
    let labels = cluster(&points, k, config)?;
    let mut groups: Vec<Vec<&RankedCandidate>> = vec![Vec::new(); k];
    for (c, &l) in candidates.iter().zip(&labels) {
        groups[l].push(c);
    }
    // Canonical numbering already puts the best-ranked cluster first among
    // equals, so a stable sort by size is enough.
    groups.sort_by_key(|g| core::cmp::Reverse(g.len()));
    let share = config.budget / k;
    let remainder = config.budget % k;
    let segments = groups
        .iter()
        .enumerate()
        .map(|(i, members)| {
            let budget = if i == 0 { share + remainder } else { share };
            generate_segment(members, budget, backend)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Summary::from_segments(SummaryMode::Diversified, segments))
}

pub fn summarize<G: GenerationBackend + ?Sized>(
    candidates: &[RankedCandidate],
    backend: &G,
    config: &SummaryConfig,
) -> Result<Summary, SummarizeError> {
    match config.mode {
        SummaryMode::Regular => summarize_regular(candidates, backend, config),
        SummaryMode::Diversified => summarize_diversified(candidates, backend, config),
    }
}
