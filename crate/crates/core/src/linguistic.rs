//! Linguistic annotation and the message-level feature vector.
//!
//! Taggers, parsers and NER models are external; they plug in through
//! [`Annotator`] and are looked up per language in an [`AnnotatorRegistry`].
//! [`LexiconAnnotator`] is a small deterministic rule/dictionary backend used
//! for fixtures and desk-scale runs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::{marker_counts, normalize, split_sentences, Message, URL_TOKEN, USER_TOKEN};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinguisticError {
    #[error("no annotator registered for language `{0}`")]
    UnsupportedLanguage(String),
    #[error("message `{0}` has no text to annotate")]
    EmptyText(String),
    #[error("annotator failed: {0}")]
    Backend(String),
    #[error("cannot fit a feature scaler on an empty corpus")]
    EmptyTraining,
}

/// Universal POS tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Upos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Upos,
    /// Modal auxiliary (can, must, should, ...).
    #[serde(default)]
    pub modal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityClass {
    Person,
    Place,
    Org,
    Date,
}

impl EntityClass {
    /// Maps common NER label sets (spaCy, CoNLL, Stanza) onto the four classes.
    pub fn from_label(label: &str) -> Option<EntityClass> {
        match label {
            "PERSON" | "PER" => Some(EntityClass::Person),
            "GPE" | "LOC" | "PLACE" | "FAC" => Some(EntityClass::Place),
            "ORG" | "NORP_ORG" => Some(EntityClass::Org),
            "DATE" => Some(EntityClass::Date),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub span: Range<usize>,
    pub class: EntityClass,
}

/// Tokens, dependency arcs and entity spans for one message.
///
/// `sentences` holds the token range of each sentence; every sentence has
/// exactly one arc labelled `root` (with `head == dependent`).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Annotation {
    pub tokens: Vec<Token>,
    pub sentences: Vec<Range<usize>>,
    pub dependencies: Vec<Dependency>,
    pub entities: Vec<Entity>,
}

impl Annotation {
    pub fn validate(&self) -> Result<(), LinguisticError> {
        let n = self.tokens.len();
        let bad = |m: &str| Err(LinguisticError::Backend(m.to_string()));
        if self
            .dependencies
            .iter()
            .any(|d| d.head >= n || d.dependent >= n)
        {
            return bad("dependency index out of range");
        }
        if self.entities.iter().any(|e| e.span.end > n || e.span.start >= e.span.end) {
            return bad("entity span out of range");
        }
        for s in &self.sentences {
            let roots = self
                .dependencies
                .iter()
                .filter(|d| d.relation == "root" && s.contains(&d.dependent))
                .count();
            if roots != 1 {
                return bad("sentence without exactly one root");
            }
        }
        Ok(())
    }

    fn count_relation(&self, pred: impl Fn(&str) -> bool) -> usize {
        self.dependencies.iter().filter(|d| pred(&d.relation)).count()
    }

    fn count_pos(&self, pos: Upos) -> usize {
        self.tokens.iter().filter(|t| t.pos == pos).count()
    }

    fn has_entity(&self, class: EntityClass) -> bool {
        self.entities.iter().any(|e| e.class == class)
    }
}

/// Annotation backend for one or more languages.
pub trait Annotator {
    fn annotate(&self, text: &str, lang: &str) -> Result<Annotation, LinguisticError>;

    /// Whether `annotate` may run concurrently on several threads.
    fn concurrent(&self) -> bool {
        true
    }
}

pub type SharedAnnotator = Arc<dyn Annotator + Send + Sync>;

/// Annotators keyed by language code.
#[derive(Clone, Default)]
pub struct AnnotatorRegistry {
    backends: BTreeMap<String, SharedAnnotator>,
}

impl AnnotatorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, lang: impl Into<String>, annotator: SharedAnnotator) {
        self.backends.insert(lang.into(), annotator);
    }

    pub fn with(mut self, lang: impl Into<String>, annotator: SharedAnnotator) -> Self {
        self.register(lang, annotator);
        self
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }

    pub fn get(&self, lang: &str) -> Option<&SharedAnnotator> {
        self.backends.get(lang)
    }

    /// Normalizes the message text and annotates it with the backend
    /// registered for the message language.
    pub fn annotate(&self, message: &Message) -> Result<Annotation, LinguisticError> {
        if message.text.trim().is_empty() {
            return Err(LinguisticError::EmptyText(message.id.clone()));
        }
        let backend = self
            .backends
            .get(&message.lang)
            .ok_or_else(|| LinguisticError::UnsupportedLanguage(message.lang.clone()))?;
        let annotation = backend.annotate(&normalize(&message.text), &message.lang)?;
        annotation.validate()?;
        Ok(annotation)
    }
}

impl core::fmt::Debug for AnnotatorRegistry {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("AnnotatorRegistry")
            .field("languages", &self.backends.keys().collect::<Vec<_>>())
            .finish()
    }
}

pub const FEATURE_COUNT: usize = 15;

/// Layout of [`RawFeatures`]; the order is part of the model input contract.
pub mod feature {
    pub const NUMERALS: usize = 0;
    pub const NOUNS: usize = 1;
    pub const VERBS: usize = 2;
    pub const ADVERBS: usize = 3;
    pub const ADJECTIVES: usize = 4;
    pub const SUBJECT_NOUNS: usize = 5;
    pub const COMPOUNDS: usize = 6;
    pub const ROOTS: usize = 7;
    pub const MODALS: usize = 8;
    pub const HAS_PERSON: usize = 9;
    pub const HAS_PLACE: usize = 10;
    pub const HAS_ORG: usize = 11;
    pub const HAS_DATE: usize = 12;
    pub const URLS: usize = 13;
    pub const MENTIONS: usize = 14;

    pub const NAMES: [&str; super::FEATURE_COUNT] = [
        "numerals",
        "nouns",
        "verbs",
        "adverbs",
        "adjectives",
        "subject_nouns",
        "compounds",
        "roots",
        "modals",
        "has_person",
        "has_place",
        "has_org",
        "has_date",
        "urls",
        "mentions",
    ];

    pub(crate) fn is_binary(i: usize) -> bool {
        (HAS_PERSON..=HAS_DATE).contains(&i)
    }
}

/// Unscaled message features, in the order given by [`feature`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawFeatures(pub [f64; FEATURE_COUNT]);

impl RawFeatures {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Counts POS classes, dependency relations, entity presence and (on the raw
/// text) URLs and mentions.
pub fn extract_features(annotation: &Annotation, raw_text: &str) -> RawFeatures {
    use feature::*;
    let mut f = [0.0; FEATURE_COUNT];
    f[NUMERALS] = annotation.count_pos(Upos::Num) as f64;
    f[NOUNS] = annotation.count_pos(Upos::Noun) as f64;
    f[VERBS] = annotation.count_pos(Upos::Verb) as f64;
    f[ADVERBS] = annotation.count_pos(Upos::Adv) as f64;
    f[ADJECTIVES] = annotation.count_pos(Upos::Adj) as f64;
    f[SUBJECT_NOUNS] = annotation.count_relation(|r| r == "nsubj" || r == "nsubj:pass") as f64;
    f[COMPOUNDS] = annotation.count_relation(|r| r == "compound") as f64;
    f[ROOTS] = annotation.count_relation(|r| r == "root") as f64;
    f[MODALS] = annotation
        .tokens
        .iter()
        .filter(|t| t.modal && t.pos == Upos::Aux)
        .count() as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    f[HAS_PERSON] = flag(annotation.has_entity(EntityClass::Person));
    f[HAS_PLACE] = flag(annotation.has_entity(EntityClass::Place));
    f[HAS_ORG] = flag(annotation.has_entity(EntityClass::Org));
    f[HAS_DATE] = flag(annotation.has_entity(EntityClass::Date));
    let markers = marker_counts(raw_text);
    f[URLS] = markers.urls as f64;
    f[MENTIONS] = markers.mentions as f64;
    RawFeatures(f)
}

/// Per-index min-max scaler fitted on a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub min: [f64; FEATURE_COUNT],
    pub max: [f64; FEATURE_COUNT],
}

impl FeatureScaler {
    pub fn fit(train: &[RawFeatures]) -> Result<Self, LinguisticError> {
        let first = train.first().ok_or(LinguisticError::EmptyTraining)?;
        let mut min = first.0;
        let mut max = first.0;
        for r in &train[1..] {
            for i in 0..FEATURE_COUNT {
                min[i] = min[i].min(r.0[i]);
                max[i] = max[i].max(r.0[i]);
            }
        }
        Ok(FeatureScaler { min, max })
    }

    /// True where the training data held a single value.
    pub fn is_degenerate(&self, i: usize) -> bool {
        !feature::is_binary(i) && self.min[i] == self.max[i]
    }

    /// `(x - min) / (max - min)` clamped to [0, 1]; degenerate indices map
    /// to 0.5 and the entity flags pass through.
    pub fn apply(&self, raw: &RawFeatures) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            let x = raw.0[i];
            *o = if feature::is_binary(i) {
                x
            } else if self.is_degenerate(i) {
                0.5
            } else {
                ((x - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0)
            };
        }
        out
    }
}

pub fn fit_scaler(train: &[RawFeatures]) -> Result<FeatureScaler, LinguisticError> {
    FeatureScaler::fit(train)
}

pub fn apply_scaler(scaler: &FeatureScaler, raw: &RawFeatures) -> [f64; FEATURE_COUNT] {
    scaler.apply(raw)
}

/// Dictionary and rule based annotator.
///
/// Words are tagged from a lowercase lexicon; numbers, punctuation and the
/// `URL`/`USER` placeholders are recognized by shape. Unknown capitalized
/// words inside a sentence become `PROPN`, other unknown words `NOUN` (or
/// `ADV`/`VERB` for `-ly`/`-ing`/`-ed` endings). Dependencies follow a fixed
/// head-finding scheme: the first verb (else auxiliary, else nominal, else
/// first token) is the sentence root; a nominal directly followed by a
/// nominal is a `compound`; the last free nominal before the root is its
/// `nsubj`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LexiconAnnotator {
    pub lexicon: BTreeMap<String, Upos>,
    pub modals: BTreeSet<String>,
    pub gazetteer: BTreeMap<String, EntityClass>,
}

impl LexiconAnnotator {
    pub fn empty() -> Self {
        Self::default()
    }

    /// English starter lexicon covering common crisis vocabulary.
    pub fn english() -> Self {
        let mut a = Self::default();
        a.add_words(Upos::Noun, EN_NOUNS);
        a.add_words(Upos::Verb, EN_VERBS);
        a.add_words(Upos::Adj, EN_ADJS);
        a.add_words(Upos::Adv, EN_ADVS);
        a.add_words(Upos::Adp, EN_ADPS);
        a.add_words(Upos::Det, EN_DETS);
        a.add_words(Upos::Pron, EN_PRONS);
        a.add_words(Upos::Cconj, &["and", "or", "but"]);
        a.add_words(Upos::Sconj, &["because", "while", "if", "that"]);
        a.add_words(Upos::Part, &["not", "to"]);
        a.add_words(Upos::Num, EN_NUMBER_WORDS);
        a.add_words(Upos::Aux, EN_AUX);
        a.add_words(Upos::Aux, EN_MODALS);
        a.modals.extend(EN_MODALS.iter().map(|s| s.to_string()));
        a.add_entities(EntityClass::Place, EN_PLACES);
        a.add_entities(EntityClass::Org, EN_ORGS);
        a.add_entities(EntityClass::Date, EN_DATES);
        a.add_entities(EntityClass::Person, EN_PERSONS);
        a
    }

    pub fn add_words(&mut self, pos: Upos, words: &[&str]) {
        for w in words {
            self.lexicon.insert(w.to_lowercase(), pos);
        }
    }

    pub fn add_entities(&mut self, class: EntityClass, words: &[&str]) {
        for w in words {
            self.gazetteer.insert(w.to_lowercase(), class);
        }
    }

    fn tag(&self, word: &str, sentence_initial: bool) -> Token {
        let lower = word.to_lowercase();
        let pos = if word == URL_TOKEN || word == USER_TOKEN {
            Upos::X
        } else if word.chars().all(|c| !c.is_alphanumeric()) {
            Upos::Punct
        } else if is_number(word) {
            Upos::Num
        } else if let Some(&p) = self.lexicon.get(&lower) {
            p
        } else if !sentence_initial && word.chars().next().is_some_and(char::is_uppercase) {
            Upos::Propn
        } else if lower.ends_with("ly") {
            Upos::Adv
        } else if lower.ends_with("ing") || lower.ends_with("ed") {
            Upos::Verb
        } else {
            Upos::Noun
        };
        Token {
            surface: word.to_string(),
            pos,
            modal: pos == Upos::Aux && self.modals.contains(&lower),
        }
    }
}

fn is_number(word: &str) -> bool {
    word.chars().any(|c| c.is_ascii_digit())
        && word
            .chars()
            .all(|c| c.is_ascii_digit() || matches!(c, ',' | '.' | '%'))
}

fn is_nominal(p: Upos) -> bool {
    matches!(p, Upos::Noun | Upos::Propn)
}

/// Whitespace tokens with leading/trailing punctuation split off.
fn tokenize(sentence: &str) -> Vec<&str> {
    let mut out = Vec::new();
    for chunk in sentence.split_whitespace() {
        let core_start = chunk
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i);
        let Some(start) = core_start else {
            out.push(chunk);
            continue;
        };
        let end = chunk
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(chunk.len());
        for (i, c) in chunk[..start].char_indices() {
            out.push(&chunk[i..i + c.len_utf8()]);
        }
        out.push(&chunk[start..end]);
        for (i, c) in chunk[end..].char_indices() {
            out.push(&chunk[end + i..end + i + c.len_utf8()]);
        }
    }
    out
}

impl Annotator for LexiconAnnotator {
    fn annotate(&self, text: &str, _lang: &str) -> Result<Annotation, LinguisticError> {
        let mut ann = Annotation::default();
        for sentence in split_sentences(text) {
            let base = ann.tokens.len();
            let words = tokenize(sentence);
            if words.is_empty() {
                continue;
            }
            let tokens: Vec<Token> = words
                .iter()
                .enumerate()
                .map(|(i, w)| self.tag(w, i == 0))
                .collect();
            parse_sentence(&tokens, base, &mut ann.dependencies);
            tag_entities(self, &tokens, base, &mut ann.entities);
            ann.tokens.extend(tokens);
            ann.sentences.push(base..ann.tokens.len());
        }
        if ann.tokens.is_empty() {
            return Err(LinguisticError::EmptyText(text.to_string()));
        }
        Ok(ann)
    }
}

fn parse_sentence(tokens: &[Token], base: usize, deps: &mut Vec<Dependency>) {
    let pos: Vec<Upos> = tokens.iter().map(|t| t.pos).collect();
    let root = pos
        .iter()
        .position(|&p| p == Upos::Verb)
        .or_else(|| pos.iter().position(|&p| p == Upos::Aux))
        .or_else(|| pos.iter().position(|&p| is_nominal(p)))
        .unwrap_or(0);
    let next_nominal = |from: usize| (from + 1..pos.len()).find(|&j| is_nominal(pos[j]));
    let compound = |i: usize| is_nominal(pos[i]) && i + 1 < pos.len() && is_nominal(pos[i + 1]);
    let subject = (0..root).rev().find(|&i| is_nominal(pos[i]) && !compound(i));
    let object = (root + 1..pos.len()).find(|&i| is_nominal(pos[i]) && !compound(i));

    let arc = |head: usize, dependent: usize, relation: &str| Dependency {
        head: base + head,
        dependent: base + dependent,
        relation: relation.to_string(),
    };
    for i in 0..tokens.len() {
        let d = if i == root {
            arc(i, i, "root")
        } else {
            match pos[i] {
                Upos::Punct => arc(root, i, "punct"),
                Upos::Aux => arc(root, i, "aux"),
                Upos::Adv => arc(root, i, "advmod"),
                Upos::Det => arc(next_nominal(i).unwrap_or(root), i, "det"),
                Upos::Adp => arc(next_nominal(i).unwrap_or(root), i, "case"),
                Upos::Num if i + 1 < pos.len() && pos[i + 1] == Upos::Noun => {
                    arc(i + 1, i, "nummod")
                }
                Upos::Adj if i + 1 < pos.len() && is_nominal(pos[i + 1]) => arc(i + 1, i, "amod"),
                p if is_nominal(p) => {
                    if compound(i) {
                        arc(i + 1, i, "compound")
                    } else if Some(i) == subject {
                        arc(root, i, "nsubj")
                    } else if Some(i) == object {
                        arc(root, i, "obj")
                    } else {
                        arc(root, i, "obl")
                    }
                }
                _ => arc(root, i, "dep"),
            }
        };
        deps.push(d);
    }
}

fn tag_entities(a: &LexiconAnnotator, tokens: &[Token], base: usize, out: &mut Vec<Entity>) {
    let mut current: Option<Entity> = None;
    for (i, t) in tokens.iter().enumerate() {
        let class = a.gazetteer.get(&t.surface.to_lowercase()).copied();
        match (&mut current, class) {
            (Some(e), Some(c)) if e.class == c && e.span.end == base + i => e.span.end += 1,
            (_, Some(c)) => {
                if let Some(e) = current.take() {
                    out.push(e);
                }
                current = Some(Entity {
                    span: base + i..base + i + 1,
                    class: c,
                });
            }
            (_, None) => {
                if let Some(e) = current.take() {
                    out.push(e);
                }
            }
        }
    }
    if let Some(e) = current {
        out.push(e);
    }
}

const EN_NOUNS: &[&str] = &[
    "injured", "people", "person", "dead", "death", "deaths", "casualties", "victims", "bridge",
    "house", "houses", "building", "buildings", "road", "roads", "trees", "tree", "power", "lines",
    "line", "water", "flood", "floods", "flooding", "rain", "rainfall", "snow", "wind", "winds",
    "gust", "gusts", "storm", "weather", "forecast", "coast", "mph", "kmh", "km", "earthquake",
    "quake", "magnitude", "eruption", "volcano", "ash", "fire", "fires", "bushfire", "bushfires",
    "damage", "shelter", "help", "food", "aid", "volunteers", "authorities", "government",
    "police", "warning", "alert", "danger", "life", "region", "city", "area", "town", "village",
    "residents", "families", "children", "school", "schools", "hospital", "evacuation", "river",
    "rivers", "level", "levels", "service", "services", "report", "update", "search", "rescue",
    "news", "tsunami", "aftershock", "aftershocks", "crater", "smoke", "country", "parts",
];
const EN_VERBS: &[&str] = &[
    "report", "reported", "reports", "hit", "hits", "struck", "destroy", "destroyed", "destroying",
    "stay", "evacuate", "evacuated", "provide", "provides", "provided", "affect", "affected",
    "brought", "bring", "batter", "battered", "kill", "killed", "collapsed", "collapse", "flooded",
    "need", "needs", "help", "helping", "continue", "continuing", "issued", "issue", "hitting",
    "left", "leave", "rise", "rising", "close", "closed", "pray", "say", "says", "said", "warn",
    "warns", "erupted", "shake", "shook", "go", "come", "see", "know",
];
const EN_ADJS: &[&str] = &[
    "heavy", "strong", "high", "bad", "terrible", "red", "safe", "severe", "local", "eastern",
    "western", "northern", "southern", "major", "minor", "more", "maximum", "big", "huge", "new",
    "many", "several", "official", "fallen", "historic",
];
const EN_ADVS: &[&str] = &[
    "now", "still", "already", "very", "so", "far", "inside", "reportedly", "again", "also",
    "here", "there", "around",
];
const EN_ADPS: &[&str] = &[
    "in", "on", "at", "near", "of", "for", "from", "by", "with", "across", "after", "before",
    "due", "over", "under", "into", "about", "than",
];
const EN_DETS: &[&str] = &["the", "a", "an", "this", "that", "these", "those", "all", "some", "no"];
const EN_PRONS: &[&str] = &["i", "we", "you", "he", "she", "it", "they", "us", "them", "our", "my"];
const EN_AUX: &[&str] = &["is", "are", "was", "were", "be", "been", "has", "have", "had", "do", "does"];
const EN_MODALS: &[&str] = &["can", "could", "must", "should", "may", "might", "will", "would", "shall"];
const EN_NUMBER_WORDS: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred",
    "hundreds", "thousand", "thousands", "dozens",
];
const EN_PLACES: &[&str] = &[
    "Australia", "Sydney", "Melbourne", "Victoria", "Fukushima", "Japan", "Tohoku", "Tokyo",
    "Spain", "France", "Catalonia", "Barcelona", "Valencia", "Girona", "Philippines", "Manila",
    "Batangas", "Taal", "Luzon", "Zagreb", "Croatia", "Europe",
];
const EN_ORGS: &[&str] = &["ERCC", "Red", "Cross", "UN", "NDRRMC", "PHIVOLCS", "AEMET", "NASA", "WHO"];
const EN_DATES: &[&str] = &[
    "today", "tonight", "yesterday", "tomorrow", "monday", "tuesday", "wednesday", "thursday",
    "friday", "saturday", "sunday", "january", "february", "march", "april", "june", "july",
    "august", "september", "october", "november", "december",
];
const EN_PERSONS: &[&str] = &["Maria", "John", "Duterte", "Sanchez", "Morrison"];
