//! Messages, events, text normalization and cross-validation splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorpusError {
    #[error("duplicate message id `{0}`")]
    DuplicateId(String),
    #[error("message `{id}` belongs to event `{found}`, expected `{expected}`")]
    EventMismatch {
        id: String,
        expected: String,
        found: String,
    },
    #[error("invalid message `{id}`: {reason}")]
    InvalidMessage { id: String, reason: String },
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("language `{held_out}` not present; available: {}", .available.join(", "))]
    UnknownLanguage {
        held_out: String,
        available: Vec<String>,
    },
    #[error("leave-one-language-out needs at least two languages, found {0}")]
    TooFewLanguages(usize),
    #[error("event `{held_out}` not present; available: {}", .available.join(", "))]
    UnknownEvent {
        held_out: String,
        available: Vec<String>,
    },
    #[error("leave-one-event-out needs at least two events, found {0}")]
    TooFewEvents(usize),
    #[error("reference report for `{0}` is empty")]
    EmptyReport(String),
}

/// Information categories a message can be labelled with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CategoryId {
    Casualties,
    Damage,
    Danger,
    Government,
    Sensor,
    Service,
    Water,
    Weather,
}

impl CategoryId {
    pub const ALL: [CategoryId; 8] = [
        CategoryId::Casualties,
        CategoryId::Damage,
        CategoryId::Danger,
        CategoryId::Government,
        CategoryId::Sensor,
        CategoryId::Service,
        CategoryId::Water,
        CategoryId::Weather,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoryId::Casualties => "Casualties",
            CategoryId::Damage => "Damage",
            CategoryId::Danger => "Danger",
            CategoryId::Government => "Government",
            CategoryId::Sensor => "Sensor",
            CategoryId::Service => "Service",
            CategoryId::Water => "Water",
            CategoryId::Weather => "Weather",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            CategoryId::Casualties => "Affected or injured people",
            CategoryId::Damage => "Built or natural environment damage",
            CategoryId::Danger => "Messages of caution or alerts",
            CategoryId::Government => "Official report by public agencies",
            CategoryId::Sensor => "Seismic activity",
            CategoryId::Service => "Providing a service or help",
            CategoryId::Water => "Water-related messages",
            CategoryId::Weather => "Weather updates",
        }
    }
}

impl fmt::Display for CategoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CategoryId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CategoryId::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CorpusError::UnknownCategory(s.to_string()))
    }
}

/// One social-media post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub text: String,
    pub lang: String,
    pub event_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative: Option<bool>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub categories: BTreeSet<CategoryId>,
}

impl Message {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        lang: impl Into<String>,
        event_id: impl Into<String>,
    ) -> Self {
        Message {
            id: id.into(),
            text: text.into(),
            lang: lang.into(),
            event_id: event_id.into(),
            informative: None,
            categories: BTreeSet::new(),
        }
    }

    pub fn with_informative(mut self, informative: bool) -> Self {
        self.informative = Some(informative);
        self
    }

    pub fn with_category(mut self, category: CategoryId) -> Self {
        self.categories.insert(category);
        self
    }

    /// Checks the per-record invariants: non-empty id and text, two-letter
    /// lowercase language code.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |reason: &str| CorpusError::InvalidMessage {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(invalid("empty id"));
        }
        if self.text.trim().is_empty() {
            return Err(invalid("empty text"));
        }
        if !is_lang_code(&self.lang) {
            return Err(invalid("lang must be a two-letter lowercase code"));
        }
        if self.event_id.is_empty() {
            return Err(invalid("empty event_id"));
        }
        Ok(())
    }
}

fn is_lang_code(lang: &str) -> bool {
    lang.len() == 2 && lang.bytes().all(|b| b.is_ascii_lowercase())
}

/// All messages collected for one event, in ingestion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EventCollection {
    event_id: String,
    name: String,
    messages: Vec<Message>,
    languages: BTreeSet<String>,
}

impl EventCollection {
    pub fn new(
        event_id: impl Into<String>,
        name: impl Into<String>,
        messages: Vec<Message>,
    ) -> Result<Self, CorpusError> {
        let event_id = event_id.into();
        let mut seen = BTreeSet::new();
        let mut languages = BTreeSet::new();
        for m in &messages {
            m.validate()?;
            if m.event_id != event_id {
                return Err(CorpusError::EventMismatch {
                    id: m.id.clone(),
                    expected: event_id,
                    found: m.event_id.clone(),
                });
            }
            if !seen.insert(m.id.as_str()) {
                return Err(CorpusError::DuplicateId(m.id.clone()));
            }
            languages.insert(m.lang.clone());
        }
        Ok(EventCollection {
            event_id,
            name: name.into(),
            messages,
            languages,
        })
    }

    pub fn event_id(&self) -> &str {
        &self.event_id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Message> {
        self.messages.iter().find(|m| m.id == id)
    }

    pub fn informative_count(&self) -> usize {
        self.messages
            .iter()
            .filter(|m| m.informative == Some(true))
            .count()
    }

    pub fn into_messages(self) -> Vec<Message> {
        self.messages
    }
}

/// Official situation report for one event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceReport {
    pub event_id: String,
    pub text: String,
}

impl ReferenceReport {
    pub fn new(event_id: impl Into<String>, text: impl Into<String>) -> Result<Self, CorpusError> {
        let event_id = event_id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyReport(event_id));
        }
        Ok(ReferenceReport { event_id, text })
    }
}

/// A train/test partition produced by one cross-validation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPair {
    pub train: Vec<Message>,
    pub test: Vec<Message>,
    pub description: String,
}

/// Holds out every message of `collection` written in `held_out`.
pub fn split_leave_one_language_out(
    collection: &EventCollection,
    held_out: &str,
) -> Result<SplitPair, CorpusError> {
    let langs = collection.languages();
    if langs.len() < 2 {
        return Err(CorpusError::TooFewLanguages(langs.len()));
    }
    if !langs.contains(held_out) {
        return Err(CorpusError::UnknownLanguage {
            held_out: held_out.to_string(),
            available: langs.iter().cloned().collect(),
        });
    }
    let (test, train) = collection
        .messages()
        .iter()
        .cloned()
        .partition(|m| m.lang == held_out);
    Ok(SplitPair {
        train,
        test,
        description: format!("{}/{}", collection.event_id(), held_out),
    })
}

/// Holds out every message of the event `held_out`; trains on all others.
pub fn split_leave_one_event_out(
    collections: &[EventCollection],
    held_out: &str,
) -> Result<SplitPair, CorpusError> {
    if collections.len() < 2 {
        return Err(CorpusError::TooFewEvents(collections.len()));
    }
    if !collections.iter().any(|c| c.event_id() == held_out) {
        return Err(CorpusError::UnknownEvent {
            held_out: held_out.to_string(),
            available: collections.iter().map(|c| c.event_id().to_string()).collect(),
        });
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in collections {
        let dst = if c.event_id() == held_out {
            &mut test
        } else {
            &mut train
        };
        dst.extend(c.messages().iter().cloned());
    }
    Ok(SplitPair {
        train,
        test,
        description: held_out.to_string(),
    })
}

pub const URL_TOKEN: &str = "URL";
pub const USER_TOKEN: &str = "USER";

/// Replaces URLs with `URL`, account mentions with `USER` and turns hashtags
/// into words (camel-case and underscores split). Punctuation, stopwords and
/// whitespace are kept as they are.
///
/// The rewrite is applied until it reaches a fixed point, so the function is
/// idempotent even on adversarial inputs such as `#t.co/x`.
pub fn normalize(text: &str) -> String {
    let mut scratch = MarkerCounts::default();
    let mut current = normalize_pass(text, &mut scratch);
    loop {
        let next = normalize_pass(&current, &mut scratch);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// URLs, mentions and hashtags found in a raw text by the same rules
/// [`normalize`] applies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MarkerCounts {
    pub urls: usize,
    pub mentions: usize,
    pub hashtags: usize,
}

pub fn marker_counts(raw: &str) -> MarkerCounts {
    let mut counts = MarkerCounts::default();
    normalize_pass(raw, &mut counts);
    counts
}

fn normalize_pass(text: &str, counts: &mut MarkerCounts) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chunk_start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = chunk_start.take() {
                normalize_chunk(&text[s..i], &mut out, counts);
            }
            out.push(c);
        } else if chunk_start.is_none() {
            chunk_start = Some(i);
        }
    }
    if let Some(s) = chunk_start {
        normalize_chunk(&text[s..], &mut out, counts);
    }
    out
}

fn url_start(chunk: &str) -> Option<usize> {
    let lower = chunk.to_ascii_lowercase();
    let mut best: Option<usize> = None;
    for scheme in ["http://", "https://"] {
        if let Some(p) = lower.find(scheme) {
            best = Some(best.map_or(p, |b| b.min(p)));
        }
    }
    let mut from = 0;
    while let Some(rel) = lower[from..].find("t.co/") {
        let p = from + rel;
        let boundary = lower[..p]
            .chars()
            .next_back()
            .is_none_or(|c| !c.is_alphanumeric() && c != '.');
        if boundary {
            best = Some(best.map_or(p, |b| b.min(p)));
            break;
        }
        from = p + 1;
    }
    best
}

const URL_TRAILING: &[char] = &['.', ',', ';', ':', '!', '?', ')', ']', '"', '\'', '…'];

fn normalize_chunk(chunk: &str, out: &mut String, counts: &mut MarkerCounts) {
    let (head, tail) = match url_start(chunk) {
        Some(p) => {
            let url = &chunk[p..];
            let trimmed = url.trim_end_matches(URL_TRAILING);
            (&chunk[..p], Some(&url[trimmed.len()..]))
        }
        None => (chunk, None),
    };
    rewrite_markers(head, out, counts);
    if let Some(trailing) = tail {
        counts.urls += 1;
        out.push_str(URL_TOKEN);
        out.push_str(trailing);
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn rewrite_markers(s: &str, out: &mut String, counts: &mut MarkerCounts) {
    let chars: Vec<(usize, char)> = s.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        let at_boundary = i == 0 || !chars[i - 1].1.is_alphanumeric();
        if (c == '@' || c == '#') && at_boundary {
            let mut j = i;
            while j < chars.len() && chars[j].1 == c {
                j += 1;
            }
            let name_start = j;
            let accept = |ch: char| {
                if c == '@' {
                    ch.is_ascii_alphanumeric() || ch == '_'
                } else {
                    is_word_char(ch)
                }
            };
            while j < chars.len() && accept(chars[j].1) {
                j += 1;
            }
            if j > name_start {
                let start = chars[name_start].0;
                let end = chars.get(j).map_or(s.len(), |&(b, _)| b);
                if c == '@' {
                    counts.mentions += 1;
                    out.push_str(USER_TOKEN);
                } else {
                    counts.hashtags += 1;
                    out.push_str(&hashtag_words(&s[start..end]));
                }
                i = j;
                continue;
            }
        }
        out.push(c);
        i += 1;
    }
}

/// `TaalEruption` → `Taal Eruption`, `taal_eruption` → `taal eruption`.
fn hashtag_words(tag: &str) -> String {
    let mut words: Vec<String> = Vec::new();
    for part in tag.split('_').filter(|p| !p.is_empty()) {
        let mut word = String::new();
        let mut prev_lower = false;
        for ch in part.chars() {
            if prev_lower && ch.is_uppercase() && !word.is_empty() {
                words.push(core::mem::take(&mut word));
            }
            prev_lower = ch.is_lowercase();
            word.push(ch);
        }
        if !word.is_empty() {
            words.push(word);
        }
    }
    words.join(" ")
}

/// Splits text into sentences at runs of `.`, `!` or `?` that are followed by
/// whitespace or the end of the text. Always yields at least one sentence
/// for non-blank input.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if matches!(c, '.' | '!' | '?') {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = iter.peek() {
                if matches!(d, '.' | '!' | '?') {
                    end = j + d.len_utf8();
                    iter.next();
                } else {
                    break;
                }
            }
            let at_break = iter.peek().is_none_or(|&(_, d)| d.is_whitespace());
            if at_break {
                let s = text[start..end].trim();
                if !s.is_empty() {
                    sentences.push(s);
                }
                start = end;
            }
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        sentences.push(rest);
    }
    if sentences.is_empty() && !text.trim().is_empty() {
        sentences.push(text.trim());
    }
    sentences
}
