#![allow(dead_code)]

use std::collections::BTreeMap;

use crisis_scope::config::{EncoderConfig, PipelineConfig};
use crisis_scope_core::models::ModelConfig;
use crisis_scope_core::{CategoryId, EventCollection, Message, Query};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const DIM: usize = 64;
pub const LANGS: [&str; 3] = ["en", "rv", "sx"];
pub const TEST_CATEGORIES: [CategoryId; 3] = [CategoryId::Weather, CategoryId::Damage, CategoryId::Casualties];

const TOPICS: [(CategoryId, [&str; 6]); 6] = [
    (CategoryId::Weather, ["storm", "rain", "wind", "hail", "thunder", "forecast"]),
    (CategoryId::Damage, ["collapsed", "destroyed", "bridge", "roof", "building", "wreckage"]),
    (CategoryId::Casualties, ["dead", "injured", "killed", "victims", "bodies", "wounded"]),
    (CategoryId::Service, ["shelter", "volunteers", "donations", "rescue", "teams", "supplies"]),
    (CategoryId::Water, ["drinking", "bottled", "contaminated", "wells", "pipes", "tanks"]),
    (CategoryId::Government, ["officials", "minister", "mayor", "declared", "emergency", "decree"]),
];

const NOISE: [&str; 10] = [
    "love", "music", "game", "coffee", "happy", "weekend", "movie", "song", "birthday", "pizza",
];
const FILLER: [&str; 10] = [
    "city", "people", "today", "near", "river", "town", "morning", "area", "north", "coast",
];

fn topic(cat: CategoryId) -> &'static [&'static str; 6] {
    &TOPICS.iter().find(|(c, _)| *c == cat).expect("topic").1
}

/// Pseudo-language rendering of an English word: `rv` reverses it, `sx`
/// appends `zo`.
pub fn translate(word: &str, lang: &str) -> String {
    match lang {
        "rv" => word.chars().rev().collect(),
        "sx" => format!("{word}zo"),
        _ => word.to_string(),
    }
}

pub fn aliases() -> BTreeMap<String, String> {
    let mut words: Vec<&str> = TOPICS.iter().flat_map(|(_, w)| w.iter().copied()).collect();
    words.extend(NOISE);
    words.extend(FILLER);
    let mut out = BTreeMap::new();
    for w in words {
        for lang in &LANGS[1..] {
            out.insert(translate(w, lang), w.to_string());
        }
    }
    out
}

fn render(words: &[&str], lang: &str) -> String {
    words.iter().map(|w| translate(w, lang)).collect::<Vec<_>>().join(" ")
}

fn topical_words(rng: &mut StdRng, cat: CategoryId) -> Vec<&'static str> {
    let mut words: Vec<&str> = topic(cat).choose_multiple(rng, 3).copied().collect();
    words.extend(FILLER.choose_multiple(rng, 3).copied());
    words.shuffle(rng);
    words
}

fn noise_words(rng: &mut StdRng) -> Vec<&'static str> {
    let mut words: Vec<&str> = NOISE.choose_multiple(rng, 4).copied().collect();
    words.extend(FILLER.choose_multiple(rng, 2).copied());
    words.shuffle(rng);
    words
}

fn lang(rng: &mut StdRng) -> &'static str {
    LANGS[rng.gen_range(0..LANGS.len())]
}

/// Labelled training event: `per_category` messages for each of the six
/// topical categories and `noise` uninformative ones.
pub fn training_event(seed: u64, per_category: usize, noise: usize) -> EventCollection {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut msgs = Vec::new();
    for (cat, _) in TOPICS {
        for i in 0..per_category {
            let l = lang(&mut rng);
            let text = render(&topical_words(&mut rng, cat), l);
            msgs.push(
                Message::new(format!("t-{}-{i:02}", cat.name().to_lowercase()), text, l, "train")
                    .with_informative(true)
                    .with_category(cat),
            );
        }
    }
    for i in 0..noise {
        let l = lang(&mut rng);
        let text = render(&noise_words(&mut rng), l);
        msgs.push(Message::new(format!("t-noise-{i:03}"), text, l, "train").with_informative(false));
    }
    EventCollection::new("train", "Training storm", msgs).expect("valid event")
}

/// Planted messages of one category: each group is an original followed
/// by its duplicates.
#[derive(Debug, Clone)]
pub struct Planted {
    pub category: CategoryId,
    pub groups: Vec<Vec<String>>,
}

/// 150-message held-out event: five planted messages per test category (the
/// first duplicated verbatim, the second re-rendered in another language),
/// fifteen for each other topical category and uninformative noise.
pub fn test_event(seed: u64) -> (EventCollection, Vec<Planted>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut msgs = Vec::new();
    let mut planted = Vec::new();
    for cat in TEST_CATEGORIES {
        let name = cat.name().to_lowercase();
        let mut groups = Vec::new();
        for i in 0..5 {
            let l = LANGS[i % LANGS.len()];
            let words = topical_words(&mut rng, cat);
            let id = format!("a-{name}-{i}");
            msgs.push(Message::new(&id, render(&words, l), l, "test").with_informative(true).with_category(cat));
            let mut group = vec![id];
            if i < 2 {
                let dl = if i == 0 { l } else { LANGS[(i + 1) % LANGS.len()] };
                let dup = format!("z-{name}-{i}");
                msgs.push(
                    Message::new(&dup, render(&words, dl), dl, "test")
                        .with_informative(true)
                        .with_category(cat),
                );
                group.push(dup);
            }
            groups.push(group);
        }
        planted.push(Planted { category: cat, groups });
    }
    for (cat, _) in &TOPICS[3..] {
        for i in 0..15 {
            let l = lang(&mut rng);
            let text = render(&topical_words(&mut rng, *cat), l);
            msgs.push(
                Message::new(format!("o-{}-{i:02}", cat.name().to_lowercase()), text, l, "test")
                    .with_informative(true)
                    .with_category(*cat),
            );
        }
    }
    let mut i = 0;
    while msgs.len() < 150 {
        let l = lang(&mut rng);
        msgs.push(
            Message::new(format!("n-{i:03}"), render(&noise_words(&mut rng), l), l, "test")
                .with_informative(false),
        );
        i += 1;
    }
    (EventCollection::new("test", "Test flood", msgs).expect("valid event"), planted)
}

pub fn query(cat: CategoryId) -> Query {
    let w = topic(cat);
    let keywords = w[..4].iter().map(|s| s.to_string()).collect();
    let templates = vec![
        format!("NUMBER {} in LOCATION", w[0]),
        format!("{} {} near LOCATION", w[1], w[2]),
    ];
    let prototypes = vec![
        format!("{} and {} in the city today", w[0], w[1]),
        format!("{} {} {} near the river", w[2], w[3], w[4]),
    ];
    Query::new(cat, keywords, templates, prototypes).expect("valid query")
}

pub fn queries() -> Vec<(String, Query)> {
    let mut out: Vec<(String, Query)> = TEST_CATEGORIES
        .iter()
        .map(|c| (c.name().to_lowercase(), query(*c)))
        .collect();
    let sensor = Query::new(
        CategoryId::Sensor,
        vec!["seismograph".into()],
        vec![],
        vec!["magnitude reading from the seismograph".into()],
    )
    .expect("valid query");
    out.push(("sensor".into(), sensor));
    out
}

pub fn model_config() -> ModelConfig {
    ModelConfig {
        embedding_dim: DIM,
        lstm_units: 16,
        embedding_layers: vec![32, 16],
        text_layers: vec![16, 8],
        similarity_layers: vec![16, 8],
        learning_rate: 0.01,
        batch_size: 20,
        epochs: 30,
        patience: 5,
        ..ModelConfig::default()
    }
}

pub fn pipeline_config() -> PipelineConfig {
    PipelineConfig {
        encoder: EncoderConfig::Mock {
            dimension: DIM,
            seed: 7,
            aliases: aliases(),
            languages: None,
        },
        model: model_config(),
        seed: 11,
        ..PipelineConfig::default()
    }
}
