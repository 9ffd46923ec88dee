//! File formats: JSONL messages, plain-text reports, query and claim JSON,
//! summary JSON and per-fold result tables.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crisis_scope_core::corpus::CorpusError;
use crisis_scope_core::evaluate::{ClaimSet, FoldRow};
use crisis_scope_core::{EventCollection, Message, Query, ReferenceReport};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Integrity {
        path: PathBuf,
        source: CorpusError,
    },
}

impl IoError {
    /// Bad content as opposed to an unreadable or unwritable file.
    pub fn is_validation(&self) -> bool {
        !matches!(self, IoError::Read { .. } | IoError::Write { .. })
    }
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(err)?;
    }
    fs::write(path, bytes).map_err(err)
}

fn parse_records(path: &Path) -> Result<Vec<Message>, IoError> {
    let file = fs::File::open(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IoError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let message: Message = serde_json::from_str(&line).map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        message.validate().map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(message);
    }
    Ok(out)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads one event from a JSONL file, keeping file order. The event id comes
/// from the records (the file stem for an empty file).
pub fn load_messages(path: &Path) -> Result<EventCollection, IoError> {
    let messages = parse_records(path)?;
    let event_id = messages
        .first()
        .map(|m| m.event_id.clone())
        .unwrap_or_else(|| file_stem(path));
    EventCollection::new(event_id.clone(), event_id, messages).map_err(|source| IoError::Integrity {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads any number of JSONL files and groups their records by event, in
/// order of first appearance. Ids must be unique within each event.
pub fn load_corpus(paths: &[PathBuf]) -> Result<Vec<EventCollection>, IoError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<Message>> = BTreeMap::new();
    for path in paths {
        for m in parse_records(path)? {
            if !grouped.contains_key(&m.event_id) {
                order.push(m.event_id.clone());
            }
            grouped.entry(m.event_id.clone()).or_default().push(m);
        }
    }
    let origin = paths.first().cloned().unwrap_or_default();
    order
        .into_iter()
        .map(|id| {
            let messages = grouped.remove(&id).unwrap_or_default();
            EventCollection::new(id.clone(), id, messages).map_err(|source| IoError::Integrity {
                path: origin.clone(),
                source,
            })
        })
        .collect()
}

/// One compact JSON object per line, fields in declaration order.
pub fn to_jsonl(messages: &[Message]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&serde_json::to_string(m).expect("messages always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_messages(path: &Path, messages: &[Message]) -> Result<(), IoError> {
    write_bytes(path, to_jsonl(messages).as_bytes())
}

pub fn report_path(dir: &Path, event_id: &str) -> PathBuf {
    dir.join(format!("{event_id}.report.txt"))
}

pub fn load_report(dir: &Path, event_id: &str) -> Result<ReferenceReport, IoError> {
    let path = report_path(dir, event_id);
    let text = read_to_string(&path)?;
    ReferenceReport::new(event_id, text).map_err(|source| IoError::Integrity { path, source })
}

pub fn parse_query(text: &str, path: &Path) -> Result<Query, IoError> {
    let schema = |message: String| IoError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let query: Query = serde_json::from_str(text).map_err(|e| schema(e.to_string()))?;
    query.validated().map_err(|e| schema(e.to_string()))
}

pub fn load_query(path: &Path) -> Result<Query, IoError> {
    parse_query(&read_to_string(path)?, path)
}

/// Every `*.json` query in a directory, sorted by file name, keyed by stem.
pub fn load_query_dir(dir: &Path) -> Result<Vec<(String, Query)>, IoError> {
    let entries = fs::read_dir(dir).map_err(|source| IoError::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| Ok((file_stem(&p), load_query(&p)?)))
        .collect()
}

/// Claim annotations: `{summary_id: [claim, ...]}`.
pub fn load_claims(path: &Path) -> Result<Vec<ClaimSet>, IoError> {
    let text = read_to_string(path)?;
    let raw: BTreeMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| IoError::Schema {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    Ok(raw.into_iter().map(|(id, claims)| ClaimSet::new(id, claims)).collect())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("values always serialize");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

/// Columns `event,language,acc,f1,auc`; failed folds carry `failed` in the
/// metric cells and undefined AUC is `NA`.
pub fn fold_rows_csv(rows: &[FoldRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["event", "language", "acc", "f1", "auc"])
        .expect("in-memory write");
    for r in rows {
        let lang = r.language.clone().unwrap_or_default();
        let record = match &r.metrics {
            Some(m) => [
                r.event.clone(),
                lang,
                cell(Some(m.acc)),
                cell(Some(m.f1_weighted)),
                cell(m.auc),
            ],
            None => [
                r.event.clone(),
                lang,
                "failed".into(),
                "failed".into(),
                "failed".into(),
            ],
        };
        w.write_record(&record).expect("in-memory write");
    }
    let mut w = w.into_inner().expect("in-memory flush");
    w.flush().expect("in-memory flush");
    String::from_utf8(w).expect("csv is utf-8")
}

pub fn write_fold_rows(path: &Path, rows: &[FoldRow]) -> Result<(), IoError> {
    write_bytes(path, fold_rows_csv(rows).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crisis_scope_core::evaluate::ClassificationMetrics;
    use crisis_scope_core::CategoryId;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_file_loads_as_empty_collection() {
        let dir = tmp();
        let p = dir.path().join("quiet.jsonl");
        fs::write(&p, "").unwrap();
        let c = load_messages(&p).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.event_id(), "quiet");
    }

    #[test]
    fn three_records_and_languages() {
        let dir = tmp();
        let p = dir.path().join("e.jsonl");
        fs::write(
            &p,
            concat!(
                r#"{"id":"1","text":"a","lang":"en","event_id":"e"}"#,
                "\n",
                r#"{"id":"2","text":"b","lang":"es","event_id":"e","informative":true}"#,
                "\n\n",
                r#"{"id":"3","text":"c","lang":"en","event_id":"e","categories":["Weather"]}"#,
                "\n"
            ),
        )
        .unwrap();
        let c = load_messages(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.languages().iter().collect::<Vec<_>>(), ["en", "es"]);
        assert_eq!(c.messages()[1].informative, Some(true));
        assert!(c.messages()[2].categories.contains(&CategoryId::Weather));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tmp();
        let p = dir.path().join("bad.jsonl");
        fs::write(
            &p,
            "{\"id\":\"1\",\"text\":\"a\",\"lang\":\"en\",\"event_id\":\"e\"}\n{\"id\":\"2\",\"text\":\"b\"}\n",
        )
        .unwrap();
        match load_messages(&p) {
            Err(IoError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&p, r#"{"id":"1","text":"a","lang":"en","event_id":"e","categories":["Floods"]}"#).unwrap();
        assert!(matches!(load_messages(&p), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn duplicate_ids_are_integrity_errors() {
        let dir = tmp();
        let p = dir.path().join("dup.jsonl");
        let rec = r#"{"id":"1","text":"a","lang":"en","event_id":"e"}"#;
        fs::write(&p, format!("{rec}\n{rec}\n")).unwrap();
        let err = load_messages(&p).unwrap_err();
        assert!(matches!(
            err,
            IoError::Integrity {
                source: CorpusError::DuplicateId(_),
                ..
            }
        ));
        assert!(err.is_validation());
        let missing = load_messages(&dir.path().join("nope.jsonl")).unwrap_err();
        assert!(!missing.is_validation());
    }

    #[test]
    fn canonical_round_trip() {
        let dir = tmp();
        let p = dir.path().join("e.jsonl");
        let msgs = vec![
            Message::new("1", "Storm \"here\" ünïcode", "en", "e")
                .with_informative(true)
                .with_category(CategoryId::Weather)
                .with_category(CategoryId::Damage),
            Message::new("2", "b", "es", "e"),
        ];
        write_messages(&p, &msgs).unwrap();
        let first = fs::read(&p).unwrap();
        let loaded = load_messages(&p).unwrap();
        assert_eq!(loaded.messages(), &msgs[..]);
        let q = dir.path().join("again.jsonl");
        write_messages(&q, loaded.messages()).unwrap();
        assert_eq!(fs::read(&q).unwrap(), first);
    }

    #[test]
    fn corpus_groups_by_event() {
        let dir = tmp();
        let p = dir.path().join("mixed.jsonl");
        fs::write(
            &p,
            to_jsonl(&[
                Message::new("1", "a", "en", "b"),
                Message::new("2", "a", "en", "a"),
                Message::new("3", "a", "es", "b"),
            ]),
        )
        .unwrap();
        let c = load_corpus(std::slice::from_ref(&p)).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].event_id(), c[0].len()), ("b", 2));
        assert!(matches!(load_messages(&p), Err(IoError::Integrity { .. })));
    }

    #[test]
    fn query_schema_errors() {
        let p = Path::new("q.json");
        assert!(matches!(
            parse_query(r#"{"category":"Weather","keywords":["rain"],"templates":[]}"#, p),
            Err(IoError::Schema { .. })
        ));
        assert!(matches!(
            parse_query(r#"{"category":"Snow","keywords":["rain"],"templates":[],"prototypes":[]}"#, p),
            Err(IoError::Schema { .. })
        ));
        assert!(matches!(
            parse_query(r#"{"category":"Weather","keywords":[" "],"templates":[],"prototypes":[]}"#, p),
            Err(IoError::Schema { .. })
        ));
        let q = parse_query(
            r#"{"category":"Weather","keywords":[" rain "],"templates":[],"prototypes":[]}"#,
            p,
        )
        .unwrap();
        assert_eq!(q.keywords, ["rain"]);
    }

    #[test]
    fn shipped_queries_parse() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../queries");
        let qs = load_query_dir(&dir).unwrap();
        assert_eq!(qs.len(), 8);
        let weather = &qs.iter().find(|(id, _)| id == "weather").unwrap().1;
        assert_eq!(weather.keywords.len(), 8);
        assert_eq!(weather.prototypes.len(), 6);
    }

    #[test]
    fn claims_and_reports() {
        let dir = tmp();
        let p = dir.path().join("claims.json");
        fs::write(&p, r#"{"s1": ["Bridge  Collapsed", "3 dead"], "s2": []}"#).unwrap();
        let claims = load_claims(&p).unwrap();
        assert_eq!(claims[0].claims.iter().collect::<Vec<_>>(), ["3 dead", "bridge collapsed"]);
        fs::write(report_path(dir.path(), "gloria"), "Heavy rain.").unwrap();
        assert_eq!(load_report(dir.path(), "gloria").unwrap().text, "Heavy rain.");
        fs::write(report_path(dir.path(), "blank"), "  \n").unwrap();
        assert!(matches!(load_report(dir.path(), "blank"), Err(IoError::Integrity { .. })));
    }

    #[test]
    fn fold_csv_layout() {
        let rows = vec![
            FoldRow {
                event: "e".into(),
                language: Some("en".into()),
                metrics: Some(ClassificationMetrics {
                    acc: 0.5,
                    f1_weighted: 0.25,
                    auc: None,
                }),
                error: None,
            },
            FoldRow {
                event: "e".into(),
                language: Some("es".into()),
                metrics: None,
                error: Some("boom".into()),
            },
        ];
        assert_eq!(
            fold_rows_csv(&rows),
            "event,language,acc,f1,auc\ne,en,0.500000,0.250000,NA\ne,es,failed,failed,failed\n"
        );
    }
}
