//! Document ingestion: the JSON-lines corpus format, paragraph segmentation,
//! pooling of encoder outputs into the three document views, and the
//! embedding providers that feed them.

mod cache;
mod service;
pub mod synth;

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{DayTimestamp, DenseVec, DocRepr, DocumentInput};
use crate::error::{Error, Result};

pub use cache::{text_hash, CacheHeader, EmbeddingCache, TextHash};
pub use service::{embed, EmbedOptions, EmbedResponse, EmbeddingService, HttpEmbeddingService};

/// How `text` bodies are split into paragraphs.
pub const SEGMENTATION_RULE: &str = "blank-line";

/// Pool encoder outputs into the three views.
///
/// `d2` is the first-paragraph vector, `d3` its mean with the title, and
/// `d1` the unweighted mean of all paragraph vectors and the title. Without
/// a title, `d3 = d2` and `d1` averages the paragraphs only.
pub fn build_repr(
    id: impl Into<String>,
    title_vec: Option<&DenseVec>,
    fp_vec: &DenseVec,
    para_vecs: &[DenseVec],
    ts: DayTimestamp,
) -> Result<DocRepr> {
    if para_vecs.is_empty() {
        return Err(Error::EmptyInput("document without paragraphs"));
    }
    let dim = fp_vec.len();
    for v in para_vecs.iter().chain(title_vec) {
        v.check_dim(dim)?;
    }
    let d2 = fp_vec.clone();
    let (d1, d3) = match title_vec {
        Some(t) => (
            DenseVec::mean(para_vecs.iter().chain(std::iter::once(t)))?,
            DenseVec::mean([fp_vec, t])?,
        ),
        None => (DenseVec::mean(para_vecs)?, d2.clone()),
    };
    DocRepr::new(id, d1, d2, d3, ts)
}

/// Split a body on blank lines, trimming and dropping empty paragraphs.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n").trim().to_owned());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n").trim().to_owned());
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusRecord {
    id: String,
    #[serde(default)]
    lang: String,
    date: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    paragraphs: Option<Vec<String>>,
    #[serde(default)]
    cluster: Option<String>,
}

fn parse_date(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(format!("unrecognised date {s:?}"))
}

impl CorpusRecord {
    fn into_document(self) -> std::result::Result<DocumentInput, String> {
        let timestamp = parse_date(&self.date)?;
        let paragraphs: Vec<String> = match (self.paragraphs, self.text) {
            (Some(p), _) => p
                .into_iter()
                .map(|s| s.trim().to_owned())
                .filter(|s| !s.is_empty())
                .collect(),
            (None, Some(text)) => split_paragraphs(&text),
            (None, None) => Vec::new(),
        };
        if paragraphs.is_empty() {
            return Err(format!("document {:?} has no paragraphs", self.id));
        }
        Ok(DocumentInput {
            id: self.id,
            language: self.lang,
            timestamp,
            title: self.title.filter(|t| !t.trim().is_empty()),
            paragraphs,
            gold_label: self.cluster,
        })
    }

    fn from_document(d: &DocumentInput) -> Self {
        CorpusRecord {
            id: d.id.clone(),
            lang: d.language.clone(),
            date: d.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            title: d.title.clone(),
            text: None,
            paragraphs: Some(d.paragraphs.clone()),
            cluster: d.gold_label.clone(),
        }
    }
}

fn sort_documents(docs: &mut [DocumentInput]) {
    docs.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
}

/// Read a JSON-lines corpus, sorted by timestamp (ties by id).
pub fn load_corpus(path: &Path) -> Result<Vec<DocumentInput>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(std::io::BufReader::new(file), path)
}

pub fn read_corpus<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<DocumentInput>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            message,
        };
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let doc = record.into_document().map_err(parse_err)?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        docs.push(doc);
    }
    sort_documents(&mut docs);
    Ok(docs)
}

pub fn save_corpus(path: &Path, docs: &[DocumentInput]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for d in docs {
        serde_json::to_writer(&mut out, &CorpusRecord::from_document(d))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// The text units a document contributes to the embedding cache, as
/// `(unit key, text)`: `title` (if any), `fp`, then `para_0..para_n`.
pub fn text_units(doc: &DocumentInput) -> Vec<(String, &str)> {
    let mut units = Vec::with_capacity(doc.paragraphs.len() + 2);
    if let Some(t) = &doc.title {
        units.push(("title".to_owned(), t.as_str()));
    }
    units.push(("fp".to_owned(), doc.first_paragraph()));
    for (k, p) in doc.paragraphs.iter().enumerate() {
        units.push((format!("para_{k}"), p.as_str()));
    }
    units
}

/// Assemble a document's views from cached unit vectors.
pub fn repr_from_cache(doc: &DocumentInput, cache: &EmbeddingCache) -> Result<DocRepr> {
    let get = |unit: &str| {
        cache
            .get(&doc.id, unit)
            .ok_or_else(|| Error::CacheMiss(vec![format!("{}/{unit}", doc.id)]))
    };
    let title = doc.title.as_ref().map(|_| get("title")).transpose()?;
    let fp = get("fp")?;
    let paras = (0..doc.paragraphs.len())
        .map(|k| get(&format!("para_{k}")).cloned())
        .collect::<Result<Vec<_>>>()?;
    let mut repr = build_repr(doc.id.clone(), title, fp, &paras, doc.day())?;
    repr.gold_label = doc.gold_label.clone();
    Ok(repr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn v(x: &[f64]) -> DenseVec {
        DenseVec::new(x.to_vec()).unwrap()
    }

    #[test]
    fn single_paragraph_all_views_collapse() {
        let x = v(&[0.2, -0.4, 1.0]);
        let r = build_repr("a", Some(&x), &x, std::slice::from_ref(&x), DayTimestamp(3)).unwrap();
        assert_eq!((&r.d1, &r.d2, &r.d3), (&x, &x, &x));
    }

    #[test]
    fn titleless_document() {
        let (u, w) = (v(&[1.0, 0.0]), v(&[0.0, 2.0]));
        let r = build_repr("a", None, &u, &[u.clone(), w], DayTimestamp(0)).unwrap();
        assert_eq!(r.d1.as_slice(), &[0.5, 1.0]);
        assert_eq!(r.d2, u);
        assert_eq!(r.d3, u);
    }

    #[test]
    fn titled_document() {
        let (u, w, t) = (v(&[3.0, 0.0]), v(&[0.0, 3.0]), v(&[3.0, 3.0]));
        let r = build_repr("a", Some(&t), &u, &[u.clone(), w], DayTimestamp(0)).unwrap();
        assert_eq!(r.d1.as_slice(), &[2.0, 2.0]);
        assert_eq!(r.d2, u);
        assert_eq!(r.d3.as_slice(), &[3.0, 1.5]);
    }

    #[test]
    fn build_repr_dim_mismatch() {
        let err = build_repr("a", Some(&v(&[1.0])), &v(&[1.0, 2.0]), &[v(&[1.0, 2.0])], DayTimestamp(0));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn paragraph_mean_is_order_invariant() {
        let ps = [v(&[1.0, 2.0]), v(&[-3.0, 0.5]), v(&[0.25, 4.0])];
        let rev: Vec<DenseVec> = ps.iter().rev().cloned().collect();
        let a = build_repr("a", None, &ps[0], &ps, DayTimestamp(0)).unwrap();
        let b = build_repr("a", None, &ps[0], &rev, DayTimestamp(0)).unwrap();
        for j in 0..2 {
            assert!((a.d1[j] - b.d1[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn blank_line_segmentation() {
        let text = "First para\ncontinues.\n\n  \nSecond.\n\n\nThird.";
        assert_eq!(split_paragraphs(text), vec!["First para\ncontinues.", "Second.", "Third."]);
    }

    fn parse(lines: &str) -> Result<Vec<DocumentInput>> {
        read_corpus(std::io::Cursor::new(lines), Path::new("mem.jsonl"))
    }

    #[test]
    fn empty_corpus() {
        assert!(parse("").unwrap().is_empty());
    }

    #[test]
    fn corpus_sorted_by_timestamp() {
        let docs = parse(concat!(
            r#"{"id":"b","lang":"en","date":"2020-03-02","title":null,"text":"x","cluster":"s1"}"#,
            "\n",
            r#"{"id":"a","lang":"de","date":"2020-03-01T10:00:00Z","title":"T","paragraphs":["p1","p2"],"cluster":null}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(docs[0].id, "a");
        assert_eq!(docs[0].paragraphs, vec!["p1", "p2"]);
        assert_eq!(docs[1].gold_label.as_deref(), Some("s1"));
        assert_eq!(docs[1].timestamp, Utc.with_ymd_and_hms(2020, 3, 2, 0, 0, 0).unwrap());
    }

    #[test]
    fn ties_broken_by_id() {
        let docs = parse(concat!(
            r#"{"id":"z","date":"2020-01-01","text":"x"}"#,
            "\n",
            r#"{"id":"m","date":"2020-01-01","text":"x"}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(docs.iter().map(|d| d.id.as_str()).collect::<Vec<_>>(), ["m", "z"]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse("\n{\"id\":\"a\",\"date\":\"2020-01-01\",\"text\":\"x\"}\n{oops\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
        let err = parse(r#"{"id":"a","date":"yesterday","text":"x"}"#).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse(r#"{"id":"a","date":"2020-01-01","text":"  \n\n "}"#).unwrap_err();
        assert!(err.to_string().contains("no paragraphs"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let line = r#"{"id":"a","date":"2020-01-01","text":"x"}"#;
        assert!(matches!(parse(&format!("{line}\n{line}\n")), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            DocumentInput {
                id: "a".into(),
                language: "pt".into(),
                timestamp: Utc.with_ymd_and_hms(2021, 5, 1, 12, 30, 0).unwrap(),
                title: Some("Título".into()),
                paragraphs: vec!["um".into(), "dois".into()],
                gold_label: Some("s".into()),
            },
            DocumentInput {
                id: "b".into(),
                language: "en".into(),
                timestamp: Utc.with_ymd_and_hms(2021, 5, 2, 0, 0, 0).unwrap(),
                title: None,
                paragraphs: vec!["only".into()],
                gold_label: None,
            },
        ];
        save_corpus(&path, &docs).unwrap();
        assert_eq!(load_corpus(&path).unwrap(), docs);
    }

    #[test]
    fn text_unit_keys() {
        let d = DocumentInput {
            id: "a".into(),
            language: "en".into(),
            timestamp: Utc.with_ymd_and_hms(2021, 5, 1, 0, 0, 0).unwrap(),
            title: Some("t".into()),
            paragraphs: vec!["p0".into(), "p1".into()],
            gold_label: None,
        };
        let keys: Vec<String> = text_units(&d).into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, ["title", "fp", "para_0", "para_1"]);
    }
}
