//! Clustering evaluation against gold story labels.
//!
//! Standard F1 counts document pairs; two documents belong to the same story
//! when their labels match or the labels share a positive connection.
//! BCubed averages per-document precision and recall, with gold identity
//! given by the connected components of the connection graph.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::hash::Hash;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GoldStandard {
    labels: BTreeMap<String, String>,
    connections: BTreeSet<(String, String)>,
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

impl GoldStandard {
    /// Connections must reference labels that occur in `labels`; self-loops
    /// are dropped.
    pub fn new(
        labels: BTreeMap<String, String>,
        connections: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let known: BTreeSet<&String> = labels.values().collect();
        let mut set = BTreeSet::new();
        for (a, b) in connections {
            for l in [&a, &b] {
                if !known.contains(l) {
                    return Err(Error::Evaluation(format!(
                        "connection references unknown label {l:?}"
                    )));
                }
            }
            if a != b {
                set.insert(unordered(&a, &b));
            }
        }
        Ok(GoldStandard {
            labels,
            connections: set,
        })
    }

    pub fn labels(&self) -> &BTreeMap<String, String> {
        &self.labels
    }

    pub fn connections(&self) -> &BTreeSet<(String, String)> {
        &self.connections
    }

    pub fn label(&self, doc: &str) -> Option<&str> {
        self.labels.get(doc).map(String::as_str)
    }

    /// Restrict to a subset of documents, dropping connections whose labels
    /// no longer occur.
    pub fn restrict<F: Fn(&str) -> bool>(&self, keep: F) -> GoldStandard {
        let labels: BTreeMap<String, String> = self
            .labels
            .iter()
            .filter(|(d, _)| keep(d))
            .map(|(d, l)| (d.clone(), l.clone()))
            .collect();
        let present: BTreeSet<&String> = labels.values().collect();
        let connections = self
            .connections
            .iter()
            .filter(|(a, b)| present.contains(a) && present.contains(b))
            .cloned()
            .collect();
        GoldStandard { labels, connections }
    }

    /// Direct-connection story relation.
    pub fn same_story(&self, l1: &str, l2: &str) -> bool {
        l1 == l2 || self.connections.contains(&unordered(l1, l2))
    }

    /// Map each label to a representative of its connected component.
    pub fn components(&self) -> BTreeMap<String, String> {
        let mut parent: BTreeMap<String, String> = self
            .labels
            .values()
            .map(|l| (l.clone(), l.clone()))
            .collect();
        fn find(parent: &mut BTreeMap<String, String>, x: &str) -> String {
            let mut root = x.to_owned();
            while parent[&root] != root {
                root = parent[&root].clone();
            }
            let mut cur = x.to_owned();
            while cur != root {
                let next = parent[&cur].clone();
                parent.insert(cur, root.clone());
                cur = next;
            }
            root
        }
        for (a, b) in &self.connections {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
                parent.insert(hi, lo);
            }
        }
        let keys: Vec<String> = parent.keys().cloned().collect();
        keys.into_iter()
            .map(|k| {
                let r = find(&mut parent, &k);
                (k, r)
            })
            .collect()
    }

    /// The gold standard with every label replaced by its component
    /// representative and no explicit connections.
    pub fn closure(&self) -> GoldStandard {
        let comp = self.components();
        GoldStandard {
            labels: self
                .labels
                .iter()
                .map(|(d, l)| (d.clone(), comp[l].clone()))
                .collect(),
            connections: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Harmonic mean with 0 for empty denominators.
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn check_coverage<C>(pred: &BTreeMap<String, C>, g: &GoldStandard) -> Result<()> {
    if let Some(doc) = pred.keys().find(|d| !g.labels.contains_key(*d)) {
        return Err(Error::Evaluation(format!("document {doc:?} has no gold label")));
    }
    if let Some(doc) = g.labels.keys().find(|d| !pred.contains_key(*d)) {
        return Err(Error::Evaluation(format!(
            "gold document {doc:?} missing from predictions"
        )));
    }
    Ok(())
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise precision/recall/F1 over all unordered document pairs.
pub fn standard_f1<C: Ord + Hash + Clone>(pred: &BTreeMap<String, C>, g: &GoldStandard) -> Result<Prf> {
    check_coverage(pred, g)?;
    // cluster -> label -> count
    let mut table: HashMap<&C, HashMap<&str, u64>> = HashMap::new();
    let mut label_totals: HashMap<&str, u64> = HashMap::new();
    for (doc, c) in pred {
        let l = g.labels[doc].as_str();
        *table.entry(c).or_default().entry(l).or_default() += 1;
        *label_totals.entry(l).or_default() += 1;
    }

    let mut same_story_pairs: u64 = label_totals.values().map(|&n| pairs(n)).sum();
    for (a, b) in &g.connections {
        same_story_pairs += label_totals.get(a.as_str()).unwrap_or(&0) * label_totals.get(b.as_str()).unwrap_or(&0);
    }

    let mut predicted_pairs = 0u64;
    let mut tp = 0u64;
    for counts in table.values() {
        let size: u64 = counts.values().sum();
        predicted_pairs += pairs(size);
        tp += counts.values().map(|&n| pairs(n)).sum::<u64>();
        for (a, b) in &g.connections {
            if let (Some(na), Some(nb)) = (counts.get(a.as_str()), counts.get(b.as_str())) {
                tp += na * nb;
            }
        }
    }
    let fp = predicted_pairs - tp;
    let fn_ = same_story_pairs - tp;
    Ok(Prf::new(
        ratio(tp as f64, (tp + fp) as f64),
        ratio(tp as f64, (tp + fn_) as f64),
    ))
}

/// BCubed precision/recall/F1 with labels collapsed over connections.
pub fn bcubed<C: Ord + Hash + Clone>(pred: &BTreeMap<String, C>, g: &GoldStandard) -> Result<Prf> {
    check_coverage(pred, g)?;
    if pred.is_empty() {
        return Ok(Prf::new(0.0, 0.0));
    }
    let comp = g.components();
    let mut joint: HashMap<(&C, &str), u64> = HashMap::new();
    let mut cluster_sizes: HashMap<&C, u64> = HashMap::new();
    let mut class_sizes: HashMap<&str, u64> = HashMap::new();
    for (doc, c) in pred {
        let l = comp[&g.labels[doc]].as_str();
        *joint.entry((c, l)).or_default() += 1;
        *cluster_sizes.entry(c).or_default() += 1;
        *class_sizes.entry(l).or_default() += 1;
    }
    // Every document in cell (c, l) has the same per-document precision and recall.
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    for (&(c, l), &n) in &joint {
        let n = n as f64;
        p_sum += n * n / cluster_sizes[c] as f64;
        r_sum += n * n / class_sizes[l] as f64;
    }
    let total = pred.len() as f64;
    Ok(Prf::new(p_sum / total, r_sum / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub std_p: f64,
    pub std_r: f64,
    pub std_f1: f64,
    pub bcubed_p: f64,
    pub bcubed_r: f64,
    pub bcubed_f1: f64,
    pub n_docs: usize,
    pub n_clusters: usize,
}

/// How the standard metric relates connected labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoryRelation {
    /// Direct positive connections only.
    #[default]
    Direct,
    /// Connected components of the connection graph.
    Closure,
}

pub fn evaluate<C: Ord + Hash + Clone>(
    pred: &BTreeMap<String, C>,
    g: &GoldStandard,
    relation: StoryRelation,
) -> Result<EvalReport> {
    let std = match relation {
        StoryRelation::Direct => standard_f1(pred, g)?,
        StoryRelation::Closure => standard_f1(pred, &g.closure())?,
    };
    let b = bcubed(pred, g)?;
    let n_clusters = pred.values().collect::<BTreeSet<_>>().len();
    Ok(EvalReport {
        std_p: std.precision,
        std_r: std.recall,
        std_f1: std.f1,
        bcubed_p: b.precision,
        bcubed_r: b.recall,
        bcubed_f1: b.f1,
        n_docs: pred.len(),
        n_clusters,
    })
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>8} {:>8} {:>8} | {:>8} {:>8} {:>8} | {:>8} {:>8}",
            "B3 F1", "B3 P", "B3 R", "Std F1", "Std P", "Std R", "Clusters", "Docs"
        )?;
        write!(
            f,
            "{:>8.2} {:>8.2} {:>8.2} | {:>8.2} {:>8.2} {:>8.2} | {:>8} {:>8}",
            100.0 * self.bcubed_f1,
            100.0 * self.bcubed_p,
            100.0 * self.bcubed_r,
            100.0 * self.std_f1,
            100.0 * self.std_p,
            100.0 * self.std_r,
            self.n_clusters,
            self.n_docs
        )
    }
}

/// One line of the gold label file. The corpus file itself also parses.
#[derive(Debug, Clone, Deserialize)]
struct GoldLine {
    id: String,
    cluster: Option<String>,
    #[serde(default)]
    lang: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct GoldFile {
    pub labels: BTreeMap<String, String>,
    pub languages: BTreeMap<String, String>,
}

/// Read gold labels from JSON lines with `id`, `cluster` and optional `lang`.
/// Lines without a label are skipped.
pub fn read_gold_labels(path: &Path) -> Result<GoldFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = GoldFile::default();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let g: GoldLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(lang) = g.lang {
            out.languages.insert(g.id.clone(), lang);
        }
        if let Some(label) = g.cluster {
            if out.labels.insert(g.id.clone(), label).is_some() {
                return Err(Error::DuplicateId(g.id));
            }
        }
    }
    Ok(out)
}

/// Read `labelA<TAB>labelB` positive connections; blank lines and `#`
/// comments are ignored.
pub fn read_connections(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                out.push((a.to_owned(), b.to_owned()));
            }
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected two tab-separated labels".into(),
                })
            }
        }
    }
    Ok(out)
}

pub fn write_connections(path: &Path, connections: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (a, b) in connections {
        text.push_str(a);
        text.push('\t');
        text.push_str(b);
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
