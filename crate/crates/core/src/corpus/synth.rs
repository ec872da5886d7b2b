//! Deterministic synthetic news streams with known story structure.
//!
//! Each story owns a unit-norm center. Every text unit (title, paragraph)
//! of a document is embedded as `center + language offset + noise`, so the
//! pooled views behave like real encoder outputs: `d1` averages several
//! units and is the cleanest, `d2` is a single paragraph and the noisiest.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::{text_hash, CacheHeader, EmbeddingCache};
use super::{build_repr, save_corpus, text_units};
use crate::domain::{DenseVec, DocRepr, DocumentInput};
use crate::error::{Error, Result};
use crate::eval::write_connections;

pub const SYNTH_MODEL: &str = "synthetic";

/// A synthetic "language": a fixed offset away from the shared story
/// centers plus its own noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangRegime {
    pub name: String,
    /// Norm of the language offset vector.
    pub shift: f64,
    /// Multiplier on the unit noise.
    pub noise: f64,
}

impl LangRegime {
    pub fn plain(name: &str) -> Self {
        LangRegime {
            name: name.to_owned(),
            shift: 0.0,
            noise: 1.0,
        }
    }

    // Offset direction depends only on the language name and dimension, so
    // separately generated corpora agree on it.
    fn offset(&self, dim: usize) -> Vec<f64> {
        if self.shift == 0.0 {
            return vec![0.0; dim];
        }
        let digest = Sha256::digest(self.name.as_bytes());
        let seed = u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.iter().map(|x| self.shift * x / norm).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_stories: usize,
    pub docs_per_story: usize,
    pub dim: usize,
    /// Required gap between a unit's cosine to its own story center and its
    /// cosine to any other center.
    pub sep: f64,
    /// Story start days are spread uniformly over this many days.
    pub time_spread_days: i64,
    /// Documents of one story fall within this many days of its start.
    pub story_duration_days: i64,
    pub seed: u64,
    /// Seed for the story centers alone, so separately generated streams
    /// can cover the same stories. Defaults to `seed`.
    pub center_seed: Option<u64>,
    pub languages: Vec<LangRegime>,
    /// Label documents per (story, language) and link same-story labels by
    /// positive connections, as monolingual gold clusters would be.
    pub crosslingual_labels: bool,
    /// Probability that each same-story label pair is connected.
    pub connection_rate: f64,
    /// The first `split_stories` stories arrive in two bursts
    /// `split_gap_days` apart.
    pub split_stories: usize,
    pub split_gap_days: i64,
    pub max_paragraphs: usize,
    pub title_rate: f64,
    pub id_prefix: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_stories: 20,
            docs_per_story: 30,
            dim: 64,
            sep: 0.5,
            time_spread_days: 60,
            story_duration_days: 7,
            seed: 0,
            center_seed: None,
            languages: vec![LangRegime::plain("en")],
            crosslingual_labels: false,
            connection_rate: 1.0,
            split_stories: 0,
            split_gap_days: 20,
            max_paragraphs: 4,
            title_rate: 0.9,
            id_prefix: "doc".to_owned(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_owned()));
        if self.n_stories == 0 || self.docs_per_story == 0 {
            return bad("need at least one story and one document per story");
        }
        if self.dim == 0 {
            return bad("dimension must be >= 1");
        }
        if !(self.sep > 0.0 && self.sep < 1.0) {
            return bad("sep must lie in (0, 1)");
        }
        if self.time_spread_days < 1 || self.story_duration_days < 1 {
            return bad("time spans must be >= 1 day");
        }
        if self.languages.is_empty() {
            return bad("need at least one language");
        }
        if !(0.0..=1.0).contains(&self.connection_rate) || !(0.0..=1.0).contains(&self.title_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.max_paragraphs == 0 {
            return bad("max paragraphs must be >= 1");
        }
        if self.split_stories > self.n_stories {
            return bad("cannot split more stories than exist");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthUnit {
    pub doc_id: String,
    pub unit: String,
    pub text: String,
    pub vector: DenseVec,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    /// Sorted by timestamp, ties by id.
    pub docs: Vec<DocumentInput>,
    pub units: Vec<SynthUnit>,
    pub connections: Vec<(String, String)>,
    pub centers: Vec<DenseVec>,
    /// Story index of each document, parallel to `docs`.
    pub stories: Vec<usize>,
    /// Per-unit noise scale chosen from `sep`.
    pub noise_scale: f64,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Unit-norm story centers; orthonormal when there are at most `dim`.
fn story_centers(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if i < dim {
            for c in &centers {
                let p = dot(&v, c);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
            }
        }
        normalize(&mut v);
        centers.push(v);
    }
    centers
}

fn max_inter_cosine(centers: &[Vec<f64>]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            m = m.max(dot(&centers[i], &centers[j]));
        }
    }
    m
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()
}

pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centers = match cfg.center_seed {
        Some(s) => story_centers(&mut ChaCha8Rng::seed_from_u64(s), cfg.n_stories, cfg.dim),
        None => story_centers(&mut rng, cfg.n_stories, cfg.dim),
    };

    // Expected cosine of a unit to its own center is 1/sqrt(1 + s²) for
    // noise of norm s; pick s so that it clears the largest inter-center
    // cosine by `sep`.
    let target = (max_inter_cosine(&centers) + cfg.sep).min(0.99);
    let noise_scale = (1.0 / (target * target) - 1.0).sqrt();
    let per_component = noise_scale / (cfg.dim as f64).sqrt();
    let offsets: Vec<Vec<f64>> = cfg.languages.iter().map(|l| l.offset(cfg.dim)).collect();

    let mut docs = Vec::new();
    let mut units = Vec::new();
    let mut stories = Vec::new();
    let mut story_langs: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cfg.n_stories];
    for (s, center) in centers.iter().enumerate() {
        let start = rng.random_range(0..cfg.time_spread_days);
        for k in 0..cfg.docs_per_story {
            let lang_idx = rng.random_range(0..cfg.languages.len());
            let lang = &cfg.languages[lang_idx];
            story_langs[s].insert(lang_idx);
            let mut day = start + rng.random_range(0..cfg.story_duration_days);
            if s < cfg.split_stories && k % 2 == 1 {
                day += cfg.split_gap_days;
            }
            let second = rng.random_range(0..86_400);
            let timestamp = epoch() + Duration::days(day) + Duration::seconds(second);

            let id = format!("{}-s{s:03}-d{k:03}", cfg.id_prefix);
            let has_title = rng.random_bool(cfg.title_rate);
            let n_paras = rng.random_range(1..=cfg.max_paragraphs);
            let title = has_title.then(|| format!("synthetic title for {id}"));
            let paragraphs: Vec<String> = (0..n_paras)
                .map(|j| format!("synthetic paragraph {j} of {id}"))
                .collect();
            let label = if cfg.crosslingual_labels {
                format!("story-{s:03}-{}", lang.name)
            } else {
                format!("story-{s:03}")
            };
            let doc = DocumentInput {
                id: id.clone(),
                language: lang.name.clone(),
                timestamp,
                title,
                paragraphs,
                gold_label: Some(label),
            };

            let unit_vec = |rng: &mut ChaCha8Rng| -> Result<DenseVec> {
                let sigma = per_component * lang.noise;
                let v: Vec<f64> = center
                    .iter()
                    .zip(&offsets[lang_idx])
                    .map(|(c, o)| c + o + sigma * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                DenseVec::new(v)
            };
            let title_vec = doc.title.as_ref().map(|_| unit_vec(&mut rng)).transpose()?;
            let para_vecs = (0..n_paras).map(|_| unit_vec(&mut rng)).collect::<Result<Vec<_>>>()?;
            for (unit, text) in text_units(&doc) {
                let vector = match unit.as_str() {
                    "title" => title_vec.clone().expect("titled document"),
                    "fp" => para_vecs[0].clone(),
                    other => {
                        let k: usize = other.trim_start_matches("para_").parse().expect("para_k");
                        para_vecs[k].clone()
                    }
                };
                units.push(SynthUnit {
                    doc_id: id.clone(),
                    unit,
                    text: text.to_owned(),
                    vector,
                });
            }
            docs.push(doc);
            stories.push(s);
        }
    }

    let mut connections = Vec::new();
    if cfg.crosslingual_labels {
        for (s, langs) in story_langs.iter().enumerate() {
            let langs: Vec<usize> = langs.iter().copied().collect();
            for (i, &a) in langs.iter().enumerate() {
                for &b in &langs[i + 1..] {
                    if rng.random_bool(cfg.connection_rate) {
                        connections.push((
                            format!("story-{s:03}-{}", cfg.languages[a].name),
                            format!("story-{s:03}-{}", cfg.languages[b].name),
                        ));
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..docs.len()).collect();
    order.sort_by(|&a, &b| {
        docs[a]
            .timestamp
            .cmp(&docs[b].timestamp)
            .then_with(|| docs[a].id.cmp(&docs[b].id))
    });
    let docs_sorted = order.iter().map(|&i| docs[i].clone()).collect();
    let stories_sorted = order.iter().map(|&i| stories[i]).collect();

    Ok(SynthCorpus {
        config: cfg.clone(),
        docs: docs_sorted,
        units,
        connections,
        centers: centers.into_iter().map(|c| DenseVec::new(c).expect("finite")).collect(),
        stories: stories_sorted,
        noise_scale,
    })
}

impl SynthCorpus {
    pub fn cache(&self) -> Result<EmbeddingCache> {
        let mut cache = EmbeddingCache::in_memory(CacheHeader::new(self.config.dim, SYNTH_MODEL));
        self.fill(&mut cache)?;
        Ok(cache)
    }

    fn fill(&self, cache: &mut EmbeddingCache) -> Result<()> {
        for u in &self.units {
            cache.insert(&u.doc_id, &u.unit, text_hash(&u.text), u.vector.clone())?;
        }
        Ok(())
    }

    /// Document representations in stream order, with gold labels.
    pub fn reprs(&self) -> Result<Vec<DocRepr>> {
        let cache = self.cache()?;
        self.docs
            .iter()
            .map(|d| {
                let get = |unit: &str| cache.get(&d.id, unit).expect("synthetic unit present");
                let title = d.title.as_ref().map(|_| get("title"));
                let paras: Vec<DenseVec> = (0..d.paragraphs.len())
                    .map(|k| get(&format!("para_{k}")).clone())
                    .collect();
                let mut r = build_repr(d.id.clone(), title, get("fp"), &paras, d.day())?;
                r.gold_label = d.gold_label.clone();
                Ok(r)
            })
            .collect()
    }

    /// Write `<name>.jsonl`, `<name>.emb` and `<name>.connections.tsv` into `dir`.
    pub fn write(&self, dir: &Path, name: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_corpus(&dir.join(format!("{name}.jsonl")), &self.docs)?;
        let cache_path = dir.join(format!("{name}.emb"));
        if cache_path.exists() {
            std::fs::remove_file(&cache_path).map_err(|e| Error::io(&cache_path, e))?;
        }
        let mut cache = EmbeddingCache::open_or_create(&cache_path)?;
        cache.bind(self.config.dim, SYNTH_MODEL)?;
        self.fill(&mut cache)?;
        cache.flush()?;
        write_connections(&dir.join(format!("{name}.connections.tsv")), &self.connections)
    }
}
