//! Training-set generation and model fitting.
//!
//! Rank and accept examples come from a teacher-forced replay: every
//! document is placed in its gold cluster whatever the models would have
//! done. Merge examples come from running the engine itself and labelling
//! each candidate pair by whether merging improves pairwise F1 on the two
//! clusters involved.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ClusterId, DocRepr, FeatureVec, LinearModel, ModelKind};
use crate::engine::{ranked_candidates, Engine, EngineConfig, ModelSet};
use crate::error::{Error, Result};
use crate::eval::{standard_f1, GoldStandard};
use crate::features::{FeatureSet, SizeLimits, TemporalParams, PAIR_FEATURES};
use crate::models::{self, binary_objective, rank_objective, train_binary, train_rank, LabeledExample, RankPair, TrainConfig};
use crate::pool::{Pool, PoolConfig};

pub const DEFAULT_K_NEG: usize = 20;

/// A labelled merge decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeSample {
    pub f: FeatureVec,
    pub y: i8,
    pub src_id: ClusterId,
    pub cand_id: ClusterId,
    pub f1_merged: f64,
    pub f1_separate: f64,
}

impl MergeSample {
    pub fn example(&self) -> LabeledExample {
        LabeledExample {
            f: self.f.clone(),
            y: self.y,
        }
    }
}

/// A time-ordered training stream with its gold standard.
///
/// Teacher forcing groups documents by story, where labels joined by a
/// positive connection count as one story.
#[derive(Debug, Clone)]
pub struct LabeledStream<'a> {
    docs: &'a [DocRepr],
    stories: Vec<String>,
    gold: GoldStandard,
}

impl<'a> LabeledStream<'a> {
    pub fn new(docs: &'a [DocRepr], connections: &[(String, String)]) -> Result<Self> {
        let mut labels = BTreeMap::new();
        for d in docs {
            let label = d
                .gold_label
                .clone()
                .ok_or_else(|| Error::MissingGoldLabel(d.id.clone()))?;
            if labels.insert(d.id.clone(), label).is_some() {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let gold = GoldStandard::new(labels, connections.iter().cloned())?;
        let comp = gold.components();
        let stories = docs
            .iter()
            .map(|d| comp[d.gold_label.as_ref().expect("checked above")].clone())
            .collect();
        Ok(LabeledStream { docs, stories, gold })
    }

    pub fn docs(&self) -> &'a [DocRepr] {
        self.docs
    }

    pub fn gold(&self) -> &GoldStandard {
        &self.gold
    }

    fn iter(&self) -> impl Iterator<Item = (&'a DocRepr, &str)> + '_ {
        self.docs.iter().zip(self.stories.iter().map(String::as_str))
    }
}

fn teacher_pool() -> Pool {
    Pool::new(PoolConfig {
        archive_horizon_days: None,
        lean: true,
    })
    .expect("static pool config is valid")
}

/// Pair the gold cluster against the best `k_neg` other live clusters.
///
/// Candidates are ordered by `order` when given, else by cos(d1, c1).
pub fn gen_rank_examples(
    stream: &LabeledStream,
    p: &TemporalParams,
    set: FeatureSet,
    k_neg: usize,
    order: Option<&LinearModel>,
) -> Result<Vec<RankPair>> {
    let mut pool = teacher_pool();
    let mut gold_cluster: HashMap<&str, ClusterId> = HashMap::new();
    let mut pairs = Vec::new();
    for (d, story) in stream.iter() {
        let Some(&g) = gold_cluster.get(story) else {
            gold_cluster.insert(story, pool.create_cluster(d)?);
            continue;
        };
        let ranked = ranked_candidates(&pool, d, p, set, order)?;
        let pos = &ranked
            .iter()
            .find(|c| c.id == g)
            .expect("gold cluster is live")
            .features;
        for neg in ranked.iter().filter(|c| c.id != g).take(k_neg) {
            pairs.push(RankPair {
                pos: pos.clone(),
                neg: neg.features.clone(),
            });
        }
        pool.insert(g, d)?;
    }
    Ok(pairs)
}

/// The gold cluster is a positive; the second-ranked cluster, or the third
/// when the gold cluster holds second place, is a negative. A document
/// that opens a new story yields its top-ranked cluster as a negative.
pub fn gen_accept_examples(
    stream: &LabeledStream,
    p: &TemporalParams,
    set: FeatureSet,
    rank_model: &LinearModel,
) -> Result<Vec<LabeledExample>> {
    rank_model.expect_kind(ModelKind::Rank)?;
    let mut pool = teacher_pool();
    let mut gold_cluster: HashMap<&str, ClusterId> = HashMap::new();
    let mut out = Vec::new();
    for (d, story) in stream.iter() {
        let ranked = ranked_candidates(&pool, d, p, set, Some(rank_model))?;
        match gold_cluster.get(story) {
            Some(&g) => {
                let gold = ranked.iter().find(|c| c.id == g).expect("gold cluster is live");
                out.push(LabeledExample::new(gold.features.clone(), true));
                let neg = match ranked.get(1) {
                    Some(c) if c.id == g => ranked.get(2),
                    other => other,
                };
                if let Some(neg) = neg {
                    out.push(LabeledExample::new(neg.features.clone(), false));
                }
                pool.insert(g, d)?;
            }
            None => {
                if let Some(top) = ranked.first() {
                    out.push(LabeledExample::new(top.features.clone(), false));
                }
                gold_cluster.insert(story, pool.create_cluster(d)?);
            }
        }
    }
    Ok(out)
}

/// Pairwise F1 over the documents of two clusters, merged and kept apart.
pub fn local_f1(a: &[String], b: &[String], gold: &GoldStandard) -> Result<(f64, f64)> {
    let members: HashSet<&str> = a.iter().chain(b).map(String::as_str).collect();
    let local = gold.restrict(|d| members.contains(d));
    let merged: BTreeMap<String, u8> = a.iter().chain(b).map(|d| (d.clone(), 0)).collect();
    let separate: BTreeMap<String, u8> = a
        .iter()
        .map(|d| (d.clone(), 0))
        .chain(b.iter().map(|d| (d.clone(), 1)))
        .collect();
    Ok((standard_f1(&merged, &local)?.f1, standard_f1(&separate, &local)?.f1))
}

/// Run the engine without merging and label each insertion's top-ranked
/// candidate pairs by local F1, merging whenever the gold says so.
pub fn gen_merge_examples(
    stream: &LabeledStream,
    cfg: &EngineConfig,
    rank_model: &LinearModel,
    accept_model: &LinearModel,
) -> Result<Vec<MergeSample>> {
    let mut engine = Engine::new(
        cfg.clone(),
        ModelSet {
            rank: rank_model.clone(),
            accept: accept_model.clone(),
            merge: None,
        },
    )?;
    let mut out = Vec::new();
    for d in stream.docs() {
        let s = engine.place(d)?.cluster_id;
        for cand in engine.merge_candidates(s)? {
            let f = engine.pair_features(s, cand)?;
            let pool = engine.pool();
            let (f1_merged, f1_separate) = local_f1(
                pool.get(s).expect("live").members(),
                pool.get(cand).expect("live").members(),
                stream.gold(),
            )?;
            let merge = f1_merged > f1_separate;
            out.push(MergeSample {
                f,
                y: if merge { 1 } else { -1 },
                src_id: s,
                cand_id: cand,
                f1_merged,
                f1_separate,
            });
            if merge {
                engine.absorb(s, cand)?;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub engine: EngineConfig,
    pub k_neg: usize,
    /// Regenerate rank pairs ordered by the first rank model and retrain.
    pub rerank_pass: bool,
    pub train: TrainConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            engine: EngineConfig::default(),
            k_neg: DEFAULT_K_NEG,
            rerank_pass: false,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_documents: usize,
    pub features: FeatureSet,
    pub rank_pairs: usize,
    pub rank_loss: f64,
    pub accept_positive: usize,
    pub accept_negative: usize,
    pub accept_loss: f64,
    pub merge_positive: usize,
    pub merge_negative: usize,
    pub merge_loss: f64,
    /// The merge set had a single class and a never-merge model was used.
    pub merge_fallback: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSets {
    pub rank: Vec<RankPair>,
    pub accept: Vec<LabeledExample>,
    pub merge: Vec<MergeSample>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub models: ModelSet,
    pub report: TrainReport,
    pub sets: TrainingSets,
}

fn count(examples: impl Iterator<Item = i8>) -> (usize, usize) {
    examples.fold((0, 0), |(p, n), y| if y > 0 { (p + 1, n) } else { (p, n + 1) })
}

/// Generate all three training sets in dependency order and fit the models.
pub fn train_all(docs: &[DocRepr], connections: &[(String, String)], cfg: &TrainerConfig) -> Result<Trained> {
    cfg.train.validate()?;
    if docs.is_empty() {
        return Err(Error::EmptyInput("training corpus"));
    }
    let stream = LabeledStream::new(docs, connections)?;
    let p = &cfg.engine.temporal;
    let set = cfg.engine.features;

    let mut rank_pairs = gen_rank_examples(&stream, p, set, cfg.k_neg, None)?;
    if rank_pairs.is_empty() {
        return Err(Error::EmptyInput(
            "ranking pairs: no document ever saw a live cluster of another story",
        ));
    }
    let mut rank = train_rank(&rank_pairs, &cfg.train)?;
    if cfg.rerank_pass {
        rank_pairs = gen_rank_examples(&stream, p, set, cfg.k_neg, Some(&rank))?;
        rank = train_rank(&rank_pairs, &cfg.train)?;
    }
    log::info!("rank model trained on {} pairs", rank_pairs.len());

    let accept_set = gen_accept_examples(&stream, p, set, &rank)?;
    let accept = train_binary(&accept_set, ModelKind::Accept, &cfg.train)?;
    let (accept_positive, accept_negative) = count(accept_set.iter().map(|e| e.y));
    log::info!("accept model trained on {accept_positive} positive / {accept_negative} negative examples");

    let merge_set = gen_merge_examples(&stream, &cfg.engine, &rank, &accept)?;
    let merge_examples: Vec<LabeledExample> = merge_set.iter().map(MergeSample::example).collect();
    let (merge_positive, merge_negative) = count(merge_set.iter().map(|s| s.y));
    let (merge, merge_fallback) = match train_binary(&merge_examples, ModelKind::Merge, &cfg.train) {
        Ok(m) => (m, false),
        Err(Error::MissingClass(_) | Error::EmptyInput(_)) => {
            log::warn!(
                "merge set has {merge_positive} positive / {merge_negative} negative examples; using a never-merge model"
            );
            (LinearModel::new(ModelKind::Merge, vec![0.0; PAIR_FEATURES], -1.0)?, true)
        }
        Err(e) => return Err(e),
    };
    let merge_loss = if merge_examples.is_empty() {
        0.0
    } else {
        binary_objective(&merge, &merge_examples, cfg.train.l2_lambda)
    };

    let report = TrainReport {
        n_documents: docs.len(),
        features: set,
        rank_pairs: rank_pairs.len(),
        rank_loss: rank_objective(rank.weights(), &rank_pairs, cfg.train.l2_lambda),
        accept_positive,
        accept_negative,
        accept_loss: binary_objective(&accept, &accept_set, cfg.train.l2_lambda),
        merge_positive,
        merge_negative,
        merge_loss,
        merge_fallback,
    };
    Ok(Trained {
        models: ModelSet {
            rank,
            accept,
            merge: Some(merge),
        },
        report,
        sets: TrainingSets {
            rank: rank_pairs,
            accept: accept_set,
            merge: merge_set,
        },
    })
}

/// Feature settings a model directory was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub temporal: TemporalParams,
    pub size_limits: SizeLimits,
    pub features: FeatureSet,
}

impl FeatureConfig {
    pub fn of(cfg: &EngineConfig) -> Self {
        FeatureConfig {
            temporal: cfg.temporal,
            size_limits: cfg.size_limits.clone(),
            features: cfg.features,
        }
    }
}

const RANK_FILE: &str = "rank.model";
const ACCEPT_FILE: &str = "accept.model";
const MERGE_FILE: &str = "merge.model";
const CONFIG_FILE: &str = "config.json";
const REPORT_FILE: &str = "report.json";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Write `rank.model`, `accept.model`, `merge.model`, `config.json` and
/// `report.json` into `dir`.
pub fn save_model_dir(dir: &Path, models: &ModelSet, features: &FeatureConfig, report: &TrainReport) -> Result<()> {
    let merge = models
        .merge
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("model directory needs a merge model".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    models::save(&models.rank, &dir.join(RANK_FILE))?;
    models::save(&models.accept, &dir.join(ACCEPT_FILE))?;
    models::save(merge, &dir.join(MERGE_FILE))?;
    write_json(&dir.join(CONFIG_FILE), features)?;
    write_json(&dir.join(REPORT_FILE), report)
}

pub fn load_model_dir(dir: &Path) -> Result<(ModelSet, FeatureConfig)> {
    let load = |name: &str, kind: ModelKind| -> Result<LinearModel> {
        let m = models::load(&dir.join(name))?;
        m.expect_kind(kind)?;
        Ok(m)
    };
    let models = ModelSet {
        rank: load(RANK_FILE, ModelKind::Rank)?,
        accept: load(ACCEPT_FILE, ModelKind::Accept)?,
        merge: Some(load(MERGE_FILE, ModelKind::Merge)?),
    };
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut features: FeatureConfig = serde_json::from_str(&text)?;
    features.temporal = TemporalParams::new(features.temporal.mu(), features.temporal.sigma())?;
    Ok((models, features))
}
