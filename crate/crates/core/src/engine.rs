//! The online clustering loop: rank, accept or create, then merge.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{ClusterId, DocRepr, FeatureVec, LinearModel, ModelKind};
use crate::error::{Error, Result};
use crate::features::{
    cluster_pair_features, cluster_rank_features, doc_cluster_features, FeatureSet, SizeLimits, TemporalParams,
    PAIR_FEATURES,
};
use crate::models::score;
use crate::pool::{MergeEvent, Pool, PoolConfig};

pub const DEFAULT_MERGE_TOP_M: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub temporal: TemporalParams,
    pub size_limits: SizeLimits,
    pub features: FeatureSet,
    /// Merge candidates evaluated per step, taken in rank order.
    pub merge_top_m: usize,
    /// Evaluate every live cluster in the merge step.
    pub merge_eval_all: bool,
    pub pool: PoolConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            temporal: TemporalParams::default(),
            size_limits: SizeLimits::default(),
            features: FeatureSet::Full,
            merge_top_m: DEFAULT_MERGE_TOP_M,
            merge_eval_all: false,
            pool: PoolConfig::default(),
        }
    }
}

/// The models driving an engine. Without a merge model the merge step is
/// skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub rank: LinearModel,
    pub accept: LinearModel,
    pub merge: Option<LinearModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub doc_id: String,
    pub cluster_id: ClusterId,
    /// Rank score of the best cluster; absent when the pool was empty.
    pub rank_score: Option<f64>,
    pub accept_score: Option<f64>,
    pub created: bool,
    pub merges: Vec<MergeEvent>,
}

/// A live cluster scored against a document.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub id: ClusterId,
    /// Features in the configured feature set.
    pub features: FeatureVec,
    pub score: f64,
}

fn sort_candidates(c: &mut [Candidate]) {
    c.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.id.cmp(&b.id)));
}

/// Score every live cluster against `d` and order them best first, ties by
/// lowest id. Without a rank model the order is by cos(d1, c1).
pub fn ranked_candidates(
    pool: &Pool,
    d: &DocRepr,
    p: &TemporalParams,
    set: FeatureSet,
    rank: Option<&LinearModel>,
) -> Result<Vec<Candidate>> {
    let mut out = Vec::with_capacity(pool.live_count());
    for c in pool.live_clusters() {
        let features = set.project(&doc_cluster_features(d, c, p)?);
        let score = match rank {
            Some(m) => score(m, &features)?,
            None => features[0],
        };
        out.push(Candidate {
            id: c.id(),
            features,
            score,
        });
    }
    sort_candidates(&mut out);
    Ok(out)
}

fn check_model(m: &LinearModel, kind: ModelKind, arity: usize) -> Result<()> {
    m.expect_kind(kind)?;
    if m.arity() != arity {
        return Err(Error::ArityMismatch {
            model: m.arity(),
            features: arity,
        });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Engine {
    cfg: EngineConfig,
    models: ModelSet,
    pool: Pool,
}

/// Outcome of placing one document, before any merging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Placement {
    pub cluster_id: ClusterId,
    pub rank_score: Option<f64>,
    pub accept_score: Option<f64>,
    pub created: bool,
}

impl Engine {
    pub fn new(cfg: EngineConfig, models: ModelSet) -> Result<Self> {
        let arity = cfg.features.arity();
        check_model(&models.rank, ModelKind::Rank, arity)?;
        check_model(&models.accept, ModelKind::Accept, arity)?;
        if let Some(m) = &models.merge {
            check_model(m, ModelKind::Merge, PAIR_FEATURES)?;
        }
        if cfg.merge_top_m == 0 && !cfg.merge_eval_all {
            return Err(Error::InvalidParameter("merge breadth must be >= 1".into()));
        }
        let pool = Pool::new(cfg.pool.clone())?;
        Ok(Engine { cfg, models, pool })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn models(&self) -> &ModelSet {
        &self.models
    }

    pub fn pool(&self) -> &Pool {
        &self.pool
    }

    pub fn into_pool(self) -> Pool {
        self.pool
    }

    /// Archive stale clusters, then accept `d` into the best-ranked cluster
    /// or open a new one.
    pub fn place(&mut self, d: &DocRepr) -> Result<Placement> {
        self.pool.archive_sweep(d.ts);
        let ranked = ranked_candidates(
            &self.pool,
            d,
            &self.cfg.temporal,
            self.cfg.features,
            Some(&self.models.rank),
        )?;
        let Some(best) = ranked.first() else {
            let cluster_id = self.pool.create_cluster(d)?;
            return Ok(Placement {
                cluster_id,
                rank_score: None,
                accept_score: None,
                created: true,
            });
        };
        let accept = score(&self.models.accept, &best.features)?;
        let created = accept <= 0.0;
        let cluster_id = if created {
            self.pool.create_cluster(d)?
        } else {
            self.pool.insert(best.id, d)?;
            best.id
        };
        Ok(Placement {
            cluster_id,
            rank_score: Some(best.score),
            accept_score: Some(accept),
            created,
        })
    }

    /// Other live clusters ordered by rank score against `s`, truncated to
    /// the configured breadth.
    pub fn merge_candidates(&self, s: ClusterId) -> Result<Vec<ClusterId>> {
        let src = self.pool.get(s).ok_or(Error::UnknownCluster(s))?;
        let mut scored = Vec::new();
        for c in self.pool.live_clusters().filter(|c| c.id() != s) {
            let features = self
                .cfg
                .features
                .project(&cluster_rank_features(src, c, &self.cfg.temporal)?);
            scored.push(Candidate {
                id: c.id(),
                score: score(&self.models.rank, &features)?,
                features,
            });
        }
        sort_candidates(&mut scored);
        if !self.cfg.merge_eval_all {
            scored.truncate(self.cfg.merge_top_m);
        }
        Ok(scored.into_iter().map(|c| c.id).collect())
    }

    /// Merge features of a live source/candidate pair.
    pub fn pair_features(&self, s: ClusterId, cand: ClusterId) -> Result<FeatureVec> {
        let src = self.pool.get(s).ok_or(Error::UnknownCluster(s))?;
        let other = self.pool.get(cand).ok_or(Error::UnknownCluster(cand))?;
        cluster_pair_features(
            src,
            other,
            &self.cfg.temporal,
            &self.cfg.size_limits,
            &self.models.accept,
        )
    }

    /// Fold `cand` into `s`.
    pub fn absorb(&mut self, s: ClusterId, cand: ClusterId) -> Result<MergeEvent> {
        self.pool.merge(s, cand)?;
        Ok(MergeEvent { retired: cand, into: s })
    }

    /// Absorb positively scored candidates into `s`, best first, rescoring
    /// the remaining candidates after every merge.
    fn merge_step(&mut self, s: ClusterId) -> Result<Vec<MergeEvent>> {
        let Some(merge_model) = self.models.merge.clone() else {
            return Ok(Vec::new());
        };
        let mut remaining = self.merge_candidates(s)?;
        let mut events = Vec::new();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (i, &cand) in remaining.iter().enumerate() {
                let m = score(&merge_model, &self.pair_features(s, cand)?)?;
                if m > 0.0 && !matches!(best, Some((_, b)) if m <= b) {
                    best = Some((i, m));
                }
            }
            let Some((i, _)) = best else { break };
            let cand = remaining.remove(i);
            events.push(self.absorb(s, cand)?);
        }
        Ok(events)
    }

    pub fn process_document(&mut self, d: &DocRepr) -> Result<AssignmentRecord> {
        let placed = self.place(d)?;
        let merges = self.merge_step(placed.cluster_id)?;
        Ok(AssignmentRecord {
            doc_id: d.id.clone(),
            cluster_id: placed.cluster_id,
            rank_score: placed.rank_score,
            accept_score: placed.accept_score,
            created: placed.created,
            merges,
        })
    }

    /// Process a stream in the given order.
    pub fn run_stream<'a>(&mut self, docs: impl IntoIterator<Item = &'a DocRepr>) -> Result<Vec<AssignmentRecord>> {
        docs.into_iter().map(|d| self.process_document(d)).collect()
    }
}

/// Final cluster of every document, following merges to the survivor.
pub fn resolve_assignments(records: &[AssignmentRecord]) -> BTreeMap<String, ClusterId> {
    let mut into: BTreeMap<ClusterId, ClusterId> = BTreeMap::new();
    for e in records.iter().flat_map(|r| &r.merges) {
        into.insert(e.retired, e.into);
    }
    let survivor = |mut c: ClusterId| {
        while let Some(&next) = into.get(&c) {
            c = next;
        }
        c
    };
    records
        .iter()
        .map(|r| (r.doc_id.clone(), survivor(r.cluster_id)))
        .collect()
}

pub fn write_assignments<W: Write>(mut out: W, records: &[AssignmentRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io("<assignments>", e))?;
    }
    out.flush().map_err(|e| Error::io("<assignments>", e))
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
