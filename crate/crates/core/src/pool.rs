//! The cluster pool: owns live and archived clusters and the merge log.
//!
//! All mutation goes through `&mut Pool`, so a single writer is enforced by
//! the borrow checker; ranking scans borrow the live set immutably between
//! mutations.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{Cluster, ClusterId, DayTimestamp, DenseVec, DocRepr};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Clusters whose newest member is more than this many days behind the
    /// stream clock are archived. `None` disables archiving.
    pub archive_horizon_days: Option<i64>,
    /// Drop per-document vectors once they are folded into centroids.
    pub lean: bool,
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        match self.archive_horizon_days {
            Some(h) if h <= 0 => Err(Error::InvalidParameter(format!(
                "archive horizon must be > 0 days, got {h}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub retired: ClusterId,
    pub into: ClusterId,
}

#[derive(Debug, Clone)]
pub struct Pool {
    config: PoolConfig,
    live: BTreeMap<ClusterId, Cluster>,
    archived: BTreeMap<ClusterId, Cluster>,
    merge_log: Vec<MergeEvent>,
    next_id: u64,
    documents: HashMap<String, DocRepr>,
    n_documents: usize,
}

impl Default for Pool {
    fn default() -> Self {
        Pool::new(PoolConfig::default()).expect("default pool config is valid")
    }
}

impl Pool {
    pub fn new(config: PoolConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pool {
            config,
            live: BTreeMap::new(),
            archived: BTreeMap::new(),
            merge_log: Vec::new(),
            next_id: 0,
            documents: HashMap::new(),
            n_documents: 0,
        })
    }

    pub fn config(&self) -> &PoolConfig {
        &self.config
    }

    fn retain(&mut self, d: &DocRepr) {
        self.n_documents += 1;
        if !self.config.lean {
            self.documents.insert(d.id.clone(), d.clone());
        }
    }

    pub fn create_cluster(&mut self, d: &DocRepr) -> Result<ClusterId> {
        if let Some(existing) = self.live.values().next() {
            d.d1.check_dim(existing.dim())?;
        }
        let id = ClusterId(self.next_id);
        self.next_id += 1;
        self.live.insert(id, Cluster::singleton(id, d));
        self.retain(d);
        Ok(id)
    }

    pub fn insert(&mut self, cid: ClusterId, d: &DocRepr) -> Result<()> {
        let cluster = self.live.get_mut(&cid).ok_or(Error::UnknownCluster(cid))?;
        cluster.add_document(d)?;
        self.retain(d);
        Ok(())
    }

    /// Fold `src` into `dst`; `src` is retired and logged.
    pub fn merge(&mut self, dst: ClusterId, src: ClusterId) -> Result<()> {
        if dst == src {
            return Err(Error::SelfMerge(dst));
        }
        let dst_dim = self.live.get(&dst).ok_or(Error::UnknownCluster(dst))?.dim();
        self.live
            .get(&src)
            .ok_or(Error::UnknownCluster(src))?
            .c1()
            .check_dim(dst_dim)?;
        let retired = self.live.remove(&src).expect("checked above");
        self.live
            .get_mut(&dst)
            .expect("checked above")
            .absorb(retired)?;
        self.merge_log.push(MergeEvent { retired: src, into: dst });
        Ok(())
    }

    pub fn get(&self, cid: ClusterId) -> Option<&Cluster> {
        self.live.get(&cid)
    }

    pub fn is_live(&self, cid: ClusterId) -> bool {
        self.live.contains_key(&cid)
    }

    /// Live clusters in ascending id order.
    pub fn live_clusters(&self) -> impl ExactSizeIterator<Item = &Cluster> + '_ {
        self.live.values()
    }

    pub fn archived_clusters(&self) -> impl ExactSizeIterator<Item = &Cluster> + '_ {
        self.archived.values()
    }

    pub fn live_count(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    pub fn archive_sweep(&mut self, clock: DayTimestamp) -> usize {
        let Some(horizon) = self.config.archive_horizon_days else {
            return 0;
        };
        let stale: Vec<ClusterId> = self
            .live
            .values()
            .filter(|c| c.ts_newest().day() < clock.day() - horizon)
            .map(Cluster::id)
            .collect();
        for id in &stale {
            let c = self.live.remove(id).expect("listed from live set");
            self.archived.insert(*id, c);
        }
        stale.len()
    }

    pub fn merge_log(&self) -> &[MergeEvent] {
        &self.merge_log
    }

    pub fn documents_processed(&self) -> usize {
        self.n_documents
    }

    /// Retained representation of a member document (absent in lean mode).
    pub fn document(&self, id: &str) -> Option<&DocRepr> {
        self.documents.get(id)
    }

    /// Recompute a cluster's centroids from retained member documents.
    pub fn recompute_centroids(&self, cid: ClusterId) -> Result<[DenseVec; 3]> {
        let c = self
            .live
            .get(&cid)
            .or_else(|| self.archived.get(&cid))
            .ok_or(Error::UnknownCluster(cid))?;
        let docs = c
            .members()
            .iter()
            .map(|m| {
                self.documents
                    .get(m)
                    .ok_or_else(|| Error::InvalidParameter(format!("document {m:?} not retained")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok([
            DenseVec::mean(docs.iter().map(|d| &d.d1))?,
            DenseVec::mean(docs.iter().map(|d| &d.d2))?,
            DenseVec::mean(docs.iter().map(|d| &d.d3))?,
        ])
    }

    /// Final cluster of every processed document, over live and archived clusters.
    pub fn assignment(&self) -> BTreeMap<String, ClusterId> {
        self.live
            .values()
            .chain(self.archived.values())
            .flat_map(|c| c.members().iter().map(move |m| (m.clone(), c.id())))
            .collect()
    }

    pub fn export_records(&self, with_centroids: bool) -> Vec<ClusterRecord> {
        let mut records: Vec<ClusterRecord> = self
            .live
            .values()
            .map(|c| ClusterRecord::from_cluster(c, false, with_centroids))
            .chain(
                self.archived
                    .values()
                    .map(|c| ClusterRecord::from_cluster(c, true, with_centroids)),
            )
            .collect();
        records.sort_by_key(|r| r.id);
        records
    }

    /// Write one JSON object per cluster, ascending by id.
    pub fn export_jsonl<W: Write>(&self, mut out: W, with_centroids: bool) -> Result<()> {
        for record in self.export_records(with_centroids) {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(|e| Error::io("<pool export>", e))?;
        }
        Ok(())
    }
}

/// One line of the pool export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: ClusterId,
    pub size: usize,
    pub archived: bool,
    pub members: Vec<String>,
    pub ts_newest: DayTimestamp,
    pub ts_oldest: DayTimestamp,
    pub ts_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<[DenseVec; 3]>,
}

impl ClusterRecord {
    fn from_cluster(c: &Cluster, archived: bool, with_centroids: bool) -> Self {
        ClusterRecord {
            id: c.id(),
            size: c.size(),
            archived,
            members: c.members().to_vec(),
            ts_newest: c.ts_newest(),
            ts_oldest: c.ts_oldest(),
            ts_mean: c.ts_mean(),
            centroids: with_centroids.then(|| [c.c1().clone(), c.c2().clone(), c.c3().clone()]),
        }
    }
}

pub fn read_pool_export(path: &Path) -> Result<Vec<ClusterRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}
