//! Value types shared across the pipeline: dense vectors, day timestamps,
//! documents, clusters, feature vectors and linear models.

use std::fmt;
use std::ops::Index;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Embedding dimension of the default multilingual sentence encoder.
pub const DEFAULT_EMBEDDING_DIM: usize = 512;

const SECONDS_PER_DAY: i64 = 86_400;

/// A finite dense vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DenseVec(Vec<f64>);

impl DenseVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(DenseVec(values))
    }

    pub fn zeros(dim: usize) -> Self {
        DenseVec(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: self.len(),
            });
        }
        Ok(())
    }

    /// Arithmetic mean of a nonempty set of equal-length vectors.
    pub fn mean<'a>(vectors: impl IntoIterator<Item = &'a DenseVec>) -> Result<DenseVec> {
        let mut iter = vectors.into_iter();
        let first = iter.next().ok_or(Error::EmptyInput("mean of zero vectors"))?;
        let mut sum = first.0.clone();
        let mut n = 1usize;
        for v in iter {
            v.check_dim(sum.len())?;
            for (s, x) in sum.iter_mut().zip(&v.0) {
                *s += x;
            }
            n += 1;
        }
        let n = n as f64;
        sum.iter_mut().for_each(|s| *s /= n);
        Ok(DenseVec(sum))
    }
}

impl<'de> Deserialize<'de> for DenseVec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        DenseVec::new(values).map_err(serde::de::Error::custom)
    }
}

impl Index<usize> for DenseVec {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

/// Running-mean update: the mean of `n_before` vectors summarised by
/// `centroid`, extended with `x`. When `n_before` is zero `centroid` is
/// ignored and `x` is returned.
pub fn centroid_update(centroid: &DenseVec, n_before: usize, x: &DenseVec) -> Result<DenseVec> {
    if n_before == 0 {
        return Ok(x.clone());
    }
    x.check_dim(centroid.len())?;
    let n = (n_before + 1) as f64;
    let values = centroid
        .0
        .iter()
        .zip(&x.0)
        .map(|(c, v)| c + (v - c) / n)
        .collect();
    Ok(DenseVec(values))
}

/// Size-weighted mean of two centroids.
pub(crate) fn weighted_mean(a: &DenseVec, na: usize, b: &DenseVec, nb: usize) -> Result<DenseVec> {
    b.check_dim(a.len())?;
    let (wa, wb) = (na as f64, nb as f64);
    let total = wa + wb;
    let values = a
        .0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (wa * x + wb * y) / total)
        .collect();
    Ok(DenseVec(values))
}

/// Day-level timestamp: whole days since the Unix epoch (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DayTimestamp(pub i64);

impl DayTimestamp {
    pub fn from_instant(t: DateTime<Utc>) -> Self {
        DayTimestamp(t.timestamp().div_euclid(SECONDS_PER_DAY))
    }

    pub fn day(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64
    }
}

impl fmt::Display for DayTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A raw article before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentInput {
    pub id: String,
    pub language: String,
    pub timestamp: DateTime<Utc>,
    pub title: Option<String>,
    pub paragraphs: Vec<String>,
    pub gold_label: Option<String>,
}

impl DocumentInput {
    pub fn first_paragraph(&self) -> &str {
        &self.paragraphs[0]
    }

    pub fn day(&self) -> DayTimestamp {
        DayTimestamp::from_instant(self.timestamp)
    }
}

/// The three dense views of a document plus its day timestamp.
///
/// `d1` covers body and title, `d2` the first paragraph, `d3` the first
/// paragraph and title.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRepr {
    pub id: String,
    pub d1: DenseVec,
    pub d2: DenseVec,
    pub d3: DenseVec,
    pub ts: DayTimestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_label: Option<String>,
}

impl DocRepr {
    pub fn new(
        id: impl Into<String>,
        d1: DenseVec,
        d2: DenseVec,
        d3: DenseVec,
        ts: DayTimestamp,
    ) -> Result<Self> {
        d2.check_dim(d1.len())?;
        d3.check_dim(d1.len())?;
        Ok(DocRepr {
            id: id.into(),
            d1,
            d2,
            d3,
            ts,
            gold_label: None,
        })
    }

    pub fn with_gold_label(mut self, label: impl Into<String>) -> Self {
        self.gold_label = Some(label.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.d1.len()
    }

    pub fn views(&self) -> [&DenseVec; 3] {
        [&self.d1, &self.d2, &self.d3]
    }
}

/// Identifier of a cluster, assigned in strictly increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A story cluster: running-mean centroids for each view, the newest,
/// oldest and mean member day, and the member document ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    id: ClusterId,
    c1: DenseVec,
    c2: DenseVec,
    c3: DenseVec,
    ts_newest: DayTimestamp,
    ts_oldest: DayTimestamp,
    ts_mean: f64,
    members: Vec<String>,
}

impl Cluster {
    pub(crate) fn singleton(id: ClusterId, doc: &DocRepr) -> Self {
        Cluster {
            id,
            c1: doc.d1.clone(),
            c2: doc.d2.clone(),
            c3: doc.d3.clone(),
            ts_newest: doc.ts,
            ts_oldest: doc.ts,
            ts_mean: doc.ts.as_f64(),
            members: vec![doc.id.clone()],
        }
    }

    pub(crate) fn add_document(&mut self, doc: &DocRepr) -> Result<()> {
        let n = self.size();
        let c1 = centroid_update(&self.c1, n, &doc.d1)?;
        let c2 = centroid_update(&self.c2, n, &doc.d2)?;
        let c3 = centroid_update(&self.c3, n, &doc.d3)?;
        self.c1 = c1;
        self.c2 = c2;
        self.c3 = c3;
        self.ts_newest = self.ts_newest.max(doc.ts);
        self.ts_oldest = self.ts_oldest.min(doc.ts);
        self.ts_mean += (doc.ts.as_f64() - self.ts_mean) / (n + 1) as f64;
        self.members.push(doc.id.clone());
        Ok(())
    }

    pub(crate) fn absorb(&mut self, other: Cluster) -> Result<()> {
        let (na, nb) = (self.size(), other.size());
        let c1 = weighted_mean(&self.c1, na, &other.c1, nb)?;
        let c2 = weighted_mean(&self.c2, na, &other.c2, nb)?;
        let c3 = weighted_mean(&self.c3, na, &other.c3, nb)?;
        self.c1 = c1;
        self.c2 = c2;
        self.c3 = c3;
        self.ts_newest = self.ts_newest.max(other.ts_newest);
        self.ts_oldest = self.ts_oldest.min(other.ts_oldest);
        self.ts_mean = (na as f64 * self.ts_mean + nb as f64 * other.ts_mean) / (na + nb) as f64;
        self.members.extend(other.members);
        Ok(())
    }

    pub fn id(&self) -> ClusterId {
        self.id
    }

    pub fn c1(&self) -> &DenseVec {
        &self.c1
    }

    pub fn c2(&self) -> &DenseVec {
        &self.c2
    }

    pub fn c3(&self) -> &DenseVec {
        &self.c3
    }

    pub fn centroids(&self) -> [&DenseVec; 3] {
        [&self.c1, &self.c2, &self.c3]
    }

    pub fn ts_newest(&self) -> DayTimestamp {
        self.ts_newest
    }

    pub fn ts_oldest(&self) -> DayTimestamp {
        self.ts_oldest
    }

    pub fn ts_mean(&self) -> f64 {
        self.ts_mean
    }

    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn dim(&self) -> usize {
        self.c1.len()
    }
}

/// Similarity features in canonical order (8 for document/cluster,
/// 11 for cluster/cluster comparisons).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(FeatureVec(values))
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Keep only the features at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureVec {
        FeatureVec(indices.iter().map(|&i| self.0[i]).collect())
    }

    #[cfg(test)]
    pub(crate) fn scaled(&self, factor: f64) -> FeatureVec {
        FeatureVec(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Index<usize> for FeatureVec {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.0[index]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Rank,
    Accept,
    Merge,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rank => "rank",
            ModelKind::Accept => "accept",
            ModelKind::Merge => "merge",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rank" => Ok(ModelKind::Rank),
            "accept" => Ok(ModelKind::Accept),
            "merge" => Ok(ModelKind::Merge),
            other => Err(Error::InvalidParameter(format!("unknown model kind {other:?}"))),
        }
    }
}

/// `score = dot(weights, f) + bias`. Rank models always carry a zero bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    kind: ModelKind,
    weights: Vec<f64>,
    bias: f64,
}

impl LinearModel {
    pub fn new(kind: ModelKind, weights: Vec<f64>, bias: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("model with zero weights".into()));
        }
        if let Some(index) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if !bias.is_finite() {
            return Err(Error::InvalidParameter("non-finite bias".into()));
        }
        if kind == ModelKind::Rank && bias != 0.0 {
            return Err(Error::InvalidParameter("rank models have no bias".into()));
        }
        Ok(LinearModel { kind, weights, bias })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }

    pub fn expect_kind(&self, expected: ModelKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::WrongModelKind {
                expected,
                actual: self.kind,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DenseVec {
        DenseVec::new(x.to_vec()).unwrap()
    }

    #[test]
    fn centroid_update_mean_of_two() {
        let c = centroid_update(&v(&[0.0, 0.0]), 1, &v(&[2.0, 0.0])).unwrap();
        assert_eq!(c, v(&[1.0, 0.0]));
    }

    #[test]
    fn centroid_update_first_member_ignores_centroid() {
        let c = centroid_update(&v(&[100.0, -7.0]), 0, &v(&[3.0, 4.0])).unwrap();
        assert_eq!(c, v(&[3.0, 4.0]));
    }

    #[test]
    fn centroid_update_tenth_member_matches_batch_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vecs: Vec<DenseVec> = (0..10)
            .map(|_| v(&(0..16).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
            .collect();
        let nine = DenseVec::mean(&vecs[..9]).unwrap();
        let inc = centroid_update(&nine, 9, &vecs[9]).unwrap();
        let batch = DenseVec::mean(&vecs).unwrap();
        for i in 0..16 {
            assert!((inc[i] - batch[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn centroid_update_rejects_dim_mismatch() {
        let err = centroid_update(&v(&[0.0, 0.0]), 1, &v(&[1.0])).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 1 }));
    }

    #[test]
    fn dense_vec_rejects_nan() {
        assert!(matches!(
            DenseVec::new(vec![0.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn day_timestamp_floors_to_utc_day() {
        let morning = Utc.with_ymd_and_hms(2021, 3, 4, 0, 0, 1).unwrap();
        let night = Utc.with_ymd_and_hms(2021, 3, 4, 23, 59, 59).unwrap();
        let next = Utc.with_ymd_and_hms(2021, 3, 5, 0, 0, 0).unwrap();
        assert_eq!(DayTimestamp::from_instant(morning), DayTimestamp::from_instant(night));
        assert_eq!(DayTimestamp::from_instant(next).day(), DayTimestamp::from_instant(night).day() + 1);
        let before_epoch = Utc.with_ymd_and_hms(1969, 12, 31, 12, 0, 0).unwrap();
        assert_eq!(DayTimestamp::from_instant(before_epoch).day(), -1);
    }

    #[test]
    fn rank_model_must_not_have_bias() {
        assert!(LinearModel::new(ModelKind::Rank, vec![1.0; 8], 0.5).is_err());
        assert!(LinearModel::new(ModelKind::Accept, vec![1.0; 8], 0.5).is_ok());
    }

    proptest! {
        #[test]
        fn incremental_mean_is_order_invariant(
            rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 4), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let vecs: Vec<DenseVec> = rows.into_iter().map(|r| DenseVec::new(r).unwrap()).collect();
            let mut order: Vec<usize> = (0..vecs.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut c = DenseVec::zeros(4);
            for (n, &i) in order.iter().enumerate() {
                c = centroid_update(&c, n, &vecs[i]).unwrap();
            }
            let batch = DenseVec::mean(&vecs).unwrap();
            for i in 0..4 {
                prop_assert!((c[i] - batch[i]).abs() < 1e-9);
            }
        }
    }
}
