//! Similarity scores and the canonical feature layouts.
//!
//! Document/cluster vectors have eight entries:
//!
//! | index | feature                          |
//! |-------|----------------------------------|
//! | 0     | cos(d1, c1)                      |
//! | 1     | cos(d2, c2)                      |
//! | 2     | cos(d3, c3)                      |
//! | 3     | cos(d2, c1)                      |
//! | 4     | cos(d3, c1)                      |
//! | 5     | temporal(d.ts, c.ts_newest)      |
//! | 6     | temporal(d.ts, c.ts_oldest)      |
//! | 7     | temporal(d.ts, c.ts_mean)        |
//!
//! Cluster/cluster vectors append the acceptance score of the first eight
//! and the size scores of the source and candidate clusters.

use serde::{Deserialize, Serialize};

use crate::domain::{Cluster, DenseVec, FeatureVec, LinearModel, ModelKind};
use crate::error::{Error, Result};
use crate::models::score;

pub const DOC_FEATURES: usize = 8;
pub const PAIR_FEATURES: usize = 11;

/// Gaussian kernel parameters over day differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalParams {
    mu: f64,
    sigma: f64,
}

impl TemporalParams {
    pub const DEFAULT_MU: f64 = 0.0;
    pub const DEFAULT_SIGMA: f64 = 3.0;

    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be finite, got {mu}")));
        }
        Ok(TemporalParams { mu, sigma })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams {
            mu: Self::DEFAULT_MU,
            sigma: Self::DEFAULT_SIGMA,
        }
    }
}

/// Strictly increasing positive size thresholds for the size score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct SizeLimits(Vec<usize>);

impl SizeLimits {
    pub const DEFAULT: [usize; 7] = [1, 2, 3, 5, 10, 20, 50];

    pub fn new(limits: Vec<usize>) -> Result<Self> {
        if limits.is_empty() {
            return Err(Error::InvalidParameter("size limits must be nonempty".into()));
        }
        if limits[0] == 0 {
            return Err(Error::InvalidParameter("size limits must be positive".into()));
        }
        if limits.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "size limits must be strictly increasing".into(),
            ));
        }
        Ok(SizeLimits(limits))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }
}

impl Default for SizeLimits {
    fn default() -> Self {
        SizeLimits(Self::DEFAULT.to_vec())
    }
}

impl TryFrom<Vec<usize>> for SizeLimits {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        SizeLimits::new(v)
    }
}

impl From<SizeLimits> for Vec<usize> {
    fn from(s: SizeLimits) -> Self {
        s.0
    }
}

impl std::str::FromStr for SizeLimits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let limits = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidParameter(format!("bad size limit {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        SizeLimits::new(limits)
    }
}

/// Which document/cluster features the rank and accept models see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// All eight features.
    #[default]
    Full,
    /// cos(d1, c1) and the three temporal features.
    Reduced,
}

impl FeatureSet {
    const REDUCED: [usize; 4] = [0, 5, 6, 7];

    pub fn arity(self) -> usize {
        match self {
            FeatureSet::Full => DOC_FEATURES,
            FeatureSet::Reduced => Self::REDUCED.len(),
        }
    }

    pub fn from_count(n: usize) -> Result<Self> {
        match n {
            8 => Ok(FeatureSet::Full),
            4 => Ok(FeatureSet::Reduced),
            other => Err(Error::InvalidParameter(format!(
                "feature count must be 4 or 8, got {other}"
            ))),
        }
    }

    /// Project a full 8-feature vector onto this set.
    pub fn project(self, f: &FeatureVec) -> FeatureVec {
        match self {
            FeatureSet::Full => f.clone(),
            FeatureSet::Reduced => f.select(&Self::REDUCED),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity clamped to `[-1, 1]`. A zero-norm input yields 0.
pub fn cosine(a: &DenseVec, b: &DenseVec) -> Result<f64> {
    b.check_dim(a.len())?;
    let (a, b) = (a.as_slice(), b.as_slice());
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        log::warn!("cosine similarity with a zero-norm vector; scoring as 0");
        return Ok(0.0);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gaussian similarity of two day timestamps, peaking at 1 when their
/// absolute difference equals `mu`.
pub fn temporal_score(d_ts: f64, c_ts: f64, p: &TemporalParams) -> f64 {
    let delta = (d_ts - c_ts).abs() - p.mu;
    (-(delta * delta) / (2.0 * p.sigma * p.sigma)).exp()
}

/// Fraction of size limits strictly exceeded by a cluster of `k` documents.
pub fn size_score(k: usize, v: &SizeLimits) -> f64 {
    let exceeded = v.0.iter().filter(|&&limit| k > limit).count();
    exceeded as f64 / v.0.len() as f64
}

fn view_features(
    views: [&DenseVec; 3],
    ts: f64,
    c: &Cluster,
    p: &TemporalParams,
) -> Result<[f64; DOC_FEATURES]> {
    let [d1, d2, d3] = views;
    Ok([
        cosine(d1, c.c1())?,
        cosine(d2, c.c2())?,
        cosine(d3, c.c3())?,
        cosine(d2, c.c1())?,
        cosine(d3, c.c1())?,
        temporal_score(ts, c.ts_newest().as_f64(), p),
        temporal_score(ts, c.ts_oldest().as_f64(), p),
        temporal_score(ts, c.ts_mean(), p),
    ])
}

/// The eight document/cluster features in canonical order.
pub fn doc_cluster_features(
    d: &crate::domain::DocRepr,
    c: &Cluster,
    p: &TemporalParams,
) -> Result<FeatureVec> {
    let f = view_features(d.views(), d.ts.as_f64(), c, p)?;
    FeatureVec::new(f.to_vec())
}

/// The first eight cluster/cluster features: `src` stands in for a
/// document through its centroids and mean timestamp.
pub fn cluster_rank_features(src: &Cluster, cand: &Cluster, p: &TemporalParams) -> Result<FeatureVec> {
    let f = view_features(src.centroids(), src.ts_mean(), cand, p)?;
    FeatureVec::new(f.to_vec())
}

/// The eleven merge features for a source/candidate cluster pair.
///
/// The acceptance score is computed on the projection of the first eight
/// features that matches the acceptance model's arity.
pub fn cluster_pair_features(
    src: &Cluster,
    cand: &Cluster,
    p: &TemporalParams,
    v: &SizeLimits,
    accept_model: &LinearModel,
) -> Result<FeatureVec> {
    accept_model.expect_kind(ModelKind::Accept)?;
    let base = cluster_rank_features(src, cand, p)?;
    let set = FeatureSet::from_count(accept_model.arity())?;
    let accept = score(accept_model, &set.project(&base))?;
    let mut values = base.as_slice().to_vec();
    values.extend([accept, size_score(src.size(), v), size_score(cand.size(), v)]);
    FeatureVec::new(values)
}
