//! Linear scoring, hinge-loss SGD training and the model file format.
//!
//! Rank models are fit on pairwise differences (Rank-SVM); accept and merge
//! models are binary linear SVMs with a bias. Both minimise
//! `(λ/2)|w|² + mean(hinge)` by plain SGD.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FeatureVec, LinearModel, ModelKind};
use crate::error::{Error, Result};

const MODEL_MAGIC: &str = "storyline-linear-model v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
    pub shuffle: bool,
    /// Decay the step as `learning_rate / (1 + λ·t)`.
    #[serde(default)]
    pub decay: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.01,
            l2_lambda: 1e-4,
            seed: 0,
            shuffle: true,
            decay: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter("learning rate must be > 0".into()));
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidParameter("l2 lambda must be >= 0".into()));
        }
        Ok(())
    }

    fn step(&self, t: usize) -> f64 {
        if self.decay {
            self.learning_rate / (1.0 + self.l2_lambda * t as f64)
        } else {
            self.learning_rate
        }
    }
}

/// A preference: `pos` should outscore `neg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPair {
    pub pos: FeatureVec,
    pub neg: FeatureVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub f: FeatureVec,
    /// +1 or -1.
    pub y: i8,
}

impl LabeledExample {
    pub fn new(f: FeatureVec, positive: bool) -> Self {
        LabeledExample {
            f,
            y: if positive { 1 } else { -1 },
        }
    }
}

fn dot(w: &[f64], f: &[f64]) -> f64 {
    w.iter().zip(f).map(|(a, b)| a * b).sum()
}

pub fn score(m: &LinearModel, f: &FeatureVec) -> Result<f64> {
    if m.arity() != f.arity() {
        return Err(Error::ArityMismatch {
            model: m.arity(),
            features: f.arity(),
        });
    }
    Ok(dot(m.weights(), f.as_slice()) + m.bias())
}

fn epoch_order(n: usize, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        order.shuffle(rng);
    }
    order
}

fn common_arity<'a>(mut arities: impl Iterator<Item = &'a FeatureVec>) -> Result<usize> {
    let first = arities.next().ok_or(Error::EmptyInput("training set"))?.arity();
    for f in arities {
        if f.arity() != first {
            return Err(Error::ArityMismatch {
                model: first,
                features: f.arity(),
            });
        }
    }
    Ok(first)
}

/// Mean pairwise hinge loss plus the L2 term.
pub fn rank_objective(w: &[f64], pairs: &[RankPair], l2_lambda: f64) -> f64 {
    let hinge: f64 = pairs
        .iter()
        .map(|p| (1.0 - (dot(w, p.pos.as_slice()) - dot(w, p.neg.as_slice()))).max(0.0))
        .sum();
    0.5 * l2_lambda * dot(w, w) + hinge / pairs.len() as f64
}

/// Mean binary hinge loss plus the L2 term.
pub fn binary_objective(m: &LinearModel, examples: &[LabeledExample], l2_lambda: f64) -> f64 {
    let w = m.weights();
    let hinge: f64 = examples
        .iter()
        .map(|e| (1.0 - f64::from(e.y) * (dot(w, e.f.as_slice()) + m.bias())).max(0.0))
        .sum();
    0.5 * l2_lambda * dot(w, w) + hinge / examples.len() as f64
}

pub fn train_rank(pairs: &[RankPair], cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("rank training needs at least one pair"));
    }
    let arity = common_arity(pairs.iter().flat_map(|p| [&p.pos, &p.neg]))?;
    let diffs: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| {
            p.pos
                .as_slice()
                .iter()
                .zip(p.neg.as_slice())
                .map(|(a, b)| a - b)
                .collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; arity];
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        for i in epoch_order(diffs.len(), cfg, &mut rng) {
            let eta = cfg.step(t);
            t += 1;
            let x = &diffs[i];
            let violated = dot(&w, x) < 1.0;
            for (wj, xj) in w.iter_mut().zip(x) {
                let grad = cfg.l2_lambda * *wj - if violated { *xj } else { 0.0 };
                *wj -= eta * grad;
            }
        }
    }
    LinearModel::new(ModelKind::Rank, w, 0.0)
}

pub fn train_binary(examples: &[LabeledExample], kind: ModelKind, cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    if kind == ModelKind::Rank {
        return Err(Error::InvalidParameter("use train_rank for rank models".into()));
    }
    if examples.is_empty() {
        return Err(Error::EmptyInput("binary training set"));
    }
    if let Some(bad) = examples.iter().find(|e| e.y != 1 && e.y != -1) {
        return Err(Error::InvalidParameter(format!("label must be +1 or -1, got {}", bad.y)));
    }
    if !examples.iter().any(|e| e.y > 0) {
        return Err(Error::MissingClass("positive"));
    }
    if !examples.iter().any(|e| e.y < 0) {
        return Err(Error::MissingClass("negative"));
    }
    let arity = common_arity(examples.iter().map(|e| &e.f))?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; arity];
    let mut b = 0.0;
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        for i in epoch_order(examples.len(), cfg, &mut rng) {
            let eta = cfg.step(t);
            t += 1;
            let e = &examples[i];
            let y = f64::from(e.y);
            let x = e.f.as_slice();
            let violated = y * (dot(&w, x) + b) < 1.0;
            for (wj, xj) in w.iter_mut().zip(x) {
                let grad = cfg.l2_lambda * *wj - if violated { y * xj } else { 0.0 };
                *wj -= eta * grad;
            }
            if violated {
                b += eta * y;
            }
        }
    }
    LinearModel::new(kind, w, b)
}

/// Serialise in the text model format: a magic line, then `kind`, `arity`,
/// `bias` and one weight per line, all floats with 17 significant digits.
pub fn to_text(m: &LinearModel) -> String {
    let mut s = String::new();
    writeln!(s, "{MODEL_MAGIC}").unwrap();
    writeln!(s, "kind {}", m.kind()).unwrap();
    writeln!(s, "arity {}", m.arity()).unwrap();
    writeln!(s, "bias {:.16e}", m.bias()).unwrap();
    for w in m.weights() {
        writeln!(s, "weight {w:.16e}").unwrap();
    }
    s
}

pub fn from_text(text: &str, origin: &Path) -> Result<LinearModel> {
    let bad = |message: String| Error::ModelFormat {
        path: origin.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(MODEL_MAGIC) {
        return Err(bad("missing header line".into()));
    }
    let mut field = |name: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| bad(format!("truncated before {name}")))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_owned)
            .ok_or_else(|| bad(format!("expected `{name}`, found {line:?}")))
    };
    let kind: ModelKind = field("kind")?.parse().map_err(|e: Error| bad(e.to_string()))?;
    let arity: usize = field("arity")?
        .parse()
        .map_err(|e| bad(format!("arity: {e}")))?;
    let bias: f64 = field("bias")?.parse().map_err(|e| bad(format!("bias: {e}")))?;
    let weights = (0..arity)
        .map(|i| {
            field("weight")?
                .parse::<f64>()
                .map_err(|e| bad(format!("weight {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(bad(format!("trailing data after {arity} weights: {extra:?}")));
    }
    LinearModel::new(kind, weights, bias).map_err(|e| bad(e.to_string()))
}

pub fn save(m: &LinearModel, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(m)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<LinearModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn fv(x: &[f64]) -> FeatureVec {
        FeatureVec::new(x.to_vec()).unwrap()
    }

    #[test]
    fn score_fixtures() {
        let ones = LinearModel::new(ModelKind::Rank, vec![1.0; 8], 0.0).unwrap();
        assert_eq!(score(&ones, &fv(&[1.0; 8])).unwrap(), 8.0);
        let zero = LinearModel::new(ModelKind::Accept, vec![0.0; 8], -0.5).unwrap();
        assert_eq!(score(&zero, &fv(&[0.3, -0.2, 0.9, 0.1, 0.0, 1.0, 0.5, 0.25])).unwrap(), -0.5);
    }

    #[test]
    fn score_matches_independent_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let w: Vec<f64> = (0..11).map(|_| rng.random_range(-5.0..5.0)).collect();
            let f: Vec<f64> = (0..11).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b = rng.random_range(-1.0..1.0);
            let m = LinearModel::new(ModelKind::Merge, w.clone(), b).unwrap();
            let mut expected = b;
            for i in (0..11).rev() {
                expected += w[i] * f[i];
            }
            assert!((score(&m, &fv(&f)).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn score_arity_mismatch() {
        let m = LinearModel::new(ModelKind::Accept, vec![1.0; 8], 0.0).unwrap();
        assert!(matches!(
            score(&m, &fv(&[1.0; 4])),
            Err(Error::ArityMismatch { model: 8, features: 4 })
        ));
    }

    fn separable_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<RankPair> {
        (0..n)
            .map(|_| {
                let neg: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..1.0)).collect();
                let mut pos = neg.clone();
                pos[0] += 1.0;
                RankPair { pos: fv(&pos), neg: fv(&neg) }
            })
            .collect()
    }

    #[test]
    fn rank_learns_separating_coordinate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = separable_pairs(&mut rng, 200);
        let m = train_rank(&pairs, &TrainConfig::default()).unwrap();
        assert!(m.weights()[0] > 0.0);
        assert_eq!(m.bias(), 0.0);
        for p in &pairs {
            assert!(score(&m, &p.pos).unwrap() > score(&m, &p.neg).unwrap());
        }
    }

    #[test]
    fn rank_self_pairs_carry_no_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs: Vec<RankPair> = (0..50)
            .map(|_| {
                let f = fv(&(0..8).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
                RankPair { pos: f.clone(), neg: f }
            })
            .collect();
        let m = train_rank(&pairs, &TrainConfig::default()).unwrap();
        assert!(m.weights().iter().all(|&w| w == 0.0));
        assert!(rank_objective(m.weights(), &pairs, 1e-4) >= 1.0);
    }

    #[test]
    fn rank_argmax_invariant_to_feature_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = separable_pairs(&mut rng, 300);
        let scaled: Vec<RankPair> = pairs
            .iter()
            .map(|p| RankPair { pos: p.pos.scaled(2.0), neg: p.neg.scaled(2.0) })
            .collect();
        let cfg = TrainConfig::default();
        let m1 = train_rank(&pairs, &cfg).unwrap();
        let m2 = train_rank(&scaled, &cfg).unwrap();
        // Candidate lists: one positive among five negatives.
        for _ in 0..50 {
            let cands = separable_pairs(&mut rng, 5);
            let mut list: Vec<FeatureVec> = cands.iter().map(|p| p.neg.clone()).collect();
            list.push(cands[0].pos.clone());
            let argmax = |m: &LinearModel, scale: f64| {
                list.iter()
                    .enumerate()
                    .map(|(i, f)| (i, score(m, &f.scaled(scale)).unwrap()))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap()
                    .0
            };
            assert_eq!(argmax(&m1, 1.0), argmax(&m2, 2.0));
        }
    }

    #[test]
    fn rank_training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs = separable_pairs(&mut rng, 100);
        let cfg = TrainConfig { seed: 77, ..TrainConfig::default() };
        assert_eq!(train_rank(&pairs, &cfg).unwrap(), train_rank(&pairs, &cfg).unwrap());
    }

    #[test]
    fn rank_rejects_empty() {
        assert!(matches!(train_rank(&[], &TrainConfig::default()), Err(Error::EmptyInput(_))));
    }

    // Separable on the first coordinate with margin 0.2 around zero.
    fn separable_binary(rng: &mut ChaCha8Rng, n: usize) -> Vec<LabeledExample> {
        (0..n)
            .map(|_| {
                let positive = rng.random_bool(0.5);
                let a = rng.random_range(0.2..1.0);
                let a = if positive { a } else { -a };
                LabeledExample::new(fv(&[a, rng.random_range(-1.0..1.0)]), positive)
            })
            .collect()
    }

    #[test]
    fn binary_separable_reaches_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = separable_binary(&mut rng, 300);
        let cfg = TrainConfig { epochs: 100, ..TrainConfig::default() };
        let m = train_binary(&data, ModelKind::Accept, &cfg).unwrap();
        for e in &data {
            assert!(f64::from(e.y) * score(&m, &e.f).unwrap() > 0.0);
        }
    }

    #[test]
    fn binary_degenerate_features_predict_majority() {
        let f = fv(&[0.5, 0.5]);
        let data: Vec<LabeledExample> = (0..10).map(|i| LabeledExample::new(f.clone(), i < 7)).collect();
        let m = train_binary(&data, ModelKind::Accept, &TrainConfig::default()).unwrap();
        let decision = score(&m, &f).unwrap() > 0.0;
        let accuracy = data.iter().filter(|e| (e.y > 0) == decision).count() as f64 / 10.0;
        assert!(decision);
        assert_eq!(accuracy, 0.7);
    }

    #[test]
    fn binary_label_flip_flips_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = separable_binary(&mut rng, 200);
        let flipped: Vec<LabeledExample> = data
            .iter()
            .map(|e| LabeledExample { f: e.f.clone(), y: -e.y })
            .collect();
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        let m = train_binary(&data, ModelKind::Merge, &cfg).unwrap();
        let mf = train_binary(&flipped, ModelKind::Merge, &cfg).unwrap();
        for e in &data {
            let (a, b) = (score(&m, &e.f).unwrap(), score(&mf, &e.f).unwrap());
            assert!(a * b < 0.0, "{a} vs {b}");
        }
    }

    #[test]
    fn binary_one_class_names_missing_class() {
        let data = vec![LabeledExample::new(fv(&[1.0]), true)];
        let err = train_binary(&data, ModelKind::Accept, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingClass("negative")));
        assert!(err.to_string().contains("negative"));
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { l2_lambda: -1.0, ..TrainConfig::default() }.validate().is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = LinearModel::new(ModelKind::Accept, vec![0.1, -1.0 / 3.0, 1e-300, 12345.678], -0.7).unwrap();
        let p1 = dir.path().join("a.model");
        let p2 = dir.path().join("b.model");
        save(&m, &p1).unwrap();
        let loaded = load(&p1).unwrap();
        assert_eq!(loaded, m);
        save(&loaded, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn load_truncated_is_structured_error() {
        let m = LinearModel::new(ModelKind::Merge, vec![1.0; 11], 0.5).unwrap();
        let text = to_text(&m);
        let cut = &text[..text.len() / 2];
        let err = from_text(cut, Path::new("m.model")).unwrap_err();
        assert!(matches!(err, Error::ModelFormat { .. }), "{err}");
    }

    #[test]
    fn loaded_wrong_arity_fails_at_use() {
        let m = LinearModel::new(ModelKind::Accept, vec![1.0; 4], 0.0).unwrap();
        let loaded = from_text(&to_text(&m), Path::new("m")).unwrap();
        assert!(matches!(score(&loaded, &fv(&[0.0; 8])), Err(Error::ArityMismatch { .. })));
    }

    proptest! {
        #[test]
        fn text_format_roundtrips_bit_exact(
            w in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..12),
            b in prop::num::f64::NORMAL,
        ) {
            let m = LinearModel::new(ModelKind::Merge, w, b).unwrap();
            let back = from_text(&to_text(&m), Path::new("p")).unwrap();
            prop_assert_eq!(back.bias().to_bits(), m.bias().to_bits());
            for (x, y) in back.weights().iter().zip(m.weights()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }

        #[test]
        fn score_is_linear_without_bias(
            w in prop::collection::vec(-10.0f64..10.0, 8),
            f in prop::collection::vec(-1.0f64..1.0, 8),
            g in prop::collection::vec(-1.0f64..1.0, 8),
        ) {
            let m = LinearModel::new(ModelKind::Rank, w, 0.0).unwrap();
            let sum: Vec<f64> = f.iter().zip(&g).map(|(a, b)| a + b).collect();
            let lhs = score(&m, &fv(&sum)).unwrap();
            let rhs = score(&m, &fv(&f)).unwrap() + score(&m, &fv(&g)).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn rank_differences_ignore_common_shift(shift in -0.5f64..0.5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pairs = separable_pairs(&mut rng, 40);
            let shifted: Vec<RankPair> = pairs
                .iter()
                .map(|p| RankPair {
                    pos: fv(&p.pos.as_slice().iter().map(|x| x + shift).collect::<Vec<_>>()),
                    neg: fv(&p.neg.as_slice().iter().map(|x| x + shift).collect::<Vec<_>>()),
                })
                .collect();
            let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
            let m = train_rank(&pairs, &cfg).unwrap();
            let ms = train_rank(&shifted, &cfg).unwrap();
            for (p, q) in pairs.iter().zip(&shifted) {
                let d = score(&m, &p.pos).unwrap() - score(&m, &p.neg).unwrap();
                let ds = score(&ms, &q.pos).unwrap() - score(&ms, &q.neg).unwrap();
                prop_assert!((d - ds).abs() < 1e-9);
            }
        }
    }
}
