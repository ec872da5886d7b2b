//! Metric implementations against pair and per-document enumeration.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use storyline_core::{bcubed, standard_f1, GoldStandard};

#[derive(Debug, Clone)]
struct Instance {
    labels: Vec<usize>,
    pred: Vec<usize>,
    connections: Vec<(usize, usize)>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (1usize..=12, 1usize..=5, 1usize..=5).prop_flat_map(|(n, n_labels, n_clusters)| {
        (
            prop::collection::vec(0..n_labels, n),
            prop::collection::vec(0..n_clusters, n),
            prop::collection::vec((0..n_labels, 0..n_labels), 0..6),
        )
            .prop_map(|(labels, pred, connections)| Instance {
                labels,
                pred,
                connections,
            })
    })
}

impl Instance {
    fn used_connections(&self) -> Vec<(usize, usize)> {
        let present: BTreeSet<usize> = self.labels.iter().copied().collect();
        self.connections
            .iter()
            .copied()
            .filter(|(a, b)| present.contains(a) && present.contains(b))
            .collect()
    }

    fn gold(&self) -> GoldStandard {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (format!("d{i}"), format!("L{l}")))
            .collect();
        let conns = self
            .used_connections()
            .into_iter()
            .map(|(a, b)| (format!("L{a}"), format!("L{b}")));
        GoldStandard::new(labels, conns).unwrap()
    }

    fn pred(&self) -> BTreeMap<String, usize> {
        self.pred.iter().enumerate().map(|(i, c)| (format!("d{i}"), *c)).collect()
    }

    fn linked(&self, a: usize, b: usize) -> bool {
        a == b
            || self
                .used_connections()
                .iter()
                .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    // Labels reachable through connections, by repeated relaxation.
    fn reach(&self) -> Vec<Vec<bool>> {
        let k = self.labels.iter().max().unwrap() + 1;
        let mut r = vec![vec![false; k]; k];
        for (a, row) in r.iter_mut().enumerate() {
            for (b, cell) in row.iter_mut().enumerate() {
                *cell = self.linked(a, b);
            }
        }
        for m in 0..k {
            for a in 0..k {
                for b in 0..k {
                    if r[a][m] && r[m][b] {
                        r[a][b] = true;
                    }
                }
            }
        }
        r
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

fn brute_standard(x: &Instance) -> (f64, f64, f64) {
    let n = x.labels.len();
    let (mut tp, mut pred_pairs, mut gold_pairs) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let same_pred = x.pred[i] == x.pred[j];
            let same_gold = x.linked(x.labels[i], x.labels[j]);
            if same_pred {
                pred_pairs += 1.0;
            }
            if same_gold {
                gold_pairs += 1.0;
            }
            if same_pred && same_gold {
                tp += 1.0;
            }
        }
    }
    let p = if pred_pairs > 0.0 { tp / pred_pairs } else { 0.0 };
    let r = if gold_pairs > 0.0 { tp / gold_pairs } else { 0.0 };
    (p, r, f1(p, r))
}

fn brute_bcubed(x: &Instance) -> (f64, f64, f64) {
    let n = x.labels.len();
    let reach = x.reach();
    let (mut p, mut r) = (0.0, 0.0);
    for i in 0..n {
        let same_cluster: Vec<usize> = (0..n).filter(|&j| x.pred[j] == x.pred[i]).collect();
        let same_class: Vec<usize> = (0..n).filter(|&j| reach[x.labels[i]][x.labels[j]]).collect();
        let both = same_cluster
            .iter()
            .filter(|&&j| reach[x.labels[i]][x.labels[j]])
            .count() as f64;
        p += both / same_cluster.len() as f64;
        r += both / same_class.len() as f64;
    }
    let (p, r) = (p / n as f64, r / n as f64);
    (p, r, f1(p, r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn standard_f1_matches_pair_enumeration(x in instance()) {
        let got = standard_f1(&x.pred(), &x.gold()).unwrap();
        let (p, r, f) = brute_standard(&x);
        prop_assert!((got.precision - p).abs() < 1e-12);
        prop_assert!((got.recall - r).abs() < 1e-12);
        prop_assert!((got.f1 - f).abs() < 1e-12);
    }

    #[test]
    fn bcubed_matches_per_document_enumeration(x in instance()) {
        let got = bcubed(&x.pred(), &x.gold()).unwrap();
        let (p, r, f) = brute_bcubed(&x);
        prop_assert!((got.precision - p).abs() < 1e-12);
        prop_assert!((got.recall - r).abs() < 1e-12);
        prop_assert!((got.f1 - f).abs() < 1e-12);
    }

    #[test]
    fn gold_as_prediction_scores_one(x in instance()) {
        let g = x.gold().closure();
        let pred: BTreeMap<String, String> = g.labels().clone();
        prop_assert_eq!(bcubed(&pred, &g).unwrap().f1, 1.0);
        // Pairwise scores are 1, or 0 when no two documents share a story.
        let std = standard_f1(&pred, &g).unwrap();
        let reach = x.reach();
        let n = x.labels.len();
        let any_pair = (0..n).any(|i| (i + 1..n).any(|j| reach[x.labels[i]][x.labels[j]]));
        prop_assert_eq!(std.f1, if any_pair { 1.0 } else { 0.0 });
    }
}
