use proptest::prelude::*;
use vistacast_core::eval::{accuracy, complement, group_kfold, roc_auc};

/// Pairwise counting: positives ranked above negatives, ties worth half.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi && !yj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..40).prop_flat_map(|n| {
        // small integer scores force plenty of ties
        (prop::collection::vec((0u8..6).prop_map(f64::from), n), prop::collection::vec(any::<bool>(), n))
    })
}

proptest! {
    #[test]
    fn auc_matches_pair_counting((scores, labels) in scored()) {
        let auc = roc_auc(&scores, &labels).unwrap();
        if labels.iter().all(|&y| y) || labels.iter().all(|&y| !y) {
            prop_assert!(auc.degenerate);
            prop_assert_eq!(auc.value, 0.5);
        } else {
            prop_assert!(!auc.degenerate);
            prop_assert!((auc.value - brute_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_invariant_under_increasing_transform((scores, labels) in scored(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let t: Vec<f64> = scores.iter().map(|s| (a * s + b).exp()).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&t, &labels).unwrap());
    }

    #[test]
    fn accuracy_matches_counting(probs in prop::collection::vec(0.0f64..1.0, 1..30), seed in any::<u64>()) {
        let labels: Vec<bool> = probs.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
        let hits = probs.iter().zip(&labels).filter(|(p, y)| (**p >= 0.5) == **y).count();
        prop_assert_eq!(accuracy(&probs, &labels, 0.5).unwrap(), hits as f64 / probs.len() as f64);
    }

    #[test]
    fn folds_partition_rows_by_group(groups in prop::collection::vec(0u8..12, 5..80), k in 2usize..6, seed in any::<u64>()) {
        let distinct: std::collections::BTreeSet<_> = groups.iter().collect();
        let folds = match group_kfold(&groups, k, seed) {
            Ok(f) => f,
            Err(_) => { prop_assert!(distinct.len() < k); return Ok(()); }
        };
        let mut seen = vec![0; groups.len()];
        for (fi, f) in folds.iter().enumerate() {
            prop_assert!(!f.is_empty());
            for &r in f {
                seen[r] += 1;
                for (other, g) in folds.iter().enumerate() {
                    if other != fi {
                        prop_assert!(g.iter().all(|&x| groups[x] != groups[r]));
                    }
                }
            }
            let train = complement(groups.len(), f);
            prop_assert_eq!(train.len() + f.len(), groups.len());
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        prop_assert_eq!(&folds, &group_kfold(&groups, k, seed).unwrap());
    }
}

#[test]
fn worked_examples() {
    assert_eq!(roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap().value, 0.75);
    assert_eq!(accuracy(&[0.9, 0.1], &[true, false], 0.5).unwrap(), 1.0);
    assert_eq!(accuracy(&[0.9, 0.9], &[true, false], 0.5).unwrap(), 0.5);
    assert_eq!(roc_auc(&[0.3; 4], &[true, false, true, false]).unwrap().value, 0.5);
    let groups: Vec<u32> = (0..10).flat_map(|g| [g, g]).collect();
    let folds = group_kfold(&groups, 5, 1).unwrap();
    assert!(folds.iter().all(|f| f.len() == 4));
}
