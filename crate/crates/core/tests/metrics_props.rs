use fsband::eval::{accuracy_at, auprc, auroc, best_threshold_accuracy, bisection_probe, Orientation, ScoredSet};
use proptest::prelude::*;

fn scored_set() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
    (2usize..120).prop_flat_map(|n| {
        (
            prop::collection::vec((0u32..25).prop_map(|v| v as f64 / 5.0 - 2.0), n),
            prop::collection::vec(0u8..2, n),
        )
            .prop_map(|(s, mut y)| {
                y[0] = 0;
                y[1] = 1;
                (s, y)
            })
    })
}

proptest! {
    #[test]
    fn auroc_ignores_monotone_transforms((s, y) in scored_set()) {
        let a = auroc(&ScoredSet::new(s.clone(), y.clone()).unwrap()).unwrap();
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() + 1.0).collect();
        let b = auroc(&ScoredSet::new(t, y).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn flipped_labels_complement_auroc(n in 2usize..80, seed in any::<u64>()) {
        // distinct scores, so no cross-class ties
        let s: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000003) as f64 + i as f64 * 1e-3).collect();
        let mut y: Vec<u8> = (0..n).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
        y[0] = 0;
        y[1] = 1;
        let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
        let a = auroc(&ScoredSet::new(s.clone(), y).unwrap()).unwrap();
        let b = auroc(&ScoredSet::new(s, flipped).unwrap()).unwrap();
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_are_permutation_invariant((s, y) in scored_set(), rot in 0usize..200) {
        let set = ScoredSet::new(s.clone(), y.clone()).unwrap();
        let k = rot % s.len();
        let mut s2 = s.clone();
        let mut y2 = y.clone();
        s2.rotate_left(k);
        y2.rotate_left(k);
        s2.reverse();
        y2.reverse();
        let set2 = ScoredSet::new(s2, y2).unwrap();
        prop_assert!((auroc(&set).unwrap() - auroc(&set2).unwrap()).abs() < 1e-12);
        prop_assert!((auprc(&set).unwrap() - auprc(&set2).unwrap()).abs() < 1e-12);
        prop_assert_eq!(best_threshold_accuracy(&set).accuracy, best_threshold_accuracy(&set2).accuracy);
    }

    #[test]
    fn metrics_stay_in_unit_interval((s, y) in scored_set()) {
        let set = ScoredSet::new(s, y).unwrap();
        for v in [auroc(&set).unwrap(), auprc(&set).unwrap(), best_threshold_accuracy(&set).accuracy] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn best_accuracy_beats_trivial_and_bisection((s, y) in scored_set()) {
        let set = ScoredSet::new(s, y.clone()).unwrap();
        let best = best_threshold_accuracy(&set);
        let pos = y.iter().filter(|&&v| v == 1).count();
        let majority = pos.max(y.len() - pos) as f64 / y.len() as f64;
        prop_assert!(best.accuracy >= majority);
        for (_, acc) in bisection_probe(&set, 30) {
            prop_assert!(best.accuracy >= acc);
        }
        prop_assert_eq!(accuracy_at(&set, best.threshold, best.orientation), best.accuracy);
    }
}

#[test]
fn random_fifty_point_sets_dominate_bisection() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
    for _ in 0..200 {
        let s: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        let y: Vec<u8> = (0..50).map(|_| rng.random_range(0..2)).collect();
        let set = ScoredSet::new(s, y).unwrap();
        let best = best_threshold_accuracy(&set).accuracy;
        assert!(bisection_probe(&set, 40).iter().all(|&(_, a)| best >= a));
    }
}

#[test]
fn lower_orientation_is_complement() {
    let set = ScoredSet::new(vec![0.1, 0.4, 0.6, 0.9], vec![1, 0, 1, 0]).unwrap();
    for t in [0.0, 0.3, 0.5, 0.7, 1.0] {
        let hi = accuracy_at(&set, t, Orientation::HigherPositive);
        let lo = accuracy_at(&set, t, Orientation::LowerPositive);
        assert!((hi + lo - 1.0).abs() < 1e-15);
    }
}
