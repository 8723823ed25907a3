//! Singer-disjoint fold planning with greedy class balancing.

use serde::{Deserialize, Serialize};

use crate::annotation::{Corpus, TechniqueClass, VOCABULARY};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// One fold: disjoint singer sets for test, validation, and training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub index: usize,
    pub test: Vec<String>,
    pub validation: Vec<String>,
    pub train: Vec<String>,
}

/// A full k-fold plan over singers, plus the per-group per-class balance
/// report the greedy assignment produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub class_order: Vec<TechniqueClass>,
    /// Singer groups; group `i` is the test set of fold `i`.
    pub groups: Vec<Vec<String>>,
    /// `[group x class]` event counts.
    pub balance: Vec<Vec<usize>>,
    pub folds: Vec<FoldSpec>,
}

/// Partition singers into `k` groups, then derive the folds: group `i`
/// tests fold `i`, group `i+1 (mod k)` validates it, the rest train.
///
/// Grouping is greedy: singers are sorted by total event count descending
/// (ties broken by a seeded shuffle), and each is assigned to the group
/// that minimizes the per-class max-min spread of group totals; spread ties
/// go to the group with the smallest event total (so no group is starved),
/// then to the lowest group index.
pub fn make_folds(corpus: &Corpus, k: usize, seed: u64) -> Result<FoldPlan> {
    let singers = corpus.singers();
    if singers.len() < k {
        return Err(Error::Invalid(format!(
            "{} singers cannot fill {k} folds",
            singers.len()
        )));
    }
    if k < 2 {
        return Err(Error::Invalid("need at least 2 folds".into()));
    }
    let classes: Vec<TechniqueClass> = VOCABULARY.to_vec();
    let n_classes = classes.len();
    let class_idx = |c: TechniqueClass| classes.iter().position(|&k| k == c);

    // Per-singer per-class counts.
    let mut counts = vec![vec![0usize; n_classes]; singers.len()];
    for track in &corpus.tracks {
        let si = singers.iter().position(|s| *s == track.singer_id).unwrap();
        for ev in &track.events {
            if let Some(ci) = class_idx(ev.class) {
                counts[si][ci] += 1;
            }
        }
    }

    let mut rng = SplitMix64::new(seed);
    let mut tiebreak: Vec<usize> = (0..singers.len()).collect();
    rng.shuffle(&mut tiebreak);
    let mut order: Vec<usize> = (0..singers.len()).collect();
    order.sort_by_key(|&s| {
        let total: usize = counts[s].iter().sum();
        (std::cmp::Reverse(total), tiebreak[s])
    });

    let mut group_counts = vec![vec![0usize; n_classes]; k];
    let mut groups: Vec<Vec<String>> = vec![Vec::new(); k];
    let spread = |gc: &[Vec<usize>]| -> usize {
        (0..n_classes)
            .map(|c| {
                let max = gc.iter().map(|g| g[c]).max().unwrap();
                let min = gc.iter().map(|g| g[c]).min().unwrap();
                max - min
            })
            .sum()
    };
    for &s in &order {
        let mut best_group = 0;
        let mut best_key = (usize::MAX, usize::MAX);
        for g in 0..k {
            for c in 0..n_classes {
                group_counts[g][c] += counts[s][c];
            }
            let sp = spread(&group_counts);
            for c in 0..n_classes {
                group_counts[g][c] -= counts[s][c];
            }
            let total: usize = group_counts[g].iter().sum();
            if (sp, total) < best_key {
                best_key = (sp, total);
                best_group = g;
            }
        }
        for c in 0..n_classes {
            group_counts[best_group][c] += counts[s][c];
        }
        groups[best_group].push(singers[s].clone());
    }

    let folds = (0..k)
        .map(|i| {
            let val = (i + 1) % k;
            let train: Vec<String> = (0..k)
                .filter(|&g| g != i && g != val)
                .flat_map(|g| groups[g].iter().cloned())
                .collect();
            FoldSpec {
                index: i,
                test: groups[i].clone(),
                validation: groups[val].clone(),
                train,
            }
        })
        .collect();

    Ok(FoldPlan {
        k,
        seed,
        class_order: classes,
        groups,
        balance: group_counts,
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::{PitchContour, TechniqueEvent, TrackAnnotation};
    use std::collections::HashSet;

    fn corpus_of(singer_events: &[(&str, usize)]) -> Corpus {
        let tracks = singer_events
            .iter()
            .enumerate()
            .map(|(i, (singer, n))| TrackAnnotation {
                track_id: format!("t{i}"),
                singer_id: singer.to_string(),
                duration_s: 60.0,
                year: None,
                events: (0..*n)
                    .map(|k| {
                        TechniqueEvent::new(
                            TechniqueClass::Vibrato,
                            k as f64 * 0.5,
                            k as f64 * 0.5 + 0.3,
                        )
                    })
                    .collect(),
                pitch: PitchContour::default(),
                pitch_estimated: None,
                audio_path: None,
            })
            .collect();
        Corpus::new(tracks).unwrap()
    }

    fn check_plan_invariants(plan: &FoldPlan, singers: &[String]) {
        // Groups partition the singers.
        let mut seen = HashSet::new();
        for g in &plan.groups {
            for s in g {
                assert!(seen.insert(s.clone()), "singer {s} in two groups");
            }
        }
        assert_eq!(seen.len(), singers.len());
        // Per fold: disjoint test/validation/train covering everyone.
        for fold in &plan.folds {
            let test: HashSet<_> = fold.test.iter().collect();
            let val: HashSet<_> = fold.validation.iter().collect();
            let train: HashSet<_> = fold.train.iter().collect();
            assert!(test.is_disjoint(&val));
            assert!(test.is_disjoint(&train));
            assert!(val.is_disjoint(&train));
            assert_eq!(test.len() + val.len() + train.len(), singers.len());
        }
        // Every singer is tested exactly once across folds.
        for s in singers {
            let test_count = plan
                .folds
                .iter()
                .filter(|f| f.test.contains(s))
                .count();
            assert_eq!(test_count, 1, "singer {s}");
        }
    }

    #[test]
    fn equal_counts_balance_sizes() {
        let singers: Vec<(String, usize)> =
            (0..42).map(|i| (format!("s{i:02}"), 10)).collect();
        let refs: Vec<(&str, usize)> = singers.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        let corpus = corpus_of(&refs);
        let plan = make_folds(&corpus, 7, 1).unwrap();
        for g in &plan.groups {
            assert_eq!(g.len(), 6);
        }
        check_plan_invariants(&plan, &corpus.singers());
    }

    #[test]
    fn seven_singers_seven_folds() {
        let refs: Vec<(String, usize)> = (0..7).map(|i| (format!("s{i}"), i + 1)).collect();
        let refs2: Vec<(&str, usize)> = refs.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        let corpus = corpus_of(&refs2);
        let plan = make_folds(&corpus, 7, 3).unwrap();
        for g in &plan.groups {
            assert_eq!(g.len(), 1);
        }
        for fold in &plan.folds {
            assert_eq!(fold.train.len(), 5);
        }
        check_plan_invariants(&plan, &corpus.singers());
    }

    #[test]
    fn deterministic_given_seed() {
        let refs: Vec<(String, usize)> = (0..20)
            .map(|i| (format!("s{i}"), (i * 7) % 13))
            .collect();
        let refs2: Vec<(&str, usize)> = refs.iter().map(|(s, n)| (s.as_str(), *n)).collect();
        let corpus = corpus_of(&refs2);
        let a = make_folds(&corpus, 5, 42).unwrap();
        let b = make_folds(&corpus, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_singers_rejected() {
        let corpus = corpus_of(&[("a", 1), ("b", 2)]);
        assert!(make_folds(&corpus, 7, 0).is_err());
    }

    #[test]
    fn random_corpora_always_satisfy_invariants() {
        let mut rng = SplitMix64::new(99);
        for round in 0..50 {
            let n = 7 + rng.below(20);
            let singers: Vec<(String, usize)> = (0..n)
                .map(|i| (format!("s{i}"), rng.below(40)))
                .collect();
            let refs: Vec<(&str, usize)> =
                singers.iter().map(|(s, c)| (s.as_str(), *c)).collect();
            let corpus = corpus_of(&refs);
            let plan = make_folds(&corpus, 7, round).unwrap();
            check_plan_invariants(&plan, &corpus.singers());
        }
    }
}
