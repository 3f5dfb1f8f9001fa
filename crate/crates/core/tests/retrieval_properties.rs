//! Ranking invariants.

use listener_core::attributes::GoalRole;
use listener_core::retrieval::{rank_scores, retrieve_from_scores, Query};
use listener_core::scoring::ClipScore;
use proptest::prelude::*;

fn scores_from(values: &[i32]) -> Vec<ClipScore> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| ClipScore {
            clip_id: format!("c{i:03}"),
            score: v as f64 / 4.0,
            n_keyframes_used: 1,
        })
        .collect()
}

fn order(scores: Vec<ClipScore>) -> Vec<String> {
    rank_scores(scores).unwrap().into_iter().map(|r| r.clip_id).collect()
}

proptest! {
    #[test]
    fn strictly_increasing_transform_keeps_order(values in prop::collection::vec(-8i32..8, 1..60)) {
        let base = scores_from(&values);
        let transformed: Vec<ClipScore> = base
            .iter()
            .map(|s| ClipScore { score: (s.score * 0.7).exp() + 3.0, ..s.clone() })
            .collect();
        prop_assert_eq!(order(base), order(transformed));
    }

    #[test]
    fn input_order_is_irrelevant(values in prop::collection::vec(-8i32..8, 1..60), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let base = scores_from(&values);
        let mut shuffled = base.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(order(base), order(shuffled));
    }

    #[test]
    fn top_k_is_a_prefix(values in prop::collection::vec(-8i32..8, 1..60), k in 1usize..80) {
        let full = retrieve_from_scores(scores_from(&values), Query::Transcript("x".into()), GoalRole::Positive, values.len(), None).unwrap();
        let top = retrieve_from_scores(scores_from(&values), Query::Transcript("x".into()), GoalRole::Positive, k, None).unwrap();
        prop_assert_eq!(top.ranked.len(), k.min(values.len()));
        prop_assert_eq!(&full.ranked[..top.ranked.len()], &top.ranked[..]);
    }

    #[test]
    fn ranking_is_sorted_with_id_tiebreak(values in prop::collection::vec(-4i32..4, 1..60)) {
        let ranked = rank_scores(scores_from(&values)).unwrap();
        for w in ranked.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].clip_id < w[1].clip_id));
        }
    }

    #[test]
    fn ground_truth_rank_matches_position(values in prop::collection::vec(-8i32..8, 1..60), pick in any::<prop::sample::Index>()) {
        let target = format!("c{:03}", pick.index(values.len()));
        let r = retrieve_from_scores(scores_from(&values), Query::Clip(target.clone()), GoalRole::Positive, 1, Some(&target)).unwrap();
        let full = order(scores_from(&values));
        prop_assert_eq!(r.rank_of_ground_truth, full.iter().position(|id| *id == target).map(|p| p + 1));
    }
}

#[test]
fn ties_break_by_clip_id() {
    let scores = vec![
        ClipScore { clip_id: "b".into(), score: 0.5, n_keyframes_used: 1 },
        ClipScore { clip_id: "a".into(), score: 0.5, n_keyframes_used: 1 },
        ClipScore { clip_id: "c".into(), score: 0.9, n_keyframes_used: 1 },
    ];
    assert_eq!(order(scores), vec!["c", "a", "b"]);
}

#[test]
fn nan_score_is_rejected() {
    let mut scores = scores_from(&[1, 2]);
    scores[1].score = f64::NAN;
    assert!(rank_scores(scores).is_err());
}
