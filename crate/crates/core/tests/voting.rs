mod common;

use boxfuse_core::voting::{clusters, topk_voting_group};
use boxfuse_core::{ensemble, hard_nms, iou, topk_voting_nms, vote, Detection, DetectionSet, VotingMode, VotingParams};
use common::{random_group, rng, separated_group};
use proptest::prelude::*;

fn score_only(k: usize, nt: f64) -> VotingParams {
    VotingParams { k, iou_threshold: nt, mode: VotingMode::ScoreOnly, ..Default::default() }
}

fn same_fields(a: &[Detection], b: &[Detection]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bbox == y.bbox && x.score == y.score && x.label == y.label)
}

fn has_pair_at(group: &[Detection], nt: f64) -> bool {
    group.iter().enumerate().any(|(i, a)| group[i + 1..].iter().any(|b| iou(&a.bbox, &b.bbox) == nt))
}

#[test]
fn k1_score_only_returns_separated_input_unchanged() {
    let mut r = rng(21);
    for case in 0..500 {
        let group = separated_group(&mut r, 30, "Car", 0.5);
        let ds = DetectionSet::from_detections(group.iter().map(|d| ("img", d.clone())));
        let out = topk_voting_nms(&ds, &score_only(1, 0.5));
        assert!(same_fields(out.get("img").unwrap_or(&[]), ds.get("img").unwrap_or(&[])), "case {case}");
    }
}

#[test]
fn duplicate_copies_fuse_back_to_the_original() {
    let mut r = rng(22);
    for m in [2, 3, 5] {
        for case in 0..100 {
            // copies of a zero-area box have IoU 0 and never share a cluster
            let group = separated_group(&mut r, 20, "Car", 0.5);
            let ds =
                DetectionSet::from_detections(group.iter().filter(|d| d.bbox.area() > 0.0).map(|d| ("img", d.clone())));
            let copies = vec![ds.clone(); m];
            let params = VotingParams { k: m, mode: VotingMode::ScoreAndLocation, ..Default::default() };
            let out = ensemble(&copies, &params).unwrap();
            let (a, b) = (out.get("img").unwrap_or(&[]), ds.get("img").unwrap_or(&[]));
            assert_eq!(a.len(), b.len(), "m {m} case {case}");
            for (x, y) in a.iter().zip(b) {
                assert!((x.score - y.score).abs() <= 1e-9);
                for (p, q) in x.bbox.coords().iter().zip(y.bbox.coords()) {
                    assert!((p - q).abs() <= 1e-9, "m {m} case {case}");
                }
            }
        }
    }
}

#[test]
fn threshold_ties_cluster_but_survive_hard_nms() {
    use boxfuse_core::BBox;
    // dyadic corners, so the overlap is exactly 0.5
    let a = Detection::new(BBox::new(0.0, 0.0, 0.75, 0.25).unwrap(), "Car", 0.9, "m").unwrap();
    let b = Detection::new(BBox::new(0.25, 0.0, 1.0, 0.25).unwrap(), "Car", 0.8, "m").unwrap();
    assert_eq!(iou(&a.bbox, &b.bbox), 0.5);
    let group = vec![a, b];
    assert_eq!(hard_nms(&group, 0.5).len(), 2);
    assert_eq!(topk_voting_group(&group, &score_only(1, 0.5)).len(), 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn clusters_partition_the_group(seed in any::<u64>(), nt in 0.05f64..=1.0) {
        let group = random_group(&mut rng(seed), 40, "Car");
        let cs = clusters(&group, nt);
        prop_assert_eq!(cs.iter().map(|c| c.len()).sum::<usize>(), group.len());
        let mut members: Vec<Detection> = cs.iter().flat_map(|c| c.members().to_vec()).collect();
        let mut input = group.clone();
        members.sort_by(common::rank_key_cmp);
        input.sort_by(common::rank_key_cmp);
        prop_assert_eq!(members, input);
        for (i, a) in cs.iter().enumerate() {
            for b in &cs[i + 1..] {
                prop_assert!(iou(&a.seed().bbox, &b.seed().bbox) < nt);
            }
        }
    }

    #[test]
    fn votes_stay_inside_the_voters(seed in any::<u64>(), k in 1usize..6, all in any::<bool>(), loc in any::<bool>()) {
        let group = random_group(&mut rng(seed), 40, "Car");
        let mode = if loc { VotingMode::ScoreAndLocation } else { VotingMode::ScoreOnly };
        let params = VotingParams { k, mode, all_member_voting: all, ..Default::default() };
        for c in clusters(&group, params.iou_threshold) {
            let voters = if all { c.len() } else { k.min(c.len()) };
            let voters = &c.members()[..voters];
            let fused = vote(&c, &params);
            let lo = voters.iter().map(|d| d.score).fold(f64::INFINITY, f64::min);
            let hi = voters.iter().map(|d| d.score).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= fused.score && fused.score <= hi);
            for (i, v) in fused.bbox.coords().iter().enumerate() {
                let lo = voters.iter().map(|d| d.bbox.coords()[i]).fold(f64::INFINITY, f64::min);
                let hi = voters.iter().map(|d| d.bbox.coords()[i]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(lo <= *v && *v <= hi);
            }
        }
    }

    #[test]
    fn k1_score_only_is_hard_nms_away_from_ties(seed in any::<u64>(), nt in 0.05f64..=1.0) {
        let group = random_group(&mut rng(seed), 40, "Car");
        prop_assume!(!has_pair_at(&group, nt));
        let fused = topk_voting_group(&group, &score_only(1, nt));
        prop_assert!(same_fields(&fused, &hard_nms(&group, nt)));
    }

    #[test]
    fn voting_ignores_input_order(seed in any::<u64>()) {
        let group = random_group(&mut rng(seed), 40, "Car");
        let mut rev = group.clone();
        rev.reverse();
        let p = VotingParams::default();
        prop_assert_eq!(topk_voting_group(&group, &p), topk_voting_group(&rev, &p));
    }
}
