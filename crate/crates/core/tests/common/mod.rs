//! Reference implementations and fixture generators shared by the
//! integration tests. Written separately from the library, favouring
//! obviousness over speed.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::BTreeMap;

use boxfuse_core::{iou, BBox, Detection, DetectionSet, GroundTruth, GroundTruthSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Score descending, then coordinates, then source, then label.
pub fn ranks_before(a: &Detection, b: &Detection) -> bool {
    rank_key_cmp(a, b) == Ordering::Less
}

pub fn rank_key_cmp(a: &Detection, b: &Detection) -> Ordering {
    let ka = (a.bbox.xmin(), a.bbox.ymin(), a.bbox.xmax(), a.bbox.ymax());
    let kb = (b.bbox.xmin(), b.bbox.ymin(), b.bbox.xmax(), b.bbox.ymax());
    b.score
        .partial_cmp(&a.score)
        .unwrap()
        .then(ka.partial_cmp(&kb).unwrap())
        .then(a.source.cmp(&b.source))
        .then(a.label.cmp(&b.label))
}

pub fn sorted(mut dets: Vec<Detection>) -> Vec<Detection> {
    dets.sort_by(rank_key_cmp);
    dets
}

/// Greedy NMS by repeated arg-max over the survivors.
pub fn brute_nms(dets: &[Detection], nt: f64) -> Vec<Detection> {
    let mut remaining = dets.to_vec();
    let mut keep = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for i in 1..remaining.len() {
            if ranks_before(&remaining[i], &remaining[best]) {
                best = i;
            }
        }
        let b = remaining.swap_remove(best);
        remaining.retain(|d| iou(&b.bbox, &d.bbox) <= nt);
        keep.push(b);
    }
    sorted(keep)
}

/// The defining property of greedy NMS output: no two survivors overlap
/// above `nt`, and every suppressed box overlaps a higher-ranked survivor.
pub fn is_greedy_nms_result(input: &[Detection], survivors: &[Detection], nt: f64) -> bool {
    for (i, a) in survivors.iter().enumerate() {
        for b in &survivors[i + 1..] {
            if iou(&a.bbox, &b.bbox) > nt {
                return false;
            }
        }
    }
    input
        .iter()
        .all(|d| survivors.contains(d) || survivors.iter().any(|s| ranks_before(s, d) && iou(&s.bbox, &d.bbox) > nt))
}

/// AP from TP flags by evaluating the interpolated precision at each of the
/// `gt_count` recall levels.
pub fn brute_ap(flags: &[bool], gt_count: usize) -> Option<f64> {
    if gt_count == 0 {
        return None;
    }
    let mut points = Vec::new();
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        points.push((tp, i + 1));
    }
    let mut total = 0.0;
    for level in 1..=gt_count {
        let best =
            points.iter().filter(|(tp, _)| *tp >= level).map(|(tp, n)| *tp as f64 / *n as f64).fold(0.0, f64::max);
        total += best;
    }
    Some(total / gt_count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleClass {
    pub ap: f64,
    pub tp: usize,
    pub fp: usize,
}

/// Per-class AP and counts by direct greedy matching.
pub fn brute_eval(ds: &DetectionSet, gt: &GroundTruthSet, thr: f64) -> (BTreeMap<String, OracleClass>, f64) {
    let mut labels: Vec<String> = gt.iter().flat_map(|(_, b)| b.iter().map(|g| g.label.clone())).collect();
    labels.sort();
    labels.dedup();
    let mut out = BTreeMap::new();
    for label in &labels {
        let mut dets: Vec<(String, Detection)> = ds
            .iter()
            .flat_map(|(img, d)| d.iter().filter(|d| &d.label == label).map(move |d| (img.to_string(), d.clone())))
            .collect();
        dets.sort_by(|(ia, a), (ib, b)| {
            b.score.partial_cmp(&a.score).unwrap().then(ia.cmp(ib)).then(rank_key_cmp(a, b))
        });
        let mut taken: BTreeMap<String, Vec<bool>> = BTreeMap::new();
        let mut flags = Vec::new();
        for (img, d) in &dets {
            let boxes: Vec<BBox> =
                gt.get(img).unwrap_or(&[]).iter().filter(|g| &g.label == label).map(|g| g.bbox).collect();
            let used = taken.entry(img.clone()).or_insert_with(|| vec![false; boxes.len()]);
            let mut best: Option<(usize, f64)> = None;
            for (j, g) in boxes.iter().enumerate() {
                let o = iou(&d.bbox, g);
                if !used[j] && o >= thr && best.is_none_or(|(_, b)| o > b) {
                    best = Some((j, o));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
            }
            flags.push(best.is_some());
        }
        let gt_count = gt.iter().map(|(_, b)| b.iter().filter(|g| &g.label == label).count()).sum();
        let tp = flags.iter().filter(|f| **f).count();
        let ap = brute_ap(&flags, gt_count).unwrap();
        out.insert(label.clone(), OracleClass { ap, tp, fp: flags.len() - tp });
    }
    let map = if out.is_empty() { 0.0 } else { out.values().map(|c| c.ap).sum::<f64>() / out.len() as f64 };
    (out, map)
}

/// A box either on a coarse grid, so that exact IoU and coordinate ties
/// occur, or with continuous corners.
pub fn random_box(rng: &mut ChaCha8Rng) -> BBox {
    if rng.random_bool(0.5) {
        let x0 = rng.random_range(0..16) as f64 * 0.05;
        let y0 = rng.random_range(0..16) as f64 * 0.05;
        let w = rng.random_range(1..6) as f64 * 0.05;
        let h = rng.random_range(1..6) as f64 * 0.05;
        BBox::new(x0, y0, x0 + w, y0 + h).unwrap()
    } else {
        let x0 = rng.random_range(0.0..0.8);
        let y0 = rng.random_range(0.0..0.8);
        BBox::new(x0, y0, x0 + rng.random_range(0.01..0.3), y0 + rng.random_range(0.01..0.3)).unwrap()
    }
}

pub fn jittered(rng: &mut ChaCha8Rng, b: &BBox, amount: f64) -> BBox {
    let mut d = || rng.random_range(-amount..=amount);
    BBox::from_corners(b.xmin() + d(), b.ymin() + d(), b.xmax() + d(), b.ymax() + d()).unwrap()
}

/// Score on a coarse grid half the time, to exercise score ties.
pub fn random_score(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.5) {
        rng.random_range(1..=10) as f64 / 10.0
    } else {
        rng.random_range(0.0..=1.0)
    }
}

/// One `(image, label)` group of up to `max_n` detections gathered around a
/// few anchors so that many of them overlap.
pub fn random_group(rng: &mut ChaCha8Rng, max_n: usize, label: &str) -> Vec<Detection> {
    let n = rng.random_range(0..=max_n);
    let anchors: Vec<BBox> = (0..rng.random_range(1..=4)).map(|_| random_box(rng)).collect();
    (0..n)
        .map(|_| {
            let bbox = if rng.random_bool(0.8) {
                let a = anchors[rng.random_range(0..anchors.len())];
                if rng.random_bool(0.3) {
                    a
                } else {
                    jittered(rng, &a, 0.04)
                }
            } else {
                random_box(rng)
            };
            let source = ["a", "b", "c"][rng.random_range(0..3)];
            Detection::new(bbox, label, random_score(rng), source).unwrap()
        })
        .collect()
}

/// A small evaluation instance: a few images and labels, detections near the
/// GT boxes plus strays, with frequent score ties.
pub fn random_eval_instance(rng: &mut ChaCha8Rng) -> (DetectionSet, GroundTruthSet) {
    let labels = ["cat", "dog", "owl"];
    let n_images = rng.random_range(1..=3);
    let mut gt = Vec::new();
    let mut dets = Vec::new();
    for i in 0..n_images {
        let image = format!("im{i}");
        for _ in 0..rng.random_range(0..=4) {
            let label = labels[rng.random_range(0..labels.len())];
            let b = random_box(rng);
            gt.push((image.clone(), GroundTruth::new(b, label).unwrap()));
            for _ in 0..rng.random_range(0..=2) {
                let l = if rng.random_bool(0.85) { label } else { labels[rng.random_range(0..labels.len())] };
                let bbox = if rng.random_bool(0.3) { b } else { jittered(rng, &b, 0.05) };
                dets.push((image.clone(), Detection::new(bbox, l, random_score(rng), "m").unwrap()));
            }
        }
        for _ in 0..rng.random_range(0..=2) {
            let l = labels[rng.random_range(0..labels.len())];
            dets.push((image.clone(), Detection::new(random_box(rng), l, random_score(rng), "m").unwrap()));
        }
    }
    (DetectionSet::from_detections(dets), GroundTruthSet::from_boxes(gt))
}

/// Hard-NMS'd single-source group whose pairs all overlap strictly below
/// `nt`. Pairs at exactly `nt` survive hard NMS but would share a voting
/// cluster, so they are suppressed here as well.
pub fn separated_group(rng: &mut ChaCha8Rng, max_n: usize, label: &str, nt: f64) -> Vec<Detection> {
    let mut remaining: Vec<Detection> =
        random_group(rng, max_n, label).into_iter().map(|d| Detection { source: "solo".into(), ..d }).collect();
    remaining.sort_by(rank_key_cmp);
    let mut keep: Vec<Detection> = Vec::new();
    for d in remaining {
        if keep.iter().all(|k| iou(&k.bbox, &d.bbox) < nt) {
            keep.push(d);
        }
    }
    keep
}
