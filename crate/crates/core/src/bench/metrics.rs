use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exchange::FusedRanking;
use crate::grid::{Raster, NUM_CLASSES};

/// Mean over ego-scenarios of the colliding fraction among each ranking's `k` best
/// trajectories. `collided[j][i]` is the rollout outcome of trajectory `i` for ranking `j`.
pub fn topk_collision_rate(
    rankings: &[FusedRanking],
    collided: &[Vec<bool>],
    k: usize,
) -> Result<f64> {
    if rankings.len() != collided.len() {
        return Err(Error::Shape(format!(
            "{} rankings but {} rollout sets",
            rankings.len(),
            collided.len()
        )));
    }
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (r, c) in rankings.iter().zip(collided) {
        total += topk_single(r, c, k)?;
    }
    Ok(total / rankings.len() as f64)
}

pub fn topk_single(ranking: &FusedRanking, collided: &[bool], k: usize) -> Result<f64> {
    let n = ranking.order.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k must be in 1..={n}, got {k}")));
    }
    if collided.len() != n {
        return Err(Error::Shape(format!(
            "ranking has {n} trajectories, rollouts {}",
            collided.len()
        )));
    }
    let hits = ranking.order[..k].iter().filter(|&&i| collided[i]).count();
    Ok(hits as f64 / k as f64)
}

/// Exact expected collision rate of a uniformly random trajectory choice.
pub fn random_baseline(collided: &[bool]) -> f64 {
    if collided.is_empty() {
        return 0.0;
    }
    collided.iter().filter(|c| **c).count() as f64 / collided.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub rank: usize,
    /// Mean fused score at this rank over the rankings whose score there is not the sentinel.
    pub mean_score: Option<f64>,
    pub collision_frequency: f64,
}

/// Per-rank mean score and collision frequency across rankings of equal length.
pub fn rank_cost_curve(
    rankings: &[FusedRanking],
    collided: &[Vec<bool>],
) -> Result<Vec<RankPoint>> {
    if rankings.len() != collided.len() {
        return Err(Error::Shape(
            "rankings and rollouts differ in length".into(),
        ));
    }
    let Some(first) = rankings.first() else {
        return Ok(Vec::new());
    };
    let n = first.order.len();
    if rankings
        .iter()
        .zip(collided)
        .any(|(r, c)| r.order.len() != n || c.len() != n)
    {
        return Err(Error::Shape("rankings differ in length".into()));
    }
    Ok((0..n)
        .map(|rank| {
            let mut score_sum = 0.0;
            let mut scored = 0usize;
            let mut hits = 0usize;
            for (r, c) in rankings.iter().zip(collided) {
                let i = r.order[rank];
                let s = r.scores[i];
                if s < crate::exchange::SENTINEL_SCORE {
                    score_sum += s;
                    scored += 1;
                }
                hits += c[i] as usize;
            }
            RankPoint {
                rank,
                mean_score: (scored > 0).then(|| score_sum / scored as f64),
                collision_frequency: hits as f64 / rankings.len() as f64,
            }
        })
        .collect())
}

fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties. `None` when either side is
/// constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentationCounts {
    pub correct: u64,
    pub total: u64,
    pub intersection: [u64; NUM_CLASSES],
    pub union: [u64; NUM_CLASSES],
}

impl SegmentationCounts {
    pub fn add(&mut self, other: &SegmentationCounts) {
        self.correct += other.correct;
        self.total += other.total;
        for c in 0..NUM_CLASSES {
            self.intersection[c] += other.intersection[c];
            self.union[c] += other.union[c];
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    pub fn iou(&self, class: usize) -> Option<f64> {
        (self.union[class] > 0).then(|| self.intersection[class] as f64 / self.union[class] as f64)
    }

    /// Mean IoU over classes present in prediction or ground truth.
    pub fn miou(&self) -> Option<f64> {
        let ious: Vec<f64> = (0..NUM_CLASSES).filter_map(|c| self.iou(c)).collect();
        (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
    }
}

/// Pixel counts of a class-label prediction against ground truth, over `mask` when given.
pub fn segmentation_metrics(
    pred: &Raster<u8>,
    truth: &Raster<u8>,
    mask: Option<&Raster<bool>>,
) -> Result<SegmentationCounts> {
    if !pred.same_shape(truth) || mask.is_some_and(|m| !m.same_shape(pred)) {
        return Err(Error::Shape(
            "prediction, truth and mask must share a shape".into(),
        ));
    }
    let mut out = SegmentationCounts::default();
    for (k, (&p, &g)) in pred.data().iter().zip(truth.data()).enumerate() {
        if mask.is_some_and(|m| !m.data()[k]) {
            continue;
        }
        let (p, g) = (p as usize, g as usize);
        if p >= NUM_CLASSES || g >= NUM_CLASSES {
            return Err(Error::Shape(format!("label out of range at cell {k}")));
        }
        out.total += 1;
        if p == g {
            out.correct += 1;
            out.intersection[p] += 1;
            out.union[p] += 1;
        } else {
            out.union[p] += 1;
            out.union[g] += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exchange::argsort;

    fn ranking(scores: Vec<f64>) -> FusedRanking {
        FusedRanking {
            order: argsort(&scores),
            scores,
            contributing_agents: vec![0],
        }
    }

    #[test]
    fn topk_examples() {
        let r = ranking((0..10).map(|i| i as f64).collect());
        let mut c = vec![false; 10];
        c[0] = true;
        assert_eq!(topk_single(&r, &c, 1).unwrap(), 1.0);
        assert!((topk_single(&r, &c, 10).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(topk_single(&r, &c, 11), Err(Error::Config(_))));
    }

    #[test]
    fn single_curve_is_sorted_scores() {
        let r = ranking(vec![3.0, 1.0, 2.0]);
        let curve = rank_cost_curve(&[r], &[vec![true, false, false]]).unwrap();
        let scores: Vec<f64> = curve.iter().map(|p| p.mean_score.unwrap()).collect();
        assert_eq!(scores, vec![1.0, 2.0, 3.0]);
        assert_eq!(curve[2].collision_frequency, 1.0);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert!(spearman(&[1.0, 2.0], &[1.0, 1.0]).is_none());
    }

    #[test]
    fn half_overlapping_squares_iou_third() {
        let mut a = Raster::filled(8, 4, 0u8);
        let mut b = Raster::filled(8, 4, 0u8);
        for y in 0..4 {
            for x in 0..4 {
                a.set(x, y, 2);
                b.set(x + 2, y, 2);
            }
        }
        let m = segmentation_metrics(&a, &b, None).unwrap();
        assert!((m.iou(2).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let perfect = segmentation_metrics(&a, &a, None).unwrap();
        assert_eq!(perfect.accuracy(), Some(1.0));
        assert_eq!(perfect.miou(), Some(1.0));
    }

    #[test]
    fn disjoint_masks_iou_zero() {
        let mut a = Raster::filled(4, 1, 0u8);
        let mut b = Raster::filled(4, 1, 0u8);
        a.set(0, 0, 2);
        b.set(3, 0, 2);
        assert_eq!(
            segmentation_metrics(&a, &b, None).unwrap().iou(2),
            Some(0.0)
        );
        assert!(segmentation_metrics(&a, &Raster::filled(3, 1, 0u8), None).is_err());
    }
}
