use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::geom::Rect;
use crate::num::Scalar;
use crate::tracker::{greedy_assign, Track};

/// True positive, false positive and false negative counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, fp, fn_ }
    }

    /// `tp / (tp + fp)`, or 1 when nothing was detected.
    pub fn precision<T: Scalar>(&self) -> T {
        ratio(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 1 when there was nothing to find.
    pub fn recall<T: Scalar>(&self) -> T {
        ratio(self.tp, self.tp + self.fn_)
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;
    fn add(self, o: Counts) -> Counts {
        Counts::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> T {
    if den == 0 {
        T::one()
    } else {
        T::lit(num as f64) / T::lit(den as f64)
    }
}

/// One-to-one matching of detected boxes to ground-truth boxes.
///
/// Pairs with IoU at or above the threshold are taken greedily by descending
/// IoU (ties: lower detection index, then lower gt index); augmenting paths
/// then repair any pair greedy left unmatched, so TP is always the maximum
/// attainable.
pub fn match_boxes<T: Scalar>(detected: &[Rect<T>], gt: &[Rect<T>], iou_threshold: T) -> Counts {
    let iou: Vec<Vec<T>> = detected
        .iter()
        .map(|d| gt.iter().map(|g| d.iou(g)).collect())
        .collect();
    let edge = |d: usize, g: usize| iou[d][g] >= iou_threshold;
    let greedy = greedy_assign(&iou, gt.len(), iou_threshold, |r| r as u64, |_, _| true);

    let mut det_to_gt: Vec<Option<usize>> = vec![None; detected.len()];
    let mut gt_to_det: Vec<Option<usize>> = vec![None; gt.len()];
    for &(d, g) in &greedy.matches {
        det_to_gt[d] = Some(g);
        gt_to_det[g] = Some(d);
    }

    fn augment(
        d: usize,
        edge: &dyn Fn(usize, usize) -> bool,
        n_gt: usize,
        seen: &mut [bool],
        det_to_gt: &mut [Option<usize>],
        gt_to_det: &mut [Option<usize>],
    ) -> bool {
        for g in 0..n_gt {
            if seen[g] || !edge(d, g) {
                continue;
            }
            seen[g] = true;
            let free = match gt_to_det[g] {
                None => true,
                Some(other) => augment(other, edge, n_gt, seen, det_to_gt, gt_to_det),
            };
            if free {
                det_to_gt[d] = Some(g);
                gt_to_det[g] = Some(d);
                return true;
            }
        }
        false
    }

    for d in greedy.unmatched_tracks {
        let mut seen = vec![false; gt.len()];
        augment(
            d,
            &edge,
            gt.len(),
            &mut seen,
            &mut det_to_gt,
            &mut gt_to_det,
        );
    }

    let tp = det_to_gt.iter().filter(|m| m.is_some()).count() as u64;
    Counts::new(tp, detected.len() as u64 - tp, gt.len() as u64 - tp)
}

/// Frame-level counts for the tracks reported on one (node, frame).
pub fn match_frame<T: Scalar>(
    detected_tracks: &[Track<T>],
    gt_boxes: &[Rect<T>],
    iou_threshold: T,
) -> Counts {
    let boxes: Vec<Rect<T>> = detected_tracks.iter().map(|t| t.last_bbox).collect();
    match_boxes(&boxes, gt_boxes, iou_threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect<f64> {
        Rect::new(x0, y0, x1, y1).unwrap()
    }

    #[test]
    fn identity_and_empty() {
        let b = r(0.1, 0.1, 0.3, 0.5);
        assert_eq!(match_boxes(&[b], &[b], 0.5), Counts::new(1, 0, 0));
        assert_eq!(match_boxes(&[b, b], &[], 0.5), Counts::new(0, 2, 0));
        assert_eq!(match_boxes(&[], &[b], 0.5), Counts::new(0, 0, 1));
    }

    #[test]
    fn greedy_shortfall_is_repaired() {
        // Three pairs tie at IoU 7/13. Greedy takes t0-g0 first, stranding t1;
        // the maximum matching is t0-g1, t1-g0.
        let u = |v: f64| v / 64.0;
        let g0 = r(u(8.0), 0.0, u(18.0), 1.0);
        let g1 = r(u(14.0), 0.0, u(24.0), 1.0);
        let t0 = r(u(11.0), 0.0, u(21.0), 1.0);
        let t1 = r(u(5.0), 0.0, u(15.0), 1.0);
        let thr = 0.5;
        assert_eq!(t0.iou(&g0), 7.0 / 13.0);
        assert_eq!(t0.iou(&g1), 7.0 / 13.0);
        assert_eq!(t1.iou(&g0), 7.0 / 13.0);
        assert!(t1.iou(&g1) < thr);
        let iou = vec![
            vec![t0.iou(&g0), t0.iou(&g1)],
            vec![t1.iou(&g0), t1.iou(&g1)],
        ];
        let greedy = greedy_assign(&iou, 2, thr, |r| r as u64, |_, _| true);
        assert_eq!(greedy.matches, vec![(0, 0)]);
        assert_eq!(match_boxes(&[t0, t1], &[g0, g1], thr), Counts::new(2, 0, 0));
    }

    #[test]
    fn diagonal_iou_matrix() {
        let a = r(0.0, 0.0, 0.2, 0.2);
        let b = r(0.6, 0.6, 0.8, 0.8);
        assert_eq!(match_boxes(&[a, b], &[a, b], 0.5), Counts::new(2, 0, 0));
        assert_eq!(match_boxes(&[b, a], &[a, b], 0.5), Counts::new(2, 0, 0));
    }

    #[test]
    fn precision_recall_conventions() {
        let c = Counts::new(0, 0, 5);
        assert_eq!(c.precision::<f64>(), 1.0);
        assert_eq!(c.recall::<f64>(), 0.0);
        let c = Counts::new(1, 0, 0) + Counts::new(1, 1, 0) + Counts::new(0, 0, 1);
        assert!((c.precision::<f64>() - 2.0 / 3.0).abs() < 1e-12);
        assert!((c.recall::<f64>() - 2.0 / 3.0).abs() < 1e-12);
    }
}
