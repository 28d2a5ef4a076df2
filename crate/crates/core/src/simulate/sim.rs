//! Greedy simulated annotator.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fps_indices, iou, SegmentMask};
use crate::interact::{ball_into, ClickKind, ClickSet, Session};
use crate::postprocess::refine;
use crate::scalar::{dist, Real};
use crate::seed::derive_seed;
use crate::tune::{finetune, TuneConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub cap: usize,
    /// Candidates per step, split evenly between positive and negative.
    pub pool_size: usize,
    /// Evaluate every false negative and false positive instead of a pool.
    pub exhaustive: bool,
    /// Fine-tune after each click that leaves negatives in the click set.
    pub finetune: bool,
    pub tune: TuneConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { cap: 15, pool_size: 32, exhaustive: false, finetune: true, tune: TuneConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub kind: ClickKind,
    pub index: usize,
    /// IoU after the click and post-processing.
    pub iou: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn ious(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.iou).collect()
    }

    /// IoU after `k` clicks; an early stop carries its last value forward.
    pub fn iou_at(&self, k: usize) -> f64 {
        if k == 0 || self.steps.is_empty() {
            return 0.0;
        }
        self.steps[k.min(self.steps.len()) - 1].iou
    }

    pub fn terminal(&self) -> f64 {
        self.iou_at(self.steps.len())
    }

    /// Click count-vs-IoU curve for `0..=cap` clicks.
    pub fn curve(&self, cap: usize) -> Vec<f64> {
        (0..=cap).map(|k| self.iou_at(k)).collect()
    }
}

/// Smallest click count whose IoU reaches `threshold` percent within `cap`.
pub fn noc(ious: &[f64], threshold: f64, cap: usize) -> Option<usize> {
    let t = threshold / 100.0;
    ious.iter().take(cap).position(|&v| v >= t).map(|k| k + 1)
}

/// Predicts annotation masks for one extra click without touching the session.
struct Annotator<'a, T> {
    session: &'a Session<T>,
    /// Embedding distance from each positive click to every point.
    rows: Vec<Vec<T>>,
    radii: Vec<T>,
}

impl<'a, T: Real> Annotator<'a, T> {
    fn new(session: &'a Session<T>) -> Self {
        let z = session.embeddings();
        let rows = session
            .clicks()
            .positives()
            .iter()
            .map(|&p| (0..z.rows()).map(|i| dist(z.row(i), z.row(p))).collect())
            .collect();
        Self { session, rows, radii: session.radii() }
    }

    fn predict(&self, kind: ClickKind, c: usize) -> Result<SegmentMask> {
        let s = self.session;
        let mut clicks: ClickSet = s.clicks().clone();
        clicks.add(kind, c, s.len())?;
        let raw = match kind {
            ClickKind::Positive => {
                let mut raw = s.raw_mask().clone();
                let z = s.embeddings();
                let r = clicks
                    .negatives()
                    .iter()
                    .map(|&n| dist(z.row(c), z.row(n)))
                    .fold(T::lit(clicks.alpha()), |a, b| a.min(b));
                ball_into(z, c, r, &mut raw);
                raw.set(c, true);
                raw
            }
            ClickKind::Negative => {
                let mut raw = SegmentMask::empty(s.len());
                for (t, row) in self.rows.iter().enumerate() {
                    let r = self.radii[t].min(row[c]);
                    if r > T::zero() {
                        for (i, d) in row.iter().enumerate() {
                            if *d < r {
                                raw.set(i, true);
                            }
                        }
                    }
                }
                for &p in clicks.positives() {
                    raw.set(p, true);
                }
                for &n in clicks.negatives() {
                    raw.set(n, false);
                }
                raw
            }
        };
        Ok(refine(s.index(), &raw, &clicks, s.postprocess()))
    }
}

fn candidates<T: Real>(session: &Session<T>, from: &[usize], count: usize, seed: u64) -> Vec<usize> {
    let from: Vec<usize> = from.iter().copied().filter(|&i| !session.clicks().contains(i)).collect();
    if from.len() <= count {
        return from;
    }
    let pts: Vec<[T; 3]> = from.iter().map(|&i| *session.cloud().position(i)).collect();
    let mut picked: Vec<usize> = fps_indices(&pts, count, seed).into_iter().map(|k| from[k]).collect();
    picked.sort_unstable();
    picked
}

/// Simulates one part on a click-free session, greedily committing the
/// candidate click with the largest strict IoU gain (ties: positive first,
/// then lowest index) until no candidate improves or `cap` clicks are placed.
pub fn simulate_part<T: Real>(session: &mut Session<T>, gt: &SegmentMask, cfg: &SimConfig, seed: u64) -> Result<Trajectory> {
    if gt.len() != session.len() {
        return Err(Error::LengthMismatch { left: gt.len(), right: session.len() });
    }
    if gt.none() {
        return Err(Error::InvalidArgument("ground-truth part is empty".into()));
    }
    if !session.clicks().is_empty() {
        return Err(Error::InvalidArgument("simulation needs a session without clicks".into()));
    }
    let mut traj = Trajectory::default();
    let mut current: f64 = iou(session.mask(), gt)?;
    for step in 0..cfg.cap {
        let t0 = Instant::now();
        let mask = session.mask();
        let (fn_set, fp_set): (Vec<usize>, Vec<usize>) = {
            let mut f_n = Vec::new();
            let mut f_p = Vec::new();
            for i in 0..gt.len() {
                match (gt.get(i), mask.get(i)) {
                    (true, false) => f_n.push(i),
                    (false, true) => f_p.push(i),
                    _ => {}
                }
            }
            (f_n, f_p)
        };
        let (pos, neg) = if cfg.exhaustive {
            (candidates(session, &fn_set, usize::MAX, 0), candidates(session, &fp_set, usize::MAX, 0))
        } else {
            let half = cfg.pool_size / 2;
            let s = derive_seed(seed, step as u64);
            (candidates(session, &fn_set, half, s), candidates(session, &fp_set, cfg.pool_size - half, derive_seed(s, 1)))
        };
        let mut best: Option<(f64, ClickKind, usize)> = None;
        {
            let ann = Annotator::new(session);
            let tagged = pos.iter().map(|&i| (ClickKind::Positive, i)).chain(neg.iter().map(|&i| (ClickKind::Negative, i)));
            for (kind, c) in tagged {
                let v: f64 = iou(&ann.predict(kind, c)?, gt)?;
                if v > current && best.is_none_or(|(b, _, _)| v > b) {
                    best = Some((v, kind, c));
                }
            }
        }
        let Some((_, kind, index)) = best else { break };
        session.add_click(kind, index)?;
        current = iou(session.mask(), gt)?;
        if cfg.finetune && !session.clicks().negatives().is_empty() {
            let out = finetune(session, &cfg.tune)?;
            if out.accepted > 0 {
                let tuned: f64 = iou(session.mask(), gt)?;
                if tuned < current {
                    session.undo()?;
                } else {
                    current = tuned;
                }
            }
        }
        traj.steps.push(Step { kind, index, iou: current, seconds: t0.elapsed().as_secs_f64() });
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbeddingMatrix;
    use crate::geometry::PointCloud;
    use crate::postprocess::PostprocessConfig;

    #[test]
    fn noc_examples() {
        assert_eq!(noc(&[0.5, 0.82], 80.0, 15), Some(2));
        assert_eq!(noc(&[0.9], 80.0, 15), Some(1));
        assert_eq!(noc(&[0.5; 15], 80.0, 15), None);
        assert_eq!(noc(&[0.5, 0.9], 80.0, 1), None);
    }

    fn two_blobs() -> (Session<f64>, SegmentMask) {
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        for b in 0..3 {
            for i in 0..40 {
                let a = i as f64 * 0.3;
                pts.push([b as f64 * 3.0 + a.cos() * 0.3, a.sin() * 0.3, (i % 5) as f64 * 0.05]);
                labels.push(b);
            }
        }
        let n = pts.len();
        let cloud = PointCloud::new(pts, vec![[0.0, 0.0, 1.0]; n]).unwrap();
        let z = EmbeddingMatrix::one_hot(&labels, 3);
        let gt = SegmentMask::from_flags(labels.iter().map(|&l| l != 1).collect());
        (Session::from_cloud(cloud, z, 0.35, PostprocessConfig::default()).unwrap(), gt)
    }

    #[test]
    fn oracle_part_takes_one_click_per_segment() {
        let (mut s, gt) = two_blobs();
        let t = simulate_part(&mut s, &gt, &SimConfig::default(), 1).unwrap();
        assert_eq!(t.ious(), vec![0.5, 1.0]);
        assert!(t.steps.iter().all(|s| s.kind == ClickKind::Positive));
        assert_eq!(t.curve(3), vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn predictions_match_session() {
        let (mut s, gt) = two_blobs();
        s.add_click(ClickKind::Positive, 3).unwrap();
        s.add_click(ClickKind::Positive, 45).unwrap();
        let ann = Annotator::new(&s);
        for (kind, c) in [(ClickKind::Negative, 50), (ClickKind::Positive, 90), (ClickKind::Negative, 7)] {
            let predicted = ann.predict(kind, c).unwrap();
            let mut t = s.clone();
            t.add_click(kind, c).unwrap();
            assert_eq!(&predicted, t.mask());
        }
        let _ = gt;
    }
}
