//! Outlier removal and smoothing against brute-force reimplementations built
//! on an O(N^2) neighbor search.

use clickseg::geometry::{NeighborIndex, SegmentMask};
use clickseg::postprocess::{outlier_removal, refine, segment_smoothing, PostprocessConfig};
use clickseg::ClickSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_knn(points: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(j, p)| {
            let q = points[i];
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2), j)
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Connected components by repeated label propagation until nothing changes.
fn brute_outliers(points: &[[f64; 3]], mask: &[bool], positives: &[usize], k: usize) -> Vec<bool> {
    let n = points.len();
    let nbrs: Vec<Vec<usize>> = (0..n).map(|i| brute_knn(points, i, k)).collect();
    let linked = |i: usize, j: usize| nbrs[i].contains(&j) || nbrs[j].contains(&i);
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                if i != j && mask[i] && mask[j] && linked(i, j) && comp[j] < comp[i] {
                    comp[i] = comp[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (0..n).map(|i| mask[i] && positives.iter().any(|&p| mask[p] && comp[p] == comp[i])).collect()
}

fn brute_smooth(points: &[[f64; 3]], mask: &[bool], k: usize, gamma: f64, rounds: usize) -> Vec<bool> {
    let n = points.len();
    let mut cur = mask.to_vec();
    for _ in 0..rounds {
        let prev = cur.clone();
        for i in 0..n {
            if !prev[i] {
                let nb = brute_knn(points, i, k);
                let hits = nb.iter().filter(|&&j| prev[j]).count();
                if hits as f64 / nb.len() as f64 > gamma {
                    cur[i] = true;
                }
            }
        }
    }
    cur
}

struct Case {
    points: Vec<[f64; 3]>,
    mask: Vec<bool>,
    positives: Vec<usize>,
}

/// Clustered points on an integer grid (so distance ties occur) with a blobby mask.
fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(8..=512);
    let clusters: Vec<[f64; 3]> = (0..rng.random_range(1..5))
        .map(|_| [rng.random_range(0..40) as f64, rng.random_range(0..40) as f64, rng.random_range(0..40) as f64])
        .collect();
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let c = clusters[rng.random_range(0..clusters.len())];
            if rng.random_bool(0.3) {
                [c[0] + rng.random_range(-4..=4) as f64, c[1] + rng.random_range(-4..=4) as f64, c[2]]
            } else {
                [c[0] + rng.random_range(-6.0..6.0), c[1] + rng.random_range(-6.0..6.0), c[2] + rng.random_range(-6.0..6.0)]
            }
        })
        .collect();
    let center = points[rng.random_range(0..n)];
    let radius = rng.random_range(2.0..15.0);
    let noise = rng.random_range(0.0..0.2);
    let mask: Vec<bool> = points
        .iter()
        .map(|p| {
            let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
            (d < radius) ^ rng.random_bool(noise)
        })
        .collect();
    let flagged: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    let positives = if flagged.is_empty() {
        Vec::new()
    } else {
        (0..rng.random_range(1..4)).map(|_| flagged[rng.random_range(0..flagged.len())]).collect()
    };
    Case { points, mask, positives }
}

#[test]
fn outlier_removal_matches_connected_components_on_500_masks() {
    let mut nontrivial = 0;
    for seed in 0..500 {
        let c = case(seed);
        if c.positives.is_empty() {
            continue;
        }
        let k = 1 + (seed as usize % 5);
        let index = NeighborIndex::from_points(c.points.clone(), 8);
        let got = outlier_removal(&index, &SegmentMask::from_flags(c.mask.clone()), &c.positives, k);
        let want = brute_outliers(&c.points, &c.mask, &c.positives, k);
        assert_eq!(got.flags(), &want[..], "seed {seed}");
        nontrivial += (want != c.mask) as usize;
    }
    assert!(nontrivial > 50, "only {nontrivial} cases removed anything");
}

#[test]
fn smoothing_matches_round_simulation_on_500_masks() {
    let mut nontrivial = 0;
    for seed in 0..500 {
        let c = case(10_000 + seed);
        let k = [4, 8, 16, 32][seed as usize % 4];
        let gamma = [0.5, 0.7, 0.9][seed as usize % 3];
        let index = NeighborIndex::from_points(c.points.clone(), 32);
        let got = segment_smoothing(&index, &SegmentMask::from_flags(c.mask.clone()), k, gamma, 5);
        let want = brute_smooth(&c.points, &c.mask, k.min(c.points.len() - 1), gamma, 5);
        assert_eq!(got.flags(), &want[..], "seed {seed}");
        nontrivial += (want != c.mask) as usize;
    }
    assert!(nontrivial > 50, "only {nontrivial} cases changed");
}

#[test]
fn disconnected_cluster_is_removed() {
    let mut pts: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
    pts.extend((0..4).map(|i| [100.0 + i as f64, 0.0, 0.0]));
    let index = NeighborIndex::from_points(pts, 8);
    let mask = SegmentMask::from_flags((0..14).map(|i| !(6..10).contains(&i)).collect());
    let out = outlier_removal(&index, &mask, &[2], 3);
    assert_eq!(out.indices(), vec![0, 1, 2, 3, 4, 5]);
}

#[test]
fn two_point_hole_is_filled() {
    // 5 x 5 grid with the two middle points of row 2 unflagged; each has at
    // least 7 of its 8 nearest neighbors flagged (7/8 > 0.7).
    let pts: Vec<[f64; 3]> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64, 0.0]).collect();
    let index = NeighborIndex::from_points(pts, 8);
    let mask = SegmentMask::from_flags((0..25).map(|i| i != 11 && i != 12).collect());
    let out = segment_smoothing(&index, &mask, 8, 0.7, 5);
    assert_eq!(out, SegmentMask::full(25));
}

#[test]
fn refine_never_flags_negatives() {
    let pts: Vec<[f64; 3]> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64, 0.0]).collect();
    let index = NeighborIndex::from_points(pts, 32);
    let mut clicks = ClickSet::default();
    clicks.add(clickseg::ClickKind::Positive, 0, 25).unwrap();
    clicks.add(clickseg::ClickKind::Negative, 12, 25).unwrap();
    let raw = SegmentMask::from_flags((0..25).map(|i| i != 12).collect());
    let out = refine(&index, &raw, &clicks, &PostprocessConfig { n_smooth: 8, ..PostprocessConfig::default() });
    assert!(!out.get(12));
    assert_eq!(out.count(), 24);
}
