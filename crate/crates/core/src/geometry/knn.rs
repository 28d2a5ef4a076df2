use crate::error::{Error, Result};
use crate::scalar::Real;

use super::cloud::PointCloud;

const LEAF_SIZE: usize = 8;

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

/// Exact k-nearest-neighbor index over cloud positions.
///
/// Neighbors are ordered by ascending squared distance, ties by ascending point
/// index, and never include the query point itself. The `k_cap` nearest
/// neighbors of every point are precomputed at build time.
#[derive(Clone, Debug)]
pub struct NeighborIndex<T> {
    points: Vec<[T; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    width: usize,
    table: Vec<usize>,
}

#[inline]
fn sq<T: Real>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Bounded candidate list sorted by (distance, index).
struct Best<T> {
    k: usize,
    items: Vec<(T, usize)>,
}

impl<T: Real> Best<T> {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    #[inline]
    fn full(&self) -> bool {
        self.items.len() == self.k
    }

    #[inline]
    fn worst(&self) -> T {
        self.items.last().map(|x| x.0).unwrap_or(T::infinity())
    }

    #[inline]
    fn offer(&mut self, d: T, idx: usize) {
        if self.full() {
            let (wd, wi) = self.items[self.k - 1];
            if d > wd || (d == wd && idx > wi) {
                return;
            }
        }
        let pos = self.items.partition_point(|&(od, oi)| od < d || (od == d && oi < idx));
        self.items.insert(pos, (d, idx));
        if self.items.len() > self.k {
            self.items.pop();
        }
    }
}

impl<T: Real> NeighborIndex<T> {
    pub fn build(cloud: &PointCloud<T>, k_cap: usize) -> Self {
        Self::from_points(cloud.positions().to_vec(), k_cap)
    }

    pub fn from_points(points: Vec<[T; 3]>, k_cap: usize) -> Self {
        let n = points.len();
        let mut index = Self {
            order: (0..n).collect(),
            points,
            nodes: Vec::new(),
            width: k_cap.min(n.saturating_sub(1)),
            table: Vec::new(),
        };
        if n > 0 {
            index.build_node(0, n);
        }
        let width = index.width;
        let mut table = Vec::with_capacity(n * width);
        for i in 0..n {
            table.extend(index.search(&index.points[i], width, Some(i)));
        }
        index.table = table;
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for &i in &self.order[start..end] {
            for a in 0..3 {
                lo[a] = lo[a].min(self.points[i][a]);
                hi[a] = hi[a].max(self.points[i][a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&x, &y| {
            pts[x][axis].partial_cmp(&pts[y][axis]).unwrap_or(std::cmp::Ordering::Equal)
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    fn search(&self, q: &[T; 3], k: usize, exclude: Option<usize>) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut best = Best::new(k);
        self.visit(0, q, exclude, &mut best);
        best.items.into_iter().map(|(_, i)| i).collect()
    }

    fn visit(&self, node: usize, q: &[T; 3], exclude: Option<usize>, best: &mut Best<T>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) != exclude {
                        best.offer(sq(q, &self.points[i]), i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff < T::zero() { (*left, *right) } else { (*right, *left) };
                self.visit(near, q, exclude, best);
                // equal distances must still be visited for the index tie-break
                if !best.full() || diff * diff <= best.worst() {
                    self.visit(far, q, exclude, best);
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of precomputed neighbors per point.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[[T; 3]] {
        &self.points
    }

    /// Precomputed neighbors of `i`, truncated to `k`. Requires `k <= width()`.
    #[inline]
    pub fn neighbors(&self, i: usize, k: usize) -> &[usize] {
        debug_assert!(k <= self.width);
        &self.table[i * self.width..i * self.width + k]
    }

    /// The `min(k, N-1)` nearest neighbors of point `i`.
    pub fn knn_query(&self, i: usize, k: usize) -> Result<Vec<usize>> {
        let n = self.points.len();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        let k = k.min(n - 1);
        if k <= self.width {
            return Ok(self.neighbors(i, k).to_vec());
        }
        Ok(self.search(&self.points[i], k, Some(i)))
    }

    /// Nearest points to an arbitrary location.
    pub fn nearest_to(&self, q: &[T; 3], k: usize) -> Vec<usize> {
        self.search(q, k.min(self.points.len()), None)
    }

    /// All points other than `i` within `radius` of point `i`, in ascending index order.
    pub fn within_radius(&self, i: usize, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            return out;
        }
        let r2 = radius * radius;
        self.collect_radius(0, &self.points[i], r2, i, &mut out);
        out.sort_unstable();
        out
    }

    fn collect_radius(&self, node: usize, q: &[T; 3], r2: T, exclude: usize, out: &mut Vec<usize>) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if i != exclude && sq(q, &self.points[i]) <= r2 {
                        out.push(i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff < T::zero() { (*left, *right) } else { (*right, *left) };
                self.collect_radius(near, q, r2, exclude, out);
                if diff * diff <= r2 {
                    self.collect_radius(far, q, r2, exclude, out);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[[f64; 3]], i: usize, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = (0..points.len())
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = (0..3).map(|a| (points[i][a] - points[j][a]).powi(2)).sum();
                (d, j)
            })
            .collect();
        // stable sort on distance keeps ascending index among ties
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    #[test]
    fn collinear_middle_query() {
        let idx = NeighborIndex::from_points(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]], 4);
        assert_eq!(idx.knn_query(1, 2).unwrap(), vec![0, 2]);
    }

    #[test]
    fn saturates_at_n_minus_one() {
        let idx = NeighborIndex::from_points(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]], 1);
        assert_eq!(idx.knn_query(0, 10).unwrap(), vec![1, 2]);
        assert!(idx.knn_query(3, 1).is_err());
    }

    #[test]
    fn ties_prefer_lower_index() {
        let pts = vec![[5.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-5.0, 0.0, 0.0], [0.0, 5.0, 0.0]];
        let idx = NeighborIndex::from_points(pts.clone(), 3);
        assert_eq!(idx.knn_query(1, 2).unwrap(), vec![0, 2]);
        assert_eq!(idx.knn_query(1, 3).unwrap(), brute(&pts, 1, 3));
    }

    #[test]
    fn grid_ties_match_brute_force() {
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let idx = NeighborIndex::from_points(pts.clone(), 12);
        for i in 0..pts.len() {
            assert_eq!(idx.knn_query(i, 12).unwrap(), brute(&pts, i, 12));
            assert_eq!(idx.knn_query(i, 30).unwrap(), brute(&pts, i, 30));
        }
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..300).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let idx = NeighborIndex::from_points(pts.clone(), 4);
        for i in (0..300).step_by(7) {
            let expect: Vec<usize> = (0..300)
                .filter(|&j| j != i && (0..3).map(|a| (pts[i][a] - pts[j][a]).powi(2)).sum::<f64>() <= 0.04)
                .collect();
            assert_eq!(idx.within_radius(i, 0.2), expect);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matches_exhaustive_sort(seed in any::<u64>(), n in 2usize..512, k in 1usize..40, quant in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<[f64; 3]> = (0..n)
                .map(|_| {
                    let p = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
                    if quant { p.map(|v| (v * 4.0).round()) } else { p }
                })
                .collect();
            let idx = NeighborIndex::from_points(pts.clone(), 16);
            for i in 0..n {
                prop_assert_eq!(idx.knn_query(i, k).unwrap(), brute(&pts, i, k));
            }
        }
    }
}
