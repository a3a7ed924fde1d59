//! Static kd-tree under the max (Chebyshev) norm: k-nearest-neighbor
//! distances and strict-radius counting, as the KSG estimator needs.
//!
//! Median-split construction over an index permutation; queries prune a
//! subtree when the query's axis distance to the split plane already
//! exceeds the current radius, which is valid for the max norm because any
//! point beyond the plane differs by at least that much in one coordinate.

/// Max-norm distance.
pub fn chebyshev(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

struct Node {
    axis: usize,
    split: f64,
    left: usize,
    right: usize,
    /// Leaf payload: range into `order`.
    from: usize,
    to: usize,
}

const LEAF_SIZE: usize = 16;
const NO_CHILD: usize = usize::MAX;

pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    /// Build over `n` points of dimension `dim`, row-major.
    pub fn build(points: &[f64], dim: usize) -> KdTree {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points: points.to_vec(),
            order: (0..n as u32).collect(),
            nodes: Vec::new(),
            root: NO_CHILD,
        };
        if n > 0 {
            tree.root = tree.build_range(0, n, 0);
        }
        tree
    }

    fn coord(&self, idx: u32, axis: usize) -> f64 {
        self.points[idx as usize * self.dim + axis]
    }

    fn build_range(&mut self, from: usize, to: usize, depth: usize) -> usize {
        if to - from <= LEAF_SIZE {
            self.nodes.push(Node {
                axis: 0,
                split: 0.0,
                left: NO_CHILD,
                right: NO_CHILD,
                from,
                to,
            });
            return self.nodes.len() - 1;
        }
        let axis = depth % self.dim;
        let mid = (from + to) / 2;
        let points = std::mem::take(&mut self.points);
        self.order[from..to].select_nth_unstable_by(mid - from, |&a, &b| {
            points[a as usize * self.dim + axis]
                .partial_cmp(&points[b as usize * self.dim + axis])
                .unwrap()
        });
        self.points = points;
        let split = self.coord(self.order[mid], axis);
        let left = self.build_range(from, mid, depth + 1);
        let right = self.build_range(mid, to, depth + 1);
        self.nodes.push(Node {
            axis,
            split,
            left,
            right,
            from: 0,
            to: 0,
        });
        self.nodes.len() - 1
    }

    /// Max-norm distance to the k-th nearest neighbor of `query`, excluding
    /// the point at `exclude` (pass usize::MAX to keep all points).
    pub fn kth_distance(&self, query: &[f64], k: usize, exclude: usize) -> f64 {
        assert!(k > 0);
        let mut best: Vec<f64> = Vec::with_capacity(k);
        self.knn_rec(self.root, query, k, exclude, &mut best);
        *best.last().expect("not enough points for k neighbors")
    }

    fn knn_rec(&self, node: usize, query: &[f64], k: usize, exclude: usize, best: &mut Vec<f64>) {
        let n = &self.nodes[node];
        if n.left == NO_CHILD {
            for &idx in &self.order[n.from..n.to] {
                if idx as usize == exclude {
                    continue;
                }
                let d = chebyshev(query, &self.points[idx as usize * self.dim..][..self.dim]);
                if best.len() < k {
                    let pos = best.partition_point(|&b| b < d);
                    best.insert(pos, d);
                } else if d < best[k - 1] {
                    best.pop();
                    let pos = best.partition_point(|&b| b < d);
                    best.insert(pos, d);
                }
            }
            return;
        }
        let delta = query[n.axis] - n.split;
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.knn_rec(near, query, k, exclude, best);
        if best.len() < k || delta.abs() <= best[k - 1] {
            self.knn_rec(far, query, k, exclude, best);
        }
    }

    /// Number of points strictly within `radius` of `query` in max norm,
    /// excluding the point at `exclude`.
    pub fn count_within(&self, query: &[f64], radius: f64, exclude: usize) -> usize {
        let mut count = 0;
        self.count_rec(self.root, query, radius, exclude, &mut count);
        count
    }

    fn count_rec(&self, node: usize, query: &[f64], radius: f64, exclude: usize, count: &mut usize) {
        let n = &self.nodes[node];
        if n.left == NO_CHILD {
            for &idx in &self.order[n.from..n.to] {
                if idx as usize == exclude {
                    continue;
                }
                let d = chebyshev(query, &self.points[idx as usize * self.dim..][..self.dim]);
                if d < radius {
                    *count += 1;
                }
            }
            return;
        }
        let delta = query[n.axis] - n.split;
        let (near, far) = if delta <= 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.count_rec(near, query, radius, exclude, count);
        // Points on the far side differ by at least |delta| on this axis;
        // only strict `< radius` hits can matter.
        if delta.abs() < radius {
            self.count_rec(far, query, radius, exclude, count);
        }
    }
}

/// Brute-force counterparts used as test oracles.
pub mod brute {
    use super::chebyshev;

    pub fn kth_distance(points: &[f64], dim: usize, query: &[f64], k: usize, exclude: usize) -> f64 {
        let mut dists: Vec<f64> = points
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, _)| *i != exclude)
            .map(|(_, p)| chebyshev(query, p))
            .collect();
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dists[k - 1]
    }

    pub fn count_within(points: &[f64], dim: usize, query: &[f64], radius: f64, exclude: usize) -> usize {
        points
            .chunks_exact(dim)
            .enumerate()
            .filter(|(i, p)| *i != exclude && chebyshev(query, p) < radius)
            .count()
    }
}
