//! Exact k-nearest-neighbor queries under the max (Chebyshev) norm.
//!
//! Small point sets are scanned directly; larger sets get a k-d tree.
//! Both paths are exact, which the estimator tests rely on.

/// Point count below which brute force beats the tree.
const BRUTE_FORCE_LIMIT: usize = 256;

pub fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut d = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let diff = (x - y).abs();
        if diff > d {
            d = diff;
        }
    }
    d
}

enum Node {
    Leaf {
        indices: Vec<usize>,
    },
    Split {
        axis: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

pub struct MaxNormIndex {
    points: Vec<Vec<f64>>,
    root: Option<Node>,
}

const LEAF_SIZE: usize = 16;

fn build(points: &[Vec<f64>], mut indices: Vec<usize>, depth: usize) -> Node {
    if indices.len() <= LEAF_SIZE {
        return Node::Leaf { indices };
    }
    let dims = points[indices[0]].len();
    // Split on the axis with the widest spread at this node.
    let mut axis = depth % dims;
    let mut best_spread = f64::NEG_INFINITY;
    for a in 0..dims {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &indices {
            let v = points[i][a];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let spread = hi - lo;
        if spread > best_spread {
            best_spread = spread;
            axis = a;
        }
    }
    if best_spread <= 0.0 {
        return Node::Leaf { indices };
    }
    let mid = indices.len() / 2;
    indices.sort_by(|&a, &b| points[a][axis].partial_cmp(&points[b][axis]).unwrap());
    let value = points[indices[mid]][axis];
    let right: Vec<usize> = indices.split_off(mid);
    Node::Split {
        axis,
        value,
        left: Box::new(build(points, indices, depth + 1)),
        right: Box::new(build(points, right, depth + 1)),
    }
}

impl MaxNormIndex {
    pub fn new(points: Vec<Vec<f64>>) -> Self {
        let root = if points.len() >= BRUTE_FORCE_LIMIT {
            let indices: Vec<usize> = (0..points.len()).collect();
            Some(build(&points, indices, 0))
        } else {
            None
        };
        MaxNormIndex { points, root }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Distance from point `query_idx` to its k-th nearest other point.
    pub fn kth_neighbor_dist(&self, query_idx: usize, k: usize) -> f64 {
        assert!(k >= 1 && k < self.len());
        let query = &self.points[query_idx];
        // Bounded max-heap of the k best distances seen so far.
        let mut heap: Vec<f64> = Vec::with_capacity(k + 1);
        let mut push = |heap: &mut Vec<f64>, d: f64| {
            if heap.len() < k {
                heap.push(d);
                heap.sort_by(|a, b| b.partial_cmp(a).unwrap());
            } else if d < heap[0] {
                heap[0] = d;
                heap.sort_by(|a, b| b.partial_cmp(a).unwrap());
            }
        };
        match &self.root {
            None => {
                for (i, p) in self.points.iter().enumerate() {
                    if i == query_idx {
                        continue;
                    }
                    push(&mut heap, max_norm_dist(query, p));
                }
            }
            Some(root) => {
                let mut stack = vec![root];
                while let Some(node) = stack.pop() {
                    match node {
                        Node::Leaf { indices } => {
                            for &i in indices {
                                if i == query_idx {
                                    continue;
                                }
                                push(&mut heap, max_norm_dist(query, &self.points[i]));
                            }
                        }
                        Node::Split {
                            axis,
                            value,
                            left,
                            right,
                        } => {
                            let delta = query[*axis] - value;
                            let (near, far) = if delta < 0.0 {
                                (left, right)
                            } else {
                                (right, left)
                            };
                            // Visit the far side only if it can still beat
                            // the current k-th-best distance.
                            if heap.len() < k || delta.abs() <= heap[0] {
                                stack.push(far);
                            }
                            stack.push(near);
                        }
                    }
                }
            }
        }
        heap[0]
    }

    /// Number of other points strictly within `radius` of point `query_idx`.
    pub fn count_within(&self, query_idx: usize, radius: f64) -> usize {
        let query = &self.points[query_idx];
        let mut count = 0usize;
        match &self.root {
            None => {
                for (i, p) in self.points.iter().enumerate() {
                    if i != query_idx && max_norm_dist(query, p) < radius {
                        count += 1;
                    }
                }
            }
            Some(root) => {
                let mut stack = vec![root];
                while let Some(node) = stack.pop() {
                    match node {
                        Node::Leaf { indices } => {
                            for &i in indices {
                                if i != query_idx
                                    && max_norm_dist(query, &self.points[i]) < radius
                                {
                                    count += 1;
                                }
                            }
                        }
                        Node::Split {
                            axis,
                            value,
                            left,
                            right,
                        } => {
                            let delta = query[*axis] - value;
                            let (near, far) = if delta < 0.0 {
                                (left, right)
                            } else {
                                (right, left)
                            };
                            if delta.abs() < radius {
                                stack.push(far);
                            }
                            stack.push(near);
                        }
                    }
                }
            }
        }
        count
    }
}
