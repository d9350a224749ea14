//! Exact nearest-neighbor search over the rows of a dense matrix.
//!
//! Ties on squared distance resolve to the smallest row index, so results
//! are identical to a brute-force scan that keeps the first minimum.

use nalgebra::DMatrix;
use rayon::prelude::*;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    /// Row-major copy of the points.
    points: Vec<f64>,
    /// Point indices, permuted so each leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

impl KdTree {
    /// Indexes the rows of `data`.
    pub fn new(data: &DMatrix<f64>) -> Self {
        let (n, dim) = data.shape();
        let mut points = Vec::with_capacity(n * dim);
        for i in 0..n {
            points.extend(data.row(i).iter());
        }
        let mut tree = KdTree {
            dim,
            points,
            order: (0..n).collect(),
            nodes: Vec::new(),
        };
        if n > 0 {
            tree.build(0, n);
        }
        tree
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE || self.dim == 0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the widest dimension
        let mut best = (0, -1.0);
        for d in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let x = self.points[i * self.dim + d];
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi - lo > best.1 {
                best = (d, hi - lo);
            }
        }
        let dim = best.0;
        if best.1 <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (pts, d) = (&self.points, self.dim);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[a * d + dim].total_cmp(&pts[b * d + dim])
        });
        let value = self.points[self.order[mid] * self.dim + dim];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    /// Index and squared distance of the nearest indexed row to `query`.
    pub fn nearest(&self, query: &[f64]) -> Option<(usize, f64)> {
        assert_eq!(query.len(), self.dim, "query dimension");
        if self.order.is_empty() {
            return None;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(0, query, &mut best);
        Some(best)
    }

    fn search(&self, node: usize, q: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = squared_distance(q, self.point(i));
                    if d < best.1 || (d == best.1 && i < best.0) {
                        *best = (i, d);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // `<=` keeps equal-distance candidates reachable for tie-breaking
                if diff * diff <= best.1 {
                    self.search(far, q, best);
                }
            }
        }
    }

    /// Nearest indexed row for every row of `queries`.
    pub fn nearest_rows(&self, queries: &DMatrix<f64>) -> Vec<usize> {
        let dim = self.dim;
        let rows: Vec<Vec<f64>> = (0..queries.nrows())
            .map(|i| queries.row(i).iter().copied().collect())
            .collect();
        debug_assert!(rows.iter().all(|r| r.len() == dim));
        rows.par_iter()
            .map(|q| self.nearest(q).map(|(i, _)| i).unwrap_or(usize::MAX))
            .collect()
    }
}
