//! Exact k-nearest-neighbour search over a static point set.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A kD tree over `len` points of dimension `dim`.
///
/// Points keep the index they were inserted with; results are reported in
/// those indices, sorted by distance and then by index.
#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    points: Vec<f64>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist2: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    /// `points` is row-major, one point per `dim` values.
    pub fn build(points: Vec<f64>, dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let len = points.len() / dim;
        let mut tree = KdTree {
            dim,
            points,
            order: (0..len).collect(),
            nodes: Vec::new(),
        };
        if len > 0 {
            tree.build_node(0, len);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index * self.dim..(index + 1) * self.dim]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split on the axis of largest spread
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..self.dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.points[i * self.dim + axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        if best_spread <= 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let (dim, points) = (self.dim, &self.points);
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a * dim + best_axis].total_cmp(&points[b * dim + best_axis])
        });
        let value = self.points[self.order[mid] * self.dim + best_axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis: best_axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `m` nearest points to `query` for which `keep(index)` holds, as
    /// `(index, euclidean distance)` ascending.
    pub fn nearest_filtered(
        &self,
        query: &[f64],
        m: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Vec<(usize, f64)> {
        assert_eq!(query.len(), self.dim);
        if m == 0 || self.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(m + 1);
        self.search(0, query, m, &keep, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort();
        out.into_iter()
            .map(|c| (c.index, c.dist2.sqrt()))
            .collect()
    }

    pub fn nearest(&self, query: &[f64], m: usize) -> Vec<(usize, f64)> {
        self.nearest_filtered(query, m, |_| true)
    }

    fn search(
        &self,
        node: usize,
        query: &[f64],
        m: usize,
        keep: &impl Fn(usize) -> bool,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if !keep(i) {
                        continue;
                    }
                    let p = self.point(i);
                    let dist2: f64 = p.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum();
                    let cand = Candidate { dist2, index: i };
                    if heap.len() < m {
                        heap.push(cand);
                    } else if cand < *heap.peek().unwrap() {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, m, keep, heap);
                // `<=` so equal-distance points with smaller indices are not missed
                let bound = heap.peek().map_or(f64::INFINITY, |c| c.dist2);
                if heap.len() < m || diff * diff <= bound {
                    self.search(far, query, m, keep, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear_scan(points: &[f64], dim: usize, q: &[f64], m: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = points
            .chunks(dim)
            .enumerate()
            .map(|(i, p)| {
                (i, p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            })
            .collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(m);
        all
    }

    #[test]
    fn line_example_with_exclusion() {
        let tree = KdTree::build(vec![0.0, 1.0, 5.0], 1);
        let got = tree.nearest_filtered(&[0.0], 2, |i| i != 0);
        assert_eq!(got, vec![(1, 1.0), (2, 5.0)]);
    }

    #[test]
    fn duplicates_are_all_found() {
        let tree = KdTree::build(vec![1.0; 40], 2);
        let got = tree.nearest(&[1.0, 1.0], 20);
        assert_eq!(got.len(), 20);
        assert_eq!(got.iter().map(|g| g.0).collect::<Vec<_>>(), (0..20).collect::<Vec<_>>());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn agrees_with_linear_scan(
            pts in proptest::collection::vec(-10.0f64..10.0, 3 * 200),
            q in proptest::collection::vec(-12.0f64..12.0, 3),
            m in 1usize..15,
        ) {
            let tree = KdTree::build(pts.clone(), 3);
            prop_assert_eq!(tree.nearest(&q, m), linear_scan(&pts, 3, &q, m));
        }
    }
}
