//! Exact k-d tree over fixed-dimension points with squared Euclidean metric.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree. Query results carry the index of the point in the slice
/// the tree was built from.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist2: f64,
}

#[derive(PartialEq)]
struct HeapItem(Neighbor);

impl Eq for HeapItem {}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapItem {
    // Max-heap on distance; larger index loses ties so results are order-stable.
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.dist2.total_cmp(&other.0.dist2).then(self.0.index.cmp(&other.0.index))
    }
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build(&points, &mut order, 0, points.len(), &mut nodes);
        }
        Self { points, order, nodes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, index: usize) -> &[f64; D] {
        &self.points[index]
    }

    pub fn nearest(&self, query: &[f64; D]) -> Option<Neighbor> {
        self.nearest_k(query, 1).into_iter().next()
    }

    /// The `k` nearest points sorted by distance (ties by index).
    pub fn nearest_k(&self, query: &[f64; D], k: usize) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Neighbor> = heap.into_iter().map(|h| h.0).collect();
        out.sort_by(|a, b| a.dist2.total_cmp(&b.dist2).then(a.index.cmp(&b.index)));
        out
    }

    fn search(&self, node: usize, q: &[f64; D], k: usize, heap: &mut BinaryHeap<HeapItem>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let cand = Neighbor { index: idx, dist2: dist2(q, &self.points[idx]) };
                    if heap.len() < k {
                        heap.push(HeapItem(cand));
                    } else if let Some(top) = heap.peek() {
                        if HeapItem(cand) < *top {
                            heap.pop();
                            heap.push(HeapItem(cand));
                        }
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, heap);
                let worst =
                    if heap.len() < k { f64::INFINITY } else { heap.peek().map_or(f64::INFINITY, |t| t.0.dist2) };
                if diff * diff <= worst {
                    self.search(far, q, k, heap);
                }
            }
        }
    }
}

fn build<const D: usize>(
    points: &[[f64; D]],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    // Split on the axis of largest spread.
    let slice = &mut order[start..end];
    let mut dim = 0;
    let mut best_spread = f64::NEG_INFINITY;
    for d in 0..D {
        let (lo, hi) = slice
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(points[i][d]), hi.max(points[i][d])));
        if hi - lo > best_spread {
            best_spread = hi - lo;
            dim = d;
        }
    }
    if best_spread <= 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
    let value = points[slice[mid]][dim];
    nodes.push(Node::Leaf { start, end });
    let left = build(points, order, start, start + mid, nodes);
    let right = build(points, order, start + mid, end, nodes);
    nodes[id] = Node::Split { dim, value, left, right };
    id
}

#[inline]
pub fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn brute<const D: usize>(pts: &[[f64; D]], q: &[f64; D], k: usize) -> Vec<Neighbor> {
        let mut all: Vec<Neighbor> =
            pts.iter().enumerate().map(|(index, p)| Neighbor { index, dist2: dist2(q, p) }).collect();
        all.sort_by(|a, b| a.dist2.total_cmp(&b.dist2).then(a.index.cmp(&b.index)));
        all.truncate(k);
        all
    }

    #[test]
    fn empty_tree_returns_nothing() {
        let t: KdTree<3> = KdTree::new(vec![]);
        assert!(t.nearest(&[0.0; 3]).is_none());
    }

    #[test]
    fn duplicate_points() {
        let t = KdTree::new(vec![[1.0, 1.0]; 20]);
        let n = t.nearest_k(&[0.0, 0.0], 3);
        assert_eq!(n.iter().map(|x| x.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            pts in proptest::collection::vec(proptest::array::uniform3(-10.0f64..10.0), 1..300),
            q in proptest::array::uniform3(-12.0f64..12.0),
            k in 1usize..6,
        ) {
            let tree = KdTree::new(pts.clone());
            let got = tree.nearest_k(&q, k);
            let want = brute(&pts, &q, k);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(&want) {
                prop_assert_eq!(g.dist2, w.dist2);
            }
        }
    }
}
