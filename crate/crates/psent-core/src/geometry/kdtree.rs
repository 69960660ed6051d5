//! Static 3D kd-tree for nearest-neighbor queries.
//!
//! Built once over a point set, queried many times: ICP correspondence
//! search and vertex-distance scans both sit on top of this.

use alloc::vec::Vec;

use super::linalg::{dist2, Vec3};

struct Node {
    point: Vec3,
    /// Index into the original point set.
    index: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Immutable kd-tree over a point set.
pub struct KdTree {
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl KdTree {
    /// Build from `points`; the tree remembers each point's original index.
    pub fn build(points: &[Vec3]) -> Self {
        let mut items: Vec<(Vec3, usize)> =
            points.iter().copied().zip(0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(&mut items, 0, &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(
        items: &mut [(Vec3, usize)],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> Option<usize> {
        if items.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let mid = items.len() / 2;
        items.select_nth_unstable_by(mid, |a, b| {
            a.0[axis].partial_cmp(&b.0[axis]).unwrap_or(core::cmp::Ordering::Equal)
        });
        let (point, index) = items[mid];
        let slot = nodes.len();
        nodes.push(Node {
            point,
            index,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = items.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(lo, depth + 1, nodes);
        let right = Self::build_rec(hi, depth + 1, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// True when the tree holds no points.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index and squared distance of the nearest point to `query`.
    /// Returns `None` for an empty tree. Exact ties resolve to the lowest
    /// original index so results do not depend on tree layout.
    pub fn nearest(&self, query: Vec3) -> Option<(usize, f64)> {
        let root = self.root?;
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(root, query, &mut best);
        Some(best)
    }

    fn search(&self, node_id: usize, query: Vec3, best: &mut (usize, f64)) {
        let node = &self.nodes[node_id];
        let d2 = dist2(node.point, query);
        if d2 < best.1 || (d2 == best.1 && node.index < best.0) {
            *best = (node.index, d2);
        }
        let delta = query[node.axis] - node.point[node.axis];
        let (near, far) = if delta < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, best);
        }
        if let Some(f) = far {
            if delta * delta <= best.1 {
                self.search(f, query, best);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    #[test]
    fn matches_brute_force() {
        let mut rng = SeedRng::new(41);
        let points: Vec<Vec3> = (0..500)
            .map(|_| {
                [
                    rng.uniform_in(-10.0, 10.0),
                    rng.uniform_in(-10.0, 10.0),
                    rng.uniform_in(-10.0, 10.0),
                ]
            })
            .collect();
        let tree = KdTree::build(&points);
        for _ in 0..500 {
            let q = [
                rng.uniform_in(-12.0, 12.0),
                rng.uniform_in(-12.0, 12.0),
                rng.uniform_in(-12.0, 12.0),
            ];
            let (bi, bd) = points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, dist2(*p, q)))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)))
                .unwrap();
            let (ti, td) = tree.nearest(q).unwrap();
            assert_eq!(ti, bi);
            assert!((td - bd).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_singleton() {
        assert!(KdTree::build(&[]).nearest([0.0; 3]).is_none());
        let tree = KdTree::build(&[[1.0, 2.0, 3.0]]);
        let (i, d2) = tree.nearest([1.0, 2.0, 4.0]).unwrap();
        assert_eq!(i, 0);
        assert!((d2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let pts = [[1.0, 1.0, 1.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0]];
        let tree = KdTree::build(&pts);
        let (i, _) = tree.nearest([1.0, 1.0, 1.0]).unwrap();
        assert_eq!(i, 0);
    }
}
