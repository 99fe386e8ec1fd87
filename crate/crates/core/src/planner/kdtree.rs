//! Incremental 2-d tree over tree-node positions.
//!
//! Points are only ever appended, matching RRT* growth; no rebalancing.
//! Queries break distance ties by the lowest stored index so results agree
//! exactly with a linear scan.

use crate::geometry::Vec2;

#[derive(Debug, Clone)]
struct KdNode {
    point: Vec2,
    index: usize,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    nodes: Vec<KdNode>,
}

impl KdTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn insert(&mut self, point: Vec2, index: usize) {
        let slot = self.nodes.len();
        self.nodes.push(KdNode { point, index, left: None, right: None });
        if slot == 0 {
            return;
        }
        let mut cur = 0;
        let mut depth = 0;
        loop {
            let axis = depth % 2;
            let go_left = point[axis] < self.nodes[cur].point[axis];
            let next = if go_left { &mut self.nodes[cur].left } else { &mut self.nodes[cur].right };
            match *next {
                Some(n) => {
                    cur = n;
                    depth += 1;
                }
                None => {
                    *next = Some(slot);
                    return;
                }
            }
        }
    }

    /// Stored index closest to `q`, with its squared distance.
    pub fn nearest(&self, q: &Vec2) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = (f64::INFINITY, usize::MAX);
        self.nearest_rec(0, 0, q, &mut best);
        Some((best.1, best.0))
    }

    fn nearest_rec(&self, cur: usize, depth: usize, q: &Vec2, best: &mut (f64, usize)) {
        let node = &self.nodes[cur];
        let d2 = (node.point - q).norm_squared();
        if d2 < best.0 || (d2 == best.0 && node.index < best.1) {
            *best = (d2, node.index);
        }
        let axis = depth % 2;
        let diff = q[axis] - node.point[axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if let Some(n) = near {
            self.nearest_rec(n, depth + 1, q, best);
        }
        if let Some(f) = far {
            // equal plane distance may still hide a lower-index tie
            if diff * diff <= best.0 {
                self.nearest_rec(f, depth + 1, q, best);
            }
        }
    }

    /// All stored indices within `radius` of `q` (inclusive), ascending.
    pub fn within(&self, q: &Vec2, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.within_rec(0, 0, q, radius * radius, &mut out);
        }
        out.sort_unstable();
        out
    }

    fn within_rec(&self, cur: usize, depth: usize, q: &Vec2, r2: f64, out: &mut Vec<usize>) {
        let node = &self.nodes[cur];
        if (node.point - q).norm_squared() <= r2 {
            out.push(node.index);
        }
        let axis = depth % 2;
        let diff = q[axis] - node.point[axis];
        let (near, far) = if diff < 0.0 { (node.left, node.right) } else { (node.right, node.left) };
        if let Some(n) = near {
            self.within_rec(n, depth + 1, q, r2, out);
        }
        if let Some(f) = far {
            if diff * diff <= r2 {
                self.within_rec(f, depth + 1, q, r2, out);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn radius_query_matches_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec2> = (0..300)
            .map(|_| Vec2::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)))
            .collect();
        let mut kd = KdTree::new();
        for (i, p) in pts.iter().enumerate() {
            kd.insert(*p, i);
        }
        for _ in 0..100 {
            let q = Vec2::new(rng.random_range(0.0..5.0), rng.random_range(0.0..5.0));
            let r = rng.random_range(0.0..1.5);
            let expected: Vec<usize> =
                (0..pts.len()).filter(|&i| (pts[i] - q).norm_squared() <= r * r).collect();
            assert_eq!(kd.within(&q, r), expected);
        }
    }

    #[test]
    fn duplicate_points_resolve_to_lowest_index() {
        let mut kd = KdTree::new();
        kd.insert(Vec2::new(1.0, 1.0), 0);
        kd.insert(Vec2::new(2.0, 2.0), 1);
        kd.insert(Vec2::new(2.0, 2.0), 2);
        assert_eq!(kd.nearest(&Vec2::new(2.0, 2.0)).unwrap().0, 1);
        assert_eq!(kd.nearest(&Vec2::new(1.5, 1.5)).unwrap().0, 0);
    }
}
