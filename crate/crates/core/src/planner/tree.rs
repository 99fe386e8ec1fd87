use crate::geometry::Vec2;
use crate::grid::OccupancyGrid;

use super::kdtree::KdTree;
use super::PlanError;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub position: Vec2,
    pub parent: Option<usize>,
    /// Path length from the root, meters.
    pub cost: f64,
    pub children: Vec<usize>,
}

/// RRT* search tree. Node 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    index: KdTree,
}

impl Tree {
    pub fn new(root: Vec2) -> Self {
        let mut index = KdTree::new();
        index.insert(root, 0);
        Self {
            nodes: vec![Node { position: root, parent: None, cost: 0.0, children: Vec::new() }],
            index,
        }
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Appends a node under `parent`; its cost follows from the parent's.
    pub fn add(&mut self, position: Vec2, parent: usize) -> usize {
        let id = self.nodes.len();
        let cost = self.nodes[parent].cost + (position - self.nodes[parent].position).norm();
        self.nodes.push(Node { position, parent: Some(parent), cost, children: Vec::new() });
        self.nodes[parent].children.push(id);
        self.index.insert(position, id);
        id
    }

    /// Closest node to `x`; ties go to the lowest index.
    pub fn nearest(&self, x: &Vec2) -> Result<usize, PlanError> {
        self.index.nearest(x).map(|(i, _)| i).ok_or(PlanError::EmptyTree)
    }

    /// Nodes within `radius` of `x`, ascending by index.
    pub fn near(&self, x: &Vec2, radius: f64) -> Vec<usize> {
        self.index.within(x, radius)
    }

    /// Root-to-node chain of positions.
    pub fn path_to(&self, mut i: usize) -> Vec<Vec2> {
        let mut out = vec![self.nodes[i].position];
        while let Some(p) = self.nodes[i].parent {
            out.push(self.nodes[p].position);
            i = p;
        }
        out.reverse();
        out
    }

    fn reparent(&mut self, child: usize, new_parent: usize) {
        if let Some(old) = self.nodes[child].parent {
            self.nodes[old].children.retain(|&c| c != child);
        }
        self.nodes[child].parent = Some(new_parent);
        self.nodes[new_parent].children.push(child);
        let mut stack = vec![child];
        while let Some(n) = stack.pop() {
            let p = self.nodes[n].parent.expect("non-root");
            self.nodes[n].cost = self.nodes[p].cost + (self.nodes[n].position - self.nodes[p].position).norm();
            stack.extend(self.nodes[n].children.iter().copied());
        }
    }

    /// Re-parents every neighbor whose cost strictly drops when reached
    /// through `new_node` over a free segment. Returns the rewired nodes.
    pub fn rewire(&mut self, new_node: usize, neighbors: &[usize], grid: &OccupancyGrid) -> Vec<usize> {
        let mut changed = Vec::new();
        let from = self.nodes[new_node].position;
        for &n in neighbors {
            if n == new_node || Some(n) == self.nodes[new_node].parent || n == self.root() {
                continue;
            }
            let to = self.nodes[n].position;
            let via = self.nodes[new_node].cost + (to - from).norm();
            if via < self.nodes[n].cost && grid.segment_free(&from, &to).unwrap_or(false) {
                self.reparent(n, new_node);
                changed.push(n);
            }
        }
        changed
    }

    /// Checks cost consistency and acyclicity; returns the first violation.
    pub fn check_invariants(&self, tol: f64) -> Result<(), String> {
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || self.nodes[0].parent.is_some() {
            return Err(format!("expected node 0 as the only root, found {roots} roots"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let mut steps = 0;
            let mut cur = i;
            while let Some(p) = self.nodes[cur].parent {
                cur = p;
                steps += 1;
                if steps > self.nodes.len() {
                    return Err(format!("cycle through node {i}"));
                }
            }
            if let Some(p) = n.parent {
                let expected = self.nodes[p].cost + (n.position - self.nodes[p].position).norm();
                if (expected - n.cost).abs() > tol {
                    return Err(format!("node {i}: cost {} but parent chain gives {expected}", n.cost));
                }
                if !self.nodes[p].children.contains(&i) {
                    return Err(format!("node {i} missing from children of {p}"));
                }
            }
        }
        Ok(())
    }
}
