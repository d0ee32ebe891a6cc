//! Fill-reducing ordering by automatic nested dissection.
//!
//! Separators are the middle level set of a breadth-first search rooted at a
//! pseudo-peripheral node, which works well on the planar-ish graphs produced
//! by mixed finite element assembly.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use super::sparse::CscMatrix;

const LEAF_SIZE: usize = 48;

/// Adjacency structure of a symmetric pattern, self loops removed.
pub(crate) struct Graph {
    ptr: Vec<usize>,
    adj: Vec<usize>,
}

impl Graph {
    /// Builds the graph of `A + A^T`, restricted to nodes with `keep[i]`.
    pub(crate) fn from_pattern(a: &CscMatrix, keep: &[bool]) -> Self {
        let n = a.n_cols;
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            if !keep[j] {
                continue;
            }
            for (i, _) in a.column(j) {
                if i != j && keep[i] {
                    lists[i].push(j);
                    lists[j].push(i);
                }
            }
        }
        let mut ptr = Vec::with_capacity(n + 1);
        let mut adj = Vec::new();
        ptr.push(0);
        for l in lists.iter_mut() {
            l.sort_unstable();
            l.dedup();
            adj.extend_from_slice(l);
            ptr.push(adj.len());
        }
        Self { ptr, adj }
    }

    fn neighbours(&self, v: usize) -> &[usize] {
        &self.adj[self.ptr[v]..self.ptr[v + 1]]
    }
}

struct Dissector<'g> {
    graph: &'g Graph,
    /// Stamp identifying membership of the subset currently being split.
    owner: Vec<usize>,
    level: Vec<usize>,
    next_stamp: usize,
    order: Vec<usize>,
}

impl<'g> Dissector<'g> {
    fn stamp(&mut self, nodes: &[usize]) -> usize {
        self.next_stamp += 1;
        for &v in nodes {
            self.owner[v] = self.next_stamp;
        }
        self.next_stamp
    }

    /// Breadth-first levels inside the stamped subset. Returns the visit order
    /// and the index of the deepest level.
    fn bfs(&mut self, root: usize, stamp: usize, visit: &mut Vec<usize>) -> usize {
        visit.clear();
        let mut queue = VecDeque::new();
        self.level[root] = 0;
        // Reuse owner as the visited marker: visited nodes get stamp + 1 temporarily.
        self.owner[root] = stamp + 1;
        queue.push_back(root);
        let mut depth = 0;
        while let Some(v) = queue.pop_front() {
            visit.push(v);
            depth = self.level[v];
            for &w in self.graph.neighbours(v) {
                if self.owner[w] == stamp {
                    self.owner[w] = stamp + 1;
                    self.level[w] = self.level[v] + 1;
                    queue.push_back(w);
                }
            }
        }
        for &v in visit.iter() {
            self.owner[v] = stamp;
        }
        depth
    }

    fn dissect(&mut self, nodes: Vec<usize>) {
        if nodes.len() <= LEAF_SIZE {
            self.order.extend_from_slice(&nodes);
            return;
        }
        let stamp = self.stamp(&nodes);
        self.next_stamp += 1; // reserve stamp + 1 as the visited marker
        let mut visit = Vec::with_capacity(nodes.len());

        // Pseudo-peripheral root: repeatedly restart from the last node reached.
        let mut root = nodes[0];
        let mut depth = self.bfs(root, stamp, &mut visit);
        for _ in 0..4 {
            let candidate = *visit.last().unwrap();
            let d = self.bfs(candidate, stamp, &mut visit);
            if d <= depth {
                break;
            }
            depth = d;
            root = candidate;
        }
        let depth = self.bfs(root, stamp, &mut visit);

        if visit.len() < nodes.len() {
            // Disconnected subset: split off the reached component.
            let reached: Vec<usize> = visit.clone();
            for &v in &reached {
                self.owner[v] = 0;
            }
            let rest: Vec<usize> = nodes.iter().copied().filter(|&v| self.owner[v] == stamp).collect();
            self.dissect(reached);
            self.dissect(rest);
            return;
        }
        if depth < 2 {
            self.order.extend_from_slice(&nodes);
            return;
        }

        let mid = depth / 2;
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut separator = Vec::new();
        for &v in &visit {
            match self.level[v].cmp(&mid) {
                core::cmp::Ordering::Less => left.push(v),
                core::cmp::Ordering::Equal => separator.push(v),
                core::cmp::Ordering::Greater => right.push(v),
            }
        }
        self.dissect(left);
        self.dissect(right);
        self.order.extend_from_slice(&separator);
    }
}

/// Returns an elimination order (new position -> original index). Nodes listed
/// in `delayed` are placed last, in the given order; this keeps zero-diagonal
/// constraint rows from being pivoted on before their neighbours.
pub fn nested_dissection(a: &CscMatrix, delayed: &[usize]) -> Vec<usize> {
    let n = a.n_cols;
    let mut keep = vec![true; n];
    for &d in delayed {
        keep[d] = false;
    }
    let graph = Graph::from_pattern(a, &keep);
    let mut dissector =
        Dissector { graph: &graph, owner: vec![0; n], level: vec![0; n], next_stamp: 0, order: Vec::with_capacity(n) };
    let nodes: Vec<usize> = (0..n).filter(|&i| keep[i]).collect();
    dissector.dissect(nodes);
    let mut order = dissector.order;
    order.extend_from_slice(delayed);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::sparse::Triplets;

    fn grid_laplacian(m: usize) -> CscMatrix {
        let n = m * m;
        let mut t = Triplets::new(n, n);
        for j in 0..m {
            for i in 0..m {
                let v = j * m + i;
                t.push(v, v, 4.0);
                if i + 1 < m {
                    t.push(v, v + 1, -1.0);
                    t.push(v + 1, v, -1.0);
                }
                if j + 1 < m {
                    t.push(v, v + m, -1.0);
                    t.push(v + m, v, -1.0);
                }
            }
        }
        t.to_csc()
    }

    #[test]
    fn ordering_is_a_permutation() {
        let a = grid_laplacian(20);
        let order = nested_dissection(&a, &[]);
        let mut seen = vec![false; a.n_cols];
        for &v in &order {
            assert!(!seen[v]);
            seen[v] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn delayed_nodes_are_last() {
        let a = grid_laplacian(10);
        let order = nested_dissection(&a, &[3, 57]);
        assert_eq!(&order[order.len() - 2..], &[3, 57]);
        assert_eq!(order.len(), 100);
    }

    #[test]
    fn disconnected_graph_is_covered() {
        let mut t = Triplets::new(200, 200);
        for i in 0..200 {
            t.push(i, i, 1.0);
        }
        for i in 0..99 {
            t.push(i, i + 1, 1.0);
            t.push(i + 1, i, 1.0);
        }
        let order = nested_dissection(&t.to_csc(), &[]);
        let mut sorted = order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..200).collect::<Vec<_>>());
    }
}
