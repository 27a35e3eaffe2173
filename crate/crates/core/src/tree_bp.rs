//! Exact message passing for the dissipation kernel on finite rooted trees.
//!
//! Messages live on directed edges. The upward pass sends each node's
//! m-type message to its parent; the downward pass sends each parent's
//! message to every child, excluding that child's own contribution.

use crate::error::{Error, Result};
use crate::laplace::{
    bp_sum, closed_form_fixed_point, uniform_map, vernon_imag, CavityKernel, KernelShape, KernelValues, MessageType,
    Mode, Role,
};
use crate::model::Params;
use crate::num::Real;

pub const DEFAULT_NODE_CAP: usize = 1 << 20;

/// Rooted tree with breadth-first bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeGraph {
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    level: Vec<usize>,
    /// Breadth-first order starting at the root.
    order: Vec<usize>,
    root: usize,
    /// Largest number of children of any node.
    pub branching: usize,
    /// Largest distance from the root.
    pub depth: usize,
}

impl TreeGraph {
    /// Tree from a parent table; exactly one entry must be `None`.
    pub fn from_parents(parents: &[Option<usize>]) -> Result<Self> {
        let n = parents.len();
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Shape(format!("a tree needs exactly one root, found {}", roots.len())));
        }
        let mut children = vec![Vec::new(); n];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(Error::Shape(format!("node {i} has invalid parent {p}")));
                }
                children[p].push(i);
            }
        }
        let root = roots[0];
        let mut level = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        level[root] = 0;
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &c in &children[v] {
                level[c] = level[v] + 1;
                order.push(c);
            }
        }
        if order.len() != n {
            return Err(Error::Shape("parent table contains a cycle".into()));
        }
        let branching = children.iter().map(Vec::len).max().unwrap_or(0);
        let depth = level.iter().copied().max().unwrap_or(0);
        Ok(Self {
            parent: parents.to_vec(),
            children,
            level,
            order,
            root,
            branching,
            depth,
        })
    }

    pub fn chain(depth: usize) -> Result<Self> {
        Self::regular(1, depth)
    }

    pub fn regular(branching: usize, depth: usize) -> Result<Self> {
        Self::regular_capped(branching, depth, DEFAULT_NODE_CAP)
    }

    /// Complete tree with `branching` children per internal node, numbered
    /// breadth-first from the root.
    pub fn regular_capped(branching: usize, depth: usize, cap: usize) -> Result<Self> {
        if branching == 0 {
            return Err(Error::InvalidParam {
                name: "branching",
                reason: "must be at least 1".into(),
            });
        }
        let mut nodes = 1usize;
        let mut width = 1usize;
        for _ in 0..depth {
            width = width.saturating_mul(branching);
            nodes = nodes.saturating_add(width);
            if nodes > cap {
                return Err(Error::TooLarge { nodes, cap });
            }
        }
        let mut parents = Vec::with_capacity(nodes);
        parents.push(None);
        for i in 1..nodes {
            parents.push(Some((i - 1) / branching));
        }
        let mut t = Self::from_parents(&parents)?;
        t.branching = if depth == 0 { branching } else { t.branching };
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn level(&self, v: usize) -> usize {
        self.level[v]
    }

    pub fn bfs_order(&self) -> &[usize] {
        &self.order
    }

    pub fn degree(&self, v: usize) -> usize {
        self.children[v].len() + usize::from(self.parent[v].is_some())
    }

    /// Undirected edges as (parent, child).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.order[1..].iter().map(move |&c| (self.parent[c].expect("non-root"), c))
    }

    /// Same tree with each node's children visited in a different order.
    pub fn with_child_order(&self, mut reorder: impl FnMut(usize, &mut Vec<usize>)) -> Self {
        let mut t = self.clone();
        for v in 0..t.len() {
            reorder(v, &mut t.children[v]);
        }
        t.order.clear();
        t.order.push(t.root);
        let mut head = 0;
        while head < t.order.len() {
            let v = t.order[head];
            head += 1;
            let kids = t.children[v].clone();
            t.order.extend(kids);
        }
        t
    }
}

pub fn build_chain(depth: usize) -> Result<TreeGraph> {
    TreeGraph::chain(depth)
}

pub fn build_tree(branching: usize, depth: usize) -> Result<TreeGraph> {
    TreeGraph::regular(branching, depth)
}

/// Directed-edge messages of one sweep, on a common Laplace grid.
#[derive(Debug, Clone)]
pub struct Messages<T> {
    pub shape: KernelShape<T>,
    /// `up[v]`: m-type message from `v` towards its parent. For the root this
    /// is the message it would emit to an attached parent.
    up: Vec<Vec<T>>,
    /// `down[v]`: m-type message from the parent of `v` into `v`; empty for
    /// the root and before the downward pass.
    down: Vec<Vec<T>>,
    /// (node, grid index) pairs where a Vernon step hit its pole; the value
    /// there is NaN.
    pub poles: Vec<(usize, usize)>,
}

fn check_shape<T: Real>(shape: &KernelShape<T>) -> Result<()> {
    if shape.mode != Mode::Laplace || shape.role != Role::Imaginary {
        return Err(Error::Shape("tree sweeps run on Laplace-side dissipation kernels".into()));
    }
    Ok(())
}

fn vernon_vec<T: Real>(
    input: &[T],
    params: &Params<T>,
    grid: &[T],
    node: usize,
    poles: &mut Vec<(usize, usize)>,
) -> Vec<T> {
    input
        .iter()
        .zip(grid)
        .enumerate()
        .map(|(i, (&k, &l))| {
            vernon_imag(k, params, params.coupling, l).unwrap_or_else(|_| {
                poles.push((node, i));
                T::nan()
            })
        })
        .collect()
}

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a = *a + *b);
}

/// Leaf-to-root pass. Leaves emit the free-oscillator value (C²/2)·G̃₀.
pub fn sweep_messages<T: Real>(tree: &TreeGraph, params: &Params<T>, shape: &KernelShape<T>) -> Result<Messages<T>> {
    check_shape(shape)?;
    let n = shape.len();
    let mut up = vec![Vec::new(); tree.len()];
    let mut poles = Vec::new();
    for &v in tree.order.iter().rev() {
        let mut sum = vec![T::zero(); n];
        for &c in &tree.children[v] {
            add_into(&mut sum, &up[c]);
        }
        up[v] = vernon_vec(&sum, params, &shape.grid, v, &mut poles);
    }
    Ok(Messages {
        shape: shape.clone(),
        up,
        down: vec![Vec::new(); tree.len()],
        poles,
    })
}

/// Both passes, so every directed edge carries its message.
pub fn sweep_full<T: Real>(tree: &TreeGraph, params: &Params<T>, shape: &KernelShape<T>) -> Result<Messages<T>> {
    let mut msgs = sweep_messages(tree, params, shape)?;
    let n = shape.len();
    for &v in &tree.order {
        let kids = &tree.children[v];
        if kids.is_empty() {
            continue;
        }
        // prefix/suffix sums leave out each child's own message exactly
        let base = if msgs.down[v].is_empty() {
            vec![T::zero(); n]
        } else {
            msgs.down[v].clone()
        };
        let mut prefix = Vec::with_capacity(kids.len() + 1);
        prefix.push(vec![T::zero(); n]);
        for &c in kids {
            let mut next = prefix.last().expect("nonempty").clone();
            add_into(&mut next, &msgs.up[c]);
            prefix.push(next);
        }
        let mut suffix = vec![T::zero(); n];
        for (j, &c) in kids.iter().enumerate().rev() {
            let mut input = base.clone();
            add_into(&mut input, &prefix[j]);
            add_into(&mut input, &suffix);
            msgs.down[c] = vernon_vec(&input, params, &shape.grid, c, &mut msgs.poles);
            add_into(&mut suffix, &msgs.up[c]);
        }
    }
    Ok(msgs)
}

impl<T: Real> Messages<T> {
    fn kernel(&self, values: Vec<T>, message_type: MessageType) -> CavityKernel<T> {
        CavityKernel {
            shape: self.shape.clone(),
            values: KernelValues::Real(values),
            message_type,
        }
    }

    /// m-type message on the directed edge `from → to`, if the two nodes are
    /// adjacent and the message has been computed.
    pub fn edge_message(&self, tree: &TreeGraph, from: usize, to: usize) -> Option<CavityKernel<T>> {
        if tree.parent(from) == Some(to) {
            Some(self.kernel(self.up[from].clone(), MessageType::MType))
        } else if tree.parent(to) == Some(from) && !self.down[to].is_empty() {
            Some(self.kernel(self.down[to].clone(), MessageType::MType))
        } else {
            None
        }
    }

    /// n-type sum of the messages entering the root from its children.
    pub fn root_message(&self, tree: &TreeGraph) -> CavityKernel<T> {
        let kids: Vec<CavityKernel<T>> = tree
            .children(tree.root())
            .iter()
            .map(|&c| self.kernel(self.up[c].clone(), MessageType::MType))
            .collect();
        let refs: Vec<&CavityKernel<T>> = kids.iter().collect();
        bp_sum(&self.shape, &refs).expect("messages share the sweep shape")
    }

    /// m-type message the root would send to an attached parent.
    pub fn root_emitted(&self, tree: &TreeGraph) -> CavityKernel<T> {
        self.kernel(self.up[tree.root()].clone(), MessageType::MType)
    }

    /// Sum of every m-type message entering `node` (all neighbours).
    pub fn environment(&self, tree: &TreeGraph, node: usize) -> Result<CavityKernel<T>> {
        let mut parts: Vec<CavityKernel<T>> = tree
            .children(node)
            .iter()
            .map(|&c| self.kernel(self.up[c].clone(), MessageType::MType))
            .collect();
        if tree.parent(node).is_some() {
            if self.down[node].is_empty() {
                return Err(Error::Shape("downward messages missing; use sweep_full".into()));
            }
            parts.push(self.kernel(self.down[node].clone(), MessageType::MType));
        }
        let refs: Vec<&CavityKernel<T>> = parts.iter().collect();
        bp_sum(&self.shape, &refs)
    }
}

/// Effective environment kernel of `node`: the sum of all incident m-type
/// messages after both passes.
pub fn output_environment<T: Real>(
    tree: &TreeGraph,
    params: &Params<T>,
    node: usize,
    shape: &KernelShape<T>,
) -> Result<CavityKernel<T>> {
    if node >= tree.len() {
        return Err(Error::InvalidParam {
            name: "node",
            reason: format!("node {node} not in a tree of {} nodes", tree.len()),
        });
    }
    sweep_full(tree, params, shape)?.environment(tree, node)
}

/// |k_d − k*| for d = 0..=max_depth, where k_d is the n-type root message of
/// a depth-d tree with branching n − 1 (equal to the d-th iterate of the
/// uniform map from zero).
pub fn depth_convergence<T: Real>(params: &Params<T>, branching: usize, max_depth: usize, lambda: T) -> Result<Vec<T>> {
    if branching + 1 != params.n {
        return Err(Error::InvalidParam {
            name: "branching",
            reason: format!("must equal n - 1 = {} for the uniform recursion", params.n - 1),
        });
    }
    let target = closed_form_fixed_point(params, lambda)?;
    let mut k = T::zero();
    let mut out = Vec::with_capacity(max_depth + 1);
    out.push((k - target).abs());
    for _ in 0..max_depth {
        k = uniform_map(k, params, lambda)?;
        out.push((k - target).abs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::g0_laplace;
    use approx::assert_relative_eq;

    fn left() -> Params<f64> {
        Params::new(5, 10.0, 1.0, 0.5).unwrap()
    }

    fn grid() -> KernelShape<f64> {
        KernelShape::laplace(vec![0.0, 0.5, 1.0, 3.0, 10.0, 40.0]).unwrap()
    }

    #[test]
    fn build_examples() {
        let c = build_chain(3).unwrap();
        assert_eq!(c.len(), 4);
        assert_eq!(c.edges().count(), 3);
        let t = build_tree(2, 3).unwrap();
        assert_eq!(t.len(), 15);
        assert_eq!(t.depth, 3);
        assert_eq!(build_tree(1, 7).unwrap(), build_chain(7).unwrap());
        assert!(matches!(
            TreeGraph::regular_capped(2, 30, 1 << 20),
            Err(Error::TooLarge { .. })
        ));
        assert!(TreeGraph::from_parents(&[None, None]).is_err());
        assert!(TreeGraph::from_parents(&[None, Some(2), Some(1)]).is_err());
    }

    #[test]
    fn level_sizes_of_regular_tree() {
        let t = build_tree(3, 4).unwrap();
        for k in 0..=4 {
            let count = (0..t.len()).filter(|&v| t.level(v) == k).count();
            assert_eq!(count, 3usize.pow(k as u32));
        }
    }

    #[test]
    fn leaf_message_is_free_branch() {
        let p = left();
        let shape = grid();
        let t = build_chain(1).unwrap();
        let m = sweep_messages(&t, &p, &shape).unwrap();
        let root = m.root_message(&t);
        for (v, &l) in root.real_values().unwrap().iter().zip(&shape.grid) {
            assert_relative_eq!(*v, 0.5 * g0_laplace(&p, l), max_relative = 1e-15);
        }
        let single = build_chain(0).unwrap();
        let m = sweep_messages(&single, &p, &shape).unwrap();
        assert!(m.root_message(&single).real_values().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn chain_root_matches_map_iterates() {
        let p = Params::new(2, 1.0, 0.5, 1.0).unwrap();
        let shape = grid();
        for d in [1usize, 2, 5, 40] {
            let t = build_chain(d).unwrap();
            let m = sweep_messages(&t, &p, &shape).unwrap();
            let root = m.root_message(&t);
            for (v, &l) in root.real_values().unwrap().iter().zip(&shape.grid) {
                let mut k = 0.0;
                for _ in 0..d {
                    k = uniform_map(k, &p, l).unwrap();
                }
                assert_relative_eq!(*v, k, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn regular_tree_root_matches_map_iterates() {
        let p = left();
        let shape = grid();
        for d in 0..=5 {
            let t = build_tree(4, d).unwrap();
            let m = sweep_messages(&t, &p, &shape).unwrap();
            let root = m.root_message(&t);
            for (v, &l) in root.real_values().unwrap().iter().zip(&shape.grid) {
                let mut k = 0.0;
                for _ in 0..d {
                    k = uniform_map(k, &p, l).unwrap();
                }
                assert_relative_eq!(*v, k, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn interior_environment_approaches_uniform_limit() {
        let p = left();
        let shape = grid();
        let t = build_tree(4, 8).unwrap();
        // a node on level 4, far from root and leaves at this contraction rate
        let node = t.bfs_order().iter().copied().find(|&v| t.level(v) == 4).unwrap();
        let env = output_environment(&t, &p, node, &shape).unwrap();
        for (v, &l) in env.real_values().unwrap().iter().zip(&shape.grid) {
            let k = closed_form_fixed_point(&p, l).unwrap();
            assert_relative_eq!(*v, 5.0 / 4.0 * k, max_relative = 1e-10);
        }
    }

    #[test]
    fn environment_edge_cases() {
        let p = left();
        let shape = grid();
        let t = build_chain(3).unwrap();
        let msgs = sweep_full(&t, &p, &shape).unwrap();
        let leaf = 3;
        let env = msgs.environment(&t, leaf).unwrap();
        let incoming = msgs.edge_message(&t, 2, leaf).unwrap();
        assert_eq!(env.real_values(), incoming.real_values());
        assert!(msgs.edge_message(&t, 0, 3).is_none());

        let single = build_chain(0).unwrap();
        let env = output_environment(&single, &p, 0, &shape).unwrap();
        assert!(env.real_values().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn downward_messages_match_rerooted_sweeps() {
        // Re-root a small irregular tree at every node and compare the
        // environment with the root message of the re-rooted sweep.
        let parents = [None, Some(0), Some(0), Some(1), Some(1), Some(1), Some(2), Some(6)];
        let t = TreeGraph::from_parents(&parents).unwrap();
        let p = Params::new(4, 1.0, 0.3, 1.0).unwrap();
        let shape = grid();
        let msgs = sweep_full(&t, &p, &shape).unwrap();
        let adj: Vec<Vec<usize>> = (0..t.len())
            .map(|v| {
                let mut a = t.children(v).to_vec();
                a.extend(t.parent(v));
                a
            })
            .collect();
        for r in 0..t.len() {
            let mut par = vec![None; t.len()];
            let mut seen = vec![false; t.len()];
            let mut stack = vec![r];
            seen[r] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        par[w] = Some(v);
                        stack.push(w);
                    }
                }
            }
            let rt = TreeGraph::from_parents(&par).unwrap();
            let m = sweep_messages(&rt, &p, &shape).unwrap();
            let want = m.root_message(&rt);
            let got = msgs.environment(&t, r).unwrap();
            for (a, b) in got.real_values().unwrap().iter().zip(want.real_values().unwrap()) {
                assert_relative_eq!(*a, *b, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn poles_are_flagged_not_fatal() {
        let p = left();
        let l = 2.0;
        let at_pole = 1.0 / g0_laplace(&p, l);
        let mut poles = Vec::new();
        let out = vernon_vec(&[0.0, at_pole], &p, &[l, l], 7, &mut poles);
        assert_eq!(poles, vec![(7, 1)]);
        assert!(out[0].is_finite() && out[1].is_nan());

        let c_star = crate::model::critical_coupling(2, 1.0, 1.0).unwrap();
        let p = Params::new(2, 1.0, 2.0 * c_star, 1.0).unwrap();
        let shape = KernelShape::laplace(vec![0.1, 0.2, 0.3]).unwrap();
        let t = build_chain(50).unwrap();
        assert!(sweep_messages(&t, &p, &shape).is_ok());
    }

    #[test]
    fn depth_convergence_examples() {
        let zero = Params::new(5, 10.0, 0.0, 0.5).unwrap();
        assert!(depth_convergence(&zero, 4, 10, 1.0).unwrap().iter().all(|&r| r == 0.0));

        let p = left();
        let r = depth_convergence(&p, 4, 60, 1.0).unwrap();
        assert!(r[60] < 1e-10);
        assert!(depth_convergence(&p, 3, 10, 1.0).is_err());

        // near the threshold the approach is slow enough for a clean ratio test
        let c_star = crate::model::critical_coupling(3, 1.0, 1.0).unwrap();
        let p = Params::new(3, 1.0, 0.9 * c_star, 1.0).unwrap();
        // stop while residuals are far above rounding of k*
        let r = depth_convergence(&p, 2, 30, 0.0).unwrap();
        for w in r.windows(2) {
            assert!(w[1] < w[0]);
        }
        assert!(r[30] > 1e-9);
        let ratios: Vec<f64> = r[21..=30].windows(2).map(|w| w[1] / w[0]).collect();
        let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) - ratios.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 1e-3, "spread {spread}");
        let rate = crate::laplace::contraction_rate(&p, 0.0).unwrap();
        assert_relative_eq!(ratios[8], rate, max_relative = 1e-3);
    }
}
