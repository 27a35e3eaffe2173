//! Exact finite-tree kernels from linear algebra, independent of the message
//! recursion in `tree_bp`.
//!
//! For a rooted tree the matrix
//!
//!   M(λ) = (m(λ²+ω²)/2)·I − (C/√2)·Adj
//!
//! has (C²/2)·[M⁻¹]_root,root equal to the m-type message the root would emit
//! to an attached parent. Expanding the inverse in the eigenbasis of the
//! adjacency matrix gives the same kernel as a finite sum of sines.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::laplace::MessageType;
use crate::model::Params;
use crate::timedomain::{Method, TimeGrid, TimeKernel};
use crate::tree_bp::TreeGraph;

/// Trees up to this many nodes are factorised densely.
pub const DENSE_LIMIT: usize = 4096;

const CG_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Dense below `DENSE_LIMIT` nodes, conjugate gradients above.
    Auto,
    Dense,
    Iterative,
}

/// Sparse symmetric tree matrix at one Laplace point.
#[derive(Debug, Clone)]
pub struct TreeMatrix {
    pub lambda: f64,
    pub diagonal: f64,
    pub off_diagonal: f64,
    pub root: usize,
    neighbours: Vec<Vec<usize>>,
}

impl TreeMatrix {
    pub fn new(tree: &TreeGraph, params: &Params<f64>, lambda: f64) -> Self {
        let mut neighbours = vec![Vec::new(); tree.len()];
        for (u, v) in tree.edges() {
            neighbours[u].push(v);
            neighbours[v].push(u);
        }
        Self {
            lambda,
            diagonal: params.mass * (lambda * lambda + params.omega_sq) / 2.0,
            off_diagonal: params.coupling / SQRT_2,
            root: tree.root(),
            neighbours,
        }
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::from_diagonal_element(n, n, self.diagonal);
        for (u, nb) in self.neighbours.iter().enumerate() {
            for &v in nb {
                m[(u, v)] = -self.off_diagonal;
            }
        }
        m
    }

    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (u, nb) in self.neighbours.iter().enumerate() {
            y[u] = self.diagonal * x[u] - self.off_diagonal * nb.iter().map(|&v| x[v]).sum::<f64>();
        }
    }

    fn root_rhs(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.len()];
        e[self.root] = 1.0;
        e
    }

    /// [M⁻¹]_root,root by a dense factorisation (Cholesky, LU if indefinite).
    pub fn solve_dense(&self) -> Result<f64> {
        let m = self.dense();
        let rhs = DVector::from_vec(self.root_rhs());
        let x = match m.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => m.lu().solve(&rhs).ok_or(Error::Pole { lambda: self.lambda })?,
        };
        let v = x[self.root];
        if !v.is_finite() {
            return Err(Error::Pole { lambda: self.lambda });
        }
        Ok(v)
    }

    /// [M⁻¹]_root,root by Jacobi-preconditioned conjugate gradients.
    pub fn solve_iterative(&self, max_iter: usize) -> Result<f64> {
        let n = self.len();
        let b = self.root_rhs();
        let inv_d = 1.0 / self.diagonal;
        let mut x = vec![0.0; n];
        let mut r = b;
        let mut z: Vec<f64> = r.iter().map(|v| v * inv_d).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz: f64 = dot(&r, &z);
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap.is_nan() || pap <= 0.0 {
                return Err(Error::Numerical(format!(
                    "conjugate gradients broke down at lambda = {} (matrix not positive definite)",
                    self.lambda
                )));
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() <= CG_TOL {
                return Ok(x[self.root]);
            }
            for i in 0..n {
                z[i] = r[i] * inv_d;
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::Numerical(format!(
            "conjugate gradients did not converge in {max_iter} iterations at lambda = {}",
            self.lambda
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Root-emitted m-type kernel (C²/2)·[M(λ)⁻¹]_root,root.
pub fn oracle_kernel_laplace(tree: &TreeGraph, params: &Params<f64>, lambda: f64) -> Result<f64> {
    oracle_kernel_laplace_with(tree, params, lambda, Solver::Auto)
}

pub fn oracle_kernel_laplace_with(tree: &TreeGraph, params: &Params<f64>, lambda: f64, solver: Solver) -> Result<f64> {
    let tm = TreeMatrix::new(tree, params, lambda);
    let dense = match solver {
        Solver::Auto => tm.len() <= DENSE_LIMIT,
        Solver::Dense => true,
        Solver::Iterative => false,
    };
    let inv = if dense {
        tm.solve_dense()?
    } else {
        tm.solve_iterative(10 * tm.len() + 100)?
    };
    Ok(params.coupling * params.coupling / 2.0 * inv)
}

/// One normal mode of the tree with its weight in the root kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub frequency: f64,
    pub weight: f64,
}

/// Modes Ω_b² = ω² − √2·C·μ_b/m of the adjacency eigenvalues μ_b, weighted
/// by w_b = (C²/m)·v²_root,b/Ω_b.
pub fn mode_decomposition(tree: &TreeGraph, params: &Params<f64>) -> Result<Vec<Mode>> {
    if tree.len() > DENSE_LIMIT {
        return Err(Error::TooLarge { nodes: tree.len(), cap: DENSE_LIMIT });
    }
    let n = tree.len();
    let mut adj = DMatrix::<f64>::zeros(n, n);
    for (u, v) in tree.edges() {
        adj[(u, v)] = 1.0;
        adj[(v, u)] = 1.0;
    }
    let eig = SymmetricEigen::new(adj);
    let scale = params.coupling * params.coupling / params.mass;
    let root = tree.root();
    let mut modes = Vec::with_capacity(n);
    for (b, &mu) in eig.eigenvalues.iter().enumerate() {
        let omega_sq = params.omega_sq - SQRT_2 * params.coupling * mu / params.mass;
        if omega_sq <= 0.0 {
            return Err(Error::Numerical(format!(
                "mode {b} has squared frequency {omega_sq} <= 0: the tree is unstable"
            )));
        }
        let freq = omega_sq.sqrt();
        let v = eig.eigenvectors[(root, b)];
        modes.push(Mode {
            frequency: freq,
            weight: scale * v * v / freq,
        });
    }
    modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    Ok(modes)
}

/// Σ_b w_b·sin(Ω_b τ) on `grid`.
pub fn oracle_time_kernel(tree: &TreeGraph, params: &Params<f64>, grid: TimeGrid) -> Result<TimeKernel> {
    let modes = mode_decomposition(tree, params)?;
    Ok(modes_to_kernel(&modes, tree.depth, params, grid))
}

pub fn modes_to_kernel(modes: &[Mode], depth: usize, params: &Params<f64>, grid: TimeGrid) -> TimeKernel {
    let values = (0..grid.len)
        .map(|j| {
            let t = grid.at(j);
            modes.iter().map(|md| md.weight * (md.frequency * t).sin()).sum()
        })
        .collect();
    let mut warnings = Vec::new();
    if let Some(t) = reflection_time(params, depth) {
        if grid.t_max() > t {
            warnings.push(format!(
                "grid reaches {} beyond the boundary reflection time {t}: finite-size echoes expected",
                grid.t_max()
            ));
        }
    }
    TimeKernel {
        grid,
        values,
        method: Method::Oracle { modes: modes.len() },
        message_type: MessageType::MType,
        params: *params,
        warnings,
    }
}

/// Round trip from the root to the leaves and back at the fastest group
/// velocity of the symmetric sector, whose dispersion is Ω²(θ) = ω² − a²cosθ.
pub fn reflection_time(params: &Params<f64>, depth: usize) -> Option<f64> {
    let a_sq = params.a_sq?;
    if a_sq <= 0.0 || params.omega_sq <= a_sq {
        return None;
    }
    // the group velocity a²sinθ/(2Ω) has a single maximum in (0, π)
    let velocity = |t: f64| a_sq * t.sin() / (2.0 * (params.omega_sq - a_sq * t.cos()).sqrt());
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if velocity(m1) < velocity(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    Some(2.0 * (depth as f64 + 1.0) / velocity(0.5 * (lo + hi)))
}

/// Time after which the discrete mode spectrum of a depth-`depth` tree
/// dephases back: 2π(d+1)/(λ₊₊ − λ₊₋).
pub fn recurrence_time(params: &Params<f64>, depth: usize) -> Option<f64> {
    let width = params.lambda_pp? - params.lambda_pm?;
    (width > 0.0).then(|| 2.0 * PI * (depth as f64 + 1.0) / width)
}
