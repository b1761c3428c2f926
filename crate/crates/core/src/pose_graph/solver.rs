use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::residuals::{
    absolute_jacobian, absolute_residual, huber_cost, huber_weight, relative_jacobians, relative_residual, retract,
};
use super::PoseGraph;
use crate::error::{Error, Result};

/// Symmetric positive-definite matrix stored as its lower band.
///
/// Entry `(r, c)` with `c ≤ r ≤ c + b` lives at `data[r·(b+1) + (r − c)]`.
#[derive(Debug, Clone)]
pub(crate) struct BandMatrix {
    n: usize,
    b: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub(crate) fn zeros(n: usize, half_bandwidth: usize) -> Self {
        let b = half_bandwidth.min(n.saturating_sub(1));
        Self {
            n,
            b,
            data: vec![0.0; n * (b + 1)],
        }
    }

    #[inline]
    fn idx(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.b);
        r * (self.b + 1) + (r - c)
    }

    /// Adds `v` at `(r, c)`; only the lower triangle (`c ≤ r`) is stored.
    #[inline]
    pub(crate) fn add(&mut self, r: usize, c: usize, v: f64) {
        let i = self.idx(r, c);
        self.data[i] += v;
    }

    #[cfg(test)]
    pub(crate) fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.b {
            0.0
        } else {
            self.data[self.idx(r, c)]
        }
    }

    pub(crate) fn diagonal(&self, r: usize) -> f64 {
        self.data[self.idx(r, r)]
    }

    /// In-place Cholesky `A = L Lᵀ`. Fails with the index of the first
    /// non-positive pivot.
    pub(crate) fn cholesky(mut self) -> std::result::Result<BandCholesky, usize> {
        let (n, b) = (self.n, self.b);
        for j in 0..n {
            let k0 = j.saturating_sub(b);
            let mut s = self.data[self.idx(j, j)];
            for k in k0..j {
                let l = self.data[self.idx(j, k)];
                s -= l * l;
            }
            if !(s > 0.0) || !s.is_finite() {
                return Err(j);
            }
            let d = s.sqrt();
            let jj = self.idx(j, j);
            self.data[jj] = d;
            for i in (j + 1)..(j + b + 1).min(n) {
                let mut s = self.data[self.idx(i, j)];
                for k in i.saturating_sub(b).max(k0)..j {
                    s -= self.data[self.idx(i, k)] * self.data[self.idx(j, k)];
                }
                let ij = self.idx(i, j);
                self.data[ij] = s / d;
            }
        }
        Ok(BandCholesky { l: self })
    }
}

pub(crate) struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub(crate) fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let (n, b) = (self.l.n, self.l.b);
        let l = &self.l;
        let mut y = rhs.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= l.data[l.idx(i, k)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= l.data[l.idx(k, i)] * y[k];
            }
            y[i] = s / l.data[l.idx(i, i)];
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub tolerance: f64,
    /// Huber loss on absolute edges; `false` gives plain least squares.
    pub robust: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_damping: 1e-4,
            tolerance: 1e-12,
            robust: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub converged: bool,
}

/// Total cost: whitened squared norms of the relative residuals plus the
/// (optionally robustified) whitened squared norms of the absolute residuals.
pub fn total_cost(graph: &PoseGraph, robust: bool) -> f64 {
    let mut cost = 0.0;
    for e in &graph.relative {
        let r = relative_residual(&graph.nodes[e.i], &graph.nodes[e.j], e);
        cost += (r.transpose() * e.information * r)[0];
    }
    for e in &graph.absolute {
        let r = absolute_residual(&graph.nodes[e.i], e);
        let a = (r.transpose() * e.information * r)[0];
        cost += if robust { huber_cost(a, e.huber_delta) } else { a };
    }
    cost
}

/// Maps each free node to the first row of its 6-dimensional state block.
fn state_layout(graph: &PoseGraph) -> (Vec<Option<usize>>, usize) {
    let mut slots = Vec::with_capacity(graph.nodes.len());
    let mut next = 0;
    for n in &graph.nodes {
        if n.fixed {
            slots.push(None);
        } else {
            slots.push(Some(next));
            next += 6;
        }
    }
    (slots, next)
}

fn half_bandwidth(graph: &PoseGraph, slots: &[Option<usize>]) -> usize {
    let gap = graph
        .relative
        .iter()
        .filter_map(|e| match (slots[e.i], slots[e.j]) {
            (Some(a), Some(b)) => Some(a.abs_diff(b) / 6),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    6 * (gap + 1) - 1
}

/// Gauss-Newton normal equations with IRLS weights on the absolute edges.
fn normal_equations(graph: &PoseGraph, slots: &[Option<usize>], dim: usize, b: usize, robust: bool) -> (BandMatrix, DVector<f64>) {
    let mut h = BandMatrix::zeros(dim, b);
    let mut g = DVector::zeros(dim);
    let add_block = |h: &mut BandMatrix, r0: usize, c0: usize, m: &nalgebra::Matrix6<f64>| {
        for r in 0..6 {
            for c in 0..6 {
                let (rr, cc) = (r0 + r, c0 + c);
                if cc <= rr {
                    h.add(rr, cc, m[(r, c)]);
                }
            }
        }
    };
    for e in &graph.relative {
        let (ni, nj) = (&graph.nodes[e.i], &graph.nodes[e.j]);
        let r = relative_residual(ni, nj, e);
        let (ji, jj) = relative_jacobians(ni, nj, e);
        let w = e.information;
        let blocks = [(slots[e.i], ji), (slots[e.j], jj)];
        for (sa, ja) in &blocks {
            let Some(a) = sa else { continue };
            let ga = ja.transpose() * w * r;
            for k in 0..6 {
                g[a + k] += ga[k];
            }
            for (sb, jb) in &blocks {
                let Some(bb) = sb else { continue };
                if bb <= a {
                    add_block(&mut h, *a, *bb, &(ja.transpose() * w * jb));
                }
            }
        }
    }
    let j = absolute_jacobian();
    for e in &graph.absolute {
        let Some(a) = slots[e.i] else { continue };
        let r = absolute_residual(&graph.nodes[e.i], e);
        let sq = (r.transpose() * e.information * r)[0];
        let wt = if robust { huber_weight(sq, e.huber_delta) } else { 1.0 };
        let hb = j.transpose() * e.information * j * wt;
        add_block(&mut h, a, a, &hb);
        let gb = j.transpose() * e.information * r * wt;
        for k in 0..6 {
            g[a + k] += gb[k];
        }
    }
    (h, g)
}

/// Levenberg-Marquardt on the node manifold.
///
/// Every iteration builds the IRLS-weighted normal equations, damps them with
/// `μ·max(H_ii, 1e-9)` on the diagonal and solves the banded system. Fails
/// with [`Error::Singular`] when a free node touches no edge or the damped
/// system cannot be factored. A step is
/// kept only when it lowers the total cost; otherwise `μ` grows tenfold.
pub fn optimize(graph: &mut PoseGraph, options: &OptimizeOptions) -> Result<OptimizeReport> {
    if graph.absolute.is_empty() && graph.nodes.iter().all(|n| !n.fixed) {
        return Err(Error::GaugeFree);
    }
    let (slots, dim) = state_layout(graph);
    let initial_cost = total_cost(graph, options.robust);
    let mut report = OptimizeReport {
        iterations: 0,
        initial_cost,
        final_cost: initial_cost,
        cost_history: vec![initial_cost],
        converged: false,
    };
    if dim == 0 {
        report.converged = true;
        return Ok(report);
    }
    let b = half_bandwidth(graph, &slots);
    let mut mu = options.initial_damping;
    let mut cost = initial_cost;
    let mut linearization = Some(normal_equations(graph, &slots, dim, b, options.robust));
    for it in 1..=options.max_iterations {
        report.iterations = it;
        if cost == 0.0 {
            report.converged = true;
            break;
        }
        let (h, g) = linearization.take().expect("linearization is rebuilt after each accepted step");
        let mut damped = h.clone();
        for (node, slot) in slots.iter().enumerate() {
            let Some(s) = *slot else { continue };
            if (s..s + 6).all(|r| h.diagonal(r) == 0.0) {
                return Err(Error::Singular(format!("node {node} is not constrained by any edge")));
            }
            for r in s..s + 6 {
                // A component no edge observes (e.g. the attitude of a node
                // held only by an absolute edge) is kept where it is.
                let d = h.diagonal(r);
                damped.add(r, r, if d == 0.0 { 1.0 } else { mu * d.max(1e-9) });
            }
        }
        let step = match damped.cholesky() {
            Ok(chol) => Some(-chol.solve(&g)),
            Err(pivot) if mu > 1e10 => {
                return Err(Error::Singular(format!("non-positive pivot at state row {pivot}")));
            }
            Err(_) => None,
        };
        let accepted = step.and_then(|delta| {
            let trial: Vec<_> = graph
                .nodes
                .iter()
                .zip(&slots)
                .map(|(n, s)| match s {
                    Some(s) => retract(&n.pose, &Vector6::from_iterator(delta.rows(*s, 6).iter().copied())),
                    None => n.pose,
                })
                .collect();
            let saved: Vec<_> = graph.nodes.iter().map(|n| n.pose).collect();
            for (n, p) in graph.nodes.iter_mut().zip(&trial) {
                n.pose = *p;
            }
            let new_cost = total_cost(graph, options.robust);
            if new_cost < cost {
                Some(new_cost)
            } else {
                for (n, p) in graph.nodes.iter_mut().zip(saved) {
                    n.pose = p;
                }
                None
            }
        });
        match accepted {
            Some(new_cost) => {
                let decrease = (cost - new_cost) / cost;
                cost = new_cost;
                report.cost_history.push(cost);
                mu = (mu * 0.1).max(1e-15);
                if decrease < options.tolerance {
                    report.converged = true;
                    break;
                }
                linearization = Some(normal_equations(graph, &slots, dim, b, options.robust));
            }
            None => {
                mu *= 10.0;
                if mu > 1e12 {
                    // No descent direction left at this precision.
                    report.converged = true;
                    break;
                }
                linearization = Some((h, g));
            }
        }
    }
    report.final_cost = cost;
    Ok(report)
}
