//! Dense reference solver for the nonnegative dual QP on small graphs.
//!
//! Used as ground truth for the push solver; shares nothing with it beyond
//! the edge-weight evaluation.

use crate::diffusion::MassVectors;
use crate::error::{Error, Result};
use crate::graph::{EdgeId, Graph};
use crate::weighting::{QueryContext, WeightScheme};

pub const DEFAULT_DENSE_CAP: usize = 200;
const STALL_SWEEPS: usize = 10_000;
const MAX_SWEEPS: usize = 5_000_000;

/// `min_{x ≥ 0} ½ xᵀ L x + xᵀ linear` with `L` stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDual {
    pub n: usize,
    pub laplacian: Vec<f64>,
    /// `T − Δ`.
    pub linear: Vec<f64>,
}

impl DenseDual {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.laplacian[i * self.n + j]
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let row = &self.laplacian[i * self.n..(i + 1) * self.n];
                row.iter().zip(x).map(|(l, xj)| l * xj).sum::<f64>() + self.linear[i]
            })
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut quad = 0.0;
        for i in 0..self.n {
            let row = &self.laplacian[i * self.n..(i + 1) * self.n];
            quad += x[i] * row.iter().zip(x).map(|(l, xj)| l * xj).sum::<f64>();
        }
        0.5 * quad + self.linear.iter().zip(x).map(|(c, xi)| c * xi).sum::<f64>()
    }

    /// `max_v |min(x_v, g_v)|`.
    pub fn kkt_residual(&self, x: &[f64]) -> f64 {
        self.gradient(x)
            .iter()
            .zip(x)
            .map(|(g, xi)| xi.min(*g).abs())
            .fold(0.0, f64::max)
    }

    /// Connected components of the off-diagonal pattern.
    fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if label[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut comp = vec![start];
            label[start] = id;
            let mut k = 0;
            while k < comp.len() {
                let i = comp[k];
                for j in 0..self.n {
                    if j != i && self.at(i, j) != 0.0 && label[j] == usize::MAX {
                        label[j] = id;
                        comp.push(j);
                    }
                }
                k += 1;
            }
            out.push(comp);
        }
        out
    }
}

pub fn assemble_dense(
    g: &Graph,
    scheme: &WeightScheme,
    ctx: &mut QueryContext,
    mass: &MassVectors,
    cap: usize,
) -> Result<DenseDual> {
    let n = g.node_count();
    if n > cap {
        return Err(Error::TooLarge { n, cap });
    }
    let mut laplacian = vec![0.0; n * n];
    for (k, e) in g.edges().iter().enumerate() {
        let w = ctx.weight_by_id(scheme, g, EdgeId(k));
        let (a, b) = (e.u.0, e.v.0);
        laplacian[a * n + a] += w;
        laplacian[b * n + b] += w;
        laplacian[a * n + b] -= w;
        laplacian[b * n + a] -= w;
    }
    let linear = mass
        .sinks
        .iter()
        .zip(&mass.delta)
        .map(|(t, d)| t - d)
        .collect();
    Ok(DenseDual {
        n,
        laplacian,
        linear,
    })
}

/// Cyclic projected coordinate descent with exact coordinate minimization,
/// run until the complementarity residual is at most `tol`.
pub fn solve_nonneg_qp(dd: &DenseDual, tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tolerance must be positive, got {tol}")));
    }
    // On a component with Σ linear < 0 the direction 1_C drives F to −∞.
    for comp in dd.components() {
        let total: f64 = comp.iter().map(|&i| dd.linear[i]).sum();
        let isolated = comp.len() == 1 && dd.at(comp[0], comp[0]) == 0.0;
        if total < 0.0 || (isolated && dd.linear[comp[0]] < 0.0) {
            return Err(Error::Unbounded);
        }
    }

    let n = dd.n;
    let mut x = vec![0.0; n];
    let mut grad = dd.linear.clone();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    for _ in 0..MAX_SWEEPS {
        for v in 0..n {
            let diag = dd.at(v, v);
            if diag == 0.0 {
                continue;
            }
            let next = (x[v] - grad[v] / diag).max(0.0);
            let step = next - x[v];
            if step != 0.0 {
                x[v] = next;
                let row = &dd.laplacian[v * n..(v + 1) * n];
                for (g, l) in grad.iter_mut().zip(row) {
                    *g += l * step;
                }
            }
        }
        // Refresh to keep rounding drift out of the stopping test.
        grad = dd.gradient(&x);
        let residual = grad
            .iter()
            .zip(&x)
            .map(|(g, xi)| xi.min(*g).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(x);
        }
        if residual < best * (1.0 - 1e-12) {
            best = residual;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= STALL_SWEEPS {
                return Err(Error::NoProgress { residual, tol });
            }
        }
    }
    Err(Error::NoProgress {
        residual: dd.kkt_residual(&x),
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::SimilarityKind;
    use crate::graph::{Edge, Node};
    use crate::weighting::SchemeKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn flat() -> WeightScheme {
        WeightScheme::new(SchemeKind::Mean, SimilarityKind::Cosine)
    }

    fn graph(n: usize, edges: Vec<Edge>) -> Graph {
        let nodes = (0..n).map(|i| Node::new(i.to_string(), vec![1.0])).collect();
        Graph::build(nodes, edges).unwrap()
    }

    fn mass(delta: Vec<f64>, sinks: Vec<f64>) -> MassVectors {
        MassVectors { delta, sinks }
    }

    #[test]
    fn two_node_laplacian() {
        let g = graph(2, vec![Edge::weighted(0, 1, 0.7)]);
        let mut ctx = QueryContext::new(vec![1.0]);
        let dd = assemble_dense(&g, &flat(), &mut ctx, &mass(vec![0.0; 2], vec![1.0; 2]), 10).unwrap();
        assert_eq!(dd.laplacian, vec![0.7, -0.7, -0.7, 0.7]);
    }

    #[test]
    fn triangle_laplacian() {
        let g = graph(3, vec![Edge::new(0, 1), Edge::new(1, 2), Edge::new(0, 2)]);
        let mut ctx = QueryContext::new(vec![1.0]);
        let dd = assemble_dense(&g, &flat(), &mut ctx, &mass(vec![0.0; 3], vec![1.0; 3]), 10).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(dd.at(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn quadratic_form_is_edge_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 12;
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.3) {
                    edges.push(Edge::weighted(a, b, rng.random_range(0.1..2.0)));
                }
            }
        }
        let g = graph(n, edges);
        let mut ctx = QueryContext::new(vec![1.0]);
        let dd = assemble_dense(&g, &flat(), &mut ctx, &mass(vec![0.0; n], vec![0.0; n]), 50).unwrap();
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| dd.at(i, j)).sum();
            assert!(row_sum.abs() < 1e-12);
            for j in 0..n {
                assert_eq!(dd.at(i, j), dd.at(j, i));
                if i != j {
                    assert!(dd.at(i, j) <= 0.0);
                }
            }
        }
        for _ in 0..5 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let edge_sum: f64 = g
                .edges()
                .iter()
                .map(|e| e.base_weight * (x[e.u.0] - x[e.v.0]).powi(2))
                .sum();
            assert!((2.0 * dd.objective(&x) - edge_sum).abs() < 1e-10);
        }
    }

    #[test]
    fn too_large() {
        let g = graph(3, vec![]);
        let mut ctx = QueryContext::new(vec![1.0]);
        let r = assemble_dense(&g, &flat(), &mut ctx, &mass(vec![0.0; 3], vec![0.0; 3]), 2);
        assert_eq!(r, Err(Error::TooLarge { n: 3, cap: 2 }));
    }

    #[test]
    fn nonnegative_linear_gives_zero() {
        let dd = DenseDual {
            n: 2,
            laplacian: vec![1.0, -1.0, -1.0, 1.0],
            linear: vec![0.5, 2.0],
        };
        assert_eq!(solve_nonneg_qp(&dd, 1e-12).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn two_node_kkt_closed_form() {
        // Δ = [3, 0], T = [1, 1], w = 1. Guess supp = {0}: g_0 = x_0 − 2 = 0
        // gives x_0 = 2, and g_1 = −x_0 + 1 = −1 < 0 breaks KKT. Both active:
        // [1 −1; −1 1] x = [2; −1] is singular with inconsistent sum, so the
        // total mass 3 exceeds total capacity 2 and the problem is unbounded.
        let dd = DenseDual {
            n: 2,
            laplacian: vec![1.0, -1.0, -1.0, 1.0],
            linear: vec![-2.0, 1.0],
        };
        assert_eq!(solve_nonneg_qp(&dd, 1e-12), Err(Error::Unbounded));
        // With T = [1, 2]: supp = {0, 1} would need x_0 − x_1 = 2 and
        // x_1 − x_0 = −2, i.e. a family; the least solution has x_1 = 0,
        // x_0 = 2 and g_1 = −2 + 2 = 0.
        let dd = DenseDual {
            linear: vec![-2.0, 2.0],
            ..dd
        };
        let x = solve_nonneg_qp(&dd, 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10 && x[1].abs() < 1e-10, "{x:?}");
        // With T = [1, 3] the system is strictly feasible: x_0 = 2, x_1 = 0, g_1 = 1.
        let dd = DenseDual {
            linear: vec![-2.0, 3.0],
            ..dd
        };
        let x = solve_nonneg_qp(&dd, 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-10 && x[1] == 0.0);
    }

    #[test]
    fn local_optimality_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10;
        let mut edges: Vec<Edge> = (1..n).map(|v| Edge::weighted(v - 1, v, rng.random_range(0.2..1.5))).collect();
        edges.push(Edge::weighted(0, 5, 0.8));
        edges.push(Edge::weighted(3, 9, 0.4));
        let g = graph(n, edges);
        let sinks: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
        let mut delta = vec![0.0; n];
        delta[0] = 6.0;
        delta[7] = 2.5;
        let mut ctx = QueryContext::new(vec![1.0]);
        let dd = assemble_dense(&g, &flat(), &mut ctx, &mass(delta, sinks), 50).unwrap();
        let x = solve_nonneg_qp(&dd, 1e-12).unwrap();
        let f_star = dd.objective(&x);
        let grad = dd.gradient(&x);
        for v in 0..n {
            assert!(x[v] >= 0.0 && grad[v] >= -1e-10 && (x[v] * grad[v]).abs() <= 1e-9);
        }
        for _ in 0..100 {
            let y: Vec<f64> = x
                .iter()
                .map(|&xi| (xi + rng.random_range(-0.1..0.1)).max(0.0))
                .collect();
            assert!(dd.objective(&y) >= f_star - 1e-12);
        }
    }
}
