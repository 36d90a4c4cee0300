use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    /// `ξ = ±1` with weight ½ per axis.
    #[default]
    Binary,
    /// Three-point Gauss–Hermite: `0, ±√3` with weights `2/3, 1/6`.
    GaussHermite3,
}

impl QuadratureKind {
    fn axis(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            QuadratureKind::Binary => (vec![-1.0, 1.0], vec![0.5, 0.5]),
            QuadratureKind::GaussHermite3 => {
                let r = 3f64.sqrt();
                (vec![-r, 0.0, r], vec![1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])
            }
        }
    }
}

/// Product quadrature over `R^r`, nodes in lexicographic order (first axis most significant).
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub dim: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn new(kind: QuadratureKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("noise dimension must be positive"));
        }
        let (xs, ws) = kind.axis();
        let mut nodes = vec![Vec::new()];
        let mut weights = vec![1.0];
        for _ in 0..dim {
            let mut next_nodes = Vec::with_capacity(nodes.len() * xs.len());
            let mut next_weights = Vec::with_capacity(nodes.len() * xs.len());
            for (node, w) in nodes.iter().zip(&weights) {
                for (x, v) in xs.iter().zip(&ws) {
                    let mut n = node.clone();
                    n.push(*x);
                    next_nodes.push(n);
                    next_weights.push(w * v);
                }
            }
            nodes = next_nodes;
            weights = next_weights;
        }
        let q = Quadrature { dim, nodes, weights };
        q.check_moments(1e-12)?;
        Ok(q)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ w_j v_j` over values in node order, computed as `v_0 + Σ w_j (v_j - v_0)`
    /// so that equal values come back exactly whatever the weights.
    pub fn expect(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        expect(&self.weights, values)
    }

    /// Unit mass, zero mean and identity covariance within `tol`.
    pub fn check_moments(&self, tol: f64) -> Result<()> {
        let mass: f64 = self.weights.iter().sum();
        if (mass - 1.0).abs() > tol || self.weights.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::domain(format!("quadrature weights sum to {mass}")));
        }
        for i in 0..self.dim {
            let mean: f64 = self.nodes.iter().zip(&self.weights).map(|(n, w)| w * n[i]).sum();
            if mean.abs() > tol {
                return Err(Error::domain(format!("quadrature mean {mean} on axis {i}")));
            }
            for j in 0..self.dim {
                let cov: f64 = self.nodes.iter().zip(&self.weights).map(|(n, w)| w * n[i] * n[j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (cov - target).abs() > tol {
                    return Err(Error::domain(format!("quadrature covariance {cov} at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn expect(weights: &[f64], values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter().zip(weights);
    let Some((v0, _)) = it.next() else {
        return 0.0;
    };
    v0 + it.map(|(v, w)| w * (v - v0)).sum::<f64>()
}
