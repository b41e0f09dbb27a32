//! Hypergraph propagation over one view's entity table.
//!
//! Every fact is a hyperedge over its distinct entity-role tokens. The
//! normalized propagation matrix `Dv^-1/2 H De^-1 Hᵀ Dv^-1/2` smooths the
//! embedding table through `K` residual layers.

use std::collections::BTreeSet;
use std::str::FromStr;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::IdFact;
use crate::params::impl_params;

/// Below this many nodes the propagation matrix is kept dense.
pub const DENSE_LIMIT: usize = 1000;

/// Node-by-hyperedge membership of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    pub n_nodes: usize,
    /// Sorted distinct nodes of each hyperedge.
    pub edges: Vec<Vec<usize>>,
    pub node_degree: Vec<f64>,
    pub edge_degree: Vec<f64>,
}

impl Incidence {
    pub fn from_edges(n_nodes: usize, edges: Vec<Vec<usize>>) -> Self {
        let edges: Vec<Vec<usize>> = edges
            .into_iter()
            .map(|e| e.into_iter().collect::<BTreeSet<_>>().into_iter().collect())
            .collect();
        let mut node_degree = vec![0.0; n_nodes];
        for e in &edges {
            for &v in e {
                node_degree[v] += 1.0;
            }
        }
        let edge_degree = edges.iter().map(|e| e.len() as f64).collect();
        Incidence {
            n_nodes,
            edges,
            node_degree,
            edge_degree,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Dense 0/1 matrix `n_nodes × n_edges`.
    pub fn dense(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.n_nodes, self.n_edges()));
        for (j, e) in self.edges.iter().enumerate() {
            for &v in e {
                h[[v, j]] = 1.0;
            }
        }
        h
    }
}

/// One hyperedge per fact over its entity-role ids (`0..n_entities`).
pub fn build_incidence(facts: &[IdFact], n_entities: usize) -> Incidence {
    let edges = facts
        .iter()
        .map(|f| f.entity_elements().map(|&e| e as usize).collect())
        .collect();
    Incidence::from_edges(n_entities, edges)
}

/// Compressed sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for r in 0..self.n {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = self.values[k];
            }
        }
        out
    }

    fn dot(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, x.ncols()));
        for r in 0..self.n {
            let mut row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                row.scaled_add(self.values[k], &x.row(self.indices[k]));
            }
        }
        out
    }
}

/// Symmetric normalized propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum PropagationMatrix {
    Dense(Array2<f64>),
    Sparse(Csr),
}

impl PropagationMatrix {
    pub fn n(&self) -> usize {
        match self {
            PropagationMatrix::Dense(w) => w.nrows(),
            PropagationMatrix::Sparse(c) => c.n,
        }
    }

    pub fn dot(&self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            PropagationMatrix::Dense(w) => w.dot(x),
            PropagationMatrix::Sparse(c) => c.dot(x),
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            PropagationMatrix::Dense(w) => w.clone(),
            PropagationMatrix::Sparse(c) => c.to_dense(),
        }
    }
}

fn inv_sqrt(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        1.0 / x.sqrt()
    }
}

fn inv(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        1.0 / x
    }
}

/// Dense `Dv^-1/2 H De^-1 Hᵀ Dv^-1/2`, with zero degrees inverting to zero.
pub fn propagation_matrix_dense(inc: &Incidence) -> Array2<f64> {
    let n = inc.n_nodes;
    let dv: Vec<f64> = inc.node_degree.iter().map(|&d| inv_sqrt(d)).collect();
    let mut w = Array2::zeros((n, n));
    for (e, nodes) in inc.edges.iter().enumerate() {
        let de = inv(inc.edge_degree[e]);
        for &a in nodes {
            for &b in nodes {
                w[[a, b]] += dv[a] * de * dv[b];
            }
        }
    }
    w
}

/// Sparse form of [`propagation_matrix_dense`].
pub fn propagation_matrix_sparse(inc: &Incidence) -> Csr {
    let n = inc.n_nodes;
    let dv: Vec<f64> = inc.node_degree.iter().map(|&d| inv_sqrt(d)).collect();
    let mut rows: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    for (e, nodes) in inc.edges.iter().enumerate() {
        let de = inv(inc.edge_degree[e]);
        for &a in nodes {
            for &b in nodes {
                *rows[a].entry(b).or_insert(0.0) += dv[a] * de * dv[b];
            }
        }
    }
    let mut csr = Csr {
        n,
        indptr: vec![0],
        indices: Vec::new(),
        values: Vec::new(),
    };
    for row in rows {
        for (c, v) in row {
            csr.indices.push(c);
            csr.values.push(v);
        }
        csr.indptr.push(csr.indices.len());
    }
    csr
}

/// Dense below [`DENSE_LIMIT`] nodes, sparse otherwise.
pub fn propagation_matrix(inc: &Incidence) -> PropagationMatrix {
    if inc.n_nodes < DENSE_LIMIT {
        PropagationMatrix::Dense(propagation_matrix_dense(inc))
    } else {
        PropagationMatrix::Sparse(propagation_matrix_sparse(inc))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(vec![format!("activation: unknown value {other:?}")])),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationLayer {
    pub theta: Array2<f64>,
    pub bias: Array1<f64>,
}
impl_params!(PropagationLayer { theta, bias });

/// Per-layer `d × d` transforms and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub layers: Vec<PropagationLayer>,
}
impl_params!(Propagation { layers });

impl Propagation {
    /// Glorot-uniform transforms, zero biases.
    pub fn new(dim: usize, k: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (2.0 * dim as f64)).sqrt();
        let layers = (0..k)
            .map(|_| PropagationLayer {
                theta: Array2::from_shape_simple_fn((dim, dim), || rng.gen_range(-a..a)),
                bias: Array1::zeros(dim),
            })
            .collect();
        Propagation { layers }
    }

    pub fn zeros(dim: usize, k: usize) -> Self {
        Propagation {
            layers: (0..k)
                .map(|_| PropagationLayer {
                    theta: Array2::zeros((dim, dim)),
                    bias: Array1::zeros(dim),
                })
                .collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

/// Saved inputs of every propagation layer.
pub struct PropagationCache {
    smoothed: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// `U_k = U_{k-1} + σ(W U_{k-1} Θ_k + b_k)` for every layer; returns `U_K`.
pub fn propagate(
    u0: &Array2<f64>,
    w: &PropagationMatrix,
    params: &Propagation,
    act: Activation,
) -> Result<Array2<f64>> {
    Ok(propagate_cached(u0, w, params, act)?.0)
}

pub fn propagate_cached(
    u0: &Array2<f64>,
    w: &PropagationMatrix,
    params: &Propagation,
    act: Activation,
) -> Result<(Array2<f64>, PropagationCache)> {
    if u0.nrows() != w.n() {
        return Err(Error::ShapeMismatch {
            field: "propagation input".to_string(),
            expected: vec![w.n(), u0.ncols()],
            found: u0.shape().to_vec(),
        });
    }
    let mut cache = PropagationCache {
        smoothed: Vec::new(),
        pre: Vec::new(),
    };
    let mut u = u0.clone();
    for (k, layer) in params.layers.iter().enumerate() {
        let m = w.dot(&u);
        let z = m.dot(&layer.theta) + &layer.bias;
        let next = &u + &z.mapv(|x| act.apply(x));
        if !next.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "propagation layer {k} produced a non-finite value"
            )));
        }
        cache.smoothed.push(m);
        cache.pre.push(z);
        u = next;
    }
    Ok((u, cache))
}

/// Gradient of a loss w.r.t. `U_0` given its gradient w.r.t. `U_K`;
/// parameter gradients accumulate into `grad`.
pub fn propagate_backward(
    w: &PropagationMatrix,
    params: &Propagation,
    act: Activation,
    cache: &PropagationCache,
    d_out: &Array2<f64>,
    grad: &mut Propagation,
) -> Array2<f64> {
    let mut du = d_out.clone();
    for k in (0..params.depth()).rev() {
        let dz = &du * &cache.pre[k].mapv(|x| act.derivative(x));
        grad.layers[k].theta += &cache.smoothed[k].t().dot(&dz);
        grad.layers[k].bias += &dz.sum_axis(Axis(0));
        let dm = dz.dot(&params.layers[k].theta.t());
        // W is symmetric, so Wᵀ dM = W dM.
        du += &w.dot(&dm);
    }
    du
}

/// `U = U_0 + U_K`.
pub fn combine(u0: &Array2<f64>, uk: &Array2<f64>) -> Result<Array2<f64>> {
    if u0.shape() != uk.shape() {
        return Err(Error::ShapeMismatch {
            field: "combine".to_string(),
            expected: u0.shape().to_vec(),
            found: uk.shape().to_vec(),
        });
    }
    Ok(u0 + uk)
}

/// A view's hypergraph with its precomputed propagation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewHypergraph {
    pub incidence: Incidence,
    pub matrix: PropagationMatrix,
}

impl ViewHypergraph {
    pub fn new(facts: &[IdFact], n_entities: usize) -> Self {
        let incidence = build_incidence(facts, n_entities);
        let matrix = propagation_matrix(&incidence);
        ViewHypergraph { incidence, matrix }
    }
}
