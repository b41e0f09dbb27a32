//! Cross-view alignment: an affine map from instance space to ontology
//! space trained with a margin loss over `instance_of` links.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::impl_params;

/// `f(u) = W u + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}
impl_params!(Mapping { weight, bias });

impl Mapping {
    /// Glorot-uniform weight, zero bias.
    pub fn new(dim: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (2.0 * dim as f64)).sqrt();
        Mapping {
            weight: Array2::from_shape_simple_fn((dim, dim), || rng.gen_range(-a..a)),
            bias: Array1::zeros(dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Mapping {
            weight: Array2::eye(dim),
            bias: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }
}

pub fn map_to_ontology(u: ArrayView1<f64>, mapping: &Mapping) -> Result<Array1<f64>> {
    if u.len() != mapping.weight.ncols() {
        return Err(Error::ShapeMismatch {
            field: "mapping input".to_string(),
            expected: vec![mapping.weight.ncols()],
            found: vec![u.len()],
        });
    }
    Ok(mapping.weight.dot(&u) + &mapping.bias)
}

/// Draws `n_neg` concepts uniformly from those that are not gold tails of
/// the head.
pub fn sample_negatives(
    head: u32,
    n_concepts: usize,
    n_neg: usize,
    golds: &BTreeSet<u32>,
    rng: &mut impl Rng,
) -> Result<Vec<u32>> {
    let n_gold = golds.iter().filter(|&&g| (g as usize) < n_concepts).count();
    if n_concepts <= n_gold {
        return Err(Error::NoNegative {
            head,
            concepts: n_concepts,
        });
    }
    let mut out = Vec::with_capacity(n_neg);
    // Rejection sampling while golds are a minority, enumeration otherwise.
    if 2 * n_gold < n_concepts {
        while out.len() < n_neg {
            let c = rng.gen_range(0..n_concepts) as u32;
            if !golds.contains(&c) {
                out.push(c);
            }
        }
    } else {
        let pool: Vec<u32> = (0..n_concepts as u32).filter(|c| !golds.contains(c)).collect();
        out.extend((0..n_neg).map(|_| pool[rng.gen_range(0..pool.len())]));
    }
    Ok(out)
}

/// One positive link with its sampled negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossPair {
    pub head: u32,
    pub positive: u32,
    pub negatives: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBatch {
    pub pairs: Vec<CrossPair>,
    pub margin: f64,
}

impl CrossBatch {
    pub fn n_terms(&self) -> usize {
        self.pairs.iter().map(|p| p.negatives.len()).sum()
    }
}

/// Gradients of the cross-view loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossGrad {
    /// Same shape as the instance table; nonzero only on referenced heads.
    pub instance: Array2<f64>,
    /// Same shape as the ontology table; nonzero only on referenced concepts.
    pub ontology: Array2<f64>,
    pub mapping: Mapping,
}

fn dist(a: &Array1<f64>, b: ArrayView1<f64>) -> (f64, Array1<f64>) {
    let diff = a - &b;
    (diff.dot(&diff).sqrt(), diff)
}

/// Mean over (positive, negative) pairs of
/// `max(0, γ + ‖f(u_h) − o_t‖ − ‖f(u_h) − o_t'‖)`.
pub fn cross_view_loss(
    batch: &CrossBatch,
    instance: &Array2<f64>,
    ontology: &Array2<f64>,
    mapping: &Mapping,
) -> Result<f64> {
    Ok(cross_view_loss_grad(batch, instance, ontology, mapping)?.0)
}

pub fn cross_view_loss_grad(
    batch: &CrossBatch,
    instance: &Array2<f64>,
    ontology: &Array2<f64>,
    mapping: &Mapping,
) -> Result<(f64, CrossGrad)> {
    let mut grad = CrossGrad {
        instance: Array2::zeros(instance.raw_dim()),
        ontology: Array2::zeros(ontology.raw_dim()),
        mapping: Mapping {
            weight: Array2::zeros(mapping.weight.raw_dim()),
            bias: Array1::zeros(mapping.bias.len()),
        },
    };
    let n = batch.n_terms();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / n as f64;
    let mut total = 0.0;
    for pair in &batch.pairs {
        let h = pair.head as usize;
        let f = map_to_ontology(instance.row(h), mapping)?;
        let (dp, diff_p) = dist(&f, ontology.row(pair.positive as usize));
        let mut df = Array1::zeros(f.len());
        for &neg in &pair.negatives {
            let (dn, diff_n) = dist(&f, ontology.row(neg as usize));
            let term = batch.margin + dp - dn;
            if term <= 0.0 {
                continue;
            }
            total += term;
            if dp > 0.0 {
                let g = &diff_p * (scale / dp);
                df += &g;
                let mut row = grad.ontology.row_mut(pair.positive as usize);
                row -= &g;
            }
            if dn > 0.0 {
                let g = &diff_n * (scale / dn);
                df -= &g;
                let mut row = grad.ontology.row_mut(neg as usize);
                row += &g;
            }
        }
        if df.iter().all(|x| *x == 0.0) {
            continue;
        }
        let u = instance.row(h);
        for (c, &dfc) in df.iter().enumerate() {
            grad.mapping.weight.row_mut(c).scaled_add(dfc, &u);
        }
        grad.mapping.bias += &df;
        let mut row = grad.instance.row_mut(h);
        row += &mapping.weight.t().dot(&df);
    }
    Ok((total * scale, grad))
}

/// `-‖f(u) − o_c‖` for every concept `c`; higher is better.
pub fn et_scores(u: ArrayView1<f64>, ontology: &Array2<f64>, mapping: &Mapping) -> Result<Vec<f64>> {
    let f = map_to_ontology(u, mapping)?;
    Ok(ontology.rows().into_iter().map(|o| -dist(&f, o).0).collect())
}
