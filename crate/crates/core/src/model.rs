//! The dual-view model: one masked encoder and one propagation stack per
//! view, plus the cross-view mapping.

use ndarray::{s, Array2};

use crate::config::{Ablation, TrainConfig};
use crate::cross::Mapping;
use crate::dataset::{DhkgDataset, View};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::Result;
use crate::hgnn::{combine, propagate_backward, propagate_cached, Propagation, PropagationCache, ViewHypergraph};
use crate::params::{count, impl_params};
use crate::rng::{mix, seeded, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct ViewModel {
    pub encoder: Encoder,
    /// Absent when hypergraph propagation is ablated.
    pub propagation: Option<Propagation>,
}
impl_params!(ViewModel { encoder, propagation });

#[derive(Debug, Clone, PartialEq)]
pub struct DhgeModel {
    pub instance: ViewModel,
    pub ontology: ViewModel,
    pub mapping: Mapping,
}
impl_params!(DhgeModel {
    instance,
    ontology,
    mapping
});

/// Vocabulary sizes a model is built against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelShape {
    pub instance_vocab: usize,
    pub instance_entities: usize,
    pub ontology_vocab: usize,
    pub ontology_entities: usize,
}

impl ModelShape {
    pub fn of(data: &DhkgDataset) -> Self {
        ModelShape {
            instance_vocab: data.instance.vocab.size(),
            instance_entities: data.instance.vocab.n_entities(),
            ontology_vocab: data.ontology.vocab.size(),
            ontology_entities: data.ontology.vocab.n_entities(),
        }
    }

    pub fn n_entities(&self, view: View) -> usize {
        match view {
            View::Instance => self.instance_entities,
            View::Ontology => self.ontology_entities,
        }
    }
}

/// Builds a freshly initialized model wired for `config.ablation`.
pub fn apply_ablation(config: &TrainConfig, shape: ModelShape) -> DhgeModel {
    let mut enc_config = EncoderConfig::new(config.dim, config.n_heads, config.encoder_layers);
    enc_config.lookup_only = config.ablation == Ablation::NoGe;
    let with_propagation = config.ablation != Ablation::NoHga;
    let view = |vocab: usize, salt: u64| {
        let mut rng = seeded(mix(config.seed, salt), streams::INIT);
        let encoder = Encoder::new(enc_config, vocab, &mut rng);
        let propagation = with_propagation.then(|| Propagation::new(config.dim, config.hypergraph_layers, &mut rng));
        ViewModel { encoder, propagation }
    };
    let instance = view(shape.instance_vocab, 1);
    let ontology = view(shape.ontology_vocab, 2);
    let mapping = Mapping::new(config.dim, &mut seeded(mix(config.seed, 3), streams::INIT));
    DhgeModel {
        instance,
        ontology,
        mapping,
    }
}

/// Entity representations of one view with what is needed to backpropagate.
pub struct Representations {
    pub table: Array2<f64>,
    cache: Option<PropagationCache>,
}

impl ViewModel {
    /// The entity rows of the embedding table.
    pub fn entity_table(&self, n_entities: usize) -> Array2<f64> {
        self.encoder.embedding.slice(s![..n_entities, ..]).to_owned()
    }

    /// `U = U_0 + U_K` over the entity rows, or `U_0` without propagation.
    pub fn representations(
        &self,
        graph: &ViewHypergraph,
        n_entities: usize,
        activation: crate::hgnn::Activation,
    ) -> Result<Representations> {
        let u0 = self.entity_table(n_entities);
        match &self.propagation {
            None => Ok(Representations { table: u0, cache: None }),
            Some(p) => {
                let (uk, cache) = propagate_cached(&u0, &graph.matrix, p, activation)?;
                Ok(Representations {
                    table: combine(&u0, &uk)?,
                    cache: Some(cache),
                })
            }
        }
    }

    /// Gradient w.r.t. the entity rows given `dU`; propagation gradients
    /// accumulate into `grad`.
    pub fn representations_backward(
        &self,
        graph: &ViewHypergraph,
        reps: &Representations,
        d_table: &Array2<f64>,
        activation: crate::hgnn::Activation,
        grad: Option<&mut Propagation>,
    ) -> Array2<f64> {
        match (&self.propagation, &reps.cache, grad) {
            (Some(p), Some(cache), Some(g)) => {
                d_table + &propagate_backward(&graph.matrix, p, activation, cache, d_table, g)
            }
            _ => d_table.clone(),
        }
    }
}

impl DhgeModel {
    pub fn view(&self, view: View) -> &ViewModel {
        match view {
            View::Instance => &self.instance,
            View::Ontology => &self.ontology,
        }
    }

    pub fn view_mut(&mut self, view: View) -> &mut ViewModel {
        match view {
            View::Instance => &mut self.instance,
            View::Ontology => &mut self.ontology,
        }
    }

    pub fn n_params(&self) -> usize {
        count(self)
    }
}

/// Hypergraphs of both views, built from the train split.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraphs {
    pub instance: ViewHypergraph,
    pub ontology: ViewHypergraph,
}

impl Hypergraphs {
    pub fn from_train(data: &DhkgDataset) -> Self {
        Hypergraphs {
            instance: ViewHypergraph::new(&data.instance.facts.train, data.instance.vocab.n_entities()),
            ontology: ViewHypergraph::new(&data.ontology.facts.train, data.ontology.vocab.n_entities()),
        }
    }

    pub fn get(&self, view: View) -> &ViewHypergraph {
        match view {
            View::Instance => &self.instance,
            View::Ontology => &self.ontology,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape() -> ModelShape {
        ModelShape {
            instance_vocab: 12,
            instance_entities: 9,
            ontology_vocab: 7,
            ontology_entities: 5,
        }
    }

    fn config(ablation: Ablation) -> TrainConfig {
        TrainConfig {
            dim: 8,
            n_heads: 2,
            ablation,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn no_hga_drops_exactly_the_propagation_parameters() {
        let full = apply_ablation(&config(Ablation::None), shape());
        let ablated = apply_ablation(&config(Ablation::NoHga), shape());
        let prop = count(&full.instance.propagation) + count(&full.ontology.propagation);
        assert_eq!(prop, 2 * 2 * (8 * 8 + 8));
        assert_eq!(full.n_params() - ablated.n_params(), prop);
    }

    #[test]
    fn no_ge_allocates_no_attention() {
        let m = apply_ablation(&config(Ablation::NoGe), shape());
        assert!(m.instance.encoder.layers.is_empty());
        assert!(m.ontology.encoder.final_norm.is_none());
    }

    #[test]
    fn initialization_is_seeded() {
        let a = apply_ablation(&config(Ablation::None), shape());
        let b = apply_ablation(&config(Ablation::None), shape());
        assert_eq!(a, b);
        let mut other = config(Ablation::None);
        other.seed = 1;
        assert_ne!(a, apply_ablation(&other, shape()));
    }
}
