//! Alternating optimization of the two masked losses and the weighted
//! cross-view loss.
//!
//! Each step visits the three sources in turn (instance batch, ontology
//! batch, link batch) and applies one Adam update to the tensors that
//! source touches. An epoch lasts as long as the largest source; the
//! smaller ones wrap around.

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Ablation, TrainConfig};
use crate::cross::{cross_view_loss_grad, sample_negatives, CrossBatch, CrossPair};
use crate::dataset::{gold_concepts, CrossLink, DhkgDataset, View};
use crate::encoder::{generate_masked_samples, FactBatch, MaskedSample};
use crate::error::{Error, Result};
use crate::model::{apply_ablation, DhgeModel, Hypergraphs, ModelShape};
use crate::params::{zeros_like, Adam, UpdateMode};
use crate::rng::{mix, seeded, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    /// All three losses.
    Joint,
    /// Masked losses only.
    Intra,
    /// Mapping only, on frozen tables.
    Mapping,
}

/// One line of the epoch log. Losses are means over the epoch's batches.
/// Wall time is kept by the [`Trainer`], so records are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub loss_instance: Option<f64>,
    pub loss_ontology: Option<f64>,
    pub loss_cross: Option<f64>,
    pub overall: f64,
}

/// Everything a checkpoint stores.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub shape: ModelShape,
    pub model: DhgeModel,
    pub optimizer: Adam,
    pub epochs_done: usize,
    pub log: Vec<EpochRecord>,
}

pub struct Trainer<'a> {
    pub state: TrainState,
    data: &'a DhkgDataset,
    graphs: Hypergraphs,
    instance_samples: Vec<MaskedSample>,
    ontology_samples: Vec<MaskedSample>,
    links: Vec<CrossLink>,
    golds: HashMap<u32, BTreeSet<u32>>,
    replay_dir: Option<PathBuf>,
    epoch_seconds: Vec<f64>,
}

fn n_batches(items: usize, batch: usize) -> usize {
    items.div_ceil(batch)
}

/// Batch `step` of a shuffled source, wrapping when the source is shorter
/// than the epoch.
fn cyclic_batch<T>(order: &[T], step: usize, batch: usize) -> &[T] {
    let n = n_batches(order.len(), batch);
    let b = step % n;
    &order[b * batch..((b + 1) * batch).min(order.len())]
}

impl<'a> Trainer<'a> {
    pub fn new(config: TrainConfig, data: &'a DhkgDataset) -> Result<Self> {
        config.validate()?;
        let shape = ModelShape::of(data);
        let model = apply_ablation(&config, shape);
        let mut optimizer = Adam::new(config.learning_rate);
        optimizer.clip = config.clip;
        let samples = |view: View| -> Vec<MaskedSample> {
            let v = data.view(view);
            v.facts
                .train
                .iter()
                .flat_map(|f| generate_masked_samples(f, &v.vocab))
                .collect()
        };
        let golds = if config.strict_train {
            gold_concepts(&data.links.train)
        } else {
            data.gold_concepts()
        };
        Ok(Trainer {
            instance_samples: samples(View::Instance),
            ontology_samples: samples(View::Ontology),
            links: data.links.train.clone(),
            graphs: Hypergraphs::from_train(data),
            golds,
            data,
            replay_dir: None,
            epoch_seconds: Vec::new(),
            state: TrainState {
                config,
                shape,
                model,
                optimizer,
                epochs_done: 0,
                log: Vec::new(),
            },
        })
    }

    /// Where batches with a non-finite loss are written.
    pub fn with_replay_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.replay_dir = Some(dir.into());
        self
    }

    pub fn graphs(&self) -> &Hypergraphs {
        &self.graphs
    }

    pub fn data(&self) -> &DhkgDataset {
        self.data
    }

    /// Runs the configured schedule to completion.
    pub fn run(&mut self) -> Result<()> {
        let epochs = self.state.config.epochs;
        if self.state.config.ablation == Ablation::NoJl {
            for epoch in 1..=epochs {
                self.epoch(Phase::Intra, epoch)?;
            }
            for epoch in 1..=epochs {
                self.epoch(Phase::Mapping, epoch)?;
            }
        } else {
            for epoch in 1..=epochs {
                self.epoch(Phase::Joint, epoch)?;
            }
        }
        Ok(())
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    /// Wall time of every epoch run so far, parallel to the state's log.
    pub fn epoch_seconds(&self) -> &[f64] {
        &self.epoch_seconds
    }

    /// One pass of `phase`; appends and returns its log record.
    pub fn epoch(&mut self, phase: Phase, epoch: usize) -> Result<EpochRecord> {
        let start = Instant::now();
        let cfg = self.state.config.clone();
        let bs = cfg.batch_size;
        let salt = mix(cfg.seed, self.state.epochs_done as u64 + 1);
        let mut shuffle = seeded(salt, streams::SHUFFLE);
        let mut negatives = seeded(salt, streams::NEGATIVES);

        let mut inst: Vec<usize> = (0..self.instance_samples.len()).collect();
        let mut onto: Vec<usize> = (0..self.ontology_samples.len()).collect();
        let mut links = self.links.clone();
        inst.shuffle(&mut shuffle);
        onto.shuffle(&mut shuffle);
        links.shuffle(&mut shuffle);

        let use_intra = phase != Phase::Mapping;
        let use_cross = phase != Phase::Intra;
        let counts = [
            if use_intra { n_batches(inst.len(), bs) } else { 0 },
            if use_intra { n_batches(onto.len(), bs) } else { 0 },
            if use_cross { n_batches(links.len(), bs) } else { 0 },
        ];
        let steps = counts.iter().copied().max().unwrap_or(0);
        let mut sums = [0.0; 3];
        for step in 0..steps {
            if counts[0] > 0 {
                let batch: Vec<MaskedSample> = cyclic_batch(&inst, step, bs)
                    .iter()
                    .map(|&i| self.instance_samples[i].clone())
                    .collect();
                sums[0] += self.intra_step(View::Instance, &batch, epoch, step)?;
            }
            if counts[1] > 0 {
                let batch: Vec<MaskedSample> = cyclic_batch(&onto, step, bs)
                    .iter()
                    .map(|&i| self.ontology_samples[i].clone())
                    .collect();
                sums[1] += self.intra_step(View::Ontology, &batch, epoch, step)?;
            }
            if counts[2] > 0 {
                let batch = self.cross_batch(cyclic_batch(&links, step, bs), &mut negatives)?;
                sums[2] += self.cross_step(&batch, phase == Phase::Mapping, epoch, step)?;
            }
        }
        let mean = |i: usize| (counts[i] > 0).then(|| sums[i] / steps as f64);
        let (li, lo, lc) = (mean(0), mean(1), mean(2));
        let weight = if phase == Phase::Mapping { 1.0 } else { cfg.omega };
        let overall = li.unwrap_or(0.0) + lo.unwrap_or(0.0) + weight * lc.unwrap_or(0.0);
        let record = EpochRecord {
            phase,
            epoch,
            loss_instance: li,
            loss_ontology: lo,
            loss_cross: lc,
            overall,
        };
        log::info!(
            "phase={} epoch={} loss_instance={} loss_ontology={} loss_cross={} overall={:.6} wall_time_s={:.3}",
            serde_json::to_string(&phase).unwrap_or_default().trim_matches('"'),
            epoch,
            fmt_loss(li),
            fmt_loss(lo),
            fmt_loss(lc),
            overall,
            start.elapsed().as_secs_f64()
        );
        self.epoch_seconds.push(start.elapsed().as_secs_f64());
        self.state.epochs_done += 1;
        self.state.log.push(record.clone());
        Ok(record)
    }

    /// Draws negatives for every link of a batch.
    pub fn cross_batch(&self, links: &[CrossLink], rng: &mut impl Rng) -> Result<CrossBatch> {
        let n_concepts = self.state.shape.ontology_entities;
        let empty = BTreeSet::new();
        let pairs = links
            .iter()
            .map(|l| {
                let golds = self.golds.get(&l.head).unwrap_or(&empty);
                Ok(CrossPair {
                    head: l.head,
                    positive: l.tail,
                    negatives: sample_negatives(l.head, n_concepts, self.state.config.n_neg, golds, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CrossBatch {
            pairs,
            margin: self.state.config.margin,
        })
    }

    fn non_finite(&self, source: &'static str, epoch: usize, step: usize, batch: &impl Serialize) -> Error {
        let json = serde_json::to_string(batch).unwrap_or_default();
        let replay = match &self.replay_dir {
            Some(dir) => {
                let path = dir.join(format!("replay-{source}-epoch{epoch}-step{step}.json"));
                match std::fs::write(&path, &json) {
                    Ok(()) => path.display().to_string(),
                    Err(_) => json,
                }
            }
            None => json,
        };
        Error::NonFiniteLoss {
            source_name: source,
            epoch,
            step,
            replay,
        }
    }

    /// One masked-prediction update of a view's encoder.
    pub fn intra_step(&mut self, view: View, samples: &[MaskedSample], epoch: usize, step: usize) -> Result<f64> {
        let batch = FactBatch::from_samples(samples);
        let n_entities = self.state.shape.n_entities(view);
        let eps = self.state.config.label_smoothing;
        let (loss, grad) = self
            .state
            .model
            .view(view)
            .encoder
            .loss_and_grad(&batch, n_entities, eps)?;
        if !loss.is_finite() {
            return Err(self.non_finite(view.name(), epoch, step, &batch));
        }
        let prefix = format!("{}.encoder", view.name());
        let encoder = &mut self.state.model.view_mut(view).encoder;
        self.state.optimizer.step(&prefix, encoder, &grad, &|name| {
            Some(if name.ends_with(".embedding") {
                UpdateMode::Rows
            } else {
                UpdateMode::Dense
            })
        });
        Ok(loss)
    }

    /// One cross-view update. With `mapping_only` the tables and
    /// propagation stay frozen and the loss is unweighted.
    pub fn cross_step(&mut self, batch: &CrossBatch, mapping_only: bool, epoch: usize, step: usize) -> Result<f64> {
        let cfg = &self.state.config;
        let act = cfg.activation;
        let weight = if mapping_only { 1.0 } else { cfg.omega };
        let model = &self.state.model;
        let shape = self.state.shape;
        let reps_i = model
            .instance
            .representations(&self.graphs.instance, shape.instance_entities, act)?;
        let reps_o = model
            .ontology
            .representations(&self.graphs.ontology, shape.ontology_entities, act)?;
        let (loss, grad) = cross_view_loss_grad(batch, &reps_i.table, &reps_o.table, &model.mapping)?;
        if !loss.is_finite() {
            return Err(self.non_finite("cross", epoch, step, batch));
        }
        if weight == 0.0 {
            return Ok(loss);
        }
        let mut g_map = grad.mapping;
        g_map.weight *= weight;
        g_map.bias *= weight;
        self.state
            .optimizer
            .step("mapping", &mut self.state.model.mapping, &g_map, &|_| {
                Some(UpdateMode::Dense)
            });
        if mapping_only {
            return Ok(loss);
        }
        for (view, reps, d_table) in [
            (View::Instance, &reps_i, grad.instance),
            (View::Ontology, &reps_o, grad.ontology),
        ] {
            let d_table = d_table * weight;
            let vm = self.state.model.view(view);
            let mut g_prop = vm.propagation.as_ref().map(zeros_like);
            let d_u0 = vm.representations_backward(self.graphs.get(view), reps, &d_table, act, g_prop.as_mut());
            let mut g_emb = Array2::zeros(vm.encoder.embedding.raw_dim());
            g_emb.slice_mut(s![..d_u0.nrows(), ..]).assign(&d_u0);
            let vm = self.state.model.view_mut(view);
            self.state.optimizer.step(
                &format!("{}.encoder.embedding", view.name()),
                &mut vm.encoder.embedding,
                &g_emb,
                &|_| Some(UpdateMode::Rows),
            );
            if let (Some(p), Some(g)) = (vm.propagation.as_mut(), g_prop) {
                self.state
                    .optimizer
                    .step(&format!("{}.propagation", view.name()), p, &g, &|_| {
                        Some(UpdateMode::Dense)
                    });
            }
        }
        Ok(loss)
    }
}

fn fmt_loss(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"))
}

/// Trains a fresh model on the train splits of `data`.
pub fn train(config: TrainConfig, data: &DhkgDataset) -> Result<TrainState> {
    let mut trainer = Trainer::new(config, data)?;
    trainer.run()?;
    Ok(trainer.into_state())
}
