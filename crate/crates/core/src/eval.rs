//! Filtered ranking for link prediction, entity typing and
//! restricted-candidate prediction.
//!
//! Rank counts the surviving candidates that score strictly higher than
//! the gold, so ties go to the gold.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::cross::et_scores;
use crate::dataset::{gold_concepts, CrossLink, DhkgDataset, Split, View};
use crate::encoder::{FactBatch, FactGraph, MaskedSample};
use crate::error::{Error, Result};
use crate::fact::{IdFact, Role};
use crate::hgnn::Activation;
use crate::model::{DhgeModel, Hypergraphs, ModelShape};
use crate::train::TrainState;
use crate::vocab::Vocabulary;

/// Marks the hidden position in a filter key.
pub const HOLE: u32 = u32::MAX;

/// The fact with `position` replaced by [`HOLE`], in canonical order.
pub fn hole_key(fact: &IdFact, position: usize) -> IdFact {
    let mut key = fact.clone();
    *key.get_mut(position).expect("position inside the fact") = HOLE;
    key.canonical()
}

/// Known completions of every one-hole pattern of a view.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    map: HashMap<IdFact, HashSet<u32>>,
}

impl FilterIndex {
    pub fn build<'a>(facts: impl IntoIterator<Item = &'a IdFact>) -> Self {
        let mut map: HashMap<IdFact, HashSet<u32>> = HashMap::new();
        for f in facts {
            for p in 0..f.len() {
                map.entry(hole_key(f, p)).or_default().insert(*f.get(p).unwrap());
            }
        }
        FilterIndex { map }
    }

    pub fn completions(&self, fact: &IdFact, position: usize) -> Option<&HashSet<u32>> {
        self.map.get(&hole_key(fact, position))
    }
}

/// `1 + |{c ∉ filtered, c ≠ gold : score(c) > score(gold)}|`.
pub fn rank_gold(scores: &[f64], gold: usize, filtered: &HashSet<usize>) -> Result<usize> {
    let Some(&g) = scores.get(gold) else {
        return Err(Error::GoldOutOfRange {
            gold,
            candidates: scores.len(),
        });
    };
    Ok(1 + scores
        .iter()
        .enumerate()
        .filter(|&(c, &s)| c != gold && s > g && !filtered.contains(&c))
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: String,
    pub view: String,
    pub position_class: String,
    pub mrr: f64,
    pub h1: f64,
    pub h3: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub h10: Option<f64>,
    pub n_queries: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    fn labeled(mut self, task: &str, view: &str, class: &str) -> Self {
        self.task = task.to_string();
        self.view = view.to_string();
        self.position_class = class.to_string();
        self
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_json())
    }
}

/// MRR and Hits@k. Empty input gives zero metrics over zero queries.
pub fn metrics_from_ranks(ranks: &[usize], with_h10: bool) -> MetricsReport {
    let n = ranks.len();
    let frac = |k: usize| {
        if n == 0 {
            0.0
        } else {
            ranks.iter().filter(|&&r| r <= k).count() as f64 / n as f64
        }
    };
    let mrr = if n == 0 {
        0.0
    } else {
        ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n as f64
    };
    MetricsReport {
        task: String::new(),
        view: String::new(),
        position_class: String::new(),
        mrr,
        h1: frac(1),
        h3: frac(3),
        h10: with_h10.then(|| frac(10)),
        n_queries: n,
    }
}

/// Read-only scoring over a trained model.
pub struct Predictor<'a> {
    pub model: &'a DhgeModel,
    pub graphs: &'a Hypergraphs,
    pub shape: ModelShape,
    pub activation: Activation,
}

/// Number of masked queries scored per forward pass.
const EVAL_BATCH: usize = 256;

impl<'a> Predictor<'a> {
    pub fn new(state: &'a TrainState, graphs: &'a Hypergraphs) -> Self {
        Predictor {
            model: &state.model,
            graphs,
            shape: state.shape,
            activation: state.config.activation,
        }
    }

    /// Scores of every role-valid candidate (role-local ids) for each
    /// `(fact, position)` query.
    pub fn lp_scores(&self, view: View, vocab: &Vocabulary, queries: &[(IdFact, usize)]) -> Result<Vec<Vec<f64>>> {
        let encoder = &self.model.view(view).encoder;
        let n_entities = self.shape.n_entities(view);
        let mut out = Vec::with_capacity(queries.len());
        for chunk in queries.chunks(EVAL_BATCH) {
            let samples: Vec<MaskedSample> = chunk
                .iter()
                .map(|(f, p)| MaskedSample::new(FactGraph::from_fact(f, vocab), *p))
                .collect();
            let batch = FactBatch::from_samples(&samples);
            let logits = encoder.forward_with(&batch, Some(n_entities))?.logits;
            for (b, s) in samples.iter().enumerate() {
                let range = vocab.role_range(s.role);
                out.push(logits.row(b).slice(ndarray::s![range]).to_vec());
            }
        }
        Ok(out)
    }

    /// Entity representations of both views.
    pub fn representations(&self) -> Result<(Array2<f64>, Array2<f64>)> {
        let i = self.model.instance.representations(
            &self.graphs.instance,
            self.shape.instance_entities,
            self.activation,
        )?;
        let o = self.model.ontology.representations(
            &self.graphs.ontology,
            self.shape.ontology_entities,
            self.activation,
        )?;
        Ok((i.table, o.table))
    }

    /// Typing scores of every concept for each head.
    pub fn et_scores(&self, heads: &[u32]) -> Result<Vec<Vec<f64>>> {
        let (ui, uo) = self.representations()?;
        heads
            .iter()
            .map(|&h| et_scores(ui.row(h as usize), &uo, &self.model.mapping))
            .collect()
    }
}

/// One ranked LP query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankedQuery {
    pub fact: usize,
    pub position: usize,
    pub role: Role,
    pub rank: usize,
}

/// Ranks every position of every fact in `split` of `view`.
pub fn lp_ranks(
    predictor: &Predictor,
    data: &DhkgDataset,
    view: View,
    split: Split,
    raw: bool,
) -> Result<Vec<RankedQuery>> {
    let vd = data.view(view);
    let facts = vd.facts.get(split);
    let index = if raw {
        FilterIndex::default()
    } else {
        FilterIndex::build(vd.facts.all())
    };
    let queries: Vec<(IdFact, usize)> = facts
        .iter()
        .flat_map(|f| (0..f.len()).map(move |p| (f.clone(), p)))
        .collect();
    let owners: Vec<usize> = facts
        .iter()
        .enumerate()
        .flat_map(|(i, f)| std::iter::repeat_n(i, f.len()))
        .collect();
    let scores = predictor.lp_scores(view, &vd.vocab, &queries)?;
    queries
        .iter()
        .zip(scores)
        .zip(owners)
        .map(|(((fact, p), s), owner)| {
            let gold = *fact.get(*p).unwrap();
            let filtered: HashSet<usize> = index
                .completions(fact, *p)
                .map(|set| set.iter().filter(|&&c| c != gold).map(|&c| c as usize).collect())
                .unwrap_or_default();
            Ok(RankedQuery {
                fact: owner,
                position: *p,
                role: Role::at(*p),
                rank: rank_gold(&s, gold as usize, &filtered)?,
            })
        })
        .collect()
}

/// Entity-position and relation-position reports of `split`.
pub fn evaluate_lp(
    predictor: &Predictor,
    data: &DhkgDataset,
    view: View,
    split: Split,
    raw: bool,
) -> Result<(MetricsReport, MetricsReport)> {
    let ranks = lp_ranks(predictor, data, view, split, raw)?;
    let of = |role: Role| {
        ranks
            .iter()
            .filter(|q| q.role == role)
            .map(|q| q.rank)
            .collect::<Vec<_>>()
    };
    let task = format!("lp-{}", view.name());
    Ok((
        metrics_from_ranks(&of(Role::Entity), true).labeled(&task, view.name(), "entity"),
        metrics_from_ranks(&of(Role::Relation), true).labeled(&task, view.name(), "relation"),
    ))
}

/// Ranks of every link in `split` over all concepts.
pub fn et_ranks(predictor: &Predictor, data: &DhkgDataset, split: Split, raw: bool) -> Result<Vec<usize>> {
    let links: &[CrossLink] = data.links.get(split);
    let golds = gold_concepts(data.links.all());
    let heads: Vec<u32> = links.iter().map(|l| l.head).collect();
    let scores = predictor.et_scores(&heads)?;
    links
        .iter()
        .zip(scores)
        .map(|(l, s)| {
            let filtered: HashSet<usize> = if raw {
                HashSet::new()
            } else {
                golds[&l.head]
                    .iter()
                    .filter(|&&c| c != l.tail)
                    .map(|&c| c as usize)
                    .collect()
            };
            rank_gold(&s, l.tail as usize, &filtered)
        })
        .collect()
}

pub fn evaluate_et(predictor: &Predictor, data: &DhkgDataset, split: Split, raw: bool) -> Result<MetricsReport> {
    let ranks = et_ranks(predictor, data, split, raw)?;
    Ok(metrics_from_ranks(&ranks, true).labeled("et", "cross", "entity"))
}

/// Object-position ranks of instance facts in `split`, with candidates
/// limited to `candidates` (instance entity ids).
pub fn restricted_ranks(
    predictor: &Predictor,
    data: &DhkgDataset,
    split: Split,
    candidates: &BTreeSet<u32>,
    raw: bool,
) -> Result<Vec<usize>> {
    let vd = &data.instance;
    let facts = vd.facts.get(split);
    for f in facts {
        if !candidates.contains(&f.object) {
            let token = vd.vocab.entities.token(f.object).unwrap_or("?").to_string();
            return Err(Error::GoldOutsideCandidates(token));
        }
    }
    let index = if raw {
        FilterIndex::default()
    } else {
        FilterIndex::build(vd.facts.all())
    };
    let queries: Vec<(IdFact, usize)> = facts.iter().map(|f| (f.clone(), 2)).collect();
    let scores = predictor.lp_scores(View::Instance, &vd.vocab, &queries)?;
    let pool: Vec<u32> = candidates.iter().copied().collect();
    queries
        .iter()
        .zip(scores)
        .map(|((fact, p), s)| {
            let sub: Vec<f64> = pool.iter().map(|&c| s[c as usize]).collect();
            let gold = pool.binary_search(&fact.object).expect("gold checked above");
            let filtered: HashSet<usize> = match index.completions(fact, *p) {
                Some(set) => pool
                    .iter()
                    .enumerate()
                    .filter(|&(i, c)| i != gold && set.contains(c))
                    .map(|(i, _)| i)
                    .collect(),
                None => HashSet::new(),
            };
            rank_gold(&sub, gold, &filtered)
        })
        .collect()
}

/// MRR, H@1 and H@3 of restricted object prediction.
pub fn evaluate_restricted(
    predictor: &Predictor,
    data: &DhkgDataset,
    split: Split,
    candidates: &BTreeSet<u32>,
    raw: bool,
) -> Result<MetricsReport> {
    let ranks = restricted_ranks(predictor, data, split, candidates, raw)?;
    Ok(metrics_from_ranks(&ranks, false).labeled("restricted", "instance", "entity"))
}

/// Parses a candidate file (one instance entity token per line).
pub fn parse_candidates(text: &str, vocab: &Vocabulary) -> Result<BTreeSet<u32>> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|tok| {
            vocab.entities.id(tok).ok_or_else(|| Error::UnknownToken {
                token: tok.to_string(),
                context: "candidate file".to_string(),
            })
        })
        .collect()
}

/// A scored completion of a one-hole query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub token: String,
    pub score: f64,
}

/// Top-`k` completions of `tokens`, which must contain exactly one `?`.
/// The view is the one whose vocabulary resolves every other token.
pub fn predict(
    predictor: &Predictor,
    data: &DhkgDataset,
    tokens: &[String],
    k: usize,
    filtered: bool,
) -> Result<(View, Vec<Prediction>)> {
    let holes: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == "?")
        .map(|(i, _)| i)
        .collect();
    if holes.len() != 1 {
        return Err(Error::HoleCount(holes.len()));
    }
    let hole = holes[0];
    if tokens.len() < 3 || tokens.len().is_multiple_of(2) {
        return Err(Error::MalformedFact {
            line: 1,
            reason: format!("expected an odd number (>= 3) of elements, got {}", tokens.len()),
        });
    }
    let resolve = |vocab: &Vocabulary| -> Option<IdFact> {
        let ids: Option<Vec<u32>> = tokens
            .iter()
            .enumerate()
            .map(|(p, t)| {
                if p == hole {
                    Some(0)
                } else {
                    vocab.table(Role::at(p)).id(t)
                }
            })
            .collect();
        let ids = ids?;
        let qualifiers = ids[3..].chunks(2).map(|c| (c[0], c[1])).collect();
        Some(IdFact::with_qualifiers(ids[0], ids[1], ids[2], qualifiers))
    };
    let (view, fact) = [View::Instance, View::Ontology]
        .into_iter()
        .find_map(|v| resolve(&data.view(v).vocab).map(|f| (v, f)))
        .ok_or_else(|| Error::UnknownToken {
            token: tokens.join(" "),
            context: "query: no view resolves every token".to_string(),
        })?;
    let vd = data.view(view);
    if vd.vocab.table(Role::at(hole)).is_empty() {
        return Ok((view, Vec::new()));
    }
    let scores = predictor.lp_scores(view, &vd.vocab, &[(fact.clone(), hole)])?.remove(0);
    let known: HashSet<u32> = if filtered {
        FilterIndex::build(vd.facts.all())
            .completions(&fact, hole)
            .cloned()
            .unwrap_or_default()
    } else {
        HashSet::new()
    };
    let mut order: Vec<usize> = (0..scores.len()).filter(|&c| !known.contains(&(c as u32))).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let table = vd.vocab.table(Role::at(hole));
    Ok((
        view,
        order
            .into_iter()
            .take(k)
            .map(|c| Prediction {
                token: table.token(c as u32).unwrap_or("?").to_string(),
                score: scores[c],
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builder::{build_dataset, generate_synthetic, SynthParams, SPLIT_RATIOS};
    use crate::config::TrainConfig;
    use crate::train::Trainer;

    #[test]
    fn rank_examples() {
        let none = HashSet::new();
        assert_eq!(rank_gold(&[1.0, 5.0, 2.0], 1, &none).unwrap(), 1);
        assert_eq!(rank_gold(&[3.0, 3.0, 3.0, 3.0], 2, &none).unwrap(), 1);
        let filtered: HashSet<usize> = [1].into();
        assert_eq!(rank_gold(&[9.0, 7.0, 7.0, 3.0, 1.0], 3, &filtered).unwrap(), 3);
        assert!(matches!(rank_gold(&[1.0], 4, &none), Err(Error::GoldOutOfRange { .. })));
    }

    #[test]
    fn metric_examples() {
        let m = metrics_from_ranks(&[1, 1, 1], true);
        assert_eq!((m.mrr, m.h1), (1.0, 1.0));
        let m = metrics_from_ranks(&[1, 2, 4], true);
        assert!((m.mrr - 7.0 / 12.0).abs() < 1e-15);
        assert_eq!((m.h1, m.h3, m.h10), (1.0 / 3.0, 2.0 / 3.0, Some(1.0)));
        let m = metrics_from_ranks(&[10], true);
        assert_eq!((m.h3, m.h10), (0.0, Some(1.0)));
        let m = metrics_from_ranks(&[3], false);
        assert!(!m.to_json().contains("h10"));
    }

    #[test]
    fn filter_keys_ignore_qualifier_order() {
        let a = IdFact::with_qualifiers(0, 1, 2, vec![(3, 4), (5, 6)]);
        let b = IdFact::with_qualifiers(0, 1, 2, vec![(5, 6), (3, 4)]);
        assert_eq!(hole_key(&a, 4), hole_key(&b, 6));
        let index = FilterIndex::build([&a]);
        assert!(index.completions(&b, 6).unwrap().contains(&4));
        assert!(index.completions(&b, 2).unwrap().contains(&2));
    }

    #[test]
    fn query_counts_follow_positions() {
        let dump = generate_synthetic(&SynthParams::new(20, 6, 40, 8, 4, 3), 2).unwrap();
        let data = build_dataset(&dump, None, SPLIT_RATIOS, 2).unwrap().0;
        let cfg = TrainConfig {
            dim: 8,
            n_heads: 2,
            epochs: 1,
            ..TrainConfig::default()
        };
        let trainer = Trainer::new(cfg, &data).unwrap();
        let p = Predictor::new(&trainer.state, trainer.graphs());
        let (ent, rel) = evaluate_lp(&p, &data, View::Instance, Split::Test, false).unwrap();
        let test = &data.instance.facts.test;
        assert_eq!(ent.n_queries, test.iter().map(|f| f.m() + 2).sum::<usize>());
        assert_eq!(rel.n_queries, test.iter().map(|f| f.m() + 1).sum::<usize>());
        let all: BTreeSet<u32> = (0..data.instance.vocab.n_entities() as u32).collect();
        let restricted = restricted_ranks(&p, &data, Split::Test, &all, false).unwrap();
        let objects: Vec<usize> = lp_ranks(&p, &data, View::Instance, Split::Test, false)
            .unwrap()
            .into_iter()
            .filter(|q| q.position == 2)
            .map(|q| q.rank)
            .collect();
        assert_eq!(restricted, objects);
        let missing: BTreeSet<u32> = [test[0].object].into_iter().collect::<BTreeSet<_>>();
        let without: BTreeSet<u32> = all.difference(&missing).copied().collect();
        assert!(matches!(
            restricted_ranks(&p, &data, Split::Test, &without, false),
            Err(Error::GoldOutsideCandidates(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn rank_bounds_and_filter_monotonicity(
            scores in proptest::collection::vec(-5.0f64..5.0, 1..40),
            pick in 0usize..1000,
            mask in proptest::collection::vec(proptest::bool::ANY, 40),
        ) {
            let gold = pick % scores.len();
            let raw = rank_gold(&scores, gold, &HashSet::new()).unwrap();
            let filtered: HashSet<usize> = (0..scores.len()).filter(|&c| mask[c]).collect();
            let kept = rank_gold(&scores, gold, &filtered).unwrap();
            proptest::prop_assert!(raw >= 1 && raw <= scores.len());
            proptest::prop_assert!(kept >= 1 && kept <= raw);
        }

        #[test]
        fn metrics_are_monotone(ranks in proptest::collection::vec(1usize..50, 0..60)) {
            let r = metrics_from_ranks(&ranks, true);
            proptest::prop_assert!(r.h1 <= r.h3 && r.h3 <= r.h10.unwrap());
            proptest::prop_assert!(r.h1 <= r.mrr && r.mrr <= 1.0);
        }
    }
}
