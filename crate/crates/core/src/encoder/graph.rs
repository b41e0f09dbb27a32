use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fact::{IdFact, Role};
use crate::vocab::Vocabulary;

/// Pairwise relation between two slots of a fact graph. Undirected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum EdgeType {
    SelfLoop = 0,
    SubjectRelation = 1,
    RelationObject = 2,
    AttributeValue = 3,
    RelationAttribute = 4,
    None = 5,
}

pub const N_EDGE_TYPES: usize = 6;

impl EdgeType {
    /// Edge type between layout positions `i` and `j`.
    pub fn between(i: usize, j: usize) -> EdgeType {
        if i == j {
            return EdgeType::SelfLoop;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        match (a, b) {
            (0, 1) => EdgeType::SubjectRelation,
            (1, 2) => EdgeType::RelationObject,
            (1, b) if b >= 3 && b % 2 == 1 => EdgeType::RelationAttribute,
            (a, b) if a >= 3 && a % 2 == 1 && b == a + 1 => EdgeType::AttributeValue,
            _ => EdgeType::None,
        }
    }
}

/// One fact as a heterogeneous token graph over the layout
/// `[s, r, o, a1, v1, ..., am, vm]`, with tokens in the view's combined id
/// space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactGraph {
    pub tokens: Vec<usize>,
}

impl FactGraph {
    pub fn from_fact(fact: &IdFact, vocab: &Vocabulary) -> Self {
        let tokens = fact
            .elements()
            .enumerate()
            .map(|(p, &id)| vocab.combined(Role::at(p), id))
            .collect();
        FactGraph { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Row-major `len × len` edge-type matrix.
    pub fn edge_types(&self) -> Vec<EdgeType> {
        let n = self.len();
        (0..n * n).map(|k| EdgeType::between(k / n, k % n)).collect()
    }
}

/// A fact graph with one position hidden behind the mask token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSample {
    pub graph: FactGraph,
    pub mask_position: usize,
    /// Combined id of the hidden token.
    pub target: usize,
    pub role: Role,
}

impl MaskedSample {
    pub fn new(graph: FactGraph, mask_position: usize) -> Self {
        let target = graph.tokens[mask_position];
        MaskedSample {
            graph,
            mask_position,
            target,
            role: Role::at(mask_position),
        }
    }
}

/// One sample per position: `2m + 3` samples for a fact with `m` qualifiers.
pub fn generate_masked_samples(fact: &IdFact, vocab: &Vocabulary) -> Vec<MaskedSample> {
    let graph = FactGraph::from_fact(fact, vocab);
    (0..graph.len()).map(|p| MaskedSample::new(graph.clone(), p)).collect()
}

/// Input slot of a padded batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Slot {
    Token(usize),
    Mask,
    Pad,
}

/// `B` masked samples padded to the longest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactBatch {
    pub batch_size: usize,
    pub max_len: usize,
    /// `B × L` slots, row-major.
    pub slots: Vec<Slot>,
    /// `B × L × L` edge types as `u8`; pairs touching padding are `None`.
    pub edges: Vec<u8>,
    pub lens: Vec<usize>,
    pub targets: Vec<usize>,
    pub roles: Vec<Role>,
}

impl FactBatch {
    pub fn from_samples(samples: &[MaskedSample]) -> Self {
        Self::with_max_len(samples, samples.iter().map(|s| s.graph.len()).max().unwrap_or(0))
    }

    /// Pads to `max_len`, which must be at least the longest sample.
    pub fn with_max_len(samples: &[MaskedSample], max_len: usize) -> Self {
        let b = samples.len();
        let l = max_len;
        let mut slots = vec![Slot::Pad; b * l];
        let mut edges = vec![EdgeType::None as u8; b * l * l];
        for (s, sample) in samples.iter().enumerate() {
            let n = sample.graph.len();
            assert!(n <= l, "sample longer than max_len");
            for (p, &tok) in sample.graph.tokens.iter().enumerate() {
                slots[s * l + p] = if p == sample.mask_position {
                    Slot::Mask
                } else {
                    Slot::Token(tok)
                };
            }
            for i in 0..n {
                for j in 0..n {
                    edges[(s * l + i) * l + j] = EdgeType::between(i, j) as u8;
                }
            }
        }
        FactBatch {
            batch_size: b,
            max_len: l,
            slots,
            edges,
            lens: samples.iter().map(|s| s.graph.len()).collect(),
            targets: samples.iter().map(|s| s.target).collect(),
            roles: samples.iter().map(|s| s.role).collect(),
        }
    }

    pub fn is_pad(&self, b: usize, i: usize) -> bool {
        self.slots[b * self.max_len + i] == Slot::Pad
    }

    /// Row (in the flattened `B*L` layout) holding each sample's mask.
    pub fn mask_rows(&self) -> Result<Vec<usize>> {
        (0..self.batch_size)
            .map(|b| {
                let row = &self.slots[b * self.max_len..(b + 1) * self.max_len];
                let masks: Vec<usize> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s == Slot::Mask)
                    .map(|(i, _)| i)
                    .collect();
                match masks.as_slice() {
                    [i] => Ok(b * self.max_len + i),
                    _ => Err(Error::MaskCount {
                        sample: b,
                        count: masks.len(),
                    }),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact::HyperFact;
    use crate::vocab::TokenTable;

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            TokenTable::from_tokens((0..6).map(|i| format!("e{i}"))).unwrap(),
            TokenTable::from_tokens((0..4).map(|i| format!("r{i}"))).unwrap(),
        )
    }

    fn fact(m: usize) -> IdFact {
        HyperFact::with_qualifiers(
            0,
            0,
            1,
            (0..m).map(|i| (1 + (i as u32 % 3), (2 + i as u32) % 6)).collect(),
        )
    }

    #[test]
    fn sample_counts() {
        let v = vocab();
        assert_eq!(generate_masked_samples(&fact(0), &v).len(), 3);
        assert_eq!(generate_masked_samples(&fact(3), &v).len(), 9);
    }

    #[test]
    fn samples_hide_each_position_once() {
        let v = vocab();
        let f = fact(2);
        let samples = generate_masked_samples(&f, &v);
        let graph = FactGraph::from_fact(&f, &v);
        for (p, s) in samples.iter().enumerate() {
            assert_eq!(s.mask_position, p);
            assert_eq!(s.target, graph.tokens[p]);
            assert_eq!(s.role, Role::at(p));
            let batch = FactBatch::from_samples(std::slice::from_ref(s));
            assert_eq!(batch.slots.iter().filter(|x| **x == Slot::Mask).count(), 1);
            let range = v.role_range(s.role);
            assert!(range.contains(&s.target));
        }
    }

    #[test]
    fn edge_matrix_structure() {
        let v = vocab();
        let g = FactGraph::from_fact(&fact(3), &v);
        let n = g.len();
        let e = g.edge_types();
        let count = |t: EdgeType| {
            (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| e[i * n + j] == t)
                .count()
        };
        for i in 0..n {
            assert_eq!(e[i * n + i], EdgeType::SelfLoop);
            for j in 0..n {
                assert_eq!(e[i * n + j], e[j * n + i]);
            }
        }
        assert_eq!(count(EdgeType::SubjectRelation), 1);
        assert_eq!(count(EdgeType::RelationObject), 1);
        assert_eq!(count(EdgeType::AttributeValue), 3);
        assert_eq!(count(EdgeType::RelationAttribute), 3);
        assert_eq!(e[0 * n + 1], EdgeType::SubjectRelation);
        assert_eq!(e[3 * n + 4], EdgeType::AttributeValue);
        assert_eq!(e[4 * n + 5], EdgeType::None);
    }

    #[test]
    fn padding_and_mask_rows() {
        let v = vocab();
        let mut samples = generate_masked_samples(&fact(0), &v);
        samples.extend(generate_masked_samples(&fact(1), &v));
        let batch = FactBatch::from_samples(&samples);
        assert_eq!(batch.max_len, 5);
        assert!(batch.is_pad(0, 3));
        assert!(!batch.is_pad(3, 4));
        let rows = batch.mask_rows().unwrap();
        assert_eq!(rows[0], 0);
        assert_eq!(rows[4], 4 * 5 + 1);
    }

    #[test]
    fn mask_count_is_checked() {
        let v = vocab();
        let mut batch = FactBatch::from_samples(&generate_masked_samples(&fact(0), &v)[..1]);
        batch.slots[1] = Slot::Mask;
        assert!(matches!(batch.mask_rows(), Err(Error::MaskCount { count: 2, .. })));
        batch.slots[0] = Slot::Token(0);
        batch.slots[1] = Slot::Token(6);
        assert!(matches!(batch.mask_rows(), Err(Error::MaskCount { count: 0, .. })));
    }
}
