//! Hyper-relational facts: a main triple plus ordered qualifier pairs.
//!
//! Facts are generic over the token type so the same structure carries raw
//! string statements (dumps, dataset files) and id-resolved facts.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A main triple `(subject, relation, object)` plus `m` attribute-value
/// qualifiers. Qualifier order is preserved; duplicates are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HyperFact<T> {
    pub subject: T,
    pub relation: T,
    pub object: T,
    pub qualifiers: Vec<(T, T)>,
}

pub type RawFact = HyperFact<String>;
pub type IdFact = HyperFact<u32>;

/// Role of a slot in the flattened `[s, r, o, a1, v1, ...]` layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Entity,
    Relation,
}

impl Role {
    /// Role of the element at `position` in the flattened layout.
    pub fn at(position: usize) -> Role {
        match position {
            0 | 2 => Role::Entity,
            1 => Role::Relation,
            p if p % 2 == 1 => Role::Relation,
            _ => Role::Entity,
        }
    }
}

impl<T> HyperFact<T> {
    pub fn triple(subject: T, relation: T, object: T) -> Self {
        HyperFact {
            subject,
            relation,
            object,
            qualifiers: Vec::new(),
        }
    }

    pub fn with_qualifiers(subject: T, relation: T, object: T, qualifiers: Vec<(T, T)>) -> Self {
        HyperFact {
            subject,
            relation,
            object,
            qualifiers,
        }
    }

    /// Number of qualifier pairs.
    pub fn m(&self) -> usize {
        self.qualifiers.len()
    }

    /// Entity slots: `2 + m`.
    pub fn arity(&self) -> usize {
        2 + self.qualifiers.len()
    }

    /// Flattened element count `2m + 3`.
    pub fn len(&self) -> usize {
        2 * self.qualifiers.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Element at `position` of the `[s, r, o, a1, v1, ...]` layout.
    pub fn get(&self, position: usize) -> Option<&T> {
        match position {
            0 => Some(&self.subject),
            1 => Some(&self.relation),
            2 => Some(&self.object),
            p => {
                let q = self.qualifiers.get((p - 3) / 2)?;
                Some(if (p - 3) % 2 == 0 { &q.0 } else { &q.1 })
            }
        }
    }

    pub fn get_mut(&mut self, position: usize) -> Option<&mut T> {
        match position {
            0 => Some(&mut self.subject),
            1 => Some(&mut self.relation),
            2 => Some(&mut self.object),
            p => {
                let q = self.qualifiers.get_mut((p - 3) / 2)?;
                Some(if (p - 3) % 2 == 0 { &mut q.0 } else { &mut q.1 })
            }
        }
    }

    /// Iterates elements in layout order.
    pub fn elements(&self) -> impl Iterator<Item = &T> {
        [&self.subject, &self.relation, &self.object]
            .into_iter()
            .chain(self.qualifiers.iter().flat_map(|(a, v)| [a, v]))
    }

    /// Subject, object and qualifier values.
    pub fn entity_elements(&self) -> impl Iterator<Item = &T> {
        [&self.subject, &self.object]
            .into_iter()
            .chain(self.qualifiers.iter().map(|(_, v)| v))
    }

    /// Main relation and qualifier attributes.
    pub fn relation_elements(&self) -> impl Iterator<Item = &T> {
        std::iter::once(&self.relation).chain(self.qualifiers.iter().map(|(a, _)| a))
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(Role, &T) -> Result<U, E>) -> Result<HyperFact<U>, E> {
        Ok(HyperFact {
            subject: f(Role::Entity, &self.subject)?,
            relation: f(Role::Relation, &self.relation)?,
            object: f(Role::Entity, &self.object)?,
            qualifiers: self
                .qualifiers
                .iter()
                .map(|(a, v)| Ok((f(Role::Relation, a)?, f(Role::Entity, v)?)))
                .collect::<Result<_, E>>()?,
        })
    }
}

impl<T: Ord + Clone> HyperFact<T> {
    /// Copy with qualifier pairs sorted, so facts that differ only in
    /// qualifier order compare equal.
    pub fn canonical(&self) -> HyperFact<T> {
        let mut c = self.clone();
        c.qualifiers.sort();
        c
    }
}

/// Parses one tab-separated fact line `s\tr\to[\ta\tv]*`.
///
/// `line_no` is 1-based and only used in error messages.
pub fn parse_fact_line(line: &str, line_no: usize) -> Result<RawFact> {
    let tokens: Vec<&str> = line.split('\t').collect();
    let n = tokens.len();
    if n < 3 || n.is_multiple_of(2) {
        return Err(Error::MalformedFact {
            line: line_no,
            reason: format!("expected an odd element count of at least 3, found {n}"),
        });
    }
    if let Some(pos) = tokens.iter().position(|t| t.is_empty()) {
        return Err(Error::MalformedFact {
            line: line_no,
            reason: format!("empty token at position {pos}"),
        });
    }
    let qualifiers = tokens[3..]
        .chunks_exact(2)
        .map(|p| (p[0].to_string(), p[1].to_string()))
        .collect();
    Ok(HyperFact {
        subject: tokens[0].to_string(),
        relation: tokens[1].to_string(),
        object: tokens[2].to_string(),
        qualifiers,
    })
}

impl<T: fmt::Display> fmt::Display for HyperFact<T> {
    /// Serializes back to the tab-separated line format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\t{}\t{}", self.subject, self.relation, self.object)?;
        for (a, v) in &self.qualifiers {
            write!(f, "\t{a}\t{v}")?;
        }
        Ok(())
    }
}

/// Parses a whole file body of fact lines, skipping blank lines.
pub fn parse_fact_lines(text: &str) -> Result<Vec<RawFact>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_fact_line(l, i + 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_minimal_triple() {
        let f = parse_fact_line("Q1\tP1\tQ2", 1).unwrap();
        assert_eq!(f.m(), 0);
        assert_eq!(f.subject, "Q1");
        assert_eq!(f.relation, "P1");
        assert_eq!(f.object, "Q2");
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn parses_qualifiers_in_order() {
        let line =
            "MarieCurie\treceive\tNobelPrizePhysics\tyear\t1903\ttogether_with\tPierreCurie\ttogether_with\tBecquerel";
        let f = parse_fact_line(line, 1).unwrap();
        assert_eq!(f.m(), 3);
        assert_eq!(f.arity(), 5);
        assert_eq!(f.qualifiers[0], ("year".into(), "1903".into()));
        assert_eq!(f.qualifiers[2], ("together_with".into(), "Becquerel".into()));
        assert_eq!(f.get(8).unwrap(), "Becquerel");
        assert_eq!(f.get(7).unwrap(), "together_with");
    }

    #[test]
    fn even_count_is_malformed_with_line_number() {
        let err = parse_fact_line("a\tb", 17).unwrap_err();
        match err {
            Error::MalformedFact { line, .. } => assert_eq!(line, 17),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_fact_line("a\tb\tc\td", 2).is_err());
        assert!(parse_fact_line("a", 3).is_err());
    }

    #[test]
    fn roles_follow_layout() {
        let roles: Vec<Role> = (0..7).map(Role::at).collect();
        use Role::*;
        assert_eq!(
            roles,
            vec![Entity, Relation, Entity, Relation, Entity, Relation, Entity]
        );
    }

    fn token() -> impl Strategy<Value = String> {
        "[A-Za-z0-9_]{1,8}"
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(
            s in token(), r in token(), o in token(),
            q in prop::collection::vec((token(), token()), 0..6)
        ) {
            let f = HyperFact::with_qualifiers(s, r, o, q);
            let line = f.to_string();
            let back = parse_fact_line(&line, 1).unwrap();
            prop_assert_eq!(back, f);
        }

        #[test]
        fn element_count_is_odd(q in prop::collection::vec((token(), token()), 0..9)) {
            let f = HyperFact::with_qualifiers("s".to_string(), "r".to_string(), "o".to_string(), q);
            prop_assert_eq!(f.len() % 2, 1);
            prop_assert_eq!(f.elements().count(), f.len());
            prop_assert_eq!(f.entity_elements().count(), f.arity());
        }
    }
}
