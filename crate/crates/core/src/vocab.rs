use std::collections::HashMap;

use crate::fact::{IdFact, RawFact, Role};

/// One token <-> dense id bijection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenTable {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl TokenTable {
    /// Builds a table preserving input order. Returns the first duplicate on
    /// failure.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut table = TokenTable::default();
        for t in tokens {
            let t = t.into();
            if table.index.contains_key(&t) {
                return Err(t);
            }
            table.index.insert(t.clone(), table.tokens.len() as u32);
            table.tokens.push(t);
        }
        Ok(table)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Entity (or concept) and relation tables of one view.
///
/// The combined id space puts entities first, `[0, n_entities)`, then
/// relations, `[n_entities, n_entities + n_relations)`, so a single
/// embedding table serves both roles.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: TokenTable,
    pub relations: TokenTable,
}

impl Vocabulary {
    pub fn new(entities: TokenTable, relations: TokenTable) -> Self {
        Vocabulary { entities, relations }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Size of the combined entity+relation id space.
    pub fn size(&self) -> usize {
        self.entities.len() + self.relations.len()
    }

    pub fn table(&self, role: Role) -> &TokenTable {
        match role {
            Role::Entity => &self.entities,
            Role::Relation => &self.relations,
        }
    }

    /// Maps a role-local id into the combined space.
    pub fn combined(&self, role: Role, id: u32) -> usize {
        match role {
            Role::Entity => id as usize,
            Role::Relation => self.entities.len() + id as usize,
        }
    }

    /// Inverse of [`Vocabulary::combined`].
    pub fn split_combined(&self, combined: usize) -> (Role, u32) {
        if combined < self.entities.len() {
            (Role::Entity, combined as u32)
        } else {
            (Role::Relation, (combined - self.entities.len()) as u32)
        }
    }

    /// Range of combined ids valid for a role.
    pub fn role_range(&self, role: Role) -> std::ops::Range<usize> {
        match role {
            Role::Entity => 0..self.entities.len(),
            Role::Relation => self.entities.len()..self.size(),
        }
    }

    /// Resolves a raw fact; on failure returns the offending token.
    pub fn resolve(&self, fact: &RawFact) -> Result<IdFact, (Role, String)> {
        fact.try_map(|role, tok| self.table(role).id(tok).ok_or_else(|| (role, tok.clone())))
    }

    pub fn render(&self, fact: &IdFact) -> RawFact {
        fact.try_map::<String, ()>(|role, id| Ok(self.table(role).token(*id).unwrap_or("<?>").to_string()))
            .expect("infallible")
    }
}
