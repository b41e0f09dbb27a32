//! Dual-view dataset construction from a flat hyper-relational statement dump.
//!
//! The pipeline runs in four steps:
//!
//! 1. [`filter_instance_entities`] drops seeds that are themselves typed
//!    targets of `instance_of`.
//! 2. [`collect_ontology_concepts`] gathers the `instance_of` tails of the
//!    surviving entities and closes them under `subclass_of`.
//! 3. [`extract_view_facts`] keeps statements fully inside one node set.
//! 4. [`assemble`] builds vocabularies and splits each fact set 8:1:1.
//!
//! [`generate_synthetic`] produces seedable dumps that survive the pipeline
//! with a known entity count.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{split_dataset, validate_dataset, CrossLink, DhkgDataset, Splits, ViewData};
use crate::error::{Error, Result};
use crate::fact::{parse_fact_lines, HyperFact, IdFact, RawFact};
use crate::rng::{mix, seeded, streams};
use crate::vocab::{TokenTable, Vocabulary};

pub const SPLIT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

/// Raw statements over one global string namespace, with `instance_of` and
/// `subclass_of` appearing as ordinary relation tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatementDump {
    pub statements: Vec<RawFact>,
    pub instance_of: String,
    pub subclass_of: String,
}

impl StatementDump {
    pub fn new(statements: Vec<RawFact>) -> Self {
        StatementDump {
            statements,
            instance_of: "instance_of".to_string(),
            subclass_of: "subclass_of".to_string(),
        }
    }

    pub fn with_hierarchy_names(statements: Vec<RawFact>, instance_of: &str, subclass_of: &str) -> Result<Self> {
        if instance_of == subclass_of {
            return Err(Error::InfeasibleParams(format!(
                "hierarchy relation names must differ, both are `{instance_of}`"
            )));
        }
        Ok(StatementDump {
            statements,
            instance_of: instance_of.to_string(),
            subclass_of: subclass_of.to_string(),
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(StatementDump::new(parse_fact_lines(text)?))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StatementDump::parse(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_string()).map_err(|e| Error::io(path, e))
    }

    fn is_hierarchy(&self, relation: &str) -> bool {
        relation == self.instance_of || relation == self.subclass_of
    }

    fn hierarchy_edges<'a>(&'a self, relation: &'a str) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.statements
            .iter()
            .filter(move |s| s.relation == relation)
            .map(|s| (s.subject.as_str(), s.object.as_str()))
    }

    /// Heads of all `instance_of` statements, the default seed set.
    pub fn typed_entities(&self) -> BTreeSet<String> {
        self.hierarchy_edges(&self.instance_of)
            .map(|(h, _)| h.to_string())
            .collect()
    }
}

impl fmt::Display for StatementDump {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.statements {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}

/// Step 1: `E_I = seeds - (seeds ∩ T)` where `T` holds the `instance_of`
/// tails of the seeds. Applied once.
pub fn filter_instance_entities(dump: &StatementDump, seeds: &BTreeSet<String>) -> BTreeSet<String> {
    let tails: HashSet<&str> = dump
        .hierarchy_edges(&dump.instance_of)
        .filter(|(h, _)| seeds.contains(*h))
        .map(|(_, t)| t)
        .collect();
    seeds.iter().filter(|s| !tails.contains(s.as_str())).cloned().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OntologyClosure {
    pub concepts: BTreeSet<String>,
    /// `(entity, concept)` pairs in dump order, deduplicated.
    pub links: Vec<(String, String)>,
    /// `|C_O|` after initialization and after each expansion round.
    pub sizes_per_iteration: Vec<usize>,
}

/// Step 2: concepts typed by `E_I`, closed under `subclass_of`.
pub fn collect_ontology_concepts(dump: &StatementDump, entities: &BTreeSet<String>) -> OntologyClosure {
    let mut seen_links = HashSet::new();
    let mut links = Vec::new();
    let mut concepts = BTreeSet::new();
    for (h, t) in dump.hierarchy_edges(&dump.instance_of) {
        if entities.contains(h) && seen_links.insert((h, t)) {
            links.push((h.to_string(), t.to_string()));
            concepts.insert(t.to_string());
        }
    }

    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (child, parent) in dump.hierarchy_edges(&dump.subclass_of) {
        parents.entry(child).or_default().push(parent);
    }

    let mut sizes = vec![concepts.len()];
    let mut frontier: VecDeque<String> = concepts.iter().cloned().collect();
    while !frontier.is_empty() {
        let mut next = VecDeque::new();
        for c in frontier {
            for p in parents.get(c.as_str()).into_iter().flatten() {
                if concepts.insert(p.to_string()) {
                    next.push_back(p.to_string());
                }
            }
        }
        if !next.is_empty() {
            sizes.push(concepts.len());
        }
        frontier = next;
    }

    OntologyClosure {
        concepts,
        links,
        sizes_per_iteration: sizes,
    }
}

/// Step 3: statements whose subject, object and qualifier values all lie in
/// `nodes` and which use no hierarchy relation. Dump order is preserved.
pub fn extract_view_facts(dump: &StatementDump, nodes: &BTreeSet<String>) -> Vec<RawFact> {
    dump.statements
        .iter()
        .filter(|s| s.relation_elements().all(|r| !dump.is_hierarchy(r)))
        .filter(|s| s.entity_elements().all(|e| nodes.contains(e)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub seed_entities: usize,
    pub instance_entities: usize,
    pub concepts_per_iteration: Vec<usize>,
    pub instance_facts: usize,
    pub ontology_facts: usize,
    pub cross_links: usize,
    pub instance_relations: usize,
    pub ontology_relations: usize,
    pub instance_split: [usize; 3],
    pub ontology_split: [usize; 3],
    pub link_split: [usize; 3],
}

impl BuildReport {
    pub fn concepts(&self) -> usize {
        self.concepts_per_iteration.last().copied().unwrap_or(0)
    }
}

impl fmt::Display for BuildReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        writeln!(f, "seed_entities={}", self.seed_entities)?;
        writeln!(f, "instance_entities={}", self.instance_entities)?;
        writeln!(f, "concepts={}", self.concepts())?;
        writeln!(f, "concepts_per_iteration={}", join(&self.concepts_per_iteration))?;
        writeln!(f, "instance_facts={}", self.instance_facts)?;
        writeln!(f, "ontology_facts={}", self.ontology_facts)?;
        writeln!(f, "cross_links={}", self.cross_links)?;
        writeln!(f, "instance_relations={}", self.instance_relations)?;
        writeln!(f, "ontology_relations={}", self.ontology_relations)?;
        writeln!(f, "instance_split={}", join(&self.instance_split))?;
        writeln!(f, "ontology_split={}", join(&self.ontology_split))?;
        writeln!(f, "link_split={}", join(&self.link_split))
    }
}

fn dedup_canonical(facts: &[RawFact]) -> Vec<RawFact> {
    let mut seen = HashSet::new();
    facts.iter().filter(|f| seen.insert(f.canonical())).cloned().collect()
}

fn split_or_empty<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Splits<T>> {
    if items.is_empty() {
        return Ok(Splits::default());
    }
    split_dataset(items, ratios, seed)
}

fn build_view(nodes: &BTreeSet<String>, facts: &[RawFact], ratios: [f64; 3], seed: u64) -> Result<ViewData> {
    let relations: BTreeSet<&String> = facts.iter().flat_map(|f| f.relation_elements()).collect();
    let vocab = Vocabulary::new(
        TokenTable::from_tokens(nodes.iter().cloned()).expect("set has no duplicates"),
        TokenTable::from_tokens(relations.into_iter().cloned()).expect("set has no duplicates"),
    );
    let ids: Vec<IdFact> = facts
        .iter()
        .map(|f| {
            vocab.resolve(f).map_err(|(_, token)| Error::UnknownToken {
                token,
                context: "extracted view facts".to_string(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(ViewData {
        vocab,
        facts: split_or_empty(&ids, ratios, seed)?,
    })
}

/// Step 4: vocabularies, id resolution and independent 8:1:1 splits of the
/// instance facts, ontology facts and cross-links.
pub fn assemble(
    entities: &BTreeSet<String>,
    concepts: &BTreeSet<String>,
    instance_facts: &[RawFact],
    ontology_facts: &[RawFact],
    links: &[(String, String)],
    ratios: [f64; 3],
    seed: u64,
) -> Result<(DhkgDataset, BuildReport)> {
    let instance_facts = dedup_canonical(instance_facts);
    let ontology_facts = dedup_canonical(ontology_facts);
    let instance = build_view(entities, &instance_facts, ratios, mix(seed, streams::SPLIT_INSTANCE))?;
    let ontology = build_view(concepts, &ontology_facts, ratios, mix(seed, streams::SPLIT_ONTOLOGY))?;

    let mut seen = HashSet::new();
    let mut link_ids = Vec::with_capacity(links.len());
    for (h, t) in links {
        let head = instance.vocab.entities.id(h).ok_or_else(|| Error::UnknownToken {
            token: h.clone(),
            context: "cross-link head".to_string(),
        })?;
        let tail = ontology.vocab.entities.id(t).ok_or_else(|| Error::UnknownToken {
            token: t.clone(),
            context: "cross-link tail".to_string(),
        })?;
        let link = CrossLink { head, tail };
        if seen.insert(link) {
            link_ids.push(link);
        }
    }
    let links = split_or_empty(&link_ids, ratios, mix(seed, streams::SPLIT_LINKS))?;

    let ds = DhkgDataset {
        instance,
        ontology,
        links,
    };
    let validation = validate_dataset(&ds);
    if !validation.is_ok() {
        return Err(Error::Validation(validation));
    }
    let report = BuildReport {
        seed_entities: 0,
        instance_entities: ds.instance.vocab.n_entities(),
        concepts_per_iteration: vec![ds.ontology.vocab.n_entities()],
        instance_facts: instance_facts.len(),
        ontology_facts: ontology_facts.len(),
        cross_links: link_ids.len(),
        instance_relations: ds.instance.vocab.n_relations(),
        ontology_relations: ds.ontology.vocab.n_relations(),
        instance_split: ds.instance.facts.sizes(),
        ontology_split: ds.ontology.facts.sizes(),
        link_split: ds.links.sizes(),
    };
    Ok((ds, report))
}

/// Runs all four steps. `seeds` defaults to every `instance_of` head.
pub fn build_dataset(
    dump: &StatementDump,
    seeds: Option<&BTreeSet<String>>,
    ratios: [f64; 3],
    seed: u64,
) -> Result<(DhkgDataset, BuildReport)> {
    let default_seeds;
    let seeds = match seeds {
        Some(s) => s,
        None => {
            default_seeds = dump.typed_entities();
            &default_seeds
        }
    };
    let entities = filter_instance_entities(dump, seeds);
    let closure = collect_ontology_concepts(dump, &entities);
    let h_i = extract_view_facts(dump, &entities);
    let h_o = extract_view_facts(dump, &closure.concepts);
    let (ds, mut report) = assemble(&entities, &closure.concepts, &h_i, &h_o, &closure.links, ratios, seed)?;
    report.seed_entities = seeds.len();
    report.concepts_per_iteration = closure.sizes_per_iteration;
    Ok((ds, report))
}

/// Size and shape of a synthetic dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub n_entities: usize,
    pub n_concepts: usize,
    pub n_instance_facts: usize,
    pub n_ontology_facts: usize,
    pub max_arity: usize,
    pub hierarchy_depth: usize,
    pub n_relations: usize,
    pub n_attributes: usize,
    /// Probability that an object or qualifier value shares the subject's
    /// concept, and that the relation is the subject concept's preferred one.
    pub homophily: f64,
}

impl SynthParams {
    pub fn new(
        n_entities: usize,
        n_concepts: usize,
        n_instance_facts: usize,
        n_ontology_facts: usize,
        max_arity: usize,
        hierarchy_depth: usize,
    ) -> Self {
        SynthParams {
            n_entities,
            n_concepts,
            n_instance_facts,
            n_ontology_facts,
            max_arity,
            hierarchy_depth,
            n_relations: 8,
            n_attributes: 4,
            homophily: 0.8,
        }
    }
}

const MAX_DRAWS_PER_FACT: usize = 200;

/// Generates a dump with a `subclass_of` concept hierarchy of exactly
/// `hierarchy_depth` levels, one `instance_of` statement per entity to a
/// leaf concept (every leaf gets at least one entity), and distinct
/// hyper-relational statements with arity uniform on `[2, max_arity]`.
pub fn generate_synthetic(params: &SynthParams, seed: u64) -> Result<StatementDump> {
    let p = params;
    let infeasible = |msg: String| Err(Error::InfeasibleParams(msg));
    if p.hierarchy_depth < 1 || p.n_concepts < p.hierarchy_depth {
        return infeasible(format!(
            "need n_concepts >= hierarchy_depth >= 1, got {} and {}",
            p.n_concepts, p.hierarchy_depth
        ));
    }
    if p.max_arity < 2 {
        return infeasible(format!("max_arity must be at least 2, got {}", p.max_arity));
    }
    if p.n_entities == 0 {
        return infeasible("n_entities must be positive".to_string());
    }
    if p.n_relations == 0 || (p.max_arity > 2 && p.n_attributes == 0) {
        return infeasible("need at least one relation and, for arity > 2, one attribute".to_string());
    }
    if !(0.0..=1.0).contains(&p.homophily) {
        return infeasible(format!("homophily must be in [0, 1], got {}", p.homophily));
    }

    let mut rng = seeded(seed, streams::SYNTH);

    // Levels: a spine c0..c{depth-1} fixes the depth, the rest land anywhere.
    let mut level = vec![0usize; p.n_concepts];
    for (c, l) in level.iter_mut().enumerate() {
        *l = if c < p.hierarchy_depth {
            c
        } else {
            rng.gen_range(0..p.hierarchy_depth)
        };
    }
    let by_level: Vec<Vec<usize>> = (0..p.hierarchy_depth)
        .map(|l| (0..p.n_concepts).filter(|&c| level[c] == l).collect())
        .collect();
    let mut parent = vec![None; p.n_concepts];
    let mut has_child = vec![false; p.n_concepts];
    for c in 0..p.n_concepts {
        if level[c] > 0 {
            let candidates = &by_level[level[c] - 1];
            let par = if c < p.hierarchy_depth {
                c - 1
            } else {
                *candidates.choose(&mut rng).expect("spine guarantees a parent")
            };
            parent[c] = Some(par);
            has_child[par] = true;
        }
    }
    let leaves: Vec<usize> = (0..p.n_concepts).filter(|&c| !has_child[c]).collect();
    if p.n_entities < leaves.len() {
        return infeasible(format!(
            "{} entities cannot cover {} leaf concepts",
            p.n_entities,
            leaves.len()
        ));
    }

    let entity_type: Vec<usize> = (0..p.n_entities)
        .map(|e| {
            if e < leaves.len() {
                leaves[e]
            } else {
                *leaves.choose(&mut rng).expect("nonempty")
            }
        })
        .collect();
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (e, &c) in entity_type.iter().enumerate() {
        members.entry(c).or_default().push(e);
    }

    let ent = |e: usize| format!("e{e}");
    let con = |c: usize| format!("c{c}");
    let mut statements = Vec::new();
    for c in 0..p.n_concepts {
        if let Some(par) = parent[c] {
            statements.push(HyperFact::triple(con(c), "subclass_of".to_string(), con(par)));
        }
    }
    for (e, &c) in entity_type.iter().enumerate() {
        statements.push(HyperFact::triple(ent(e), "instance_of".to_string(), con(c)));
    }

    let mut seen = HashSet::new();
    let mut instance = Vec::with_capacity(p.n_instance_facts);
    let mut draws = 0;
    while instance.len() < p.n_instance_facts {
        draws += 1;
        if draws > MAX_DRAWS_PER_FACT * p.n_instance_facts.max(1) {
            return infeasible(format!("could not draw {} distinct instance facts", p.n_instance_facts));
        }
        let s = rng.gen_range(0..p.n_entities);
        let kin = &members[&entity_type[s]];
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            if rng.gen_bool(p.homophily) {
                *kin.choose(rng).expect("nonempty")
            } else {
                rng.gen_range(0..p.n_entities)
            }
        };
        let relation = if rng.gen_bool(p.homophily) {
            entity_type[s] % p.n_relations
        } else {
            rng.gen_range(0..p.n_relations)
        };
        let o = pick(&mut rng);
        let m = rng.gen_range(2..=p.max_arity) - 2;
        let qualifiers = (0..m)
            .map(|_| {
                let a = rng.gen_range(0..p.n_attributes);
                (format!("a{a}"), ent(pick(&mut rng)))
            })
            .collect();
        let f = HyperFact::with_qualifiers(ent(s), format!("r{relation}"), ent(o), qualifiers);
        if seen.insert(f.canonical()) {
            instance.push(f);
        }
    }

    let mut ontology = Vec::with_capacity(p.n_ontology_facts);
    draws = 0;
    while ontology.len() < p.n_ontology_facts {
        draws += 1;
        if draws > MAX_DRAWS_PER_FACT * p.n_ontology_facts.max(1) {
            return infeasible(format!("could not draw {} distinct ontology facts", p.n_ontology_facts));
        }
        let s = rng.gen_range(0..p.n_concepts);
        let o = rng.gen_range(0..p.n_concepts);
        let r = rng.gen_range(0..p.n_relations);
        let m = rng.gen_range(2..=p.max_arity) - 2;
        let qualifiers = (0..m)
            .map(|_| {
                let a = rng.gen_range(0..p.n_attributes);
                (format!("ca{a}"), con(rng.gen_range(0..p.n_concepts)))
            })
            .collect();
        let f = HyperFact::with_qualifiers(con(s), format!("cr{r}"), con(o), qualifiers);
        if seen.insert(f.canonical()) {
            ontology.push(f);
        }
    }

    statements.extend(instance);
    statements.extend(ontology);
    Ok(StatementDump::new(statements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact::parse_fact_line;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn dump(lines: &[&str]) -> StatementDump {
        StatementDump::new(lines.iter().map(|l| parse_fact_line(l, 1).unwrap()).collect())
    }

    #[test]
    fn step1_removes_typed_tails() {
        let d = dump(&["e1\tinstance_of\tc1"]);
        assert_eq!(filter_instance_entities(&d, &set(&["e1", "c1"])), set(&["e1"]));
    }

    #[test]
    fn step1_without_typing_keeps_seeds() {
        let d = dump(&["a\tknows\tb"]);
        assert_eq!(filter_instance_entities(&d, &set(&["a", "b"])), set(&["a", "b"]));
    }

    #[test]
    fn step1_chain() {
        let d = dump(&["a\tinstance_of\tb", "b\tinstance_of\tc"]);
        assert_eq!(filter_instance_entities(&d, &set(&["a", "b", "c"])), set(&["a"]));
    }

    #[test]
    fn step2_closes_chain() {
        let d = dump(&["e\tinstance_of\tc1", "c1\tsubclass_of\tc2", "c2\tsubclass_of\tc3"]);
        let cl = collect_ontology_concepts(&d, &set(&["e"]));
        assert_eq!(cl.concepts, set(&["c1", "c2", "c3"]));
        assert_eq!(cl.links, vec![("e".to_string(), "c1".to_string())]);
        assert_eq!(cl.sizes_per_iteration, vec![1, 2, 3]);
    }

    #[test]
    fn step2_without_subclass_is_tails_only() {
        let d = dump(&["e\tinstance_of\tc1", "f\tinstance_of\tc2", "x\tinstance_of\tc9"]);
        let cl = collect_ontology_concepts(&d, &set(&["e", "f"]));
        assert_eq!(cl.concepts, set(&["c1", "c2"]));
        assert_eq!(cl.sizes_per_iteration, vec![2]);
    }

    #[test]
    fn step2_terminates_on_cycles() {
        let d = dump(&["e\tinstance_of\tc1", "c1\tsubclass_of\tc2", "c2\tsubclass_of\tc1"]);
        let cl = collect_ontology_concepts(&d, &set(&["e"]));
        assert_eq!(cl.concepts, set(&["c1", "c2"]));
    }

    #[test]
    fn step3_containment() {
        let d = dump(&[
            "a\tr\tb",
            "a\tr\tb\tq\tz",
            "a\tinstance_of\tb",
            "b\tr\ta\tq\ta",
            "z\tr\ta",
        ]);
        let nodes = set(&["a", "b"]);
        let got = extract_view_facts(&d, &nodes);
        // Brute-force membership oracle.
        let expected: Vec<RawFact> = d
            .statements
            .iter()
            .filter(|s| s.relation != "instance_of" && s.relation != "subclass_of")
            .filter(|s| {
                [&s.subject, &s.object]
                    .into_iter()
                    .chain(s.qualifiers.iter().map(|q| &q.1))
                    .all(|e| nodes.contains(e))
            })
            .cloned()
            .collect();
        assert_eq!(got, expected);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].m(), 0);
        assert_eq!(got[1].subject, "b");
    }

    #[test]
    fn assemble_splits_links_eight_one_one() {
        let ents: BTreeSet<String> = (0..10).map(|i| format!("e{i}")).collect();
        let cons = set(&["c0"]);
        let links: Vec<(String, String)> = ents.iter().map(|e| (e.clone(), "c0".to_string())).collect();
        let facts = vec![parse_fact_line("e0\tr\te1", 1).unwrap()];
        let (ds, report) = assemble(&ents, &cons, &facts, &[], &links, SPLIT_RATIOS, 3).unwrap();
        assert_eq!(ds.links.sizes(), [8, 1, 1]);
        assert_eq!(report.cross_links, 10);
        assert_eq!(ds.ontology.facts.sizes(), [0, 0, 0]);
    }

    #[test]
    fn hierarchy_names_must_differ() {
        assert!(StatementDump::with_hierarchy_names(vec![], "isa", "isa").is_err());
    }

    #[test]
    fn toy_pipeline_counts_match_recount() {
        let d = dump(&[
            "alice\tinstance_of\tperson",
            "bob\tinstance_of\tperson",
            "rex\tinstance_of\tdog",
            "person\tsubclass_of\tanimal",
            "dog\tsubclass_of\tanimal",
            "alice\tknows\tbob\tsince\trex",
            "bob\towns\trex",
            "alice\towns\tperson",
            "person\tlikes\tdog\tstrength\tanimal",
        ]);
        let (ds, report) = build_dataset(&d, None, SPLIT_RATIOS, 0).unwrap();
        // Independent recount by hand.
        assert_eq!(report.seed_entities, 3);
        assert_eq!(report.instance_entities, 3);
        assert_eq!(report.concepts(), 3);
        assert_eq!(report.instance_facts, 2);
        assert_eq!(report.ontology_facts, 1);
        assert_eq!(report.cross_links, 3);
        assert_eq!(ds.instance.vocab.n_relations(), 3);
        let tmp = tempfile::tempdir().unwrap();
        crate::dataset::write_dataset(tmp.path(), &ds).unwrap();
        assert_eq!(crate::dataset::load_dataset(tmp.path()).unwrap(), ds);
    }

    #[test]
    fn synthetic_small_example() {
        let params = SynthParams::new(4, 3, 5, 2, 4, 2);
        let d = generate_synthetic(&params, 1).unwrap();
        let (_, report) = build_dataset(&d, None, SPLIT_RATIOS, 1).unwrap();
        assert_eq!(report.instance_entities, 4);
        assert_eq!(report.concepts(), 3);
        assert_eq!(report.instance_facts, 5);
        assert_eq!(report.ontology_facts, 2);
    }

    #[test]
    fn synthetic_arity_two_has_no_qualifiers() {
        let mut params = SynthParams::new(10, 4, 20, 5, 2, 2);
        params.n_attributes = 0;
        let d = generate_synthetic(&params, 5).unwrap();
        assert!(d.statements.iter().all(|s| s.m() == 0));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let params = SynthParams::new(30, 6, 50, 10, 5, 3);
        let a = generate_synthetic(&params, 9).unwrap().to_string();
        let b = generate_synthetic(&params, 9).unwrap().to_string();
        assert_eq!(a, b);
        let c = generate_synthetic(&params, 10).unwrap().to_string();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_depth_one_has_no_subclass_statements() {
        let d = generate_synthetic(&SynthParams::new(8, 3, 10, 2, 3, 1), 0).unwrap();
        assert!(d.statements.iter().all(|s| s.relation != "subclass_of"));
    }

    #[test]
    fn synthetic_rejects_infeasible() {
        assert!(generate_synthetic(&SynthParams::new(4, 1, 5, 2, 4, 2), 0).is_err());
        assert!(generate_synthetic(&SynthParams::new(4, 3, 5, 2, 1, 2), 0).is_err());
        assert!(generate_synthetic(&SynthParams::new(1, 5, 5, 2, 3, 1), 0).is_err());
        // Two entities, one relation, arity 2: at most 4 distinct facts.
        let mut p = SynthParams::new(2, 1, 50, 0, 2, 1);
        p.n_relations = 1;
        assert!(generate_synthetic(&p, 0).is_err());
    }
}
