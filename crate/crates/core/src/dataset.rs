//! Dual-view dataset: instance view, ontology view and `instance_of`
//! cross-links, each split into train/valid/test.
//!
//! On-disk layout (UTF-8, LF, tab separated):
//!
//! ```text
//! instance/entities.txt   instance/relations.txt   instance/facts_{train,valid,test}.txt
//! ontology/concepts.txt   ontology/relations.txt   ontology/facts_{train,valid,test}.txt
//! links_{train,valid,test}.txt
//! ```
//!
//! Loading is strict: every violation is collected into a
//! [`ValidationReport`] and nothing is repaired.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fact::{parse_fact_line, IdFact, RawFact};
use crate::vocab::{TokenTable, Vocabulary};

/// Reserved name of the cross-view relation. It is not part of either
/// view's relation vocabulary.
pub const INSTANCE_OF: &str = "instance_of";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Splits {
            train: Vec::new(),
            valid: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn get_mut(&mut self, split: Split) -> &mut Vec<T> {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &T> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }

    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.valid.len(), self.test.len()]
    }
}

/// `(head, instance_of, tail)`: head is an instance entity id, tail an
/// ontology concept id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossLink {
    pub head: u32,
    pub tail: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ViewData {
    pub vocab: Vocabulary,
    pub facts: Splits<IdFact>,
}

/// `{G_I, G_O, H_S}` with vocabularies and splits. Immutable after load.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DhkgDataset {
    pub instance: ViewData,
    pub ontology: ViewData,
    pub links: Splits<CrossLink>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Instance,
    Ontology,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::Instance => "instance",
            View::Ontology => "ontology",
        }
    }
}

impl DhkgDataset {
    pub fn view(&self, view: View) -> &ViewData {
        match view {
            View::Instance => &self.instance,
            View::Ontology => &self.ontology,
        }
    }

    /// All gold concepts of every head across all splits.
    pub fn gold_concepts(&self) -> HashMap<u32, BTreeSet<u32>> {
        gold_concepts(self.links.all())
    }
}

pub fn gold_concepts<'a>(links: impl IntoIterator<Item = &'a CrossLink>) -> HashMap<u32, BTreeSet<u32>> {
    let mut map: HashMap<u32, BTreeSet<u32>> = HashMap::new();
    for l in links {
        map.entry(l.head).or_default().insert(l.tail);
    }
    map
}

/// One failed check, rendered as a tab-separated `key=value` record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: String,
    pub file: String,
    pub line: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: &str, file: &str, line: Option<usize>, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind: kind.to_string(),
            file: file.to_string(),
            line,
            detail: detail.into(),
        });
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.is_ok() { "valid" } else { "invalid" };
        writeln!(f, "status={status}\tviolations={}", self.violations.len())?;
        for v in &self.violations {
            write!(f, "kind={}\tfile={}", v.kind, v.file)?;
            if let Some(l) = v.line {
                write!(f, "\tline={l}")?;
            }
            writeln!(f, "\tdetail={}", v.detail.replace(['\t', '\n'], " "))?;
        }
        Ok(())
    }
}

fn fact_file(view: View, split: Split) -> String {
    format!("{}/facts_{}.txt", view.name(), split.name())
}

fn entity_file(view: View) -> &'static str {
    match view {
        View::Instance => "instance/entities.txt",
        View::Ontology => "ontology/concepts.txt",
    }
}

fn relation_file(view: View) -> &'static str {
    match view {
        View::Instance => "instance/relations.txt",
        View::Ontology => "ontology/relations.txt",
    }
}

fn link_file(split: Split) -> String {
    format!("links_{}.txt", split.name())
}

/// Relative paths of every dataset file in a fixed order.
pub fn dataset_files() -> Vec<String> {
    let mut files = Vec::new();
    for view in [View::Instance, View::Ontology] {
        files.push(entity_file(view).to_string());
        files.push(relation_file(view).to_string());
        for split in Split::ALL {
            files.push(fact_file(view, split));
        }
    }
    for split in Split::ALL {
        files.push(link_file(split));
    }
    files
}

fn read_lines(dir: &Path, rel: &str, report: &mut ValidationReport) -> Option<Vec<(usize, String)>> {
    match fs::read_to_string(dir.join(rel)) {
        Ok(text) => Some(
            text.lines()
                .enumerate()
                .filter(|(_, l)| !l.is_empty())
                .map(|(i, l)| (i + 1, l.to_string()))
                .collect(),
        ),
        Err(e) => {
            report.push("missing_file", rel, None, e.to_string());
            None
        }
    }
}

fn read_table(dir: &Path, rel: &str, report: &mut ValidationReport) -> TokenTable {
    let Some(lines) = read_lines(dir, rel, report) else {
        return TokenTable::default();
    };
    let mut seen = HashSet::new();
    let mut tokens = Vec::with_capacity(lines.len());
    for (line, tok) in lines {
        if tok.contains('\t') {
            report.push(
                "malformed_token",
                rel,
                Some(line),
                format!("token `{tok}` contains a tab"),
            );
        }
        if !seen.insert(tok.clone()) {
            report.push(
                "duplicate_token",
                rel,
                Some(line),
                format!("token `{tok}` listed twice"),
            );
            continue;
        }
        tokens.push(tok);
    }
    TokenTable::from_tokens(tokens).expect("duplicates filtered")
}

fn read_view(dir: &Path, view: View, report: &mut ValidationReport) -> ViewData {
    let entities = read_table(dir, entity_file(view), report);
    let relations = read_table(dir, relation_file(view), report);
    let vocab = Vocabulary::new(entities, relations);
    let mut facts = Splits::default();
    for split in Split::ALL {
        let rel = fact_file(view, split);
        let Some(lines) = read_lines(dir, &rel, report) else {
            continue;
        };
        for (line, text) in lines {
            let raw = match parse_fact_line(&text, line) {
                Ok(f) => f,
                Err(e) => {
                    report.push("malformed_fact", &rel, Some(line), e.to_string());
                    continue;
                }
            };
            match vocab.resolve(&raw) {
                Ok(f) => facts.get_mut(split).push(f),
                Err((role, tok)) => report.push(
                    "unknown_token",
                    &rel,
                    Some(line),
                    format!("{role:?} token `{tok}` not in vocabulary"),
                ),
            }
        }
    }
    check_split_overlap(
        &facts,
        |f| f.canonical(),
        &format!("{}/facts_*.txt", view.name()),
        report,
    );
    ViewData { vocab, facts }
}

fn check_split_overlap<T, K: std::hash::Hash + Eq + fmt::Debug>(
    splits: &Splits<T>,
    key: impl Fn(&T) -> K,
    label: &str,
    report: &mut ValidationReport,
) {
    let mut owner: HashMap<K, Split> = HashMap::new();
    for split in Split::ALL {
        let mut reported = HashSet::new();
        for item in splits.get(split) {
            let k = key(item);
            match owner.get(&k) {
                Some(&first) if first != split => {
                    if reported.insert(format!("{k:?}")) {
                        report.push(
                            "split_overlap",
                            label,
                            None,
                            format!("{k:?} appears in both {first} and {split}"),
                        );
                    }
                }
                Some(_) => {}
                None => {
                    owner.insert(k, split);
                }
            }
        }
    }
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<DhkgDataset> {
    let dir = dir.as_ref();
    let mut report = ValidationReport::default();
    let instance = read_view(dir, View::Instance, &mut report);
    let ontology = read_view(dir, View::Ontology, &mut report);

    for tok in instance.vocab.entities.tokens() {
        if ontology.vocab.entities.contains(tok) {
            report.push(
                "entity_concept_overlap",
                "ontology/concepts.txt",
                None,
                format!("`{tok}` is both an instance entity and an ontology concept"),
            );
        }
    }

    let mut links = Splits::default();
    for split in Split::ALL {
        let rel = link_file(split);
        let Some(lines) = read_lines(dir, &rel, &mut report) else {
            continue;
        };
        for (line, text) in lines {
            let parts: Vec<&str> = text.split('\t').collect();
            if parts.len() != 2 {
                report.push(
                    "malformed_link",
                    &rel,
                    Some(line),
                    format!("expected 2 fields, found {}", parts.len()),
                );
                continue;
            }
            let head = instance.vocab.entities.id(parts[0]);
            let tail = ontology.vocab.entities.id(parts[1]);
            match (head, tail) {
                (Some(head), Some(tail)) => links.get_mut(split).push(CrossLink { head, tail }),
                _ => {
                    if head.is_none() {
                        report.push(
                            "unknown_token",
                            &rel,
                            Some(line),
                            format!("link head `{}` is not an instance entity", parts[0]),
                        );
                    }
                    if tail.is_none() {
                        report.push(
                            "unknown_token",
                            &rel,
                            Some(line),
                            format!("link tail `{}` is not an ontology concept", parts[1]),
                        );
                    }
                }
            }
        }
    }
    check_split_overlap(&links, |l| *l, "links_*.txt", &mut report);

    if !report.is_ok() {
        return Err(Error::Validation(report));
    }
    Ok(DhkgDataset {
        instance,
        ontology,
        links,
    })
}

/// In-memory counterpart of the checks [`load_dataset`] performs.
pub fn validate_dataset(ds: &DhkgDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for tok in ds.instance.vocab.entities.tokens() {
        if ds.ontology.vocab.entities.contains(tok) {
            report.push(
                "entity_concept_overlap",
                "ontology/concepts.txt",
                None,
                format!("`{tok}` is both an instance entity and an ontology concept"),
            );
        }
    }
    for view in [View::Instance, View::Ontology] {
        let data = ds.view(view);
        for split in Split::ALL {
            let rel = fact_file(view, split);
            for (i, f) in data.facts.get(split).iter().enumerate() {
                let ok = f.entity_elements().all(|&e| (e as usize) < data.vocab.n_entities())
                    && f.relation_elements().all(|&r| (r as usize) < data.vocab.n_relations());
                if !ok {
                    report.push("unknown_token", &rel, Some(i + 1), "token id out of vocabulary range");
                }
            }
        }
        check_split_overlap(
            &data.facts,
            |f| f.canonical(),
            &format!("{}/facts_*.txt", view.name()),
            &mut report,
        );
    }
    for split in Split::ALL {
        for (i, l) in ds.links.get(split).iter().enumerate() {
            if l.head as usize >= ds.instance.vocab.n_entities() || l.tail as usize >= ds.ontology.vocab.n_entities() {
                report.push(
                    "unknown_token",
                    &link_file(split),
                    Some(i + 1),
                    "link endpoint out of range",
                );
            }
        }
    }
    check_split_overlap(&ds.links, |l| *l, "links_*.txt", &mut report);
    report
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn lines_body<I: IntoIterator<Item = S>, S: fmt::Display>(items: I) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&item.to_string());
        out.push('\n');
    }
    out
}

/// Writes a dataset in the directory layout [`load_dataset`] reads.
pub fn write_dataset(dir: impl AsRef<Path>, ds: &DhkgDataset) -> Result<()> {
    let dir = dir.as_ref();
    for view in [View::Instance, View::Ontology] {
        let data = ds.view(view);
        write_file(&dir.join(entity_file(view)), &lines_body(data.vocab.entities.tokens()))?;
        write_file(
            &dir.join(relation_file(view)),
            &lines_body(data.vocab.relations.tokens()),
        )?;
        for split in Split::ALL {
            let raw: Vec<RawFact> = data.facts.get(split).iter().map(|f| data.vocab.render(f)).collect();
            write_file(&dir.join(fact_file(view, split)), &lines_body(&raw))?;
        }
    }
    for split in Split::ALL {
        let body = lines_body(ds.links.get(split).iter().map(|l| {
            format!(
                "{}\t{}",
                ds.instance.vocab.entities.token(l.head).unwrap_or("<?>"),
                ds.ontology.vocab.entities.token(l.tail).unwrap_or("<?>")
            )
        }));
        write_file(&dir.join(link_file(split)), &body)?;
    }
    Ok(())
}

/// SHA-256 over every dataset file (path and contents) in a fixed order.
pub fn dataset_hash(dir: impl AsRef<Path>) -> Result<String> {
    let dir = dir.as_ref();
    let mut hasher = Sha256::new();
    for rel in dataset_files() {
        let path = dir.join(&rel);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        hasher.update(rel.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Deterministic seeded partition into `floor(r0*n)`, `floor(r1*n)` and the
/// remainder. Items keep their input order inside each part.
pub fn split_dataset<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Splits<T>> {
    if (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 || ratios.iter().any(|r| *r < 0.0) {
        return Err(Error::SplitRatios { ratios });
    }
    if items.is_empty() {
        return Err(Error::EmptySplit);
    }
    let n = items.len();
    let n_train = (ratios[0] * n as f64).floor() as usize;
    let n_valid = ((ratios[1] * n as f64).floor() as usize).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_valid].to_vec(),
        order[n_train + n_valid..].to_vec(),
    ];
    for p in &mut parts {
        p.sort_unstable();
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<T>>();
    Ok(Splits {
        train: pick(&parts[0]),
        valid: pick(&parts[1]),
        test: pick(&parts[2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn write_toy(dir: &Path) {
        let files: &[(&str, &str)] = &[
            ("instance/entities.txt", "alice\nbob\ncarol\n"),
            ("instance/relations.txt", "knows\nsince\n"),
            ("instance/facts_train.txt", "alice\tknows\tbob\tsince\tcarol\n"),
            ("instance/facts_valid.txt", "bob\tknows\tcarol\n"),
            ("instance/facts_test.txt", "carol\tknows\talice\n"),
            ("ontology/concepts.txt", "person\nagent\n"),
            ("ontology/relations.txt", "related\n"),
            ("ontology/facts_train.txt", "person\trelated\tagent\n"),
            ("ontology/facts_valid.txt", ""),
            ("ontology/facts_test.txt", ""),
            ("links_train.txt", "alice\tperson\n"),
            ("links_valid.txt", "bob\tperson\n"),
            ("links_test.txt", "carol\tagent\n"),
        ];
        for (rel, body) in files {
            write_file(&dir.join(rel), body).unwrap();
        }
    }

    #[test]
    fn loads_toy_directory() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        let ds = load_dataset(tmp.path()).unwrap();
        assert_eq!(ds.instance.vocab.n_entities(), 3);
        assert_eq!(ds.instance.facts.sizes(), [1, 1, 1]);
        assert_eq!(ds.instance.facts.train[0].m(), 1);
        assert_eq!(ds.ontology.vocab.n_entities(), 2);
        assert_eq!(ds.links.test[0], CrossLink { head: 2, tail: 1 });
    }

    #[test]
    fn write_then_load_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        let ds = load_dataset(tmp.path()).unwrap();
        let out = tempfile::tempdir().unwrap();
        write_dataset(out.path(), &ds).unwrap();
        assert_eq!(load_dataset(out.path()).unwrap(), ds);
        assert_eq!(dataset_hash(tmp.path()).unwrap(), dataset_hash(out.path()).unwrap());
    }

    #[test]
    fn overlap_between_entities_and_concepts_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        fs::write(tmp.path().join("ontology/concepts.txt"), "person\nagent\nbob\n").unwrap();
        match load_dataset(tmp.path()) {
            Err(Error::Validation(r)) => {
                assert!(r.has_kind("entity_concept_overlap"));
                assert!(r.to_string().starts_with("status=invalid"));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_token_and_missing_file_are_reported_together() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        fs::write(tmp.path().join("instance/facts_test.txt"), "carol\tknows\tdave\n").unwrap();
        fs::remove_file(tmp.path().join("links_valid.txt")).unwrap();
        let Err(Error::Validation(r)) = load_dataset(tmp.path()) else {
            panic!("expected validation error");
        };
        assert!(r.has_kind("unknown_token"));
        assert!(r.has_kind("missing_file"));
        let rendered = r.to_string();
        assert!(rendered.contains("file=instance/facts_test.txt\tline=1"));
    }

    #[test]
    fn fact_in_two_splits_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        write_toy(tmp.path());
        fs::write(tmp.path().join("instance/facts_test.txt"), "bob\tknows\tcarol\n").unwrap();
        let Err(Error::Validation(r)) = load_dataset(tmp.path()) else {
            panic!("expected validation error");
        };
        assert!(r.has_kind("split_overlap"));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let items: Vec<u32> = (0..10).collect();
        let s = split_dataset(&items, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(s.sizes(), [8, 1, 1]);
        let again = split_dataset(&items, [0.8, 0.1, 0.1], 7).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn split_sizes_at_full_scale() {
        let items: Vec<u32> = (0..514_822).collect();
        let s = split_dataset(&items, [0.8, 0.1, 0.1], 0).unwrap();
        let [tr, va, te] = s.sizes();
        assert_eq!((tr, va, te), (411_857, 51_482, 51_483));
        // Published train count is 412,477; the floor rule lands within 0.2%.
        assert!((tr as f64 - 412_477.0).abs() / 412_477.0 < 2e-3);
        assert!((va as f64 - 51_129.0).abs() / 51_129.0 < 1e-2);
    }

    #[test]
    fn split_rejects_bad_ratios_and_empty_input() {
        assert!(matches!(
            split_dataset(&[1, 2, 3], [0.8, 0.1, 0.2], 0),
            Err(Error::SplitRatios { .. })
        ));
        assert!(matches!(
            split_dataset::<u8>(&[], [0.8, 0.1, 0.1], 0),
            Err(Error::EmptySplit)
        ));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(n in 1usize..300, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let s = split_dataset(&items, [0.8, 0.1, 0.1], seed).unwrap();
            let mut all: Vec<usize> = s.all().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
            prop_assert_eq!(s.train.len(), (0.8 * n as f64).floor() as usize);
        }
    }
}
