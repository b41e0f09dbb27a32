//! Builds a dual-view dataset from a small hand-written statement dump,
//! writes it to disk and loads it back through the validator.

use dhkge::builder::{build_dataset, StatementDump, SPLIT_RATIOS};
use dhkge::dataset::{load_dataset, write_dataset, Split};

const DUMP: &str = "\
alice\tinstance_of\tphysicist
bob\tinstance_of\tchemist
carol\tinstance_of\tphysicist
dave\tinstance_of\tchemist
physicist\tsubclass_of\tscientist
chemist\tsubclass_of\tscientist
scientist\tsubclass_of\tperson
alice\tadvisor\tbob\tstart\tcarol
bob\tcolleague\tdave
carol\tadvisor\tdave\tstart\talice\tend\tbob
dave\tcolleague\talice
alice\tcolleague\tcarol
physicist\trelated_to\tchemist
chemist\trelated_to\tscientist
person\tstudies\tscientist
";

fn main() -> dhkge::Result<()> {
    let dump = StatementDump::parse(DUMP)?;
    let (data, report) = build_dataset(&dump, None, SPLIT_RATIOS, 0)?;
    println!("{report}");

    let dir = std::env::temp_dir().join("dhkge-example-dataset");
    write_dataset(&dir, &data)?;
    let loaded = load_dataset(&dir)?;
    assert_eq!(loaded, data);

    for fact in loaded.instance.facts.get(Split::Train) {
        println!("train  {}", loaded.instance.vocab.render(fact));
    }
    for link in loaded.links.all() {
        println!(
            "typed  {} -> {}",
            loaded.instance.vocab.entities.token(link.head).unwrap(),
            loaded.ontology.vocab.entities.token(link.tail).unwrap()
        );
    }
    println!("written to {}", dir.display());
    Ok(())
}
