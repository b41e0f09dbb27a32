//! Expands a qualified fact into masked samples and scores each hidden
//! position with an untrained encoder.

use dhkge::encoder::{generate_masked_samples, Encoder, EncoderConfig, FactBatch};
use dhkge::fact::{IdFact, Role};
use dhkge::rng::seeded;
use dhkge::vocab::{TokenTable, Vocabulary};

fn main() -> dhkge::Result<()> {
    let entities = TokenTable::from_tokens(["paris", "france", "europe", "1792", "1958"]).unwrap();
    let relations = TokenTable::from_tokens(["capital_of", "part_of", "since", "until"]).unwrap();
    let vocab = Vocabulary::new(entities, relations);
    // paris capital_of france, since 1792, until 1958
    let fact = IdFact::with_qualifiers(0, 0, 1, vec![(2, 3), (3, 4)]);

    let samples = generate_masked_samples(&fact, &vocab);
    println!("{} elements -> {} samples", fact.len(), samples.len());

    let mut rng = seeded(1, 0);
    let encoder = Encoder::new(EncoderConfig::new(32, 4, 2), vocab.size(), &mut rng);
    let batch = FactBatch::from_samples(&samples);
    let pass = encoder.forward_with(&batch, Some(vocab.n_entities()))?;

    for (b, sample) in samples.iter().enumerate() {
        let range = vocab.role_range(sample.role);
        let row = pass.logits.row(b);
        let best = range.clone().max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
        let (role, id) = vocab.split_combined(best);
        let kind = if sample.role == Role::Entity {
            "entity"
        } else {
            "relation"
        };
        println!(
            "position {} ({kind}): gold {:<10} top {:<10} {:+.4}",
            sample.mask_position,
            vocab
                .table(sample.role)
                .token(vocab.split_combined(sample.target).1)
                .unwrap(),
            vocab.table(role).token(id).unwrap(),
            row[best]
        );
    }
    println!("encoder parameters: {}", encoder.n_params());
    Ok(())
}
