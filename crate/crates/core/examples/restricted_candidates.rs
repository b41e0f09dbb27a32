//! Object prediction against a short candidate list, and free-form top-k
//! completion of a one-hole query.

use std::collections::BTreeSet;

use dhkge::builder::{build_dataset, generate_synthetic, SynthParams, SPLIT_RATIOS};
use dhkge::config::TrainConfig;
use dhkge::dataset::Split;
use dhkge::eval::{evaluate_restricted, predict, Predictor};
use dhkge::model::Hypergraphs;
use dhkge::train::train;

fn main() -> dhkge::Result<()> {
    let dump = generate_synthetic(&SynthParams::new(40, 8, 160, 20, 4, 2), 3)?;
    let (data, _) = build_dataset(&dump, None, SPLIT_RATIOS, 3)?;
    let config = TrainConfig {
        dim: 32,
        n_heads: 4,
        epochs: 30,
        learning_rate: 3e-3,
        batch_size: 128,
        ..TrainConfig::default()
    };
    let state = train(config, &data)?;
    let graphs = Hypergraphs::from_train(&data);
    let predictor = Predictor::new(&state, &graphs);

    // Every gold object of the test split plus a few distractors.
    let mut candidates: BTreeSet<u32> = data.instance.facts.get(Split::Test).iter().map(|f| f.object).collect();
    candidates.extend(0..4);
    let report = evaluate_restricted(&predictor, &data, Split::Test, &candidates, false)?;
    println!("{} candidates: {report}", candidates.len());

    let fact = &data.instance.facts.get(Split::Train)[0];
    let rendered = data.instance.vocab.render(fact);
    let tokens = vec![rendered.subject.clone(), rendered.relation.clone(), "?".to_string()];
    let (_, top) = predict(&predictor, &data, &tokens, 5, false)?;
    println!("query {} {} ? (gold {})", tokens[0], tokens[1], rendered.object);
    for p in top {
        println!("  {:<6} {:+.4}", p.token, p.score);
    }
    Ok(())
}
