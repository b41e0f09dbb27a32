//! Generates a synthetic dual-view graph, trains the joint model, saves a
//! checkpoint and reports link prediction and entity typing on the test split.
//!
//! ```text
//! cargo run --release --example train_and_evaluate -- [epochs]
//! ```

use dhkge::builder::{build_dataset, generate_synthetic, SynthParams, SPLIT_RATIOS};
use dhkge::checkpoint::{load_checkpoint, save_checkpoint};
use dhkge::config::TrainConfig;
use dhkge::dataset::{Split, View};
use dhkge::eval::{evaluate_et, evaluate_lp, Predictor};
use dhkge::model::{Hypergraphs, ModelShape};
use dhkge::train::Trainer;

fn main() -> dhkge::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let dump = generate_synthetic(&SynthParams::new(60, 12, 300, 40, 5, 3), 7)?;
    let (data, report) = build_dataset(&dump, None, SPLIT_RATIOS, 7)?;
    print!("{report}");

    let config = TrainConfig {
        dim: 64,
        n_heads: 4,
        epochs,
        learning_rate: 3e-3,
        batch_size: 128,
        seed: 7,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(config, &data)?;
    trainer.run()?;
    let state = trainer.into_state();
    for record in state.log.iter().step_by(10) {
        println!(
            "epoch {:3} instance {:.4} ontology {:.4} cross {:.4}",
            record.epoch,
            record.loss_instance.unwrap_or(f64::NAN),
            record.loss_ontology.unwrap_or(f64::NAN),
            record.loss_cross.unwrap_or(f64::NAN)
        );
    }

    let path = std::env::temp_dir().join("dhkge-example.ckpt");
    save_checkpoint(&state, &path)?;
    let state = load_checkpoint(&path, Some(ModelShape::of(&data)))?;

    let graphs = Hypergraphs::from_train(&data);
    let predictor = Predictor::new(&state, &graphs);
    for view in [View::Instance, View::Ontology] {
        let (entity, relation) = evaluate_lp(&predictor, &data, view, Split::Test, false)?;
        println!("{entity}");
        println!("{relation}");
    }
    println!("{}", evaluate_et(&predictor, &data, Split::Test, false)?);
    Ok(())
}
