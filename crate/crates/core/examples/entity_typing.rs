//! Cross-view entity typing on embeddings chosen by hand: a mapping pulls
//! instance vectors into the ontology space, where the nearest concept wins.

use std::collections::BTreeSet;

use dhkge::cross::{cross_view_loss_grad, et_scores, sample_negatives, CrossBatch, CrossPair, Mapping};
use dhkge::rng::seeded;
use ndarray::array;

fn main() -> dhkge::Result<()> {
    let instance = array![[1.0, 0.1], [0.9, -0.1], [-1.0, 0.2], [0.1, 1.1]];
    // Concepts sit a quarter turn away from their instances.
    let concepts = array![[0.0, 2.0], [0.0, -2.0], [-2.0, 0.0]];
    let gold = [0u32, 0, 1, 2];

    let mut rng = seeded(5, 0);
    let mut mapping = Mapping::new(2, &mut rng);
    for step in 0..=200 {
        let pairs = gold
            .iter()
            .enumerate()
            .map(|(h, &c)| {
                let golds = BTreeSet::from([c]);
                let negatives = sample_negatives(h as u32, concepts.nrows(), 1, &golds, &mut rng)?;
                Ok(CrossPair {
                    head: h as u32,
                    positive: c,
                    negatives,
                })
            })
            .collect::<dhkge::Result<Vec<_>>>()?;
        let batch = CrossBatch { pairs, margin: 1.0 };
        let (loss, grad) = cross_view_loss_grad(&batch, &instance, &concepts, &mapping)?;
        if step % 50 == 0 {
            println!("step {step:2} hinge loss {loss:.4}");
        }
        mapping.weight.scaled_add(-0.1, &grad.mapping.weight);
        mapping.bias.scaled_add(-0.1, &grad.mapping.bias);
    }

    for (h, &c) in gold.iter().enumerate() {
        let scores = et_scores(instance.row(h), &concepts, &mapping)?;
        let best = (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]))
            .unwrap();
        println!("entity {h}: predicted concept {best}, gold {c}, scores {scores:.3?}");
    }
    Ok(())
}
