//! Turns a view's facts into a hypergraph, prints the normalized
//! propagation matrix and runs the residual propagation stack.

use dhkge::fact::IdFact;
use dhkge::hgnn::{build_incidence, combine, propagate, propagation_matrix, Activation, Propagation};
use dhkge::rng::seeded;
use ndarray::Array2;
use rand::Rng;

fn main() -> dhkge::Result<()> {
    let facts = vec![
        IdFact::triple(0, 0, 1),
        IdFact::with_qualifiers(1, 1, 2, vec![(0, 3)]),
        IdFact::with_qualifiers(2, 0, 3, vec![(1, 4), (0, 0)]),
    ];
    let n = 6; // entity 5 is isolated
    let incidence = build_incidence(&facts, n);
    println!("hyperedges: {:?}", incidence.edges);
    println!("node degrees: {:?}", incidence.node_degree);

    let w = propagation_matrix(&incidence);
    let dense = w.to_dense();
    for row in dense.rows() {
        println!(
            "{}",
            row.iter().map(|x| format!("{x:6.3}")).collect::<Vec<_>>().join(" ")
        );
    }

    let dim = 4;
    let mut rng = seeded(3, 0);
    let u0 = Array2::from_shape_fn((n, dim), |_| rng.gen_range(-1.0..1.0));
    let params = Propagation::new(dim, 2, &mut rng);
    let uk = propagate(&u0, &w, &params, Activation::Relu)?;
    let u = combine(&u0, &uk)?;
    for i in 0..n {
        let moved = (&u.row(i) - &u0.row(i)).mapv(|x| x * x).sum().sqrt();
        println!("entity {i}: representation moved by {moved:.4}");
    }
    Ok(())
}
