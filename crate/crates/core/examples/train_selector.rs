//! Trains the vision-guided selector through its hard top-k and tracks
//! held-out recall of the planted informative audio tokens.
//!
//! cargo run --release --example train_selector

use avprune::baselines::random_prune;
use avprune::stream::generate_synthetic;
use avprune::trainer::{evaluate_recall, recall_of, train, DeskSetup, Labeled};
use avprune::vgas::save_params;

fn main() -> avprune::Result<()> {
    let desk = DeskSetup::default();
    let (train_s, train_l) = generate_synthetic(&desk.data, 1)?;
    let (test_s, test_l) = generate_synthetic(&desk.data, 2)?;
    let train_data = Labeled::new(&train_s, &train_l)?;
    let test_data = Labeled::new(&test_s, &test_l)?;

    let (params, history) = train(
        train_data,
        Some(test_data),
        &desk.train,
        &desk.selector,
        &desk.compression,
    )?;
    println!(" step      loss  grad_norm  held-out recall");
    for r in history.steps.iter().step_by(50).chain(history.last()) {
        println!(
            "{:>5}  {:.5}  {:>9.4}  {:.3}",
            r.step, r.loss, r.grad_norm, r.recall
        );
    }

    let m = evaluate_recall(
        &params,
        test_data,
        &desk.selector,
        &desk.compression,
        desk.train.guidance,
    )?;
    let kept = test_s
        .chunks
        .iter()
        .map(|c| random_prune(c, &desk.compression, 3).map(|r| r.kept_audio))
        .collect::<avprune::Result<Vec<_>>>()?;
    let (random, _, _) = recall_of(kept.iter().map(Vec::as_slice), &test_l);
    println!(
        "held-out recall {:.3} (precision {:.3}), random {random:.3}",
        m.recall, m.precision
    );

    let path = std::env::temp_dir().join("avprune_selector.otp");
    save_params(&params, &desk.selector, &path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}
