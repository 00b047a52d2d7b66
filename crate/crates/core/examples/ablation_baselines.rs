//! Vision-guided selection against the audio-only and random comparators,
//! once with decoy audio distractors and once with plain noise.
//!
//! With plain noise the informative audio stands out by its norm alone, so
//! audio self-attention does about as well as video guidance. Decoys carry
//! the same energy but point away from anything in the video; only the
//! cross-attention to the pruned frames can tell the two groups apart.
//!
//! cargo run --release --example ablation_baselines

use avprune::baselines::{random_prune, BaselineKind};
use avprune::stream::{generate_synthetic, AudioDistractors, SyntheticSpec};
use avprune::trainer::{evaluate_recall, recall_of, train, DeskSetup, Labeled, TrainConfig};
use avprune::vgas::Guidance;

fn main() -> avprune::Result<()> {
    let desk = DeskSetup::default();
    for distractors in [AudioDistractors::Decoy, AudioDistractors::Isotropic] {
        let spec = SyntheticSpec {
            distractors,
            ..desk.data.clone()
        };
        let (train_s, train_l) = generate_synthetic(&spec, 1)?;
        let (test_s, test_l) = generate_synthetic(&spec, 2)?;
        let train_data = Labeled::new(&train_s, &train_l)?;
        let test_data = Labeled::new(&test_s, &test_l)?;

        println!("{distractors:?} distractors");
        for guidance in [Guidance::Vision, Guidance::AudioOnly] {
            let tcfg = TrainConfig {
                guidance,
                ..desk.train
            };
            let (params, _) = train(train_data, None, &tcfg, &desk.selector, &desk.compression)?;
            let m = evaluate_recall(
                &params,
                test_data,
                &desk.selector,
                &desk.compression,
                guidance,
            )?;
            let name = match guidance {
                Guidance::Vision => "vision".to_string(),
                Guidance::AudioOnly => BaselineKind::AudioOnly.to_string(),
            };
            println!("  {name:<10} recall {:.3}", m.recall);
        }
        let kept = test_s
            .chunks
            .iter()
            .map(|c| random_prune(c, &desk.compression, 9).map(|r| r.kept_audio))
            .collect::<avprune::Result<Vec<_>>>()?;
        let (r, _, _) = recall_of(kept.iter().map(Vec::as_slice), &test_l);
        println!("  {:<10} recall {r:.3}", BaselineKind::Random.to_string());
    }
    Ok(())
}
