//! Compresses a planted stream at the 35% and 25% token budgets with an
//! untrained selector and prints what survives in each chunk.
//!
//! cargo run --release --example compress_synthetic

use avprune::efficiency::budget_presets;
use avprune::pipeline::compress_stream;
use avprune::stream::{generate_synthetic, retained_counts, SyntheticSpec};
use avprune::vgas::{init_params, SelectorConfig};

fn main() -> avprune::Result<()> {
    let spec = SyntheticSpec {
        chunks: 4,
        tokens_per_frame: 36,
        audio_tokens: 25,
        dim: 32,
        ..SyntheticSpec::default()
    };
    let (stream, labels) = generate_synthetic(&spec, 11)?;
    let scfg = SelectorConfig::new(stream.dim, 16, 2, 8, 1)?;
    let params = init_params(&scfg, 0)?;

    for (name, ccfg) in budget_presets() {
        let counts = retained_counts(&ccfg, stream.tokens_per_frame, stream.audio_tokens);
        println!(
            "{name:>4}: rho_v={:.2} rho_a={:.2} -> {} + {} video, {} audio per chunk ({} of {})",
            ccfg.rho_v(),
            ccfg.rho_a(),
            counts.per_frame,
            counts.per_frame,
            counts.audio,
            counts.tokens_per_chunk(),
            stream.shape().tokens_per_chunk()
        );
        for (c, l) in compress_stream(&stream, &params, &scfg, &ccfg)?
            .iter()
            .zip(&labels.chunks)
        {
            let salient = l
                .salient_frame1
                .iter()
                .filter(|j| c.video.kept_frame1.contains(j))
                .count();
            let moving = l
                .salient_frame2
                .iter()
                .filter(|j| c.video.kept_frame2.contains(j))
                .count();
            println!(
                "      chunk {}: kept {} tokens, salient {}/{} moving {}/{} audio {:?}",
                c.compressed.index,
                c.compressed.tokens.rows(),
                salient,
                l.salient_frame1.len(),
                moving,
                l.salient_frame2.len(),
                c.audio.kept_audio
            );
        }
    }
    Ok(())
}
