//! Spatial and temporal saliency on one planted chunk, and how often the
//! planted tokens survive pruning as the noise grows.
//!
//! cargo run --release --example stvp_saliency

use avprune::stream::{generate_synthetic, CompressionConfig, SyntheticSpec};
use avprune::stvp::prune_chunk_video;

fn main() -> avprune::Result<()> {
    let spec = SyntheticSpec {
        chunks: 1,
        ..SyntheticSpec::default()
    };
    let ccfg = CompressionConfig::new(0.75, 0.0)?;
    let (stream, labels) = generate_synthetic(&spec, 3)?;
    let sel = prune_chunk_video(&stream.chunks[0], &ccfg)?;
    let l = &labels.chunks[0];

    println!("token  spatial  temporal");
    for j in 0..stream.tokens_per_frame {
        let mark = |set: &[usize]| if set.contains(&j) { '*' } else { ' ' };
        println!(
            "{j:>5}  {:.4}{}  {:.4}{}",
            sel.saliency.spatial[j],
            mark(&l.salient_frame1),
            sel.saliency.temporal[j],
            mark(&l.salient_frame2)
        );
    }
    println!(
        "kept frame 1 {:?}, frame 2 {:?} (* = planted)\n",
        sel.kept_frame1, sel.kept_frame2
    );

    println!("noise/margin  spatial recall  temporal recall");
    for ratio in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let spec = SyntheticSpec {
            chunks: 200,
            noise: ratio * spec.margin,
            ..spec.clone()
        };
        let (stream, labels) = generate_synthetic(&spec, 5)?;
        let (mut hs, mut ht, mut n) = (0, 0, 0);
        for (c, l) in stream.chunks.iter().zip(&labels.chunks) {
            let sel = prune_chunk_video(c, &ccfg)?;
            hs += l
                .salient_frame1
                .iter()
                .filter(|j| sel.kept_frame1.contains(j))
                .count();
            ht += l
                .salient_frame2
                .iter()
                .filter(|j| sel.kept_frame2.contains(j))
                .count();
            n += l.salient_frame1.len();
        }
        println!(
            "{ratio:>12.1}  {:>14.3}  {:>15.3}",
            hs as f64 / n as f64,
            ht as f64 / n as f64
        );
    }
    Ok(())
}
