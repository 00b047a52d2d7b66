//! Selector and backbone FLOPs for a 7B-class omni model over a two-minute
//! stream at full, 35% and 25% token budgets.
//!
//! cargo run --release --example flops_table

use avprune::efficiency::{budget_presets, omni_7b_shape, report, BackboneSpec, CLOSED_FORM};
use avprune::vgas::{param_count, SelectorConfig};

fn main() -> avprune::Result<()> {
    let shape = omni_7b_shape();
    let scfg = SelectorConfig::standard(shape.dim);
    let spec = BackboneSpec::omni_7b();
    println!("{CLOSED_FORM}\n");
    println!(
        "selector: {} parameters; stream: {} chunks x ({} + {} + {}) tokens\n",
        param_count(&scfg),
        shape.chunks,
        shape.tokens_per_frame,
        shape.tokens_per_frame,
        shape.audio_tokens
    );
    println!("budget  tokens  retained  selector (T)  backbone (T)  total (T)  selector/backbone");
    for (name, ccfg) in budget_presets() {
        let r = report(&shape, &ccfg, &scfg, &spec)?;
        println!(
            "{name:>6}  {:>6}  {:>8.4}  {:>11.4}  {:>12.2}  {:>9.2}  {:.2e}",
            r.compressed_tokens,
            r.retained_ratio,
            r.selector_flops as f64 / 1e12,
            r.backbone_flops_compressed as f64 / 1e12,
            r.total_compressed as f64 / 1e12,
            r.selector_to_backbone()
        );
    }
    Ok(())
}
