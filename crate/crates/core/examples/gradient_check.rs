//! Finite-difference check of every selector parameter with the top-k mask
//! frozen, plus the straight-through gradient reaching both input projections.
//!
//! cargo run --release --example gradient_check

use avprune::vgas::gradcheck::{standard_checks, ste_projection_norms, GRADCHECK_TOLERANCE};

fn main() -> avprune::Result<()> {
    for r in standard_checks(7)? {
        let w = r.worst().expect("non-empty");
        println!(
            "{:?} layers={} heads={}: {} params, worst {} rel {:.2e} ({})",
            r.guidance,
            r.layers,
            r.heads,
            r.entries.len(),
            w.tensor,
            w.rel_error,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    println!("tolerance {GRADCHECK_TOLERANCE:e}");
    let (audio, video) = ste_projection_norms(7)?;
    println!("STE gradient norm: audio_in {audio:.4e}, video_in {video:.4e}");
    Ok(())
}
