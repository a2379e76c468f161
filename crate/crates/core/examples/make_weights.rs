//! Writes a seeded weights file usable with `vinpaint inpaint --mode neural`.
//!
//! `cargo run --example make_weights -- weights.bin [seed]`

use vinpaint::neural::NeuralWeights;

fn main() -> vinpaint::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "weights.bin".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let w = NeuralWeights::seeded(seed);
    w.save(&path)?;
    let back = NeuralWeights::load(&path)?;
    println!("wrote {path} (seed {seed}); reloads identically: {}", back == w);
    Ok(())
}
