//! Mask-guided window selection and the attended-token saving.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vinpaint::kernels::{select_masked_windows, FeatureMap, MaskFrame};
use vinpaint::msvt::{count_attended_tokens, msvt_block, MsvtConfig, MsvtWeights};
use vinpaint::synth::rect_mask;

fn main() -> vinpaint::Result<()> {
    let cfg = MsvtConfig::default();
    let (h, w, c) = (32, 48, 8);
    let mask = rect_mask(h, w, 10, 13, 6, 9);
    let grid = select_masked_windows(&mask, cfg.window_size)?;
    println!("windows selected: {} of {}", grid.selected_count(), grid.len());

    let full = count_attended_tokens(&[MaskFrame::full(h, w)], &cfg)?;
    let sparse = count_attended_tokens(std::slice::from_ref(&mask), &cfg)?;
    println!(
        "attended tokens: {sparse} instead of {full} ({:.1}%)",
        100.0 * sparse as f64 / full as f64
    );

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = FeatureMap::from_fn(h, w, c, |_, _, _| rng.gen_range(-1.0..1.0));
    let weights = MsvtWeights::seeded(11, c, &cfg);
    let out = msvt_block(std::slice::from_ref(&x), &[mask], &weights, &cfg)?;
    let changed = (0..h * w)
        .filter(|&i| out[0].pixel(i / w, i % w) != x.pixel(i / w, i % w))
        .count();
    println!("positions changed by the block: {changed} (feed-forward touches all)");
    Ok(())
}
