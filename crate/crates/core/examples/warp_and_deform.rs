//! Backward warping and modulated deformable convolution on a small map.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vinpaint::kernels::{conv2d, deformable_conv, warp, ConvWeights, FeatureMap, FlowField, OffsetField};

fn main() -> vinpaint::Result<()> {
    let src = FeatureMap::from_fn(6, 8, 1, |y, x, _| (y * 8 + x) as f64);

    // Half a pixel to the right everywhere: out(p) = src(p + (0, 0.5)).
    let shifted = warp(&src, &FlowField::constant(6, 8, 0.5, 0.0))?;
    println!(
        "row 2 before: {:?}",
        (0..8).map(|x| src.get(2, x, 0)).collect::<Vec<_>>()
    );
    println!(
        "row 2 warped: {:?}",
        (0..8).map(|x| shifted.get(2, x, 0)).collect::<Vec<_>>()
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let w = ConvWeights::random(&mut rng, 2, 1, 3, 3);
    let identity = OffsetField::identity(6, 8, w.taps());
    let plain = conv2d(&src, &w)?;
    let deformed = deformable_conv(&src, &identity, &w)?;
    println!("zero offsets, unit modulation == conv2d: {}", plain == deformed);

    // Every tap pushed one pixel down with half weight.
    let taps = w.taps();
    let offsets = vec![[1.0, 0.0]; 6 * 8 * taps];
    let field = OffsetField::new(6, 8, taps, offsets, vec![0.5; 6 * 8 * taps])?;
    let moved = deformable_conv(&src, &field, &w)?;
    println!(
        "output (3, 4) plain {:.3}, deformed {:.3}",
        plain.get(3, 4, 0),
        moved.get(3, 4, 0)
    );
    Ok(())
}
