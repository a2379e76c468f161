//! Image-domain propagation recovers a hole from a translating neighbour.

use vinpaint::flow::FlowPair;
use vinpaint::kernels::{FlowField, MaskFrame};
use vinpaint::propagation::{propagate_image, PropagationState};
use vinpaint::synth::{rect_mask, translating_frames};

fn main() -> vinpaint::Result<()> {
    let n = 6;
    let frames = translating_frames(n, 48, 48, (0, 1));
    let mut damaged = frames.clone();
    for y in 16..26 {
        for x in 16..26 {
            for c in 0..3 {
                damaged[3].set(y, x, c, 0.0);
            }
        }
    }
    let masks: Vec<MaskFrame> = (0..n)
        .map(|t| {
            if t == 3 {
                rect_mask(48, 48, 16, 16, 10, 10)
            } else {
                MaskFrame::empty(48, 48)
            }
        })
        .collect();
    let pairs: Vec<FlowPair> = (0..n - 1)
        .map(|_| {
            FlowPair::new(
                FlowField::constant(48, 48, 1.0, 0.0),
                FlowField::constant(48, 48, -1.0, 0.0),
            )
        })
        .collect::<vinpaint::Result<_>>()?;

    let state = PropagationState::new(damaged, masks)?;
    println!("hole pixels before: {}", state.remaining_hole_pixels());
    let out = propagate_image(&state, &pairs, 0.5)?;
    println!("hole pixels after: {}", out.remaining_hole_pixels());
    println!("frame 3 restored exactly: {}", out.frames[3] == frames[3]);
    Ok(())
}
