//! Flow estimation, consistency checking and completion inside a hole.

use vinpaint::flow::{
    complete_flow_harmonic, complete_flow_recurrent, estimate_flow, flow_consistency, FlowCompletionWeights,
    FlowGraphPlan, FlowPair,
};
use vinpaint::synth::{rect_mask, translating_frames};

fn main() -> vinpaint::Result<()> {
    let frames = translating_frames(3, 64, 64, (1, 2));
    let forward = estimate_flow(&frames[0], &frames[1])?;
    let backward = estimate_flow(&frames[1], &frames[0])?;
    println!(
        "estimated flow at centre: u {:.3}, v {:.3} (true 2, 1)",
        forward.u(32, 32),
        forward.v(32, 32)
    );

    let pair = FlowPair::new(forward.clone(), backward)?;
    let valid = flow_consistency(&pair, 0.5)?;
    println!("consistent pixels: {} of {}", valid.count(), 64 * 64);

    let hole = rect_mask(64, 64, 20, 20, 16, 16);
    let filled = complete_flow_harmonic(&forward, &hole)?;
    println!(
        "harmonic fill at hole centre: u {:.3}, v {:.3}",
        filled.u(28, 28),
        filled.v(28, 28)
    );

    let w = FlowCompletionWeights::seeded(
        5,
        FlowGraphPlan {
            hidden: 8,
            features: 8,
            kernel: 3,
        },
    );
    let completed = complete_flow_recurrent(&[pair.clone(), pair], &[hole.clone(), hole], &w)?;
    println!(
        "recurrent graph (random weights) at hole centre: u {:.3}; outside kept: {}",
        completed[0].forward.u(28, 28),
        completed[0].forward.u(5, 5) == forward.u(5, 5)
    );
    Ok(())
}
