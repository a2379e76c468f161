//! Directory-to-directory inpainting of a synthetic scene, with the run report.
//!
//! `cargo run --release --example inpaint_scene -- [frames]`

use vinpaint::pipeline::{run_inpaint, InpaintRequest, SceneConfig};
use vinpaint::synth::{moving_square_masks, translating_frames, write_scene};

fn main() -> vinpaint::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let dir = tempfile::tempdir()?;
    let frames = translating_frames(n, 96, 160, (1, 2));
    let masks = moving_square_masks(n, 96, 160, 20, (30, 40), (1, 3));
    let (frames_dir, masks_dir) = write_scene(dir.path(), &frames, &masks)?;

    let req = InpaintRequest {
        frames_dir,
        masks_dir,
        out_dir: dir.path().join("out"),
        report_path: None,
        cfg: SceneConfig::default(),
    };
    let report = run_inpaint(&req)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    Ok(())
}
