mod common;

use std::path::Path;
use std::process::Command;

use vinpaint::flow::FlowGraphPlan;
use vinpaint::kernels::*;
use vinpaint::msvt::MsvtConfig;
use vinpaint::neural::NeuralWeights;
use vinpaint::pipeline::io::{list_pngs, read_frame, write_frame, write_mask};
use vinpaint::pipeline::*;
use vinpaint::synth::*;
use vinpaint::Error;

fn cfg() -> SceneConfig {
    SceneConfig::default()
}

#[test]
fn empty_masks_are_identity_without_completion() {
    let frames = translating_frames(6, 32, 40, (1, 2));
    let masks = vec![MaskFrame::empty(32, 40); 6];
    let (out, stats) = Inpainter::new(cfg()).unwrap().inpaint(frames.clone(), masks).unwrap();
    assert_eq!(out, frames);
    assert_eq!(stats.flow_completions, 0);
    assert_eq!(stats.attended_tokens, 0);
}

#[test]
fn translating_scene_with_exact_flows_is_recovered() {
    let frames = translating_frames(10, 64, 64, (0, 1));
    for hole_frame in [0, 5, 9] {
        let masks: Vec<MaskFrame> = (0..10)
            .map(|t| {
                if t == hole_frame {
                    rect_mask(64, 64, 20, 24, 8, 8)
                } else {
                    MaskFrame::empty(64, 64)
                }
            })
            .collect();
        let inpainter = Inpainter::new(cfg())
            .unwrap()
            .with_flow_source(TranslationFlow { step: (0, 1) });
        let (out, stats) = inpainter.inpaint(frames.clone(), masks.clone()).unwrap();
        assert_eq!(out, frames);
        assert_eq!(stats.residual_pixels, 0);
        // Content inside the hole must come from the neighbours, not the input.
        let mut holed = frames.clone();
        for y in 20..28 {
            for x in 24..32 {
                for c in 0..3 {
                    holed[hole_frame].set(y, x, c, 0.0);
                }
            }
        }
        let (out, _) = inpainter.inpaint(holed, masks).unwrap();
        assert_eq!(out[hole_frame], frames[hole_frame]);
    }
}

#[test]
fn static_scene_fills_from_other_frames() {
    let frames = static_frames(6, 48, 48);
    let masks: Vec<MaskFrame> = (0..6)
        .map(|t| {
            if t == 2 {
                rect_mask(48, 48, 16, 18, 10, 10)
            } else {
                MaskFrame::empty(48, 48)
            }
        })
        .collect();
    let mut holed = frames.clone();
    for y in 16..26 {
        for x in 18..28 {
            for c in 0..3 {
                holed[2].set(y, x, c, 1.0);
            }
        }
    }
    let (out, stats) = Inpainter::new(cfg()).unwrap().inpaint(holed, masks).unwrap();
    assert!(common::max_abs_diff(&out[2], &frames[2]) <= 1.0 / 255.0);
    assert_eq!(stats.residual_pixels, 0);
}

#[test]
fn small_budget_gives_the_same_result() {
    let frames = translating_frames(30, 32, 32, (0, 1));
    let masks = moving_square_masks(30, 32, 32, 6, (4, 4), (1, 1));
    let small = SceneConfig {
        neighbor_count: 6,
        ref_stride: 5,
        ..cfg()
    };
    let plan = plan_chunks(30, &small);
    let tight = SceneConfig {
        budget: Some(plan.max_locals() + 2),
        ..small.clone()
    };
    let (a, sa) = Inpainter::new(small)
        .unwrap()
        .inpaint(frames.clone(), masks.clone())
        .unwrap();
    let (b, sb) = Inpainter::new(tight.clone()).unwrap().inpaint(frames, masks).unwrap();
    assert_eq!(a, b);
    assert!(sa.peak_resident_frames <= plan.residency_bound());
    assert!(sb.peak_resident_frames <= plan.max_locals() + 2);
    let too_small = SceneConfig {
        budget: Some(plan.max_locals() + 1),
        ..tight
    };
    assert!(matches!(
        Inpainter::new(too_small)
            .unwrap()
            .inpaint(vec![Frame::zeros(16, 16, 3); 30], vec![MaskFrame::empty(16, 16); 30]),
        Err(Error::Budget { .. })
    ));
}

#[test]
fn plan_examples() {
    let plan = plan_chunks(100, &cfg());
    assert_eq!(plan.reference_set(), [0, 20, 40, 60, 80]);
    let plan = plan_chunks(5, &cfg());
    for t in 0..5 {
        assert_eq!(plan.locals(t), 0..5);
        assert!(plan.references(t).is_empty());
    }
    let plan = plan_chunks(1, &cfg());
    assert_eq!(plan.locals(0), 0..1);
    assert!(plan.references(0).is_empty());
    let plan = plan_chunks(1000, &cfg());
    assert_eq!(plan.residency_bound(), 18 + 50 + 2);
    let covered: usize = plan.groups().iter().map(|g| g.outputs.len()).sum();
    assert_eq!(covered, 1000);
}

fn write_pngs(dir: &Path, frames: &[Frame], masks: &[MaskFrame]) -> (std::path::PathBuf, std::path::PathBuf) {
    write_scene(dir, frames, masks).unwrap()
}

#[test]
fn load_scene_contract() {
    let dir = tempfile::tempdir().unwrap();
    let frames = static_frames(3, 720, 1280);
    let (f, m) = write_pngs(&dir.path().join("hd"), &frames, &vec![MaskFrame::empty(720, 1280); 3]);
    let (loaded, masks) = load_scene(&f, &m).unwrap();
    assert_eq!(loaded.len(), 3);
    assert_eq!((loaded[0].height(), loaded[0].width()), (720, 1280));
    assert!(masks.iter().all(MaskFrame::is_clear));

    let (f, m) = write_pngs(
        &dir.path().join("short"),
        &static_frames(3, 16, 16),
        &vec![MaskFrame::empty(16, 16); 2],
    );
    assert!(matches!(
        load_scene(&f, &m),
        Err(Error::CountMismatch { frames: 3, masks: 2 })
    ));

    let (f, m) = write_pngs(
        &dir.path().join("dims"),
        &static_frames(2, 16, 16),
        &vec![MaskFrame::empty(16, 16); 2],
    );
    write_frame(&f.join("00001.png"), &FeatureMap::zeros(16, 24, 3)).unwrap();
    assert!(matches!(load_scene(&f, &m), Err(Error::DimensionMismatch { .. })));

    let (f, m) = write_pngs(
        &dir.path().join("bad"),
        &static_frames(2, 16, 16),
        &vec![MaskFrame::empty(16, 16); 2],
    );
    std::fs::write(f.join("00001.png"), b"not a png").unwrap();
    let err = load_scene(&f, &m).unwrap_err();
    assert!(!matches!(
        err,
        Error::CountMismatch { .. } | Error::DimensionMismatch { .. }
    ));
    assert!(load_scene(&dir.path().join("missing"), &m).is_err());
}

#[test]
fn mask_threshold_is_128() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.png");
    let img = image::GrayImage::from_fn(4, 1, |x, _| image::Luma([[0u8, 127, 128, 255][x as usize]]));
    img.save(&p).unwrap();
    let m = vinpaint::pipeline::io::read_mask(&p).unwrap();
    assert_eq!(m.data(), [false, false, true, true]);
}

#[test]
fn preprocess_postprocess_round_trip() {
    let frames = translating_frames(2, 50, 70, (1, 1));
    let empty = vec![MaskFrame::empty(50, 70); 2];
    for scale in [1.0, 0.7, 0.5] {
        let c = SceneConfig {
            scale_factor: scale,
            ..cfg()
        };
        let (pf, pm, rec) = preprocess(&frames, &empty, &c).unwrap();
        assert!(pf.iter().all(|f| f.height() % 8 == 0 && f.width() % 8 == 0));
        assert!(pm.iter().all(MaskFrame::is_clear));
        let back = postprocess(&pf, &frames, &empty, &rec).unwrap();
        assert_eq!(back, frames);
        if scale == 1.0 {
            let cropped: Vec<Frame> = pf.iter().map(|f| f.crop(50, 70).unwrap()).collect();
            assert_eq!(cropped, frames);
        }
    }
    let rec = PreprocessRecord::new(720, 1280, 0.7).unwrap();
    assert_eq!((rec.scaled, rec.padded, rec.pad()), ((504, 896), (504, 896), (0, 0)));
    assert!(PreprocessRecord::new(20, 20, 0.5).is_err());

    let one = vec![rect_mask(50, 70, 25, 35, 1, 1)];
    let (_, pm, _) = preprocess(
        &frames[..1],
        &one,
        &SceneConfig {
            scale_factor: 1.0,
            ..cfg()
        },
    )
    .unwrap();
    assert_eq!(pm[0], rect_mask(56, 72, 21, 31, 9, 9));
    let (_, pm, _) = preprocess(
        &frames[..1],
        &one,
        &SceneConfig {
            scale_factor: 1.0,
            dilation_radius: 0,
            ..cfg()
        },
    )
    .unwrap();
    assert_eq!(pm[0].count(), 1);
}

#[test]
fn postprocess_keeps_everything_outside_the_mask() {
    let frames = translating_frames(2, 45, 61, (0, 2));
    let masks = moving_square_masks(2, 45, 61, 9, (10, 10), (3, 4));
    let c = SceneConfig {
        scale_factor: 0.7,
        ..cfg()
    };
    let (pf, _, rec) = preprocess(&frames, &masks, &c).unwrap();
    let garbage: Vec<Frame> = pf
        .iter()
        .map(|f| FeatureMap::filled(f.height(), f.width(), 3, 0.0))
        .collect();
    let out = postprocess(&garbage, &frames, &masks, &rec).unwrap();
    for t in 0..2 {
        assert_eq!((out[t].height(), out[t].width()), (45, 61));
        for y in 0..45 {
            for x in 0..61 {
                if !masks[t].get(y, x) {
                    assert_eq!(out[t].pixel(y, x), frames[t].pixel(y, x));
                } else {
                    assert_eq!(out[t].pixel(y, x), [0.0; 3]);
                }
            }
        }
    }
}

fn request(root: &Path, frames: &Path, masks: &Path, cfg: SceneConfig) -> InpaintRequest {
    InpaintRequest {
        frames_dir: frames.to_path_buf(),
        masks_dir: masks.to_path_buf(),
        out_dir: root.to_path_buf(),
        report_path: None,
        cfg,
    }
}

fn read_dir_frames(dir: &Path) -> Vec<Frame> {
    list_pngs(dir).unwrap().iter().map(|p| read_frame(p).unwrap()).collect()
}

#[test]
fn run_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let frames = translating_frames(10, 48, 64, (1, 2));
    let masks = moving_square_masks(10, 48, 64, 10, (8, 8), (1, 3));
    let (f, m) = write_pngs(dir.path(), &frames, &masks);
    let a = run_inpaint(&request(&dir.path().join("a"), &f, &m, cfg())).unwrap();
    let b = run_inpaint(&request(&dir.path().join("b"), &f, &m, cfg())).unwrap();
    let (oa, ob) = (
        read_dir_frames(&dir.path().join("a")),
        read_dir_frames(&dir.path().join("b")),
    );
    assert_eq!(oa.len(), 10);
    assert_eq!(oa, ob);
    assert!(a.peak_resident_frames <= a.residency_bound);
    assert_eq!(a.original_dims, [48, 64]);
    let saved = RunReport::load(&dir.path().join("a").join("report.json")).unwrap();
    assert_eq!(saved.frames, 10);
    assert_eq!(saved.peak_resident_frames, a.peak_resident_frames);
    assert!(saved.timings_ms.contains_key("total"));
    assert_eq!(a.attended_tokens, b.attended_tokens);
    let originals = read_dir_frames(&f);
    for t in 0..10 {
        for y in 0..48 {
            for x in 0..64 {
                if !masks[t].get(y, x) {
                    assert_eq!(oa[t].pixel(y, x), originals[t].pixel(y, x));
                }
            }
        }
    }
}

#[test]
fn neural_mode_runs_and_needs_weights() {
    let frames = translating_frames(4, 32, 32, (0, 1));
    let masks = moving_square_masks(4, 32, 32, 6, (10, 10), (1, 0));
    let neural = SceneConfig {
        mode: Mode::Neural,
        ..cfg()
    };
    assert!(matches!(
        Inpainter::new(neural.clone())
            .unwrap()
            .inpaint(frames.clone(), masks.clone()),
        Err(Error::Weights(_))
    ));
    let w = NeuralWeights::seeded_with(
        1,
        FlowGraphPlan {
            hidden: 4,
            features: 4,
            kernel: 3,
        },
        4,
        MsvtConfig::default(),
        1,
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    w.save(&path).unwrap();
    let from_file = Inpainter::new(SceneConfig {
        weights_path: Some(path),
        ..neural.clone()
    })
    .unwrap();
    let direct = Inpainter::new(neural).unwrap().with_weights(w).unwrap();
    let (a, _) = from_file.inpaint(frames.clone(), masks.clone()).unwrap();
    let (b, _) = direct.inpaint(frames.clone(), masks.clone()).unwrap();
    assert_eq!(a, b);
    for t in 0..4 {
        for y in 0..32 {
            for x in 0..32 {
                if !masks[t].get(y, x) {
                    assert_eq!(a[t].pixel(y, x), frames[t].pixel(y, x));
                }
            }
        }
    }
}

#[test]
fn binary_usage_and_smoke() {
    let bin = env!("CARGO_BIN_EXE_vinpaint");
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(bin)
        .args(["inpaint", "--frames", "f", "--out", "o"])
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("--masks"));

    let frames = static_frames(3, 24, 24);
    let masks = vec![rect_mask(24, 24, 8, 8, 4, 4); 3];
    let (f, m) = write_pngs(dir.path(), &frames, &masks);
    write_mask(&m.join("00002.png"), &MaskFrame::empty(24, 24)).unwrap();
    let out = dir.path().join("out");
    let run = Command::new(bin)
        .arg("inpaint")
        .arg("--frames")
        .arg(&f)
        .arg("--masks")
        .arg(&m)
        .arg("--out")
        .arg(&out)
        .args(["--mode", "classical", "--scale", "1.0"])
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["frames"], 3);
    assert_eq!(list_pngs(&out).unwrap().len(), 3);

    let eval = Command::new(bin)
        .arg("evaluate")
        .arg("--pred")
        .arg(&out)
        .arg("--gt")
        .arg(&f)
        .output()
        .unwrap();
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let failing = Command::new(bin)
        .arg("inpaint")
        .arg("--frames")
        .arg(dir.path().join("none"))
        .arg("--masks")
        .arg(&m)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(!failing.status.success());
}
