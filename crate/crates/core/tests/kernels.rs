mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use vinpaint::kernels::*;

#[test]
fn conv_matches_naive_loops() {
    let mut r = rng(11);
    for case in 0..30 {
        let (h, w) = (r.gen_range(1..=16), r.gen_range(1..=16));
        let (ic, oc) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let k = [1, 3, 5][case % 3];
        let src = random_map(&mut r, h, w, ic);
        let weights = ConvWeights::random(&mut r, oc, ic, k, k);
        assert!(max_abs_diff(&conv2d(&src, &weights).unwrap(), &oracle_conv(&src, &weights)) <= 1e-12);
    }
}

#[test]
fn strided_conv_subsamples_full_conv() {
    let mut r = rng(12);
    let src = random_map(&mut r, 13, 10, 3);
    let weights = ConvWeights::random(&mut r, 2, 3, 3, 3);
    let full = conv2d(&src, &weights).unwrap();
    let s = conv2d_strided(&src, &weights, 2).unwrap();
    assert_eq!(s.dims(), (7, 5, 2));
    for y in 0..7 {
        for x in 0..5 {
            assert_eq!(s.pixel(y, x), full.pixel(2 * y, 2 * x));
        }
    }
}

#[test]
fn deformable_matches_gather_oracle() {
    let mut r = rng(13);
    for _ in 0..30 {
        let (h, w) = (r.gen_range(1..=12), r.gen_range(1..=12));
        let (ic, oc) = (r.gen_range(1..=3), r.gen_range(1..=3));
        let src = random_map(&mut r, h, w, ic);
        let weights = ConvWeights::random(&mut r, oc, ic, 3, 3);
        let offsets = random_offsets(&mut r, h, w, 9);
        let got = deformable_conv(&src, &offsets, &weights).unwrap();
        assert!(max_abs_diff(&got, &oracle_deform(&src, &offsets, &weights)) <= 1e-12);
    }
}

#[test]
fn deformable_with_identity_offsets_is_conv() {
    let mut r = rng(14);
    let src = random_map(&mut r, 9, 11, 3);
    let weights = ConvWeights::random(&mut r, 4, 3, 3, 3);
    let a = deformable_conv(&src, &OffsetField::identity(9, 11, 9), &weights).unwrap();
    assert!(max_abs_diff(&a, &conv2d(&src, &weights).unwrap()) <= 1e-12);
}

#[test]
fn modulation_from_raw_is_squashed() {
    let f = OffsetField::from_raw(1, 1, 2, vec![[0.0; 2]; 2], vec![-100.0, 100.0]).unwrap();
    assert!(f.modulation(0, 0, 0) >= 0.0 && f.modulation(0, 0, 0) < 1e-12);
    assert!(f.modulation(0, 0, 1) <= 1.0 && f.modulation(0, 0, 1) > 1.0 - 1e-12);
    assert!(OffsetField::new(1, 1, 1, vec![[0.0; 2]], vec![1.5]).is_err());
}

#[test]
fn warp_matches_per_pixel_oracle() {
    let mut r = rng(15);
    for _ in 0..30 {
        let src = random_map(&mut r, 16, 16, 2);
        let flow = random_flow(&mut r, 16, 16, 6.0);
        assert!(max_abs_diff(&warp(&src, &flow).unwrap(), &oracle_warp(&src, &flow)) <= 1e-12);
    }
}

#[test]
fn dense_attention_matches_oracle() {
    let mut r = rng(16);
    for (h, w, ws, heads) in [(16, 16, 8, 2), (10, 13, 4, 1), (7, 7, 8, 4), (12, 20, 5, 2)] {
        let q = random_map(&mut r, h, w, 4);
        let k = random_map(&mut r, h, w, 4);
        let v = random_map(&mut r, h, w, 4);
        let grid = WindowGrid::all(h, w, ws).unwrap();
        let got = sparse_window_attention(&q, &k, &v, &grid, heads).unwrap();
        assert!(max_abs_diff(&got, &oracle_window_attention(&q, &k, &v, ws, heads)) <= 1e-12);
    }
}

#[test]
fn sparse_attention_selected_and_passthrough() {
    let mut r = rng(17);
    let (h, w) = (24, 24);
    let q = random_map(&mut r, h, w, 4);
    let k = random_map(&mut r, h, w, 4);
    let v = random_map(&mut r, h, w, 4);
    let mask = MaskFrame::from_fn(h, w, |y, x| y == 3 && x == 20 || y == 17 && x == 9);
    let grid = select_masked_windows(&mask, 8).unwrap();
    assert_eq!(grid.selected().collect::<Vec<_>>(), vec![2, 7]);
    let got = sparse_window_attention(&q, &k, &v, &grid, 2).unwrap();
    let dense = oracle_window_attention(&q, &k, &v, 8, 2);
    for y in 0..h {
        for x in 0..w {
            if grid.is_selected(grid.window_of(y, x)) {
                for c in 0..4 {
                    assert!((got.get(y, x, c) - dense.get(y, x, c)).abs() <= 1e-12);
                }
            } else {
                assert_eq!(got.pixel(y, x), q.pixel(y, x));
            }
        }
    }
}

#[test]
fn softmax_rows_sum_to_one() {
    let mut r = rng(18);
    let q = random_map(&mut r, 16, 16, 4);
    let k = random_map(&mut r, 16, 16, 4);
    let grid = WindowGrid::all(16, 16, 8).unwrap();
    for index in 0..grid.len() {
        for head in 0..2 {
            for row in window_attention_probs(&q, &k, &grid, index, 2, head).unwrap() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
                assert!(row.iter().all(|p| *p >= 0.0));
            }
        }
    }
}

#[test]
fn spec_examples() {
    let row = FeatureMap::new(1, 2, 1, vec![0.0, 1.0]).unwrap();
    assert_eq!(bilinear_sample(&row, 0.0, 0.5), vec![0.5]);
    assert_eq!(bilinear_sample(&row, 0.0, -5.0), vec![0.0]);
    let ramp = FeatureMap::new(1, 4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let out = warp(&ramp, &FlowField::constant(1, 4, 1.0, 0.0)).unwrap();
    assert_eq!(out.data(), &[1.0, 2.0, 3.0, 3.0]);
    let one = ConvWeights::new(1, 1, 1, 1, vec![1.0], vec![0.0]).unwrap();
    let off = OffsetField::new(1, 2, 1, vec![[0.0, 0.5], [0.0, 0.0]], vec![1.0, 1.0]).unwrap();
    assert_eq!(deformable_conv(&row, &off, &one).unwrap().get(0, 0, 0), 0.5);
    let ones = ConvWeights::new(1, 1, 3, 3, vec![1.0; 9], vec![0.0]).unwrap();
    let c = conv2d(&FeatureMap::filled(5, 5, 1, 0.25), &ones).unwrap();
    assert_eq!(c.get(2, 2, 0), 9.0 * 0.25);
}

#[test]
fn kernels_are_deterministic() {
    let mut r = rng(19);
    let src = random_map(&mut r, 20, 20, 3);
    let weights = ConvWeights::random(&mut r, 3, 3, 3, 3);
    let offsets = random_offsets(&mut r, 20, 20, 9);
    let a = deformable_conv(&src, &offsets, &weights).unwrap();
    let b = deformable_conv(&src, &offsets, &weights).unwrap();
    assert_eq!(
        a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

fn mask_strategy(h: usize, w: usize) -> impl Strategy<Value = MaskFrame> {
    proptest::collection::vec(any::<bool>(), h * w).prop_map(move |d| MaskFrame::new(h, w, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_flow_warp_is_identity(seed in any::<u64>(), h in 1usize..20, w in 1usize..20) {
        let src = random_map(&mut rng(seed), h, w, 3);
        prop_assert_eq!(warp(&src, &FlowField::zeros(h, w)).unwrap(), src);
    }

    #[test]
    fn integer_samples_are_exact(seed in any::<u64>(), y in 0usize..12, x in 0usize..9) {
        let src = random_map(&mut rng(seed), 12, 9, 2);
        prop_assert_eq!(bilinear_sample(&src, y as f64, x as f64), src.pixel(y, x).to_vec());
    }

    #[test]
    fn selection_is_monotone(base in mask_strategy(20, 20), extra in mask_strategy(20, 20), ws in 1usize..9) {
        let a = select_masked_windows(&base, ws).unwrap();
        let b = select_masked_windows(&base.union(&extra).unwrap(), ws).unwrap();
        for i in a.selected() {
            prop_assert!(b.is_selected(i));
        }
    }

    #[test]
    fn selection_is_exact(mask in mask_strategy(18, 21), ws in 1usize..9) {
        let g = select_masked_windows(&mask, ws).unwrap();
        for i in 0..g.len() {
            let (ys, xs) = g.bounds(i);
            let touched = ys.clone().any(|y| xs.clone().any(|x| mask.get(y, x)));
            prop_assert_eq!(g.is_selected(i), touched);
        }
    }

    #[test]
    fn no_selection_passes_through(seed in any::<u64>()) {
        let mut r = rng(seed);
        let q = random_map(&mut r, 10, 10, 2);
        let k = random_map(&mut r, 10, 10, 2);
        let grid = WindowGrid::new(10, 10, 4).unwrap();
        prop_assert_eq!(sparse_window_attention(&q, &k, &k, &grid, 1).unwrap(), q);
    }
}
