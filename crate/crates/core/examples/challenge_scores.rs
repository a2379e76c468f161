//! A-Error / C-Error aggregation and ranking over a small leaderboard.

use vinpaint::metrics::{rank, AggregationWeights, MetricReport, NormalizedScores};

fn main() -> vinpaint::Result<()> {
    let rows = [
        ("Baseline", 0.792, 0.257, 0.255, 0.791),
        ("Team 1", 0.075, 0.260, 0.235, 0.349),
        ("Team 2", 0.208, 0.263, 0.244, 0.439),
        ("Team 3", 0.079, 0.259, 0.218, 0.292),
        ("Ours", 0.071, 0.259, 0.221, 0.287),
    ];
    let weights = AggregationWeights::default();
    let reports = rows
        .iter()
        .map(|&(name, w_fid, w_mae, w_psnr, w_lpips)| {
            MetricReport::new(
                name,
                None,
                Some(NormalizedScores {
                    w_mae,
                    w_psnr,
                    w_fid,
                    w_lpips,
                }),
                &weights,
            )
        })
        .collect::<vinpaint::Result<Vec<_>>>()?;

    println!("{:<10} {:>8} {:>8}", "entry", "A-Error", "C-Error");
    for i in rank(&reports)? {
        let a = reports[i].aggregates.expect("normalised scores given");
        println!("{:<10} {:>8.4} {:>8.4}", reports[i].name, a.a_error, a.c_error);
    }
    Ok(())
}
