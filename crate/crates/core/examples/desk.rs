//! Runs the closed-loop synthetic experiment and prints the mIOU trajectory.

use std::time::Instant;

use roadseg::experiment::{run_desk_experiment, DeskConfig};
use roadseg::selftrain::baseline_segmenter;
use roadseg::Execution;

fn main() -> roadseg::Result<()> {
    let mut cfg = DeskConfig::default();
    if let Some(seed) = std::env::args().nth(1).and_then(|s| s.parse().ok()) {
        cfg.seed = seed;
        cfg.gap.seed = seed;
    }
    let start = Instant::now();
    let report = run_desk_experiment(&cfg, &baseline_segmenter(), Execution::default())?;
    println!(
        "classifier accuracy {:.3} loss {:.4}",
        report.classifier_accuracy, report.classifier_loss
    );
    println!("saliency-only mIOU  {:.4}", report.saliency_miou);
    for (i, m) in report.trajectory().iter().enumerate() {
        println!("iteration {i}: mIOU {m:.6}");
    }
    println!("elapsed {:.1?}", start.elapsed());
    Ok(())
}
