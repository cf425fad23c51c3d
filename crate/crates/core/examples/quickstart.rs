//! Minimal end-to-end run: train a small hybrid flow on circles, print the
//! evaluation report, and draw a few samples through the inverse map.
//!
//! ```sh
//! cargo run --release -p swflow-core --example quickstart
//! ```

use swflow_core::datasets::{DatasetKind, DatasetSpec};
use swflow_core::objectives::{LossSpec, LossVariant};
use swflow_core::rng::{normal_matrix, stream, stream_rng};
use swflow_core::train::{train, TrainConfig};

fn main() -> swflow_core::Result<()> {
    // A deliberately small configuration so this example finishes in seconds;
    // see TrainConfig::default() for the full-scale settings.
    let cfg = TrainConfig {
        loss: LossSpec::new(LossVariant::HybridLatentSpace),
        steps: 2_000,
        batch_size: 256,
        eval_every: 500,
        dataset: DatasetSpec::new(DatasetKind::Circles, 10_000, 7),
        seed: 7,
        verbose: true,
        ..TrainConfig::default()
    };

    let outcome = train(&cfg)?;
    let report = outcome.reports.last().expect("at least one report");
    println!("\nfinal report:\n{}", report.text_report());

    let z = normal_matrix(&mut stream_rng(cfg.seed, stream::SAMPLE), 5, 2);
    let samples = outcome.model.inverse(&z)?;
    println!("five generated samples (standardized coordinates):");
    for i in 0..samples.rows() {
        println!("  ({:+.3}, {:+.3})", samples.row(i)[0], samples.row(i)[1]);
    }
    Ok(())
}
