use std::time::Instant;
use swflow_core::datasets::{generate_raw, DatasetKind, DatasetSpec};
use swflow_core::metrics::{eval_auroc, log_likelihoods};
use swflow_core::objectives::{LossSpec, LossVariant};
use swflow_core::rng::{derive_seed, tag};
use swflow_core::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let variant = match args.get(1).map(|s| s.as_str()) {
        Some("mle") => LossVariant::MleOnly,
        Some("sw") => LossVariant::SwOnly,
        Some("hybrid-latent") => LossVariant::HybridLatentSpace,
        _ => LossVariant::HybridDataSpace,
    };
    let steps: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let batch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(512);
    let hidden: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(16);
    let alpha: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    let seed: u64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(0);
    let lr: f64 = args.get(7).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let depth: usize = args.get(8).and_then(|s| s.parse().ok()).unwrap_or(2);
    let proj: usize = args.get(9).and_then(|s| s.parse().ok()).unwrap_or(128);
    let noise: f64 = args.get(10).and_then(|s| s.parse().ok()).unwrap_or(0.04);
    let swp: u32 = args.get(11).and_then(|s| s.parse().ok()).unwrap_or(2);
    let mut loss = LossSpec::new(variant);
    loss.alpha = alpha;
    loss.sw.projections = proj;
    loss.sw.exponent = swp;
    let ckpt = std::path::PathBuf::from(format!(
        "/tmp/ckpt_{}_a{}_s{}_n{}_lr{}.swnf",
        args.get(1).map(|s| s.as_str()).unwrap_or("hybrid"), alpha, seed, noise, lr
    ));
    let cfg = TrainConfig {
        loss,
        steps,
        batch_size: batch,
        hidden: vec![hidden; depth],
        eval_every: 2_000,
        seed,
        learning_rate: lr,
        dataset: DatasetSpec { seed, noise_std: noise, ..DatasetSpec::new(DatasetKind::Circles, 50_000, seed) },
        verbose: true,
        checkpoint_path: Some(ckpt),
        ..TrainConfig::default()
    };
    let t = Instant::now();
    let out = train(&cfg).unwrap();
    let last = out.reports.last().unwrap();

    // OoD AUROCs, same construction as the ood command.
    let standardizer = out.standardizer.as_ref().unwrap();
    let n = 1000;
    let in_spec = DatasetSpec {
        n_samples: n,
        seed: derive_seed(seed, tag::OOD_IN),
        standardize: false,
        ..cfg.dataset.clone()
    };
    let scores_in = log_likelihoods(&out.model, &standardizer.transform(&generate_raw(&in_spec).unwrap())).unwrap();
    let auroc = |kind: DatasetKind, idx: u64| -> f64 {
        let spec = DatasetSpec {
            kind,
            n_samples: n,
            seed: derive_seed(seed, tag::OOD_IN ^ (idx + 1)),
            standardize: false,
            ..cfg.dataset.clone()
        };
        let scores = log_likelihoods(&out.model, &standardizer.transform(&generate_raw(&spec).unwrap())).unwrap();
        eval_auroc(&scores_in, &scores).unwrap()
    };
    println!(
        "RESULT variant={} steps={} batch={} hidden={}x{} alpha={} seed={} lr={} wall={:.1}s nll={:.4} sw={:.6} k3={:.5} k4={:.5} auroc_moons={:.3} auroc_blobs={:.3}",
        args.get(1).map(|s| s.as_str()).unwrap_or("hybrid"), steps, batch, hidden, depth, alpha, seed, lr,
        t.elapsed().as_secs_f64(), last.nll, last.sw, last.k3_norm_sq, last.k4_norm_sq,
        auroc(DatasetKind::Moons, 0), auroc(DatasetKind::Blobs, 1)
    );
}
