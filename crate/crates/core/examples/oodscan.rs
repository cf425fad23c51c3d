//! Scores saved checkpoints against OoD-set variations without retraining:
//! `oodscan <train_noise> <ckpt> [<ckpt>...]` prints AUROCs for a grid of
//! moons/blobs noise levels and blob-center radii.

use swflow_core::checkpoint;
use swflow_core::datasets::{generate_raw, DatasetKind, DatasetSpec, Standardizer};
use swflow_core::metrics::{eval_auroc, log_likelihoods};
use swflow_core::rng::{derive_seed, tag};
use swflow_core::tensor::Tensor;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let train_noise: f64 = args[1].parse().unwrap();
    let seed = 0u64;

    let train_spec = DatasetSpec {
        noise_std: train_noise,
        ..DatasetSpec::new(DatasetKind::Circles, 50_000, seed)
    };
    let standardizer = Standardizer::fit(&generate_raw(&train_spec).unwrap());
    let in_spec = DatasetSpec {
        n_samples: 1000,
        seed: derive_seed(seed, tag::OOD_IN),
        standardize: false,
        ..train_spec.clone()
    };
    let in_set = standardizer.transform(&generate_raw(&in_spec).unwrap());

    for ckpt_path in &args[2..] {
        let model = checkpoint::load(std::path::Path::new(ckpt_path)).unwrap();
        let scores_in = log_likelihoods(&model, &in_set).unwrap();
        print!("{:<40}", ckpt_path.rsplit('/').next().unwrap());
        for ood_noise in [0.0f64, 0.02, 0.04, 0.08] {
            let moons_spec = DatasetSpec {
                kind: DatasetKind::Moons,
                n_samples: 1000,
                noise_std: ood_noise,
                seed: derive_seed(seed, tag::OOD_IN ^ 1),
                standardize: false,
                ..train_spec.clone()
            };
            let moons = standardizer.transform(&generate_raw(&moons_spec).unwrap());
            let a = eval_auroc(&scores_in, &log_likelihoods(&model, &moons).unwrap()).unwrap();
            print!(" m{:.2}={:.3}", ood_noise, a);
        }
        // Blob variations: scale the generated blob layout radially.
        for (label, radial_scale, ood_noise) in
            [("b.02", 1.0, 0.02f64), ("b.04", 1.0, 0.04), ("b.08", 1.0, 0.08)]
        {
            let blob_spec = DatasetSpec {
                kind: DatasetKind::Blobs,
                n_samples: 1000,
                noise_std: ood_noise,
                seed: derive_seed(seed, tag::OOD_IN ^ 2),
                standardize: false,
                ..train_spec.clone()
            };
            let raw = generate_raw(&blob_spec).unwrap();
            let scaled = Tensor::new(
                raw.shape().to_vec(),
                raw.data().iter().map(|v| v * radial_scale).collect(),
            )
            .unwrap();
            let blobs = standardizer.transform(&scaled);
            let a = eval_auroc(&scores_in, &log_likelihoods(&model, &blobs).unwrap()).unwrap();
            print!(" {}={:.3}", label, a);
        }
        println!();
    }
}
