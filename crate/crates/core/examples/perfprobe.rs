use std::time::Instant;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use swflow_core::flow::init_model;
use swflow_core::objectives::{mle_loss, sw_loss, LossSpec, LossVariant};
use swflow_core::rng::normal_matrix;
use swflow_core::sw::{sample_directions, sliced_wasserstein_value, sliced_wasserstein_with, DirectionSeed, SWConfig};
use swflow_core::tape::Tape;

fn main() {
    let model = init_model(2, 6, &[16, 16], 1).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let x = normal_matrix(&mut rng, 512, 2);
    let z = normal_matrix(&mut rng, 512, 2);
    let dirs = sample_directions(128, 2, &mut rng).unwrap();
    let reps = 100;

    let time = |label: &str, f: &mut dyn FnMut()| {
        let t = Instant::now();
        for _ in 0..reps { f(); }
        println!("{label}: {:.2} ms", t.elapsed().as_secs_f64() / reps as f64 * 1e3);
    };

    time("mle fwd       ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let loss = mle_loss(&fv, &tape.constant(&x)).unwrap();
        std::hint::black_box(loss.item().unwrap());
    });
    time("mle fwd+bwd   ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let loss = mle_loss(&fv, &tape.constant(&x)).unwrap();
        loss.backward().unwrap();
        std::hint::black_box(fv.params()[0].grad());
    });
    time("sw128 fwd     ", &mut || {
        let tape = Tape::new();
        let xv = tape.leaf(&x);
        let loss = sliced_wasserstein_with(&xv, &tape.constant(&z), &dirs, 2).unwrap();
        std::hint::black_box(loss.item().unwrap());
    });
    time("sw128 fwd+bwd ", &mut || {
        let tape = Tape::new();
        let xv = tape.leaf(&x);
        let loss = sliced_wasserstein_with(&xv, &tape.constant(&z), &dirs, 2).unwrap();
        loss.backward().unwrap();
        std::hint::black_box(xv.grad());
    });
    let cfg = SWConfig { projections: 128, exponent: 2, seed_policy: DirectionSeed::Fixed(3) };
    time("sw128 value   ", &mut || {
        let mut r = ChaCha12Rng::seed_from_u64(0);
        std::hint::black_box(sliced_wasserstein_value(&x, &z, &cfg, &mut r).unwrap());
    });
    let spec = LossSpec::new(LossVariant::SwOnly);
    time("swloss fwd+bwd", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let loss = sw_loss(&fv, &tape.constant(&x), &tape.constant(&z), &spec, &mut rng).unwrap();
        loss.backward().unwrap();
        std::hint::black_box(fv.params()[0].grad());
    });
}
