use std::time::Instant;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use swflow_core::flow::init_model;
use swflow_core::objectives::{mle_loss, LossSpec, LossVariant};
use swflow_core::rng::normal_matrix;
use swflow_core::sw::{sample_directions, sliced_wasserstein_with};
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

    time("inverse fwd (sum loss)      ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let gen = fv.inverse(&tape.constant(&z)).unwrap();
        std::hint::black_box(gen.sum().unwrap().item().unwrap());
    });
    time("inverse fwd+bwd (sum loss)  ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let gen = fv.inverse(&tape.constant(&z)).unwrap();
        let loss = gen.sum().unwrap();
        loss.backward().unwrap();
        std::hint::black_box(fv.params()[0].grad());
    });
    time("inverse+sw fwd              ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let gen = fv.inverse(&tape.constant(&z)).unwrap();
        let loss = sliced_wasserstein_with(&tape.constant(&x), &gen, &dirs, 2).unwrap();
        std::hint::black_box(loss.item().unwrap());
    });
    time("inverse+sw fwd+bwd          ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let gen = fv.inverse(&tape.constant(&z)).unwrap();
        let loss = sliced_wasserstein_with(&tape.constant(&x), &gen, &dirs, 2).unwrap();
        loss.backward().unwrap();
        std::hint::black_box(fv.params()[0].grad());
    });
    time("hybrid fwd+bwd              ", &mut || {
        let tape = Tape::new();
        let fv = model.bind(&tape, true);
        let gen = fv.inverse(&tape.constant(&z)).unwrap();
        let sw = sliced_wasserstein_with(&tape.constant(&x), &gen, &dirs, 2).unwrap();
        let mle = mle_loss(&fv, &tape.constant(&x)).unwrap();
        let loss = sw.add(&mle).unwrap();
        loss.backward().unwrap();
        std::hint::black_box(fv.params()[0].grad());
    });
    let _ = LossSpec::new(LossVariant::SwOnly);
}
