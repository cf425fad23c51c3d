use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use swflow_core::flow::init_model;
use swflow_core::objectives::{sw_loss, LossSpec, LossVariant};
use swflow_core::rng::normal_matrix;
use swflow_core::sw::DirectionSeed;
use swflow_core::tape::Tape;
use swflow_core::tensor::Tensor;

fn main() {
    let mut model = init_model(2, 2, &[4], 3).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    for p in model.params_mut() {
        let data: Vec<f64> = p.data().iter().map(|&v| v + rng.random_range(-0.4..0.4)).collect();
        *p = Tensor::new(p.shape().to_vec(), data).unwrap();
    }
    let x = normal_matrix(&mut ChaCha12Rng::seed_from_u64(6), 8, 2);
    let z = normal_matrix(&mut ChaCha12Rng::seed_from_u64(7), 8, 2);
    let mut spec = LossSpec::new(LossVariant::SwOnly);
    spec.sw.projections = 8;
    spec.sw.seed_policy = DirectionSeed::Fixed(11);

    let eval = |m: &swflow_core::flow::FlowModel| -> f64 {
        let tape = Tape::new();
        let fv = m.bind(&tape, false);
        sw_loss(&fv, &tape.constant(&x), &tape.constant(&z), &spec, &mut ChaCha12Rng::seed_from_u64(0))
            .unwrap().item().unwrap()
    };

    let tape = Tape::new();
    let fv = model.bind(&tape, true);
    let loss = sw_loss(&fv, &tape.constant(&x), &tape.constant(&z), &spec, &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
    loss.backward().unwrap();
    let auto: Vec<f64> = fv.params().iter().flat_map(|p| p.grad().map(|g| g.data().to_vec()).unwrap_or_else(|| vec![0.0; p.numel()])).collect();

    // flatten params
    let theta0: Vec<f64> = model.params().iter().flat_map(|p| p.data().to_vec()).collect();
    let h = 1e-6;
    let mut worst = 0.0f64; let mut worst_i = 0;
    let mut probe = theta0.clone();
    for i in 0..theta0.len() {
        probe[i] = theta0[i] + h;
        set_params(&mut model, &probe);
        let up = eval(&model);
        probe[i] = theta0[i] - h;
        set_params(&mut model, &probe);
        let dn = eval(&model);
        probe[i] = theta0[i];
        set_params(&mut model, &probe);
        let fd = (up - dn) / (2.0 * h);
        let re = (auto[i] - fd).abs() / auto[i].abs().max(fd.abs()).max(1e-4);
        if re > worst { worst = re; worst_i = i; }
        if re > 1e-4 { println!("param {i}: auto {} fd {} rel {re:.2e}", auto[i], fd); }
    }
    println!("worst rel err: {worst:.3e} at {worst_i} ({} params)", theta0.len());
}

fn set_params(model: &mut swflow_core::flow::FlowModel, flat: &[f64]) {
    let mut off = 0;
    for p in model.params_mut() {
        let n = p.numel();
        *p = Tensor::new(p.shape().to_vec(), flat[off..off + n].to_vec()).unwrap();
        off += n;
    }
}
