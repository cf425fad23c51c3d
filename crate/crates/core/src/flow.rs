//! Invertible flows built from affine coupling layers.
//!
//! Each coupling layer splits the coordinates by a binary mask: masked-in
//! coordinates pass through unchanged and feed two small MLPs that produce a
//! log-scale `s` and a shift `t` for the masked-out coordinates:
//!
//! forward:  `z_out = x_out · exp(s) + t`, log-det contribution `Σ s`
//! inverse:  `x_out = (z_out − t) · exp(−s)`
//!
//! The raw log-scale is squashed to `c·tanh(raw/c)` so `|s| ≤ c`, which keeps
//! every layer globally invertible and the training loss finite. Masks
//! alternate between consecutive layers so every coordinate gets transformed.
//!
//! Masked selection and recombination are expressed as matrix products with
//! constant 0/1 selection matrices, which keeps the whole model inside the
//! tape's operation set and therefore differentiable end to end.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Log-scale clamp used by [`init_model`] and assumed by checkpoints.
pub const DEFAULT_LOG_SCALE_CLAMP: f64 = 2.0;

/// Fully connected network with tanh hidden activations and a linear head.
///
/// `weights[i]` has shape `[dims[i] × dims[i+1]]`, `biases[i]` has shape
/// `[1 × dims[i+1]]`.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl Mlp {
    /// Seeded initialization: hidden and output layers drawn uniformly in
    /// `±1/√fan_in`, biases zero. With `zero_final` the last layer (weights
    /// and bias) is zeroed so the net starts as the constant 0 function.
    fn init(dims: &[usize], rng: &mut ChaCha12Rng, zero_final: bool) -> Mlp {
        let mut weights = Vec::with_capacity(dims.len() - 1);
        let mut biases = Vec::with_capacity(dims.len() - 1);
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let last = i == dims.len() - 2;
            let data = if last && zero_final {
                vec![0.0; fan_in * fan_out]
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect()
            };
            weights.push(Tensor::new(vec![fan_in, fan_out], data).expect("init shape"));
            biases.push(Tensor::zeros(vec![1, fan_out]));
        }
        Mlp { weights, biases }
    }

    fn validate(&self, d_in: usize, d_out: usize) -> Result<()> {
        if self.weights.is_empty() || self.weights.len() != self.biases.len() {
            return Err(Error::Config("Mlp needs matching weight/bias lists".into()));
        }
        let mut prev = d_in;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            if w.shape().len() != 2 || w.shape()[0] != prev {
                return Err(Error::Config(format!(
                    "Mlp layer shape {:?} does not chain from width {}",
                    w.shape(),
                    prev
                )));
            }
            if b.shape() != [1, w.shape()[1]] {
                return Err(Error::Config(format!(
                    "Mlp bias shape {:?} does not match layer width {}",
                    b.shape(),
                    w.shape()[1]
                )));
            }
            if !w.is_finite() || !b.is_finite() {
                return Err(Error::NonFinite("Mlp parameters must be finite".into()));
            }
            prev = w.shape()[1];
        }
        if prev != d_out {
            return Err(Error::Config(format!(
                "Mlp output width {} does not match expected {}",
                prev, d_out
            )));
        }
        Ok(())
    }

    fn hidden_sizes(&self) -> Vec<usize> {
        self.weights[..self.weights.len() - 1].iter().map(|w| w.shape()[1]).collect()
    }
}

/// One affine coupling layer.
#[derive(Debug, Clone)]
pub struct CouplingLayer {
    /// `true` marks the identity-passed coordinates that feed the nets.
    pub mask: Vec<bool>,
    pub scale_net: Mlp,
    pub shift_net: Mlp,
    /// Positive clamp `c`; effective log-scale is `c·tanh(raw/c)`.
    pub log_scale_clamp: f64,
}

impl CouplingLayer {
    pub fn new(mask: Vec<bool>, scale_net: Mlp, shift_net: Mlp, log_scale_clamp: f64) -> Result<Self> {
        let d_in = mask.iter().filter(|&&m| m).count();
        let d_out = mask.len() - d_in;
        if d_in == 0 || d_out == 0 {
            return Err(Error::Config("coupling mask must keep and transform at least one coordinate".into()));
        }
        if log_scale_clamp <= 0.0 || !log_scale_clamp.is_finite() {
            return Err(Error::Config("log-scale clamp must be positive and finite".into()));
        }
        scale_net.validate(d_in, d_out)?;
        shift_net.validate(d_in, d_out)?;
        Ok(CouplingLayer { mask, scale_net, shift_net, log_scale_clamp })
    }
}

/// Stack of coupling layers mapping data to a standard-normal base space.
#[derive(Debug, Clone)]
pub struct FlowModel {
    dim: usize,
    layers: Vec<CouplingLayer>,
}

impl FlowModel {
    pub fn new(dim: usize, layers: Vec<CouplingLayer>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("flow dimension must be at least 2".into()));
        }
        if layers.is_empty() {
            return Err(Error::Config("flow needs at least one coupling layer".into()));
        }
        for layer in &layers {
            if layer.mask.len() != dim {
                return Err(Error::Config(format!(
                    "layer mask length {} does not match dimension {}",
                    layer.mask.len(),
                    dim
                )));
            }
        }
        for pair in layers.windows(2) {
            let complement: Vec<bool> = pair[0].mask.iter().map(|&m| !m).collect();
            if pair[1].mask != complement {
                return Err(Error::Config(
                    "masks of consecutive layers must alternate (complement each other)".into(),
                ));
            }
        }
        Ok(FlowModel { dim, layers })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    /// Hidden layer widths of the coupling MLPs (shared across layers).
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[0].scale_net.hidden_sizes()
    }

    /// All parameter tensors in declaration order: per layer, scale net then
    /// shift net, each as interleaved weight/bias per MLP layer. This order is
    /// the contract shared by [`FlowVars::params`], the optimizer and the
    /// checkpoint format.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for net in [&layer.scale_net, &layer.shift_net] {
                for (w, b) in net.weights.iter().zip(&net.biases) {
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for net in [&mut layer.scale_net, &mut layer.shift_net] {
                for (w, b) in net.weights.iter_mut().zip(net.biases.iter_mut()) {
                    out.push(w);
                    out.push(b);
                }
            }
        }
        out
    }

    /// Binds the model onto a tape, as trainable leaves or frozen constants.
    pub fn bind(&self, tape: &Tape, trainable: bool) -> FlowVars {
        let register = |t: &Tensor| if trainable { tape.leaf(t) } else { tape.constant(t) };
        let layers = self
            .layers
            .iter()
            .map(|layer| {
                let (keep, trans) = selection_matrices(&layer.mask);
                CouplingVars {
                    keep_sel: tape.constant(&keep),
                    trans_sel: tape.constant(&trans),
                    keep_sel_t: tape.constant(&transpose(&keep)),
                    trans_sel_t: tape.constant(&transpose(&trans)),
                    scale: MlpVars {
                        weights: layer.scale_net.weights.iter().map(&register).collect(),
                        biases: layer.scale_net.biases.iter().map(&register).collect(),
                    },
                    shift: MlpVars {
                        weights: layer.shift_net.weights.iter().map(&register).collect(),
                        biases: layer.shift_net.biases.iter().map(&register).collect(),
                    },
                    clamp: layer.log_scale_clamp,
                }
            })
            .collect();
        FlowVars { tape: tape.clone(), dim: self.dim, layers }
    }

    /// Untracked forward pass: `(z, log_det)` as plain tensors.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        let (z, ld) = bound.forward(&tape.constant(x))?;
        Ok((z.value(), ld.value()))
    }

    /// Untracked inverse pass.
    pub fn inverse(&self, z: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let bound = self.bind(&tape, false);
        Ok(bound.inverse(&tape.constant(z))?.value())
    }
}

/// The model bound onto a tape: parameters as [`Var`]s, ready to differentiate.
pub struct FlowVars {
    tape: Tape,
    dim: usize,
    layers: Vec<CouplingVars>,
}

struct MlpVars {
    weights: Vec<Var>,
    biases: Vec<Var>,
}

struct CouplingVars {
    keep_sel: Var,
    trans_sel: Var,
    keep_sel_t: Var,
    trans_sel_t: Var,
    scale: MlpVars,
    shift: MlpVars,
    clamp: f64,
}

impl FlowVars {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Parameter vars in the same order as [`FlowModel::params`].
    pub fn params(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for net in [&layer.scale, &layer.shift] {
                for (w, b) in net.weights.iter().zip(&net.biases) {
                    out.push(w.clone());
                    out.push(b.clone());
                }
            }
        }
        out
    }

    /// Maps data to latent space: `z = f(x)` with per-sample `log|det ∂f/∂x|`.
    pub fn forward(&self, x: &Var) -> Result<(Var, Var)> {
        self.check_width(x)?;
        let n = x.shape()[0];
        let ones = self.tape.constant(&Tensor::new(vec![n, 1], vec![1.0; n])?);
        let mut z = x.clone();
        let mut log_det: Option<Var> = None;
        for layer in &self.layers {
            let kept = z.matmul(&layer.keep_sel)?;
            let trans = z.matmul(&layer.trans_sel)?;
            let s = clamp_log_scale(&mlp_forward(&layer.scale, &kept, &ones)?, layer.clamp)?;
            let t = mlp_forward(&layer.shift, &kept, &ones)?;
            let new_trans = trans.mul(&s.exp()?)?.add(&t)?;
            z = kept.matmul(&layer.keep_sel_t)?.add(&new_trans.matmul(&layer.trans_sel_t)?)?;
            let ld = s.sum_axis(1)?;
            log_det = Some(match log_det {
                None => ld,
                Some(acc) => acc.add(&ld)?,
            });
        }
        Ok((z, log_det.expect("at least one layer")))
    }

    /// Maps latents back to data space: `x = f⁻¹(z)`.
    pub fn inverse(&self, z: &Var) -> Result<Var> {
        self.check_width(z)?;
        let n = z.shape()[0];
        let ones = self.tape.constant(&Tensor::new(vec![n, 1], vec![1.0; n])?);
        let mut x = z.clone();
        for layer in self.layers.iter().rev() {
            let kept = x.matmul(&layer.keep_sel)?;
            let trans = x.matmul(&layer.trans_sel)?;
            let s = clamp_log_scale(&mlp_forward(&layer.scale, &kept, &ones)?, layer.clamp)?;
            let t = mlp_forward(&layer.shift, &kept, &ones)?;
            let orig = trans.sub(&t)?.mul(&s.neg()?.exp()?)?;
            x = kept.matmul(&layer.keep_sel_t)?.add(&orig.matmul(&layer.trans_sel_t)?)?;
        }
        Ok(x)
    }

    fn check_width(&self, x: &Var) -> Result<()> {
        if x.shape().len() != 2 || x.shape()[1] != self.dim {
            return Err(Error::shape(
                "flow",
                format!("expected [N×{}] input, got {:?}", self.dim, x.shape()),
            ));
        }
        Ok(())
    }
}

fn mlp_forward(net: &MlpVars, input: &Var, ones: &Var) -> Result<Var> {
    let last = net.weights.len() - 1;
    let mut h = input.clone();
    for (i, (w, b)) in net.weights.iter().zip(&net.biases).enumerate() {
        // Bias broadcast as ones·b keeps the op set down to matmul + add.
        h = h.matmul(w)?.add(&ones.matmul(b)?)?;
        if i != last {
            h = h.tanh()?;
        }
    }
    Ok(h)
}

fn clamp_log_scale(raw: &Var, c: f64) -> Result<Var> {
    raw.mul_scalar(1.0 / c)?.tanh()?.mul_scalar(c)
}

/// 0/1 matrices selecting kept (`[D×d_in]`) and transformed (`[D×d_out]`)
/// coordinates of a mask.
fn selection_matrices(mask: &[bool]) -> (Tensor, Tensor) {
    let d = mask.len();
    let d_in = mask.iter().filter(|&&m| m).count();
    let d_out = d - d_in;
    let mut keep = vec![0.0; d * d_in];
    let mut trans = vec![0.0; d * d_out];
    let (mut ik, mut it) = (0, 0);
    for (row, &m) in mask.iter().enumerate() {
        if m {
            keep[row * d_in + ik] = 1.0;
            ik += 1;
        } else {
            trans[row * d_out + it] = 1.0;
            it += 1;
        }
    }
    (
        Tensor::new(vec![d, d_in], keep).expect("selection shape"),
        Tensor::new(vec![d, d_out], trans).expect("selection shape"),
    )
}

fn transpose(t: &Tensor) -> Tensor {
    let (m, n) = (t.shape()[0], t.shape()[1]);
    let src = t.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = src[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out).expect("transpose shape")
}

/// Builds a flow with alternating checkerboard masks and identity
/// initialization (final MLP layers zeroed), seeded deterministically.
///
/// `hidden` gives the widths of the coupling MLPs' hidden layers.
pub fn init_model(dim: usize, n_layers: usize, hidden: &[usize], seed: u64) -> Result<FlowModel> {
    if dim < 2 {
        return Err(Error::Config(format!("flow dimension must be at least 2, got {}", dim)));
    }
    if n_layers < 1 {
        return Err(Error::Config("flow needs at least one coupling layer".into()));
    }
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::Config("hidden sizes must be non-empty and positive".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let mask: Vec<bool> = (0..dim).map(|d| (d + l) % 2 == 0).collect();
        let d_in = mask.iter().filter(|&&m| m).count();
        let d_out = dim - d_in;
        let mut dims = Vec::with_capacity(hidden.len() + 2);
        dims.push(d_in);
        dims.extend_from_slice(hidden);
        dims.push(d_out);
        let scale_net = Mlp::init(&dims, &mut rng, true);
        let shift_net = Mlp::init(&dims, &mut rng, true);
        layers.push(CouplingLayer::new(mask, scale_net, shift_net, DEFAULT_LOG_SCALE_CLAMP)?);
    }
    FlowModel::new(dim, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal_matrix;
    use rand::SeedableRng;

    /// Random non-identity model: identity init, then every parameter
    /// perturbed uniformly.
    pub(crate) fn random_model(dim: usize, n_layers: usize, hidden: &[usize], seed: u64) -> FlowModel {
        let mut model = init_model(dim, n_layers, hidden, seed).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xabcd_ef01);
        for p in model.params_mut() {
            let data: Vec<f64> =
                p.data().iter().map(|&v| v + rng.random_range(-0.5..0.5)).collect();
            *p = Tensor::new(p.shape().to_vec(), data).unwrap();
        }
        model
    }

    #[test]
    fn identity_initialization_maps_x_to_x() {
        let model = init_model(2, 6, &[8, 8], 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let x = normal_matrix(&mut rng, 32, 2);
        let (z, ld) = model.forward(&x).unwrap();
        assert_eq!(z.data(), x.data());
        assert!(ld.data().iter().all(|&v| v == 0.0));
        let xi = model.inverse(&x).unwrap();
        assert_eq!(xi.data(), x.data());
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(2, 4, &[16], 9).unwrap();
        let b = init_model(2, 4, &[16], 9).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert!(pa.data().iter().zip(pb.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let c = init_model(2, 4, &[16], 10).unwrap();
        let differs = a
            .params()
            .iter()
            .zip(c.params())
            .any(|(pa, pc)| pa.data() != pc.data());
        assert!(differs, "different seeds must give different parameters");
    }

    #[test]
    fn masks_alternate() {
        let model = init_model(2, 2, &[4], 0).unwrap();
        assert_eq!(model.layers()[0].mask, vec![true, false]);
        assert_eq!(model.layers()[1].mask, vec![false, true]);

        let model3 = init_model(3, 2, &[4], 0).unwrap();
        assert_eq!(model3.layers()[0].mask, vec![true, false, true]);
        assert_eq!(model3.layers()[1].mask, vec![false, true, false]);
    }

    #[test]
    fn init_rejects_bad_arguments() {
        assert!(init_model(1, 2, &[4], 0).is_err());
        assert!(init_model(2, 0, &[4], 0).is_err());
        assert!(init_model(2, 2, &[], 0).is_err());
        assert!(init_model(2, 2, &[0], 0).is_err());
    }

    #[test]
    fn single_layer_transform_is_affine_in_the_masked_out_coordinate() {
        // mask [1,0]: z1 = x1, z2 = x2·e^s + t with s,t functions of x1 only.
        let model = random_model(2, 1, &[8], 21);
        let x1 = 0.37;
        let probe = |x2: f64| {
            let x = Tensor::new(vec![1, 2], vec![x1, x2]).unwrap();
            let (z, ld) = model.forward(&x).unwrap();
            (z.data()[0], z.data()[1], ld.data()[0])
        };
        let (z1_a, t, ld0) = probe(0.0); // x2 = 0 exposes the shift
        let (_, z2_1, _) = probe(1.0); // slope + shift
        let slope = z2_1 - t;
        assert_eq!(z1_a, x1, "masked-in coordinate passes through unchanged");
        // log_det = s = ln(slope)
        assert!((ld0 - slope.ln()).abs() < 1e-12);
        for x2 in [-1.7, -0.2, 0.9, 2.4] {
            let (z1, z2, ld) = probe(x2);
            assert_eq!(z1, x1);
            assert!((z2 - (x2 * slope + t)).abs() < 1e-12, "affine structure violated");
            assert!((ld - ld0).abs() < 1e-15, "log_det independent of x2");
        }
        // algebraic inverse: x2 = (z2 − t)·e^−s
        let z = Tensor::new(vec![1, 2], vec![x1, 0.73]).unwrap();
        let x = model.inverse(&z).unwrap();
        assert!((x.data()[1] - (0.73 - t) / slope).abs() < 1e-12);
    }

    #[test]
    fn round_trip_is_tight_for_deep_random_models() {
        let model = random_model(2, 4, &[16, 16], 5);
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let z = normal_matrix(&mut rng, 256, 2);
        let x = model.inverse(&z).unwrap();
        let (z2, _) = model.forward(&x).unwrap();
        assert!(z.max_abs_diff(&z2) < 1e-8, "forward(inverse(z)) drifted: {}", z.max_abs_diff(&z2));

        let x0 = normal_matrix(&mut rng, 256, 2);
        let (zf, _) = model.forward(&x0).unwrap();
        let x1 = model.inverse(&zf).unwrap();
        assert!(x0.max_abs_diff(&x1) < 1e-8);
    }

    #[test]
    fn log_det_adds_across_layers() {
        let model = random_model(2, 3, &[8], 33);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = normal_matrix(&mut rng, 16, 2);

        let (_, full_ld) = model.forward(&x).unwrap();

        let mut cur = x.clone();
        let mut acc = vec![0.0; 16];
        for layer in model.layers() {
            let single = FlowModel::new(2, vec![layer.clone()]).unwrap();
            let (next, ld) = single.forward(&cur).unwrap();
            for (a, &l) in acc.iter_mut().zip(ld.data()) {
                *a += l;
            }
            cur = next;
        }
        for (f, a) in full_ld.data().iter().zip(&acc) {
            assert!((f - a).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let model = init_model(2, 2, &[4], 0).unwrap();
        let x = Tensor::new(vec![4, 3], vec![0.0; 12]).unwrap();
        assert!(model.forward(&x).is_err());
    }

    #[test]
    fn masks_must_alternate_in_manual_construction() {
        let m = init_model(2, 2, &[4], 0).unwrap();
        let l0 = m.layers()[0].clone();
        let dup = FlowModel::new(2, vec![l0.clone(), l0]);
        assert!(dup.is_err());
    }

    #[test]
    fn clamp_bounds_the_log_scale() {
        // Huge parameters cannot push |log_det| of one layer past c·d_out.
        let mut model = init_model(2, 1, &[4], 1).unwrap();
        for p in model.params_mut() {
            *p = Tensor::new(p.shape().to_vec(), vec![50.0; p.numel()]).unwrap();
        }
        let x = Tensor::new(vec![1, 2], vec![0.3, -0.4]).unwrap();
        let (_, ld) = model.forward(&x).unwrap();
        assert!(ld.data()[0].abs() <= DEFAULT_LOG_SCALE_CLAMP + 1e-12);
    }
}
