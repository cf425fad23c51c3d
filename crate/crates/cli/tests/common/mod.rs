//! Numerical oracles for the acceptance suite, independent of the library's
//! differentiation and transport code paths: central finite differences,
//! dense determinants, brute-force couplings and pair-counting AUROC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use swflow_core::flow::{init_model, FlowModel};
use swflow_core::tensor::Tensor;

/// Central finite differences of a scalar function of a flat f64 vector.
pub fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Relative error with a floor that keeps tiny values from amplifying
/// finite-difference noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

/// Determinant by Gaussian elimination with partial pivoting (row-major d×d).
pub fn determinant(matrix: &[f64], d: usize) -> f64 {
    let mut m = matrix.to_vec();
    let mut det = 1.0;
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&a, &b| m[a * d + col].abs().total_cmp(&m[b * d + col].abs()))
            .unwrap();
        if m[pivot * d + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for j in 0..d {
                m.swap(col * d + j, pivot * d + j);
            }
            det = -det;
        }
        det *= m[col * d + col];
        for row in col + 1..d {
            let factor = m[row * d + col] / m[col * d + col];
            for j in col..d {
                m[row * d + j] -= factor * m[col * d + j];
            }
        }
    }
    det
}

/// Jacobian of the flow's forward map at one point, by central differences.
pub fn fd_jacobian(model: &FlowModel, x: &[f64], h: f64) -> Vec<f64> {
    let d = x.len();
    let mut jac = vec![0.0; d * d];
    let mut probe = x.to_vec();
    for j in 0..d {
        probe[j] = x[j] + h;
        let up = forward_point(model, &probe);
        probe[j] = x[j] - h;
        let down = forward_point(model, &probe);
        probe[j] = x[j];
        for i in 0..d {
            jac[i * d + j] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

fn forward_point(model: &FlowModel, x: &[f64]) -> Vec<f64> {
    let t = Tensor::new(vec![1, x.len()], x.to_vec()).unwrap();
    let (z, _) = model.forward(&t).unwrap();
    z.data().to_vec()
}

/// Identity-initialized model with every parameter perturbed uniformly in
/// `±scale`.
pub fn random_model(dim: usize, layers: usize, hidden: &[usize], seed: u64, scale: f64) -> FlowModel {
    let mut model = init_model(dim, layers, hidden, seed).unwrap();
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    for p in model.params_mut() {
        let data: Vec<f64> = p.data().iter().map(|&v| v + rng.random_range(-scale..scale)).collect();
        *p = Tensor::new(p.shape().to_vec(), data).unwrap();
    }
    model
}

pub fn flatten_params(model: &FlowModel) -> Vec<f64> {
    model.params().iter().flat_map(|p| p.data().to_vec()).collect()
}

pub fn unflatten_params(model: &mut FlowModel, flat: &[f64]) {
    let mut offset = 0;
    for p in model.params_mut() {
        let n = p.numel();
        *p = Tensor::new(p.shape().to_vec(), flat[offset..offset + n].to_vec()).unwrap();
        offset += n;
    }
    assert_eq!(offset, flat.len());
}

/// Minimum transport cost over all couplings (permutation enumeration).
pub fn brute_force_w1d(a: &[f64], b: &[f64], p: u32) -> f64 {
    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 1 {
            return vec![vec![0]];
        }
        let mut out = Vec::new();
        for rest in permutations(n - 1) {
            for pos in 0..n {
                let mut perm = rest.clone();
                perm.insert(pos, n - 1);
                out.push(perm);
            }
        }
        out
    }
    let n = a.len();
    permutations(n)
        .into_iter()
        .map(|perm| {
            let mut cost = 0.0;
            for (i, &j) in perm.iter().enumerate() {
                let d = (a[i] - b[j]).abs();
                cost += if p == 1 { d } else { d * d };
            }
            cost / n as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// All-pairs AUROC: wins plus half-ties over n·m.
pub fn brute_force_auroc(scores_in: &[f64], scores_out: &[f64]) -> f64 {
    let mut total = 0.0;
    for &a in scores_in {
        for &b in scores_out {
            if a > b {
                total += 1.0;
            } else if a == b {
                total += 0.5;
            }
        }
    }
    total / (scores_in.len() * scores_out.len()) as f64
}
