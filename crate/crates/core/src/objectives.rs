//! Training objectives: exact negative log-likelihood, sliced-Wasserstein,
//! and the hybrid combination `L = L_SW + α·L_MLE`.
//!
//! The NLL comes from the change of variables with a standard-normal base:
//! `−log p(x) = ½‖f(x)‖² + (D/2)·log 2π − log|det ∂f/∂x|`, averaged over the
//! batch. The SW term compares the data batch against generated samples
//! `f⁻¹(z)` in data space (the default), or the latent codes `f(x)` against
//! the base draws `z` in latent space. Both variants are differentiable with
//! respect to every flow parameter.

use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::flow::FlowVars;
use crate::sw::{sliced_wasserstein, SWConfig};
use crate::tape::Var;

/// Which training objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossVariant {
    MleOnly,
    /// Pure SW objective, latent placement: `SW(z, f(x))`. The data-space
    /// counterpart is `HybridDataSpace` with `α = 0`.
    SwOnly,
    /// `SW(x, f⁻¹(z)) + α·NLL(x)` — discrepancy prescribed on the data space.
    HybridDataSpace,
    /// `SW(z, f(x)) + α·NLL(x)` — discrepancy prescribed on the latent space.
    HybridLatentSpace,
}

impl LossVariant {
    pub fn name(&self) -> &'static str {
        match self {
            LossVariant::MleOnly => "mle",
            LossVariant::SwOnly => "sw",
            LossVariant::HybridDataSpace => "hybrid-data",
            LossVariant::HybridLatentSpace => "hybrid-latent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "mle" => Ok(LossVariant::MleOnly),
            "sw" => Ok(LossVariant::SwOnly),
            "hybrid-data" => Ok(LossVariant::HybridDataSpace),
            "hybrid-latent" => Ok(LossVariant::HybridLatentSpace),
            other => Err(Error::Config(format!(
                "unknown objective {:?} (expected mle, sw, hybrid-data or hybrid-latent)",
                other
            ))),
        }
    }

    pub fn uses_sw(&self) -> bool {
        !matches!(self, LossVariant::MleOnly)
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(self, LossVariant::HybridDataSpace | LossVariant::HybridLatentSpace)
    }
}

/// Full description of a training loss.
#[derive(Debug, Clone)]
pub struct LossSpec {
    pub variant: LossVariant,
    /// Weight of the MLE term in the hybrid loss; ignored for pure variants.
    pub alpha: f64,
    pub sw: SWConfig,
}

impl LossSpec {
    pub fn new(variant: LossVariant) -> Self {
        LossSpec { variant, alpha: 1.0, sw: SWConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be ≥ 0 and finite, got {}", self.alpha)));
        }
        self.sw.validate()
    }
}

const LOG_2PI: f64 = 1.8378770664093453; // ln(2π)

/// Average negative log-likelihood of the batch under the flow:
/// `−(1/N)·Σ [log p_Z(f(xₙ)) + log_det(xₙ)]`.
pub fn mle_loss(flow: &FlowVars, x: &Var) -> Result<Var> {
    let d = flow.dim() as f64;
    let (z, log_det) = flow.forward(x)?;
    let log_pz = z
        .square()?
        .sum_axis(1)?
        .mul_scalar(-0.5)?
        .add_scalar(-0.5 * d * LOG_2PI)?;
    let loss = log_pz.add(&log_det)?.mean()?.neg()?;
    let value = loss.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!(
            "MLE loss is {} (diverged forward pass or degenerate input)",
            value
        )));
    }
    Ok(loss)
}

/// Sliced-Wasserstein term of the objective.
///
/// The data-space placement compares the data batch `x` with generated
/// samples `f⁻¹(z)`; the latent-space placement compares the base draws `z`
/// with the latent codes `f(x)`. The pure-SW objective uses the latent
/// placement (the data-space estimator's sampling noise makes it unable to
/// make progress as a sole objective at tractable batch sizes); a pure
/// data-space SW objective is still expressible as `hybrid-data` with α = 0.
pub fn sw_loss(
    flow: &FlowVars,
    x: &Var,
    z: &Var,
    spec: &LossSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Var> {
    spec.validate()?;
    let loss = match spec.variant {
        LossVariant::HybridLatentSpace | LossVariant::SwOnly => {
            let (zx, _) = flow.forward(x)?;
            sliced_wasserstein(z, &zx, &spec.sw, rng)?
        }
        _ => {
            let generated = flow.inverse(z)?;
            sliced_wasserstein(x, &generated, &spec.sw, rng)?
        }
    };
    let value = loss.item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("SW loss is {}", value)));
    }
    Ok(loss)
}

/// Hybrid objective `sw_loss + α·mle_loss`; requires a hybrid variant.
pub fn hybrid_loss(
    flow: &FlowVars,
    x: &Var,
    z: &Var,
    spec: &LossSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Var> {
    if !spec.variant.is_hybrid() {
        return Err(Error::Config(format!(
            "hybrid_loss requires a hybrid variant, got {}",
            spec.variant.name()
        )));
    }
    spec.validate()?;
    let sw = sw_loss(flow, x, z, spec, rng)?;
    let mle = mle_loss(flow, x)?;
    sw.add(&mle.mul_scalar(spec.alpha)?)
}

/// Evaluates whichever loss the spec selects. `z` must hold base-normal draws
/// matching the batch shape whenever the variant uses the SW term.
pub fn evaluate(
    flow: &FlowVars,
    x: &Var,
    z: &Var,
    spec: &LossSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Var> {
    match spec.variant {
        LossVariant::MleOnly => mle_loss(flow, x),
        LossVariant::SwOnly => sw_loss(flow, x, z, spec, rng),
        LossVariant::HybridDataSpace | LossVariant::HybridLatentSpace => {
            hybrid_loss(flow, x, z, spec, rng)
        }
    }
}
