//! Goodness-of-fit and out-of-distribution metrics.
//!
//! A [`MetricsReport`] carries the evaluation columns reported by this crate:
//! held-out NLL (nats per sample), the sliced-Wasserstein distance between
//! forward-mapped latents and fresh base-normal draws (W_p^p convention, J
//! and p recorded), squared L2 norms of the per-dimension 3rd- and 4th-order
//! cumulants of the latents (both vanish for the prescribed standard normal),
//! and optionally an AUROC for out-of-distribution detection scored by exact
//! per-sample log-likelihood.
//!
//! AUROC here is the rank statistic `P(S_in > S_out) + ½·P(S_in = S_out)`
//! over all pairs, computed in `O((n+m)·log(n+m))` with midranks for ties —
//! identical to brute-force pair counting, including tie handling.

use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::fmt::fmt_f64;
use crate::objectives::mle_loss;
use crate::rng::{normal_matrix, stream, stream_rng};
use crate::sw::{sliced_wasserstein_value, SWConfig};
use crate::tape::Tape;
use crate::tensor::Tensor;

const LOG_2PI: f64 = 1.8378770664093453;

/// One evaluation row.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub step: u64,
    pub seed: u64,
    pub dataset: String,
    /// Pre-update training loss at the report step, when reported by the
    /// trainer.
    pub train_loss: Option<f64>,
    pub nll: f64,
    pub sw: f64,
    pub sw_projections: usize,
    pub sw_exponent: u32,
    pub k3_norm_sq: f64,
    pub k4_norm_sq: f64,
    pub auroc: Option<f64>,
}

impl MetricsReport {
    /// Column order of the metrics CSV.
    pub fn csv_header() -> &'static str {
        "step,nll,sw,k3_norm_sq,k4_norm_sq,auroc,train_loss,seed,dataset,sw_projections,sw_exponent"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.step,
            fmt_f64(self.nll),
            fmt_f64(self.sw),
            fmt_f64(self.k3_norm_sq),
            fmt_f64(self.k4_norm_sq),
            self.auroc.map(fmt_f64).unwrap_or_default(),
            self.train_loss.map(fmt_f64).unwrap_or_default(),
            self.seed,
            self.dataset,
            self.sw_projections,
            self.sw_exponent,
        )
    }

    /// Multi-line human-readable form of the same fields.
    pub fn text_report(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("step            = {}\n", self.step));
        out.push_str(&format!("dataset         = {}\n", self.dataset));
        out.push_str(&format!("seed            = {}\n", self.seed));
        out.push_str(&format!("nll             = {:.6}\n", self.nll));
        out.push_str(&format!(
            "sw              = {:.6}  (W_p^p, J = {}, p = {})\n",
            self.sw, self.sw_projections, self.sw_exponent
        ));
        out.push_str(&format!("k3_norm_sq      = {:.6}\n", self.k3_norm_sq));
        out.push_str(&format!("k4_norm_sq      = {:.6}\n", self.k4_norm_sq));
        if let Some(auroc) = self.auroc {
            out.push_str(&format!("auroc           = {:.4}\n", auroc));
        }
        if let Some(loss) = self.train_loss {
            out.push_str(&format!("train_loss      = {:.6}\n", loss));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.nll.is_finite()
            && self.sw.is_finite()
            && self.k3_norm_sq.is_finite()
            && self.k4_norm_sq.is_finite()
            && self.auroc.map_or(true, |a| (0.0..=1.0).contains(&a))
    }
}

/// Metadata attached to a report by its caller.
#[derive(Debug, Clone)]
pub struct ReportMeta {
    pub step: u64,
    pub seed: u64,
    pub dataset: String,
    pub train_loss: Option<f64>,
}

/// Held-out NLL: the MLE loss evaluated without gradient tracking.
pub fn eval_nll(model: &FlowModel, x: &Tensor) -> Result<f64> {
    let tape = Tape::new();
    let fv = model.bind(&tape, false);
    mle_loss(&fv, &tape.constant(x))?.item()
}

/// Exact per-sample log-likelihoods `log p(xₙ)` under the flow.
pub fn log_likelihoods(model: &FlowModel, x: &Tensor) -> Result<Vec<f64>> {
    let d = model.dim() as f64;
    let (z, log_det) = model.forward(x)?;
    let n = x.shape()[0];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = z.row(i);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        out.push(-0.5 * sq - 0.5 * d * LOG_2PI + log_det.data()[i]);
    }
    Ok(out)
}

/// Per-dimension central-moment cumulants `κ₃ = m₃` and `κ₄ = m₄ − 3m₂²`
/// (biased n-denominator moments). Needs at least 4 samples.
pub fn eval_cumulants(samples: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    if samples.shape().len() != 2 {
        return Err(Error::shape("eval_cumulants", "requires an [N×D] tensor"));
    }
    let (n, d) = (samples.shape()[0], samples.shape()[1]);
    if n < 4 {
        return Err(Error::Config(format!("cumulants need N ≥ 4 samples, got {}", n)));
    }
    let nf = n as f64;
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(samples.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);

    let (mut m2, mut m3, mut m4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for i in 0..n {
        for (j, v) in samples.row(i).iter().enumerate() {
            let c = v - mean[j];
            let c2 = c * c;
            m2[j] += c2;
            m3[j] += c2 * c;
            m4[j] += c2 * c2;
        }
    }
    for j in 0..d {
        m2[j] /= nf;
        m3[j] /= nf;
        m4[j] /= nf;
    }
    let k3 = m3;
    let k4: Vec<f64> = m4.iter().zip(&m2).map(|(&m4j, &m2j)| m4j - 3.0 * m2j * m2j).collect();
    Ok((k3, k4))
}

/// Squared L2 norms `(‖κ₃‖²₂, ‖κ₄‖²₂)` over dimensions.
pub fn cumulant_norms(samples: &Tensor) -> Result<(f64, f64)> {
    let (k3, k4) = eval_cumulants(samples)?;
    Ok((k3.iter().map(|v| v * v).sum(), k4.iter().map(|v| v * v).sum()))
}

/// AUROC of in-distribution scores against out-of-distribution scores:
/// `P(S_in > S_out) + ½·P(S_in = S_out)` over all pairs.
pub fn eval_auroc(scores_in: &[f64], scores_out: &[f64]) -> Result<f64> {
    if scores_in.is_empty() || scores_out.is_empty() {
        return Err(Error::Config("AUROC needs non-empty score lists".into()));
    }
    let n = scores_in.len();
    let m = scores_out.len();
    let mut combined: Vec<(f64, bool)> = scores_in
        .iter()
        .map(|&s| (s, true))
        .chain(scores_out.iter().map(|&s| (s, false)))
        .collect();
    combined.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Midranks over tie groups keep the statistic exact.
    let mut rank_sum_in = 0.0;
    let mut i = 0;
    while i < combined.len() {
        let mut j = i;
        while j + 1 < combined.len() && combined[j + 1].0 == combined[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &combined[i..=j] {
            if item.1 {
                rank_sum_in += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_in - (n * (n + 1)) as f64 / 2.0;
    Ok(u / (n as f64 * m as f64))
}

/// Assembles the full evaluation row for a model.
///
/// `eval_set` is held-out in-distribution data (already standardized the same
/// way the model's training data was). The SW column compares the
/// forward-mapped latents with `eval_set.len()` fresh base-normal draws;
/// noise and (for a `FreshPerCall` policy) directions come from streams of
/// `eval_seed`, so the same seed always reproduces the same row. When an OoD
/// set is given, its AUROC against `eval_set` under per-sample log-likelihood
/// scoring fills the `auroc` field.
pub fn full_report(
    model: &FlowModel,
    eval_set: &Tensor,
    sw_cfg: &SWConfig,
    eval_seed: u64,
    meta: ReportMeta,
    ood_set: Option<&Tensor>,
) -> Result<MetricsReport> {
    let nll = eval_nll(model, eval_set)?;
    let (z, _) = model.forward(eval_set)?;
    let (n, d) = (eval_set.shape()[0], eval_set.shape()[1]);
    let base = normal_matrix(&mut stream_rng(eval_seed, stream::EVAL_NOISE), n, d);
    let sw = sliced_wasserstein_value(
        &z,
        &base,
        sw_cfg,
        &mut stream_rng(eval_seed, stream::EVAL_PROJECTIONS),
    )?;
    let (k3_norm_sq, k4_norm_sq) = cumulant_norms(&z)?;
    let auroc = match ood_set {
        Some(ood) => {
            let scores_in = log_likelihoods(model, eval_set)?;
            let scores_out = log_likelihoods(model, ood)?;
            Some(eval_auroc(&scores_in, &scores_out)?)
        }
        None => None,
    };
    let report = MetricsReport {
        step: meta.step,
        seed: meta.seed,
        dataset: meta.dataset,
        train_loss: meta.train_loss,
        nll,
        sw,
        sw_projections: sw_cfg.projections,
        sw_exponent: sw_cfg.exponent,
        k3_norm_sq,
        k4_norm_sq,
        auroc,
    };
    if !report.is_finite() {
        return Err(Error::NonFinite("metrics report contains non-finite values".into()));
    }
    Ok(report)
}

/// Shared-bin histogram over several score series.
#[derive(Debug, Clone)]
pub struct Histogram {
    /// `bins + 1` ascending edges spanning the global range of all series.
    pub edges: Vec<f64>,
    /// Per-series counts, one per bin.
    pub counts: Vec<(String, Vec<u64>)>,
}

/// Histograms all series over shared equal-width bins.
pub fn histogram(series: &[(String, Vec<f64>)], bins: usize) -> Result<Histogram> {
    if bins == 0 || series.is_empty() || series.iter().any(|(_, v)| v.is_empty()) {
        return Err(Error::Config("histogram needs ≥1 bin and non-empty series".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, values) in series {
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::NonFinite("histogram input contains non-finite scores".into()));
    }
    if hi == lo {
        hi = lo + 1.0; // all-equal scores land in the first bin
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let counts = series
        .iter()
        .map(|(name, values)| {
            let mut c = vec![0u64; bins];
            for &v in values {
                let idx = (((v - lo) / width) as usize).min(bins - 1);
                c[idx] += 1;
            }
            (name.clone(), c)
        })
        .collect();
    Ok(Histogram { edges, counts })
}

/// Writes `bin_left,bin_right,count_<name>...` rows.
pub fn write_histogram_csv(h: &Histogram, path: &Path) -> Result<()> {
    let mut out = String::from("bin_left,bin_right");
    for (name, _) in &h.counts {
        out.push_str(",count_");
        out.push_str(name);
    }
    out.push('\n');
    let bins = h.edges.len() - 1;
    for b in 0..bins {
        out.push_str(&fmt_f64(h.edges[b]));
        out.push(',');
        out.push_str(&fmt_f64(h.edges[b + 1]));
        for (_, counts) in &h.counts {
            out.push(',');
            out.push_str(&counts[b].to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Per-sample log-likelihood CSV (single `log_likelihood` column).
pub fn write_scores_csv(scores: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("log_likelihood\n");
    for &s in scores {
        out.push_str(&fmt_f64(s));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
