//! Joint training of answer accuracy and gaze-aligned attention.
//!
//! Each step minimizes `lambda1 * lm + lambda2 * scale * attn_loss`, where
//! the attention loss compares the gaze target against the aggregated
//! attention map (first `m_layers` layers, all heads and tokens) divided by
//! its maximum, with the maximum treated as constant during backpropagation.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::aggregate_attention;
use crate::error::{CoreError, Result};
use crate::grid::{dist_normalize, Map2D, EPS_FLOOR_DEFAULT};
use crate::loss::{dice_bce, focal, kld_loss, wmse, LossConfig, LossKind};
use crate::metrics;
use crate::metrics::MetricReport;
use crate::toy::model::{lm_loss, Grads, ToyModel, NUM_LAYERS};
use crate::toy::synth::{synth_dataset, vocab_size, SynthInstance};

/// Training hyperparameters. The dataset fields (`n_train`, `n_test`,
/// `grid`, `sigma`) let a run be regenerated from the config alone.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub loss_kind: LossKind,
    /// Supervise (and evaluate) the mean over the first `m_layers` layers.
    pub m_layers: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Gaussian sigma, in cells, of the synthetic gaze targets.
    pub sigma: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub grid: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            loss_kind: LossKind::Wmse,
            m_layers: 1,
            learning_rate: 0.05,
            epochs: 200,
            batch_size: 32,
            seed: 1,
            sigma: 0.6,
            n_train: 1000,
            n_test: 200,
            grid: 8,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        for (name, ok, value) in [
            ("learning_rate", self.learning_rate > 0.0, self.learning_rate),
            ("epochs", self.epochs >= 1, self.epochs as f64),
            ("batch_size", self.batch_size >= 1, self.batch_size as f64),
            ("grid", self.grid >= 4, self.grid as f64),
            ("sigma", self.sigma > 0.0, self.sigma),
            (
                "m_layers",
                self.m_layers >= 1 && self.m_layers <= NUM_LAYERS,
                self.m_layers as f64,
            ),
        ] {
            if !ok {
                return Err(CoreError::BadParam { name, value });
            }
        }
        Ok(())
    }

    /// The train/test datasets this config describes, generated as one
    /// deterministic stream and split.
    pub fn make_datasets(&self) -> Result<(Vec<SynthInstance>, Vec<SynthInstance>)> {
        let mut all = synth_dataset(self.n_train + self.n_test, self.grid, self.seed, self.sigma)?;
        let test = all.split_off(self.n_train);
        Ok((all, test))
    }
}

/// Per-epoch training statistics, averaged over the epoch's instances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub accuracy: f64,
    pub lm_loss: f64,
    pub attn_loss: f64,
    pub cc: f64,
    pub kl: f64,
    pub sim: f64,
}

/// Attention loss of one instance against its gaze target, with the
/// gradient chained back to the aggregated patch vector.
///
/// `norm` is the divisor bringing the aggregate into `[0, 1]`; in training
/// it is the map maximum, held constant under differentiation.
pub(crate) fn attn_loss_and_grad(
    agg: &[f64],
    norm: f64,
    target: &Map2D,
    kind: LossKind,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let grid = target.height();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(CoreError::NonFinite("aggregated attention"));
    }
    let a01 = Map2D::new(grid, grid, agg.iter().map(|&v| v / norm).collect())?;
    let (loss, d_a01) = match kind {
        LossKind::Wmse => {
            let r = wmse(target, &a01, cfg)?;
            (r.loss, r.grad.into_values())
        }
        LossKind::Focal => {
            let r = focal(target, &a01, cfg)?;
            (r.loss, r.grad.into_values())
        }
        LossKind::DiceBce => {
            let r = dice_bce(target, &a01, cfg)?;
            (r.loss, r.grad.into_values())
        }
        LossKind::Kld => {
            let pg = dist_normalize(target, EPS_FLOOR_DEFAULT)?;
            let pa = dist_normalize(&a01, EPS_FLOOR_DEFAULT)?;
            let r = kld_loss(&pg, &pa, cfg)?;
            // Chain through the distribution normalization of a01.
            let z: f64 = a01.values().iter().map(|&v| v + EPS_FLOOR_DEFAULT).sum();
            let g = r.grad.values();
            let inner: f64 = g.iter().zip(pa.values()).map(|(a, b)| a * b).sum();
            let chained = g
                .iter()
                .map(|&gi| (gi - inner) / z)
                .collect();
            (r.loss, chained)
        }
    };
    // Undo the division by the (constant) normalizer.
    let d_agg = d_a01.iter().map(|&v| v / norm).collect();
    Ok((loss, d_agg))
}

/// Forward pass plus loss bookkeeping for one instance.
struct StepOutcome {
    correct: bool,
    lm: f64,
    attn: f64,
    cc: Option<f64>,
    kl: f64,
    sim: f64,
}

/// Gradients and statistics accumulated over a slice of instances.
///
/// Accumulation order is the slice order, so chunked accumulation combined
/// in chunk order reproduces the single-pass sums.
pub fn batch_gradients(
    model: &ToyModel,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    batch: &[SynthInstance],
) -> Result<(Grads, Vec<f64>)> {
    let mut grads = Grads::zeros_like(model);
    let mut losses = Vec::with_capacity(batch.len());
    for inst in batch {
        let outcome = step(model, cfg, loss_cfg, inst, Some(&mut grads))?;
        losses.push(cfg.lambda1 * outcome.lm + cfg.lambda2 * loss_cfg.scale * outcome.attn);
    }
    Ok((grads, losses))
}

fn step(
    model: &ToyModel,
    cfg: &TrainConfig,
    loss_cfg: &LossConfig,
    inst: &SynthInstance,
    grads: Option<&mut Grads>,
) -> Result<StepOutcome> {
    let fwd = model.forward_cached(inst);
    let answer_idx = inst.answer as usize;
    let (lm, _) = lm_loss(&fwd.probs, inst.answer);
    let correct = (fwd.probs[1] > fwd.probs[0]) == inst.answer;

    let agg = aggregate_attention(&fwd.attn, cfg.m_layers)?;
    let patch_map = Map2D::new(cfg.grid, cfg.grid, agg.clone())?;
    let cc = match metrics::cc(&inst.target_gaze, &patch_map) {
        Ok(v) => Some(v),
        Err(CoreError::ConstantInput) => None,
        Err(e) => return Err(e),
    };
    let kl = metrics::kl_div(&inst.target_gaze, &patch_map, EPS_FLOOR_DEFAULT)?;
    let sim = metrics::sim(&inst.target_gaze, &patch_map)?;

    let supervised = cfg.lambda2 != 0.0;
    let norm = agg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (attn_loss, d_agg) =
        attn_loss_and_grad(&agg, norm, &inst.target_gaze, cfg.loss_kind, loss_cfg)?;

    if let Some(grads) = grads {
        let mut d_logits = [0.0f64; 2];
        for c in 0..2 {
            let target = if c == answer_idx { 1.0 } else { 0.0 };
            d_logits[c] = cfg.lambda1 * (fwd.probs[c] - target);
        }
        if supervised {
            let coef = cfg.lambda2 * loss_cfg.scale;
            let d_agg_scaled: Vec<f64> = d_agg.iter().map(|&v| v * coef).collect();
            model.backward(
                inst,
                &fwd,
                d_logits,
                Some((&d_agg_scaled, cfg.m_layers)),
                grads,
            );
        } else {
            model.backward(inst, &fwd, d_logits, None, grads);
        }
    }

    Ok(StepOutcome {
        correct,
        lm,
        attn: attn_loss,
        cc,
        kl,
        sim,
    })
}

/// Mini-batch gradient descent on the joint objective. Deterministic under
/// `cfg.seed`: the same seed reproduces the final parameters bit for bit.
pub fn train(
    cfg: &TrainConfig,
    dataset: &[SynthInstance],
) -> Result<(ToyModel, Vec<EpochStats>)> {
    cfg.validate()?;
    let loss_cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ToyModel::init(cfg.grid, vocab_size(cfg.grid), &mut rng);
    let n = dataset.len();
    if n == 0 {
        return Err(CoreError::BadParam {
            name: "dataset",
            value: 0.0,
        });
    }

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut correct = 0usize;
        let mut lm_sum = 0.0;
        let mut attn_sum = 0.0;
        let mut cc_sum = 0.0;
        let mut cc_count = 0usize;
        let mut kl_sum = 0.0;
        let mut sim_sum = 0.0;

        for chunk in order.chunks(cfg.batch_size) {
            let mut grads = Grads::zeros_like(&model);
            let mut batch_loss = 0.0;
            for &i in chunk {
                // Numerical degeneracy mid-run (attention mass underflow,
                // non-finite activations) is divergence, not misuse.
                let o = match step(&model, cfg, &loss_cfg, &dataset[i], Some(&mut grads)) {
                    Ok(o) => o,
                    Err(CoreError::NonFinite(_)) => {
                        return Err(CoreError::Diverged { epoch })
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += cfg.lambda1 * o.lm + cfg.lambda2 * loss_cfg.scale * o.attn;
                correct += o.correct as usize;
                lm_sum += o.lm;
                attn_sum += o.attn;
                if let Some(v) = o.cc {
                    cc_sum += v;
                    cc_count += 1;
                }
                kl_sum += o.kl;
                sim_sum += o.sim;
            }
            if !batch_loss.is_finite() {
                return Err(CoreError::Diverged { epoch });
            }
            let step_size = cfg.learning_rate / chunk.len() as f64;
            for (param, grad) in model.param_blocks_mut().into_iter().zip(grads.blocks()) {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= step_size * g;
                }
            }
        }

        let nf = n as f64;
        history.push(EpochStats {
            epoch,
            accuracy: correct as f64 / nf,
            lm_loss: lm_sum / nf,
            attn_loss: attn_sum / nf,
            cc: if cc_count > 0 { cc_sum / cc_count as f64 } else { 0.0 },
            kl: kl_sum / nf,
            sim: sim_sum / nf,
        });
    }
    Ok((model, history))
}

/// Fisher-Yates with the training RNG; kept here so the whole run is one
/// deterministic stream.
fn shuffle(order: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

/// Accuracy plus mean CC / KL / SIM of the extracted attention maps against
/// the gaze targets.
pub fn evaluate(
    model: &ToyModel,
    dataset: &[SynthInstance],
    m_layers: usize,
) -> Result<(MetricReport, f64)> {
    let mut correct = 0usize;
    let mut cc_sum = 0.0;
    let mut cc_count = 0usize;
    let mut kl_sum = 0.0;
    let mut sim_sum = 0.0;
    for inst in dataset {
        let (probs, attn) = model.forward(inst);
        if (probs[1] > probs[0]) == inst.answer {
            correct += 1;
        }
        let agg = aggregate_attention(&attn, m_layers)?;
        let patch_map = Map2D::new(model.grid, model.grid, agg)?;
        match metrics::cc(&inst.target_gaze, &patch_map) {
            Ok(v) => {
                cc_sum += v;
                cc_count += 1;
            }
            Err(CoreError::ConstantInput) => {}
            Err(e) => return Err(e),
        }
        kl_sum += metrics::kl_div(&inst.target_gaze, &patch_map, EPS_FLOOR_DEFAULT)?;
        sim_sum += metrics::sim(&inst.target_gaze, &patch_map)?;
    }
    let n = dataset.len() as f64;
    Ok((
        MetricReport {
            cc: if cc_count > 0 { cc_sum / cc_count as f64 } else { 0.0 },
            kl: kl_sum / n,
            sim: sim_sum / n,
        },
        correct as f64 / n,
    ))
}
