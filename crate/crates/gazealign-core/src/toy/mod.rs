//! Desk-scale demonstration of the joint training objective: a synthetic
//! bar-chart QA task, a small cross-attention classifier, and a trainer that
//! supervises the model's attention with gaze targets.

pub mod model;
pub mod synth;
pub mod train;

pub use model::{lm_loss, Grads, ToyModel, HEAD_DIM, MODEL_DIM, NUM_HEADS, NUM_LAYERS};
pub use synth::{
    answer_for, heights_from_chart, synth_dataset, vocab_size, Question, QuestionKind,
    SynthInstance, KIND_TOKENS, QUESTION_TOKENS,
};
pub use train::{batch_gradients, evaluate, train, EpochStats, TrainConfig};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{LossConfig, LossKind};
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg(kind: LossKind, lambda2: f64) -> TrainConfig {
        TrainConfig {
            lambda2,
            loss_kind: kind,
            grid: 4,
            n_train: 12,
            n_test: 4,
            epochs: 3,
            batch_size: 4,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    /// Objective with the attention normalizer frozen per instance, matching
    /// the training rule that the map maximum is constant under
    /// differentiation.
    fn total_loss_frozen(
        model: &ToyModel,
        cfg: &TrainConfig,
        batch: &[SynthInstance],
        norms: &[f64],
    ) -> f64 {
        let loss_cfg = LossConfig::default();
        let mut total = 0.0;
        for (inst, &norm) in batch.iter().zip(norms) {
            let (probs, attn) = model.forward(inst);
            total += cfg.lambda1 * lm_loss(&probs, inst.answer).0;
            if cfg.lambda2 != 0.0 {
                let agg = crate::attention::aggregate_attention(&attn, cfg.m_layers).unwrap();
                let (attn_loss, _) = super::train::attn_loss_and_grad(
                    &agg,
                    norm,
                    &inst.target_gaze,
                    cfg.loss_kind,
                    &loss_cfg,
                )
                .unwrap();
                total += cfg.lambda2 * loss_cfg.scale * attn_loss;
            }
        }
        total
    }

    fn check_gradients(cfg: &TrainConfig, label: &str) {
        let loss_cfg = LossConfig::default();
        let data = synth_dataset(2, cfg.grid, 9, cfg.sigma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut model = ToyModel::init(cfg.grid, vocab_size(cfg.grid), &mut rng);

        // Analytic gradients with per-instance normalizers frozen slightly
        // above the base maximum, so finite-difference probes stay in [0, 1].
        let mut grads = Grads::zeros_like(&model);
        let mut norms = Vec::new();
        for inst in &data {
            let fwd = model.forward_cached(inst);
            let agg = crate::attention::aggregate_attention(&fwd.attn, cfg.m_layers).unwrap();
            let norm = 1.01 * agg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            norms.push(norm);
            let mut d_logits = [0.0f64; 2];
            let answer_idx = inst.answer as usize;
            for c in 0..2 {
                let target = if c == answer_idx { 1.0 } else { 0.0 };
                d_logits[c] = cfg.lambda1 * (fwd.probs[c] - target);
            }
            if cfg.lambda2 != 0.0 {
                let (_, d_agg) = super::train::attn_loss_and_grad(
                    &agg,
                    norm,
                    &inst.target_gaze,
                    cfg.loss_kind,
                    &loss_cfg,
                )
                .unwrap();
                let scaled: Vec<f64> = d_agg
                    .iter()
                    .map(|&v| v * cfg.lambda2 * loss_cfg.scale)
                    .collect();
                model.backward(inst, &fwd, d_logits, Some((&scaled, cfg.m_layers)), &mut grads);
            } else {
                model.backward(inst, &fwd, d_logits, None, &mut grads);
            }
        }

        let h = 1e-5;
        let analytic: Vec<f64> = grads.blocks().concat();
        let mut idx = 0usize;
        let n_blocks = model.param_blocks().len();
        for b in 0..n_blocks {
            let len = model.param_blocks()[b].len();
            // Probe a deterministic subset of each block to keep runtime sane.
            let stride = (len / 17).max(1);
            for i in (0..len).step_by(stride) {
                let orig = model.param_blocks()[b][i];
                model.param_blocks_mut()[b][i] = orig + h;
                let plus = total_loss_frozen(&model, cfg, &data, &norms);
                model.param_blocks_mut()[b][i] = orig - h;
                let minus = total_loss_frozen(&model, cfg, &data, &norms);
                model.param_blocks_mut()[b][i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                let an = analytic[idx + i];
                let rel = (numeric - an).abs() / an.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    rel < 1e-3,
                    "{label} block {b} index {i}: numeric {numeric} vs analytic {an}"
                );
            }
            idx += len;
        }
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences_language_only() {
        check_gradients(&tiny_cfg(LossKind::Wmse, 0.0), "lm-only");
    }

    #[test]
    fn whole_model_gradient_matches_finite_differences() {
        for kind in [LossKind::Wmse, LossKind::Kld, LossKind::Focal, LossKind::DiceBce] {
            check_gradients(&tiny_cfg(kind, 1.0), kind_label(kind));
        }
    }

    fn kind_label(kind: LossKind) -> &'static str {
        match kind {
            LossKind::Wmse => "wmse",
            LossKind::Kld => "kld",
            LossKind::Focal => "focal",
            LossKind::DiceBce => "dicebce",
        }
    }

    #[test]
    fn lambda2_zero_ignores_the_attention_term_entirely() {
        // With lambda2 = 0 the attention loss is outside the update path, so
        // changing its kind must not move a single parameter bit.
        let data = synth_dataset(16, 4, 21, 0.6).unwrap();
        let a = train(&tiny_cfg(LossKind::Wmse, 0.0), &data).unwrap().0;
        let b = train(&tiny_cfg(LossKind::DiceBce, 0.0), &data).unwrap().0;
        assert_eq!(a, b);
        let c = train(&tiny_cfg(LossKind::Wmse, 1.0), &data).unwrap().0;
        assert_ne!(a, c);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let cfg = tiny_cfg(LossKind::Wmse, 1.0);
        let data = synth_dataset(16, 4, 33, 0.6).unwrap();
        let (m1, h1) = train(&cfg, &data).unwrap();
        let (m2, h2) = train(&cfg, &data).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(h1, h2);
    }

    #[test]
    fn chunked_gradient_accumulation_is_partition_independent() {
        let cfg = tiny_cfg(LossKind::Wmse, 1.0);
        let data = synth_dataset(10, 4, 41, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = ToyModel::init(cfg.grid, vocab_size(cfg.grid), &mut rng);
        let loss_cfg = LossConfig::default();

        let (whole, _) = batch_gradients(&model, &cfg, &loss_cfg, &data).unwrap();
        let (mut combined, _) = batch_gradients(&model, &cfg, &loss_cfg, &data[..3]).unwrap();
        let (part2, _) = batch_gradients(&model, &cfg, &loss_cfg, &data[3..7]).unwrap();
        let (part3, _) = batch_gradients(&model, &cfg, &loss_cfg, &data[7..]).unwrap();
        combined.add(&part2);
        combined.add(&part3);

        for (a, b) in whole.blocks().concat().iter().zip(combined.blocks().concat()) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn untrained_model_is_near_chance_on_balanced_data() {
        let data = synth_dataset(1000, 8, 3, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ToyModel::init(8, vocab_size(8), &mut rng);
        let (_, acc) = evaluate(&model, &data, 1).unwrap();
        assert!((acc - 0.5).abs() < 0.1, "untrained accuracy {acc}");
    }

    #[test]
    fn divergent_learning_rate_reports_divergence() {
        let mut cfg = tiny_cfg(LossKind::Wmse, 1.0);
        cfg.learning_rate = 1e6;
        cfg.epochs = 50;
        let data = synth_dataset(12, 4, 60, 0.6).unwrap();
        match train(&cfg, &data) {
            Err(crate::error::CoreError::Diverged { .. }) => {}
            Ok(_) => {} // huge steps may still stay finite; divergence is not guaranteed
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }
}
