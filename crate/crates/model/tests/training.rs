use spancal_core::rng::derive_rng;
use spancal_core::synth::{build_pbr_records, HeuristicTyper, Mode, NoisePolicy};
use spancal_core::CalibrationExample;
use spancal_model::encode::{mask_for_mlm, maskable_positions, MASK, SPECIALS};
use spancal_model::heads::LossBreakdown;
use spancal_model::synthetic::{as_sentences, synthetic_passages, SyntheticConfig};
use spancal_model::train::train_loop;
use spancal_model::{Calibrator, LossWeights, ModelConfig, ModelError, Tagger, TrainConfig};

fn small_config() -> ModelConfig {
    ModelConfig {
        d_model: 16,
        heads: 2,
        d_ff: 32,
        ..ModelConfig::desk(0, 0)
    }
}

fn records(n_passages: usize, seed: u64) -> Vec<CalibrationExample> {
    let passages = synthetic_passages(&SyntheticConfig {
        passages: n_passages,
        seed,
        ..Default::default()
    });
    build_pbr_records(&passages, &NoisePolicy::default(), Mode::Ner, &HeuristicTyper).unwrap().0
}

#[test]
fn mlm_mask_statistics() {
    let ids: Vec<usize> = (0..120).map(|i| SPECIALS.len() + i % 50).collect();
    let maskable: Vec<usize> = (10..110).collect();
    let mut rng = derive_rng(3, "mlm");
    let (mut total, mut as_mask, mut n) = (0usize, 0usize, 0usize);
    for _ in 0..10_000 {
        let (out, targets) = mask_for_mlm(&ids, &maskable, 60, 0.05, &mut rng);
        total += targets.len();
        for &(p, orig) in &targets {
            assert!((10..110).contains(&p));
            assert_eq!(ids[p], orig);
            n += 1;
            if out[p] == MASK {
                as_mask += 1;
            } else {
                assert!(out[p] >= SPECIALS.len());
            }
        }
        for p in (0..10).chain(110..120) {
            assert_eq!(out[p], ids[p]);
        }
    }
    let mean = total as f64 / 10_000.0;
    assert!((mean - 5.0).abs() <= 0.2, "mean masks {mean}");
    let frac = as_mask as f64 / n as f64;
    assert!((frac - 0.8).abs() < 0.02, "mask fraction {frac}");
}

#[test]
fn masks_stay_outside_gold() {
    let recs = records(20, 1);
    let model = Calibrator::init(&recs, small_config(), 0).unwrap();
    let mut rng = derive_rng(4, "gold");
    for ex in &recs {
        let (enc, _) = model.encode(ex).unwrap();
        let maskable = maskable_positions(&enc);
        let gold = enc.gold.clone().unwrap();
        assert!(maskable.iter().all(|p| !gold.contains(p) && enc.passage.contains(p)));
        for _ in 0..20 {
            let (_, t) = mask_for_mlm(&enc.ids, &maskable, model.vocab.len(), 0.5, &mut rng);
            assert!(t.iter().all(|(p, _)| !gold.contains(p)));
        }
    }
    // gold covering the whole passage leaves nothing to mask
    let mut whole = recs[0].clone();
    whole.gold = spancal_core::Span::new(0, whole.passage.len());
    let (enc, _) = model.encode(&whole).unwrap();
    assert!(maskable_positions(&enc).is_empty());
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let recs = records(4, 2);
    let recs = &recs[..10];
    let model = Calibrator::init(recs, small_config(), 0).unwrap();
    let cfg = TrainConfig { epochs: 1, lr: 0.0, ..Default::default() };
    let (trained, log) = model.clone().fit(recs, &LossWeights::ner(), &cfg).unwrap();
    assert_eq!(trained.params, model.params);
    assert_eq!(log.len(), 1);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let recs = records(12, 3);
    let model = Calibrator::init(&recs, small_config(), 0).unwrap();
    let cfg = TrainConfig { epochs: 5, lr: 3e-3, batch_size: 8, seed: 9, ..Default::default() };
    let (a, log_a) = model.clone().fit(&recs, &LossWeights::pretrain(), &cfg).unwrap();
    let (b, log_b) = model.fit(&recs, &LossWeights::pretrain(), &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(log_a, log_b);
    assert!(log_a[4].loss.l_total < log_a[0].loss.l_total);
    for e in &log_a {
        let l = &e.loss;
        let again = 0.5 * l.l_position + 0.5 * l.l_span + l.l_mlm;
        assert!((l.l_total - again).abs() < 1e-9);
    }
}

#[test]
fn divergence_returns_last_good_params() {
    let recs = records(2, 4);
    let model = Calibrator::init(&recs, small_config(), 0).unwrap();
    let start = model.params.clone();
    let cfg = TrainConfig { epochs: 2, batch_size: 1, weight_decay: 0.0, ..Default::default() };
    let mut calls = 0;
    let err = train_loop(model.params, 5, &cfg, |_, _, _, _, _| {
        calls += 1;
        Ok(LossBreakdown { l_total: if calls > 1 { f64::NAN } else { 1.0 }, ..Default::default() })
    })
    .unwrap_err();
    match err {
        ModelError::Diverged { epoch, step, last_good } => {
            assert_eq!((epoch, step), (1, 1));
            // the first step had zero gradient; Adam leaves params in place
            assert_eq!(*last_good, start);
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn base_tagger_learns_synthetic_tags() {
    let passages = synthetic_passages(&SyntheticConfig { passages: 360, seed: 5, ..Default::default() });
    let sentences = as_sentences(&passages);
    let (train, held) = sentences.split_at(300);
    let cfg = ModelConfig { d_model: 32, heads: 4, d_ff: 64, ..ModelConfig::desk(0, 0) };
    let tagger = Tagger::init(train, cfg, 1).unwrap();
    let untrained = tagger.tag(&["w001", "Per03", "w002"]).unwrap();
    assert_eq!(untrained.len(), 3);
    let tc = TrainConfig { epochs: 4, lr: 3e-3, batch_size: 8, seed: 2, ..Default::default() };
    let (tagger, _) = tagger.fit(train, &tc).unwrap();
    let (mut right, mut total) = (0, 0);
    for s in held {
        let toks: Vec<&str> = s.tokens.tokens().collect();
        let pred = tagger.tag(&toks).unwrap();
        right += pred.iter().zip(&s.labels).filter(|(p, g)| p == g).count();
        total += toks.len();
    }
    let acc = right as f64 / total as f64;
    assert!(acc >= 0.95, "held-out token accuracy {acc}");
}
