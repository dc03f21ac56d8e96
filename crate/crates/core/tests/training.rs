mod common;

use pockformer_core::chem::ComplexRecord;
use pockformer_core::model::{ModelConfig, Weights};
use pockformer_core::seqcodec::{encode_record, Vocabulary};
use pockformer_core::train::{steps_per_epoch, train_pretrain, RunOptions, Schedule, TrainConfig, TrainState};

/// Complexes, pocket-only and ligand-only records in equal measure.
fn mixed_corpus() -> Vec<ComplexRecord> {
    common::complexes(77, 32, 5)
        .into_iter()
        .enumerate()
        .map(|(k, r)| match k % 3 {
            0 => r,
            1 => ComplexRecord::new(r.pocket_atoms, r.pocket_coords, "", vec![]),
            _ => ComplexRecord::new(vec![], vec![], &r.ligand_smiles, r.ligand_coords),
        })
        .collect()
}

#[test]
fn tiny_corpus_epoch_loss_decreases() {
    let recs = mixed_corpus();
    let vocab = Vocabulary::build(&recs).unwrap();
    let seqs: Vec<_> = recs.iter().map(|r| encode_record(&vocab, r, 5.0, 128).unwrap()).collect();
    assert_eq!(seqs.len(), 32);

    let c = ModelConfig { n_layers: 2, n_heads: 2, d_model: 32, max_len: 128, vocab_size: vocab.len(), dropout: 0.0 };
    let mut state = TrainState::new(Weights::<f32>::init(&c, 3).unwrap());
    let cfg = TrainConfig {
        micro_batch: 8,
        accum_steps: 1,
        max_lr: 1e-3,
        warmup_frac: 0.02,
        total_steps: 500,
        weight_decay: 0.0,
        alpha: 1.0,
        seed: 11,
        schedule: Schedule::WarmupCosine,
        clip_norm: Some(1.0),
        checkpoint_every: 0,
    };
    let report = train_pretrain(&mut state, &vocab, &seqs, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(report.history.len(), 500);
    assert_eq!(state.step, 500);

    let per_epoch = steps_per_epoch(seqs.len(), cfg.effective_batch());
    assert_eq!(per_epoch, 4);
    let means: Vec<f64> = report
        .history
        .chunks(per_epoch)
        .map(|c| c.iter().map(|l| l.loss.total).sum::<f64>() / c.len() as f64)
        .collect();
    for (e, w) in means.windows(2).enumerate() {
        assert!(w[1] < w[0], "epoch {} loss {} did not drop below {}", e + 1, w[1], w[0]);
    }
    assert!(means.last().unwrap() < &(0.5 * means[0]));
}

#[test]
fn one_epoch_step_count() {
    let recs = mixed_corpus();
    let vocab = Vocabulary::build(&recs).unwrap();
    let seqs: Vec<_> = recs[..10].iter().map(|r| encode_record(&vocab, r, 5.0, 128).unwrap()).collect();
    let c = ModelConfig { n_layers: 1, n_heads: 1, d_model: 8, max_len: 128, vocab_size: vocab.len(), dropout: 0.0 };
    let mut state = TrainState::new(Weights::<f64>::init(&c, 1).unwrap());
    let cfg = TrainConfig { micro_batch: 2, accum_steps: 2, ..TrainConfig::pretrain_default(3) };
    let report = train_pretrain(&mut state, &vocab, &seqs, &cfg, &RunOptions::default()).unwrap();
    assert_eq!(steps_per_epoch(10, 4), 3);
    assert_eq!(report.history.len(), 3);
}
