use gemcap_core::capnet::{
    train, CaptionModel, CellKind, Checkpoint, DecoderConfig, EncoderConfig, EncoderScale, Task,
    TrainConfig,
};
use gemcap_core::dataforge::{build_dataset, Dataset, DatasetConfig, Split};
use gemcap_core::lexicon::{DescriptionLevel, Lexicon, Vocabulary};
use gemcap_core::optim::{OptimizerConfig, OptimizerKind};
use gemcap_core::tensor::Rng;

fn small_dataset(n_base: usize, size: usize, seed: u64) -> Dataset {
    let cfg = DatasetConfig {
        n_base,
        augment_multiplier: 1,
        master_seed: seed,
        height: size,
        width: size,
        ..DatasetConfig::default()
    };
    build_dataset(&cfg, &Lexicon::default()).unwrap()
}

/// One training sample, and the same sample again as validation.
fn single_sample(size: usize) -> Dataset {
    let ds = small_dataset(8, size, 3);
    let mut train = ds.samples[0].clone();
    train.split = Split::Train;
    let mut val = train.clone();
    val.split = Split::Val;
    Dataset {
        samples: vec![train, val],
    }
}

fn small_decoder(cell: CellKind) -> DecoderConfig {
    DecoderConfig {
        embed_dim: 16,
        ..DecoderConfig::new(cell, 32)
    }
}

#[test]
fn overfits_a_single_sample() {
    let lex = Lexicon::default();
    let ds = single_sample(32);
    let sample = &ds.samples[0];
    let enc = EncoderScale::Small.config(32, 32);
    for cell in CellKind::ALL {
        for task in [
            Task::Classification,
            Task::Captioning(DescriptionLevel::Normal),
        ] {
            let mut cfg =
                TrainConfig::new(task, 1, OptimizerConfig::new(OptimizerKind::Adam, 0.001));
            cfg.max_epochs = 400;
            cfg.patience = 400;
            let out = train(&ds, &enc, &small_decoder(cell), &cfg, &lex, None).unwrap();
            let last = out.log.last().unwrap();
            assert!(
                last.train_loss < 0.05,
                "{cell} {task}: loss {}",
                last.train_loss
            );
            let model = &out.checkpoint.model;
            match task {
                Task::Classification => assert_eq!(
                    model.predict_class(&sample.image).unwrap(),
                    sample.class_label
                ),
                Task::Captioning(level) => assert_eq!(
                    model.caption(&sample.image).unwrap(),
                    sample.captions.get(level)
                ),
            }
        }
    }
}

#[test]
fn fresh_model_loss_is_near_uniform() {
    let lex = Lexicon::default();
    let ds = small_dataset(40, 32, 5);
    let train_set = ds.split(Split::Train);
    let vocab = Vocabulary::build(train_set.iter().map(|s| lex.tokenize(&s.captions.normal)));
    let expected = (vocab.len() as f64).ln();
    for cell in CellKind::ALL {
        let dec = DecoderConfig::new(cell, 256);
        let mut model = CaptionModel::new(
            EncoderConfig::desk(32, 32),
            dec,
            vocab.clone(),
            Task::Captioning(DescriptionLevel::Normal),
            &mut Rng::new(9),
        )
        .unwrap();
        let images = model
            .stack(&train_set.iter().map(|s| &s.image).collect::<Vec<_>>())
            .unwrap();
        let seqs: Vec<Vec<usize>> = train_set
            .iter()
            .map(|s| model.target_ids(&lex, s.class_label, &s.captions.normal))
            .collect();
        let loss = model.sequence_loss(&images, &seqs, false).unwrap();
        assert!(
            (loss - expected).abs() <= 0.05 * expected,
            "{cell}: {loss} vs ln V = {expected}"
        );
    }
}

#[test]
fn training_is_deterministic() {
    let lex = Lexicon::default();
    let ds = small_dataset(12, 32, 8);
    let enc = EncoderScale::Small.config(32, 32);
    let mut cfg = TrainConfig::new(
        Task::Classification,
        4,
        OptimizerConfig::new(OptimizerKind::Adam, 0.001),
    );
    cfg.max_epochs = 3;
    let a = train(&ds, &enc, &small_decoder(CellKind::Lstm), &cfg, &lex, None).unwrap();
    let b = train(&ds, &enc, &small_decoder(CellKind::Lstm), &cfg, &lex, None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(
        a.checkpoint.to_bytes().unwrap(),
        b.checkpoint.to_bytes().unwrap()
    );
    cfg.seed += 1;
    let c = train(&ds, &enc, &small_decoder(CellKind::Lstm), &cfg, &lex, None).unwrap();
    assert_ne!(
        a.checkpoint.to_bytes().unwrap(),
        c.checkpoint.to_bytes().unwrap()
    );
}

#[test]
fn frozen_model_stops_after_patience() {
    let lex = Lexicon::default();
    let ds = small_dataset(12, 32, 8);
    let enc = EncoderScale::Small.config(32, 32);
    for patience in [1, 3, 5] {
        let mut cfg = TrainConfig::new(
            Task::Classification,
            4,
            OptimizerConfig::new(OptimizerKind::Adam, 0.001),
        );
        cfg.freeze_parameters = true;
        cfg.patience = patience;
        let mut seen = 0;
        let mut count = |_: &_| seen += 1;
        let out = train(
            &ds,
            &enc,
            &small_decoder(CellKind::Gru),
            &cfg,
            &lex,
            Some(&mut count),
        )
        .unwrap();
        assert_eq!(seen, patience + 1);
        let s = &out.checkpoint.summary;
        assert_eq!((s.epochs_run, s.best_epoch), (patience + 1, 1));
        assert!(out.log.windows(2).all(|w| w[0].val_loss == w[1].val_loss));
    }
}

#[test]
fn checkpoint_preserves_predictions() {
    let lex = Lexicon::default();
    let ds = small_dataset(12, 32, 4);
    let enc = EncoderScale::Small.config(32, 32);
    let mut cfg = TrainConfig::new(
        Task::Captioning(DescriptionLevel::Basic),
        4,
        OptimizerConfig::new(OptimizerKind::RMSProp, 0.001),
    );
    cfg.max_epochs = 2;
    let out = train(&ds, &enc, &small_decoder(CellKind::Lstm), &cfg, &lex, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    gemcap_core::capnet::save_checkpoint(&out.checkpoint, &path).unwrap();
    let back: Checkpoint = gemcap_core::capnet::load_checkpoint(&path).unwrap();
    assert_eq!(back.summary, out.checkpoint.summary);
    for s in &ds.samples {
        assert_eq!(
            back.model.caption(&s.image).unwrap(),
            out.checkpoint.model.caption(&s.image).unwrap()
        );
    }
}

#[test]
fn empty_validation_split_is_rejected() {
    let lex = Lexicon::default();
    let mut ds = small_dataset(8, 32, 1);
    ds.samples.retain(|s| s.split != Split::Val);
    let cfg = TrainConfig::new(
        Task::Classification,
        4,
        OptimizerConfig::new(OptimizerKind::Adam, 0.001),
    );
    let err = train(
        &ds,
        &EncoderScale::Small.config(32, 32),
        &small_decoder(CellKind::Gru),
        &cfg,
        &lex,
        None,
    );
    assert!(matches!(err, Err(gemcap_core::Error::DatasetError(_))));
}
