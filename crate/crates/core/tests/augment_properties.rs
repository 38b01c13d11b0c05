use gemcap_core::dataforge::{
    apply_augment, build_dataset, AugmentOp, DatasetConfig, Provenance, Split, BRIGHTNESS_RANGE,
    MAX_COLOR_GAIN, MAX_CUT_AREA, MAX_SHIFT, MAX_ZOOM,
};
use gemcap_core::lexicon::Lexicon;
use gemcap_core::tensor::{Rng, Tensor};
use proptest::prelude::*;

fn image(h: usize, w: usize, seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let data = (0..3 * h * w).map(|_| rng.uniform()).collect();
    Tensor::from_vec(&[3, h, w], data).unwrap()
}

fn within_bounds(op: &AugmentOp) -> bool {
    match *op {
        AugmentOp::Rotate90 { k } => (1..=3).contains(&k),
        AugmentOp::WidthShift { fraction } | AugmentOp::HeightShift { fraction } => {
            fraction.abs() <= MAX_SHIFT + 1e-12
        }
        AugmentOp::Cut {
            x,
            y,
            width,
            height,
        } => {
            width * height <= MAX_CUT_AREA + 1e-12
                && x >= 0.0
                && y >= 0.0
                && x + width <= 1.0 + 1e-12
                && y + height <= 1.0 + 1e-12
        }
        AugmentOp::Zoom { factor } => (factor - 1.0).abs() <= MAX_ZOOM + 1e-12,
        AugmentOp::ColorJitter { gains } => gains
            .iter()
            .all(|g| (g - 1.0).abs() <= MAX_COLOR_GAIN + 1e-12),
        AugmentOp::FlipH | AugmentOp::FlipV => true,
        AugmentOp::Brightness { factor } => {
            (BRIGHTNESS_RANGE.0..=BRIGHTNESS_RANGE.1).contains(&factor)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn sampled_ops_preserve_shape_and_range(seed in any::<u64>(), h in 2usize..12, w in 2usize..12) {
        let mut rng = Rng::new(seed);
        let op = AugmentOp::sample(&mut rng);
        prop_assert!(within_bounds(&op), "{op:?}");
        let img = image(h, w, seed ^ 0x5eed);
        let out = apply_augment(&img, &op).unwrap();
        prop_assert_eq!(out.shape(), img.shape());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn out_of_bound_ops_are_still_safe(
        k in any::<u8>(),
        f in -5.0f64..5.0,
        g in prop::array::uniform3(-5.0f64..5.0),
        seed in any::<u64>(),
    ) {
        let img = image(7, 5, seed);
        let ops = [
            AugmentOp::Rotate90 { k },
            AugmentOp::WidthShift { fraction: f },
            AugmentOp::HeightShift { fraction: f },
            AugmentOp::Cut { x: g[0], y: g[1], width: g[2], height: f },
            AugmentOp::Zoom { factor: f },
            AugmentOp::ColorJitter { gains: g },
            AugmentOp::Brightness { factor: f },
        ];
        for op in ops {
            let rotation = matches!(op, AugmentOp::Rotate90 { .. });
            prop_assert!(rotation || within_bounds(&op.clone().clamped()), "{:?}", op);
            let out = apply_augment(&img, &op).unwrap();
            prop_assert_eq!(out.shape(), img.shape());
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn group_identities_hold(seed in any::<u64>(), n in 2usize..10) {
        let img = image(n, n, seed);
        let mut r = img.clone();
        for _ in 0..4 {
            r = apply_augment(&r, &AugmentOp::Rotate90 { k: 1 }).unwrap();
        }
        prop_assert_eq!(&r, &img);
        let twice = |op: AugmentOp| apply_augment(&apply_augment(&img, &op).unwrap(), &op).unwrap();
        prop_assert_eq!(&twice(AugmentOp::FlipH), &img);
        prop_assert_eq!(&twice(AugmentOp::FlipV), &img);
        prop_assert_eq!(&apply_augment(&img, &AugmentOp::Brightness { factor: 1.0 }).unwrap(), &img);
    }
}

#[test]
fn augmentation_preserves_labels_and_split() {
    let cfg = DatasetConfig {
        n_base: 40,
        augment_multiplier: 5,
        height: 32,
        width: 32,
        ..DatasetConfig::default()
    };
    let d = build_dataset(&cfg, &Lexicon::default()).unwrap();
    assert_eq!(d.len(), 240);
    for s in &d.samples {
        if let Provenance::Augmented { parent, .. } = &s.provenance {
            let p = d.samples.iter().find(|q| &q.id == parent).unwrap();
            assert_eq!(p.class_label, s.class_label);
            assert_eq!(p.captions, s.captions);
            assert_eq!(p.split, s.split);
        }
    }
    let originals = d
        .samples
        .iter()
        .filter(|s| s.provenance == Provenance::Original)
        .count();
    assert_eq!(originals, 40);
    let count = |sp| {
        d.samples
            .iter()
            .filter(|s| s.provenance == Provenance::Original && s.split == sp)
            .count()
    };
    assert_eq!(
        (count(Split::Train), count(Split::Val), count(Split::Test)),
        (30, 6, 4)
    );
}
