//! Frozen reference renders, one per class. Regenerate with
//! `GEMCAP_BLESS=1 cargo test -p gemcap-core --test render_golden`.

use std::path::PathBuf;

use gemcap_core::dataforge::{read_png, render_sample, write_png, RenderSpec};
use gemcap_core::lexicon::JewelryClass;

fn spec(class: JewelryClass) -> RenderSpec {
    RenderSpec {
        jewelry_class: class,
        material: "rose gold".into(),
        stone: Some("emerald".into()),
        stone_count: match class {
            JewelryClass::Earrings => 2,
            JewelryClass::Bracelet => 4,
            JewelryClass::Ring => 3,
            JewelryClass::Necklace => 1,
        },
        background_shade: 0.15,
        geometry_jitter_seed: 2024,
    }
}

fn golden(class: JewelryClass) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/golden")
        .join(format!("{}.png", class.name()))
}

#[test]
fn renders_match_golden_files() {
    let bless = std::env::var_os("GEMCAP_BLESS").is_some();
    for class in JewelryClass::ALL {
        let img = render_sample(&spec(class), 64, 64).unwrap();
        if bless {
            write_png(&golden(class), &img).unwrap();
        }
        let frozen = read_png(&golden(class)).unwrap();
        assert_eq!(
            img,
            frozen,
            "{} drifted from its golden render",
            class.name()
        );
    }
}

#[test]
fn goldens_are_pairwise_distinct() {
    let imgs: Vec<_> = JewelryClass::ALL
        .iter()
        .map(|c| read_png(&golden(*c)).unwrap())
        .collect();
    for a in 0..4 {
        for b in a + 1..4 {
            let diff = imgs[a]
                .data()
                .iter()
                .zip(imgs[b].data())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / imgs[a].len() as f64;
            assert!(diff > 0.03, "{a} vs {b}: {diff}");
        }
    }
}
