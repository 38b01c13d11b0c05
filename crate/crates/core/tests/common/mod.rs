#![allow(dead_code)]

use gemcap_core::lexicon::{DescriptionLevel, JewelryRecord, Script};

pub struct Frozen {
    pub record: JewelryRecord,
    /// Script and expected caption per level, Basic to Complete.
    pub levels: [(Script, &'static str); 3],
}

/// The three catalogue items with their captions at every level.
pub fn catalogue_items() -> Vec<Frozen> {
    vec![
        Frozen {
            record: JewelryRecord::new("earrings", "yellow gold")
                .stone("diamond", 2)
                .feature("brilliant-cut")
                .feature("push-back clasp"),
            levels: [
                (Script::new().pick("order", "type_first"), "Earrings in yellow gold."),
                (Script::new().pick("order", "adjunct"), "Yellow gold and diamond earrings."),
                (
                    Script::new()
                        .pick("order", "type_first")
                        .pick("material_superlative", "sustainable")
                        .pick("stone_link", "adorned_with")
                        .pick("stone_superlative", "exquisite")
                        .pick("feature_link", "featuring")
                        .pick("feature_superlative", "secure"),
                    "Earrings in sustainable yellow gold adorned with exquisite, brilliant-cut diamonds and featuring a secure push-back clasp.",
                ),
            ],
        },
        Frozen {
            record: JewelryRecord::new("solitaire", "rose gold")
                .stone("diamond", 1)
                .feature("central")
                .style("iris"),
            levels: [
                (Script::new().pick("order", "type_first"), "Solitaire in rose gold."),
                (
                    Script::new().pick("type_noun", "hypernym").pick("order", "type_first"),
                    "Ring in rose gold with central diamond.",
                ),
                (Script::new().pick("order", "type_first"), "Iris solitaire in rose gold with central diamond."),
            ],
        },
        Frozen {
            record: JewelryRecord::new("bracelet", "yellow gold")
                .stone("topaz", 4)
                .color("sky"),
            levels: [
                (Script::new().pick("order", "material_first"), "Yellow gold bracelet."),
                (Script::new().pick("order", "material_first"), "Yellow gold bracelet with topazes."),
                (
                    Script::new()
                        .pick("order", "material_first")
                        .pick("material_superlative", "sustainable")
                        .pick("stone_link", "adorned_with")
                        .pick("stone_superlative", "dazzling"),
                    "Sustainable yellow gold bracelet adorned with dazzling sky topazes.",
                ),
            ],
        },
    ]
}

pub const STRIP_INPUT: &str = "Earrings in sustainable yellow gold adorned with exquisite, brilliant-cut diamonds and featuring a secure push-back clasp.";
pub const STRIP_OUTPUT: &str =
    "Earrings in yellow gold with brilliant-cut diamonds and a push-back clasp.";

pub fn level(i: usize) -> DescriptionLevel {
    DescriptionLevel::ALL[i]
}
