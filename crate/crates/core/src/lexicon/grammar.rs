//! Generation, validation and superlative stripping for the three
//! description levels. The production list lives in `docs/grammar.md`.

use std::collections::HashMap;

use super::{
    detokenize, Category, DescriptionLevel, FeatureKind, JewelryRecord, Lexicon, SuperlativeSlot,
};
use crate::error::{Error, Result};
use crate::tensor::Rng;

use DescriptionLevel::{Basic, Complete, Normal};

/// Resolves the surface choices made during generation.
pub trait VariantChooser {
    /// Index into `options` for the choice point `label`.
    fn choose(&mut self, label: &str, options: &[&str]) -> usize;
}

impl VariantChooser for Rng {
    fn choose(&mut self, _label: &str, options: &[&str]) -> usize {
        if options.len() <= 1 {
            0
        } else {
            self.below(options.len())
        }
    }
}

/// Pins choices by label and option name; unpinned points take option 0.
#[derive(Debug, Clone, Default)]
pub struct Script {
    picks: HashMap<String, String>,
}

impl Script {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pick(mut self, label: &str, option: &str) -> Self {
        self.picks.insert(label.into(), option.into());
        self
    }
}

impl VariantChooser for Script {
    fn choose(&mut self, label: &str, options: &[&str]) -> usize {
        self.picks
            .get(label)
            .and_then(|want| options.iter().position(|o| o == want))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validation {
    Valid,
    Invalid { reason: String, position: usize },
}

impl Validation {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Validation::Valid => Ok(()),
            Validation::Invalid { reason, position } => {
                Err(Error::GrammarError { reason, position })
            }
        }
    }
}

fn tok(term: &str) -> String {
    term.replace(' ', "_")
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick_superlative(
    lex: &Lexicon,
    chooser: &mut dyn VariantChooser,
    label: &str,
    slot: SuperlativeSlot,
) -> Option<String> {
    let mut options = vec!["none"];
    options.extend(lex.superlatives_for(slot));
    match chooser.choose(label, &options) {
        0 => None,
        i => options.get(i).map(|s| tok(s)),
    }
}

/// Renders `record` at `level`. Superlatives only ever appear at Complete.
pub fn generate_description(
    lex: &Lexicon,
    record: &JewelryRecord,
    level: DescriptionLevel,
    superlatives: bool,
    chooser: &mut dyn VariantChooser,
) -> Result<String> {
    lex.check_record(record)?;
    let complete = level == Complete;
    let sup_on = complete && superlatives;
    let ty = record.jewelry_type.as_deref().expect("checked above");
    let type_term = match lex.hypernym(ty) {
        Some(h) if chooser.choose("type_noun", &["specific", "hypernym"]) == 1 => h,
        _ => ty,
    };

    let orders: &[&str] = if level == Normal && record.stones.len() == 1 {
        &["type_first", "material_first", "adjunct"]
    } else {
        &["type_first", "material_first"]
    };
    let order = orders[chooser.choose("order", orders)];

    let mut out: Vec<String> = Vec::new();
    if !lex.is_inherently_plural(type_term) && chooser.choose("article", &["none", "a"]) == 1 {
        out.push("a".into());
    }

    let of_kind = |k: FeatureKind| -> Vec<String> {
        record
            .features
            .iter()
            .filter(|f| lex.feature_kind(f) == Some(k))
            .map(|f| tok(f))
            .collect()
    };

    let mut mods = Vec::new();
    if complete {
        mods.extend(record.style_adjectives.iter().map(|a| tok(a)));
        mods.extend(of_kind(FeatureKind::Pattern));
        if record.stones.is_empty() {
            mods.extend(record.colors.iter().map(|c| tok(c)));
        }
    }

    let materials = if level == Basic {
        &record.materials[..1]
    } else {
        &record.materials[..]
    };
    let mut mats = Vec::new();
    for (i, m) in materials.iter().enumerate() {
        if i > 0 {
            mats.push("and".to_string());
        }
        if sup_on && i == 0 {
            mats.extend(pick_superlative(
                lex,
                chooser,
                "material_superlative",
                SuperlativeSlot::Material,
            ));
        }
        mats.push(tok(m));
    }

    match order {
        "type_first" => {
            out.extend(mods);
            out.push(tok(type_term));
            out.push("in".into());
            out.extend(mats);
        }
        "material_first" => {
            out.extend(mods);
            out.extend(mats);
            out.push(tok(type_term));
        }
        _ => {
            out.extend(mats);
            out.push("and".into());
            out.push(tok(&record.stones[0]));
            out.push(tok(type_term));
        }
    }

    if level != Basic {
        let mut comps = 0;
        if order != "adjunct" {
            let singular = record.stone_count <= 1;
            for (i, stone) in record.stones.iter().enumerate() {
                if i == 0 {
                    let links = ["with", "adorned_with"];
                    let link = if complete {
                        links[chooser.choose("stone_link", &links)]
                    } else {
                        "with"
                    };
                    out.push(link.into());
                } else {
                    out.push("and".into());
                }
                if singular && chooser.choose("stone_article", &["none", "a"]) == 1 {
                    out.push("a".into());
                }
                let mut pre = Vec::new();
                if i == 0 {
                    pre.extend(of_kind(FeatureKind::Setting));
                    if complete {
                        pre.extend(of_kind(FeatureKind::Cut));
                    }
                }
                if sup_on {
                    if let Some(s) =
                        pick_superlative(lex, chooser, "stone_superlative", SuperlativeSlot::Stone)
                    {
                        out.push(s);
                        if !pre.is_empty() {
                            out.push(",".into());
                        }
                    }
                }
                out.extend(pre);
                if complete && i == 0 {
                    out.extend(record.colors.iter().map(|c| tok(c)));
                }
                out.push(tok(if singular {
                    stone
                } else {
                    lex.stone_plural(stone)
                }));
                if i == 0 {
                    out.extend(of_kind(FeatureKind::Mount).into_iter().take(1));
                }
                comps += 1;
            }
        }
        // mounts that found no stone to hang from stand alone
        let attached = usize::from(!record.stones.is_empty());
        if order != "adjunct" {
            for m in of_kind(FeatureKind::Mount).into_iter().skip(attached) {
                out.push(if comps == 0 { "with" } else { "and" }.into());
                out.push("a".into());
                out.push(m);
                comps += 1;
            }
        }
        if complete {
            for clasp in of_kind(FeatureKind::Clasp) {
                if comps == 0 {
                    let links = ["with", "featuring"];
                    out.push(links[chooser.choose("feature_link", &links)].into());
                } else {
                    out.push("and".into());
                    if chooser.choose("feature_link", &["none", "featuring"]) == 1 {
                        out.push("featuring".into());
                    }
                }
                out.push("a".into());
                if sup_on {
                    out.extend(pick_superlative(
                        lex,
                        chooser,
                        "feature_superlative",
                        SuperlativeSlot::Feature,
                    ));
                }
                out.push(clasp);
                comps += 1;
            }
        }
    }
    out.push(".".into());
    Ok(capitalize(&detokenize(&out)))
}

type Step = std::result::Result<(), (String, usize)>;

struct Parser<'a> {
    lex: &'a Lexicon,
    toks: &'a [String],
    pos: usize,
    level: DescriptionLevel,
}

impl Parser<'_> {
    fn at(&self, offset: usize) -> Option<&str> {
        self.toks.get(self.pos + offset).map(String::as_str)
    }

    fn lit(&self, s: &str) -> bool {
        self.at(0) == Some(s)
    }

    fn cat_at(&self, offset: usize, pred: impl Fn(Category) -> bool) -> bool {
        self.at(offset).is_some_and(|t| {
            self.lex
                .senses(t)
                .iter()
                .any(|s| pred(self.lex.sense_entry(*s).category))
        })
    }

    fn cat(&self, pred: impl Fn(Category) -> bool) -> bool {
        self.cat_at(0, pred)
    }

    fn feature(&self, kinds: &[FeatureKind]) -> bool {
        self.at(0).is_some_and(|t| {
            self.lex.senses(t).iter().any(|s| {
                let e = self.lex.sense_entry(*s);
                e.category == Category::Feature
                    && self
                        .lex
                        .feature_kind(&e.term)
                        .is_some_and(|k| kinds.contains(&k))
            })
        })
    }

    fn fail<T>(&self, reason: impl Into<String>) -> std::result::Result<T, (String, usize)> {
        Err((reason.into(), self.pos))
    }

    fn gate(&self, need: DescriptionLevel, what: &str) -> Step {
        if self.level < need {
            self.fail(format!("{what} not allowed at {} level", self.level))
        } else {
            Ok(())
        }
    }

    fn found(&self) -> String {
        match self.at(0) {
            Some(t) => format!("found {t:?}"),
            None => "found end of input".into(),
        }
    }

    fn caption(&mut self) -> Step {
        if self.toks.is_empty() {
            return self.fail("empty description");
        }
        if self.lit("a") {
            self.pos += 1;
        }
        self.modifiers()?;
        if self.cat(|c| c == Category::JewelryType) && self.at(1) == Some("in") {
            self.pos += 2;
            self.materials()?;
        } else {
            self.materials()?;
            if self.lit("and") && self.cat_at(1, Category::is_stone) {
                self.gate(Normal, "stone adjunct")?;
                self.pos += 2;
            }
            if !self.cat(|c| c == Category::JewelryType) {
                return self.fail(format!("expected jewelry type, {}", self.found()));
            }
            self.pos += 1;
        }
        if !self.lit(".") {
            self.complements()?;
        }
        if !self.lit(".") {
            return self.fail(format!("expected '.', {}", self.found()));
        }
        self.pos += 1;
        if self.pos != self.toks.len() {
            return self.fail("text after the final period");
        }
        Ok(())
    }

    fn modifiers(&mut self) -> Step {
        loop {
            if self.cat(|c| c == Category::Superlative) {
                self.gate(Complete, "superlative")?;
            } else if self.cat(|c| matches!(c, Category::Adjective | Category::Color))
                || self.feature(&[FeatureKind::Pattern])
            {
                self.gate(Normal, "modifier")?;
            } else {
                return Ok(());
            }
            self.pos += 1;
        }
    }

    fn material_item(&mut self) -> Step {
        if self.cat(|c| c == Category::Superlative) {
            self.gate(Complete, "superlative")?;
            self.pos += 1;
        }
        if !self.cat(|c| c == Category::Material) {
            return self.fail(format!("expected material, {}", self.found()));
        }
        self.pos += 1;
        Ok(())
    }

    fn materials(&mut self) -> Step {
        self.material_item()?;
        while self.lit("and")
            && self.cat_at(1, |c| {
                matches!(c, Category::Material | Category::Superlative)
            })
        {
            self.gate(Normal, "material list")?;
            self.pos += 1;
            self.material_item()?;
        }
        Ok(())
    }

    fn link(&mut self) -> Step {
        match self.at(0) {
            Some("with") => self.gate(Normal, "complement")?,
            Some("adorned_with") | Some("featuring") => self.gate(Complete, "connective")?,
            _ => return Ok(()),
        }
        self.pos += 1;
        Ok(())
    }

    fn complements(&mut self) -> Step {
        if !matches!(self.at(0), Some("with" | "adorned_with" | "featuring")) {
            return self.fail(format!("expected '.' or a complement, {}", self.found()));
        }
        self.link()?;
        self.complement()?;
        while self.lit("and") {
            self.pos += 1;
            self.link()?;
            self.complement()?;
        }
        Ok(())
    }

    fn complement(&mut self) -> Step {
        if self.lit("a") {
            self.pos += 1;
        }
        loop {
            if self.cat(|c| c == Category::Superlative) {
                self.gate(Complete, "superlative")?;
                self.pos += 1;
                if self.lit(",") {
                    self.pos += 1;
                }
            } else if self.cat(|c| matches!(c, Category::Adjective | Category::Color))
                || self.feature(&[FeatureKind::Cut, FeatureKind::Setting, FeatureKind::Pattern])
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.cat(Category::is_stone) {
            self.pos += 1;
            if self.feature(&[FeatureKind::Mount]) {
                self.pos += 1;
            }
            Ok(())
        } else if self.feature(&[FeatureKind::Clasp, FeatureKind::Mount]) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected stone or feature, {}", self.found()))
        }
    }
}

fn validate_tokens(lex: &Lexicon, toks: &[String], level: DescriptionLevel) -> Validation {
    if level < Complete {
        let is_sup = |t: &String| {
            lex.senses(t)
                .iter()
                .any(|s| lex.sense_entry(*s).category == Category::Superlative)
        };
        if let Some(position) = toks.iter().position(is_sup) {
            return Validation::Invalid {
                reason: format!("superlative not allowed at {level} level"),
                position,
            };
        }
    }
    let mut p = Parser {
        lex,
        toks,
        pos: 0,
        level,
    };
    match p.caption() {
        Ok(()) => Validation::Valid,
        Err((reason, position)) => Validation::Invalid { reason, position },
    }
}

pub fn validate_description(caption: &str, level: DescriptionLevel, lex: &Lexicon) -> Validation {
    validate_tokens(lex, &lex.tokenize(caption), level)
}

/// Removes every superlative (and the comma that follows it) and rewrites
/// the complement connectives: "adorned with" becomes "with"; "featuring"
/// becomes "with", or disappears right after "and".
pub fn strip_superlatives(caption: &str, lex: &Lexicon) -> Result<String> {
    let toks = lex.tokenize(caption);
    validate_tokens(lex, &toks, Complete).into_result()?;
    let mut out: Vec<String> = Vec::with_capacity(toks.len());
    let mut skip_comma = false;
    for t in toks {
        if skip_comma && t == "," {
            skip_comma = false;
            continue;
        }
        skip_comma = false;
        let sup = lex
            .senses(&t)
            .iter()
            .any(|s| lex.sense_entry(*s).category == Category::Superlative);
        if sup {
            skip_comma = true;
            continue;
        }
        match t.as_str() {
            "adorned_with" => out.push("with".into()),
            "featuring" if out.last().map(String::as_str) == Some("and") => {}
            "featuring" => out.push("with".into()),
            _ => out.push(t),
        }
    }
    Ok(capitalize(&detokenize(&out)))
}

/// Sorted tokens that carry item content (types, materials, stones, colors,
/// adjectives, features).
pub fn content_tokens(caption: &str, lex: &Lexicon) -> Vec<String> {
    let mut out: Vec<String> = lex
        .tokenize(caption)
        .into_iter()
        .filter(|t| {
            lex.senses(t).iter().any(|s| {
                !matches!(
                    lex.sense_entry(*s).category,
                    Category::Superlative | Category::Connective
                )
            })
        })
        .collect();
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        Lexicon::default()
    }

    fn valid(c: &str, level: DescriptionLevel) -> bool {
        validate_description(c, level, &lex()).is_valid()
    }

    #[test]
    fn basic_examples() {
        assert!(valid("Earrings in yellow gold.", Basic));
        assert!(valid("Earrings in yellow gold.", Normal));
        assert!(valid("Yellow gold bracelet.", Basic));
        assert!(!valid("Yellow gold and diamond earrings.", Basic));
        assert!(valid("Yellow gold and diamond earrings.", Normal));
    }

    #[test]
    fn superlative_rejected_below_complete() {
        assert_eq!(
            validate_description("Exquisite earrings in yellow gold.", Basic, &lex()),
            Validation::Invalid {
                reason: "superlative not allowed at basic level".into(),
                position: 0
            }
        );
        assert!(valid("Exquisite earrings in yellow gold.", Complete));
    }

    #[test]
    fn malformed_captions() {
        for c in [
            "",
            "Earrings in yellow gold",
            "Earrings yellow gold.",
            "In gold.",
            "Gold ring with.",
            "Gold ring. ring",
        ] {
            assert!(!valid(c, Complete), "{c}");
        }
        match validate_description("Earrings in cheese.", Complete, &lex()) {
            Validation::Invalid { position, .. } => assert_eq!(position, 2),
            v => panic!("{v:?}"),
        }
    }

    #[test]
    fn complete_connectives_gated() {
        let c = "Yellow gold bracelet adorned with topazes.";
        assert!(!valid(c, Normal));
        assert!(valid(c, Complete));
    }

    #[test]
    fn strip_example() {
        let c = "Earrings in sustainable yellow gold adorned with exquisite, brilliant-cut diamonds and featuring a secure push-back clasp.";
        assert_eq!(
            strip_superlatives(c, &lex()).unwrap(),
            "Earrings in yellow gold with brilliant-cut diamonds and a push-back clasp."
        );
    }

    #[test]
    fn strip_fixed_point_and_errors() {
        let c = "Ring in rose gold with central diamond.";
        assert_eq!(strip_superlatives(c, &lex()).unwrap(), c);
        assert!(matches!(
            strip_superlatives("Ring rose gold", &lex()),
            Err(Error::GrammarError { .. })
        ));
    }

    #[test]
    fn incomplete_record() {
        let mut r = JewelryRecord::new("ring", "gold");
        r.jewelry_type = None;
        assert!(matches!(
            generate_description(&lex(), &r, Basic, false, &mut Script::new()),
            Err(Error::IncompleteRecord(_))
        ));
    }

    #[test]
    fn necklace_with_pendant() {
        let r = JewelryRecord::new("necklace", "gold")
            .stone("sapphire", 1)
            .feature("pendant");
        let mut s = Script::new()
            .pick("article", "a")
            .pick("order", "material_first")
            .pick("stone_article", "a");
        let c = generate_description(&lex(), &r, Normal, false, &mut s).unwrap();
        assert_eq!(c, "A gold necklace with a sapphire pendant.");
    }

    fn arb_case() -> impl Strategy<Value = (u64, usize)> {
        (any::<u64>(), 0usize..3)
    }

    proptest! {
        #[test]
        fn generated_captions_validate((seed, lvl) in arb_case(), sup in any::<bool>()) {
            let lex = lex();
            let mut rng = Rng::new(seed);
            let r = JewelryRecord::random(&lex, &mut rng);
            let level = DescriptionLevel::ALL[lvl];
            let c = generate_description(&lex, &r, level, sup, &mut rng).unwrap();
            let v = validate_description(&c, level, &lex);
            prop_assert!(v.is_valid(), "{c:?}: {v:?}");
            for higher in DescriptionLevel::ALL.into_iter().filter(|l| *l >= level) {
                prop_assert!(validate_description(&c, higher, &lex).is_valid());
            }
        }

        #[test]
        fn stripping_matches_plain_generation(seed in any::<u64>()) {
            let lex = lex();
            let r = JewelryRecord::random(&lex, &mut Rng::new(seed));
            let on = generate_description(&lex, &r, Complete, true, &mut Rng::new(seed ^ 1)).unwrap();
            let off = generate_description(&lex, &r, Complete, false, &mut Rng::new(seed ^ 1)).unwrap();
            let stripped = strip_superlatives(&on, &lex).unwrap();
            prop_assert!(validate_description(&stripped, Complete, &lex).is_valid());
            prop_assert_eq!(content_tokens(&stripped, &lex), content_tokens(&off, &lex));
            prop_assert_eq!(strip_superlatives(&stripped, &lex).unwrap(), stripped.clone());
        }
    }
}
