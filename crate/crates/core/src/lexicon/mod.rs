//! Jewelry terminology, the three-level description grammar and the
//! decoder's token space.

mod grammar;
mod tokens;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

pub use grammar::{
    content_tokens, generate_description, strip_superlatives, validate_description, Script,
    Validation, VariantChooser,
};
pub use tokens::{detokenize, split_words, Vocabulary, END, PAD, START, UNK};

const DEFAULT_LEXICON: &str = include_str!("default_lexicon.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StoneGrade {
    Precious,
    SemiPrecious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    JewelryType,
    Material,
    Stone(StoneGrade),
    Color,
    Adjective,
    Superlative,
    Connective,
    Feature,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::JewelryType => "jewelry_type",
            Category::Material => "material",
            Category::Stone(StoneGrade::Precious) => "precious_stone",
            Category::Stone(StoneGrade::SemiPrecious) => "semi_precious_stone",
            Category::Color => "color",
            Category::Adjective => "adjective",
            Category::Superlative => "superlative",
            Category::Connective => "connective",
            Category::Feature => "feature",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "jewelry_type" => Category::JewelryType,
            "material" => Category::Material,
            "precious_stone" => Category::Stone(StoneGrade::Precious),
            "semi_precious_stone" => Category::Stone(StoneGrade::SemiPrecious),
            "color" => Category::Color,
            "adjective" => Category::Adjective,
            "superlative" => Category::Superlative,
            "connective" => Category::Connective,
            "feature" => Category::Feature,
            _ => return None,
        })
    }

    pub fn is_stone(self) -> bool {
        matches!(self, Category::Stone(_))
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Category {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Where a feature sits in a description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    /// Premodifies a stone: "brilliant-cut diamonds".
    Cut,
    /// Premodifies a stone: "central diamond".
    Setting,
    /// Follows a stone: "sapphire pendant".
    Mount,
    /// Heads its own complement: "a push-back clasp".
    Clasp,
    /// Premodifies the piece: "engraved bracelet".
    Pattern,
}

impl FeatureKind {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cut" => FeatureKind::Cut,
            "setting" => FeatureKind::Setting,
            "mount" => FeatureKind::Mount,
            "clasp" => FeatureKind::Clasp,
            "pattern" => FeatureKind::Pattern,
            _ => return None,
        })
    }
}

/// Which phrase a superlative may decorate during generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SuperlativeSlot {
    Material,
    Stone,
    Feature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub category: Category,
    #[serde(default)]
    pub gloss: String,
    #[serde(default)]
    pub relations: Vec<(String, String)>,
}

impl LexiconEntry {
    pub fn relation(&self, kind: &str) -> Option<&str> {
        self.relations
            .iter()
            .find(|(k, _)| k == kind)
            .map(|(_, v)| v.as_str())
    }

    /// Token form: spaces become underscores.
    pub fn token(&self) -> String {
        self.term.replace(' ', "_")
    }
}

#[derive(Deserialize)]
struct RawEntry {
    term: String,
    category: String,
    #[serde(default)]
    gloss: String,
    #[serde(default)]
    relations: Vec<(String, String)>,
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Category::parse(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown category {s:?}")))
    }
}

/// One reading of a surface token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sense {
    pub entry: usize,
    pub plural: bool,
}

/// The four classes of the identification task, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JewelryClass {
    Necklace,
    Ring,
    Earrings,
    Bracelet,
}

impl JewelryClass {
    pub const ALL: [JewelryClass; 4] = [
        JewelryClass::Necklace,
        JewelryClass::Ring,
        JewelryClass::Earrings,
        JewelryClass::Bracelet,
    ];

    pub fn name(self) -> &'static str {
        match self {
            JewelryClass::Necklace => "necklace",
            JewelryClass::Ring => "ring",
            JewelryClass::Earrings => "earrings",
            JewelryClass::Bracelet => "bracelet",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::ClassError(i.to_string()))
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::ClassError(s.to_string()))
    }
}

impl fmt::Display for JewelryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionLevel {
    Basic,
    Normal,
    Complete,
}

impl DescriptionLevel {
    pub const ALL: [DescriptionLevel; 3] = [
        DescriptionLevel::Basic,
        DescriptionLevel::Normal,
        DescriptionLevel::Complete,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DescriptionLevel::Basic => "basic",
            DescriptionLevel::Normal => "normal",
            DescriptionLevel::Complete => "complete",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown description level {s:?}")))
    }
}

impl fmt::Display for DescriptionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Structured label of one jewelry item. Terms are lexicon terms with spaces
/// (`"yellow gold"`), not tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JewelryRecord {
    pub jewelry_type: Option<String>,
    pub materials: Vec<String>,
    #[serde(default)]
    pub stones: Vec<String>,
    /// How many of each stone are visible; above one the plural is used.
    #[serde(default = "one")]
    pub stone_count: usize,
    #[serde(default)]
    pub colors: Vec<String>,
    #[serde(default)]
    pub features: Vec<String>,
    #[serde(default)]
    pub style_adjectives: Vec<String>,
}

fn one() -> usize {
    1
}

impl JewelryRecord {
    pub fn new(jewelry_type: &str, material: &str) -> Self {
        Self {
            jewelry_type: Some(jewelry_type.into()),
            materials: vec![material.into()],
            stone_count: 1,
            ..Self::default()
        }
    }

    pub fn stone(mut self, stone: &str, count: usize) -> Self {
        self.stones.push(stone.into());
        self.stone_count = count;
        self
    }

    pub fn color(mut self, color: &str) -> Self {
        self.colors.push(color.into());
        self
    }

    pub fn feature(mut self, feature: &str) -> Self {
        self.features.push(feature.into());
        self
    }

    pub fn style(mut self, adjective: &str) -> Self {
        self.style_adjectives.push(adjective.into());
        self
    }

    /// A random record whose every field resolves in `lex`.
    pub fn random(lex: &Lexicon, rng: &mut Rng) -> Self {
        let pick = |terms: &[&str], rng: &mut Rng, max: usize| -> Vec<String> {
            let n = rng.below(max + 1).min(terms.len());
            let mut pool: Vec<&str> = terms.to_vec();
            rng.shuffle(&mut pool);
            pool.into_iter().take(n).map(String::from).collect()
        };
        let types = lex.terms(|c| c == Category::JewelryType);
        let materials = lex.terms(|c| c == Category::Material);
        let stones = lex.terms(Category::is_stone);
        let colors = lex.terms(|c| c == Category::Color);
        let features = lex.terms(|c| c == Category::Feature);
        let adjectives = lex.terms(|c| c == Category::Adjective);
        let mut materials_pick = pick(&materials, rng, 2);
        if materials_pick.is_empty() {
            materials_pick.push(materials[rng.below(materials.len())].to_string());
        }
        Self {
            jewelry_type: Some(types[rng.below(types.len())].to_string()),
            materials: materials_pick,
            stones: pick(&stones, rng, 2),
            stone_count: 1 + rng.below(5),
            colors: pick(&colors, rng, 2),
            features: pick(&features, rng, 3),
            style_adjectives: pick(&adjectives, rng, 2),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: Vec<LexiconEntry>,
    surfaces: HashMap<String, Vec<Sense>>,
    /// Multiword surface forms as word lists, longest first.
    multiword: Vec<Vec<String>>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_json(DEFAULT_LEXICON).expect("embedded lexicon is valid")
    }
}

impl Lexicon {
    pub fn from_entries(entries: Vec<LexiconEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert((e.category, e.term.clone())) {
                return Err(Error::LexiconConflict {
                    term: e.term.clone(),
                    category: e.category.to_string(),
                });
            }
            if e.category == Category::Feature
                && e.relation("kind").and_then(FeatureKind::parse).is_none()
            {
                return Err(Error::LexiconParseError(format!(
                    "feature {:?} needs a kind relation (cut, setting, mount, clasp or pattern)",
                    e.term
                )));
            }
        }
        let mut surfaces: HashMap<String, Vec<Sense>> = HashMap::new();
        let mut multiword: HashSet<Vec<String>> = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            let mut forms = vec![(e.term.clone(), false)];
            if let Some(p) = e.relation("plural") {
                forms.push((p.to_string(), true));
            }
            if e.relation("number") == Some("plural") {
                forms[0].1 = true;
            }
            for (form, plural) in forms {
                let words: Vec<String> = form.split_whitespace().map(str::to_lowercase).collect();
                if words.len() > 1 {
                    multiword.insert(words.clone());
                }
                let senses = surfaces.entry(words.join("_")).or_default();
                if !senses.iter().any(|s| s.entry == i) {
                    senses.push(Sense { entry: i, plural });
                }
            }
        }
        let mut multiword: Vec<Vec<String>> = multiword.into_iter().collect();
        multiword.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        Ok(Self {
            entries,
            surfaces,
            multiword,
        })
    }

    /// Parses a JSON array of entries. Blank input gives an empty lexicon.
    pub fn from_json(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Self::from_entries(Vec::new());
        }
        let raw: Vec<RawEntry> =
            serde_json::from_str(text).map_err(|e| Error::LexiconParseError(e.to_string()))?;
        let entries = raw
            .into_iter()
            .map(|r| {
                let category = Category::parse(&r.category).ok_or_else(|| {
                    Error::LexiconParseError(format!(
                        "unknown category {:?} for {:?}",
                        r.category, r.term
                    ))
                })?;
                Ok(LexiconEntry {
                    term: r.term,
                    category,
                    gloss: r.gloss,
                    relations: r.relations,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The embedded default as pretty JSON.
    pub fn default_json() -> &'static str {
        DEFAULT_LEXICON
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.entries)?)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self, pred: impl Fn(Category) -> bool) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| pred(e.category))
            .map(|e| e.term.as_str())
            .collect()
    }

    pub fn entry(&self, term: &str, category: Category) -> Option<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| e.category == category && e.term == term)
    }

    fn entry_matching(&self, term: &str, pred: impl Fn(Category) -> bool) -> Option<&LexiconEntry> {
        self.entries
            .iter()
            .find(|e| pred(e.category) && e.term == term)
    }

    /// All readings of a token (`"yellow_gold"`, `"diamonds"`).
    pub fn senses(&self, token: &str) -> &[Sense] {
        self.surfaces.get(token).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sense_entry(&self, sense: Sense) -> &LexiconEntry {
        &self.entries[sense.entry]
    }

    pub(crate) fn multiword(&self) -> &[Vec<String>] {
        &self.multiword
    }

    pub fn feature_kind(&self, term: &str) -> Option<FeatureKind> {
        self.entry(term, Category::Feature)
            .and_then(|e| e.relation("kind"))
            .and_then(FeatureKind::parse)
    }

    pub fn superlatives_for(&self, slot: SuperlativeSlot) -> Vec<&str> {
        let want = match slot {
            SuperlativeSlot::Material => "material",
            SuperlativeSlot::Stone => "stone",
            SuperlativeSlot::Feature => "feature",
        };
        self.entries
            .iter()
            .filter(|e| e.category == Category::Superlative && e.relation("modifies") == Some(want))
            .map(|e| e.term.as_str())
            .collect()
    }

    pub fn hypernym(&self, jewelry_type: &str) -> Option<&str> {
        self.entry(jewelry_type, Category::JewelryType)
            .and_then(|e| e.relation("hypernym"))
    }

    pub fn is_inherently_plural(&self, jewelry_type: &str) -> bool {
        self.entry(jewelry_type, Category::JewelryType)
            .is_some_and(|e| e.relation("number") == Some("plural"))
    }

    /// Plural surface form of a stone, defaulting to the singular.
    pub fn stone_plural<'a>(&'a self, stone: &'a str) -> &'a str {
        self.entry_matching(stone, Category::is_stone)
            .and_then(|e| e.relation("plural"))
            .unwrap_or(stone)
    }

    /// Follows hypernym links until one of the four classes is reached.
    pub fn class_of(&self, jewelry_type: &str) -> Option<JewelryClass> {
        let mut term = jewelry_type;
        for _ in 0..8 {
            if let Ok(c) = JewelryClass::parse(term) {
                return Some(c);
            }
            term = self.hypernym(term)?;
        }
        None
    }

    /// Checks that every field of `record` resolves in the right category.
    pub fn check_record(&self, record: &JewelryRecord) -> Result<()> {
        let ty = record
            .jewelry_type
            .as_deref()
            .ok_or_else(|| Error::IncompleteRecord("jewelry_type is missing".into()))?;
        if record.materials.is_empty() {
            return Err(Error::IncompleteRecord(
                "at least one material is required".into(),
            ));
        }
        let miss =
            |term: &str, what: &str| Error::LexiconMiss(format!("{term:?} is not a known {what}"));
        if self.entry(ty, Category::JewelryType).is_none() {
            return Err(miss(ty, "jewelry type"));
        }
        let checks: [(&[String], &dyn Fn(Category) -> bool, &str); 5] = [
            (&record.materials, &|c| c == Category::Material, "material"),
            (&record.stones, &Category::is_stone, "stone"),
            (&record.colors, &|c| c == Category::Color, "color"),
            (&record.features, &|c| c == Category::Feature, "feature"),
            (
                &record.style_adjectives,
                &|c| c == Category::Adjective,
                "adjective",
            ),
        ];
        for (terms, pred, what) in checks {
            for t in terms {
                if self.entry_matching(t, pred).is_none() {
                    return Err(miss(t, what));
                }
            }
        }
        if !record.stones.is_empty() && record.stone_count == 0 {
            return Err(Error::IncompleteRecord(
                "stone_count must be positive when stones are listed".into(),
            ));
        }
        Ok(())
    }

    /// Lowercases, splits punctuation into separate tokens and joins
    /// multiword lexicon terms with underscores (longest match first).
    pub fn tokenize(&self, caption: &str) -> Vec<String> {
        tokens::tokenize(self, caption)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_stone_tables() {
        let lex = Lexicon::default();
        let mut precious = lex.terms(|c| c == Category::Stone(StoneGrade::Precious));
        precious.sort_unstable();
        assert_eq!(
            precious,
            [
                "alexandrite",
                "diamond",
                "emerald",
                "oriental catseye",
                "pearl",
                "ruby",
                "sapphire"
            ]
        );
        let semi = lex.terms(|c| c == Category::Stone(StoneGrade::SemiPrecious));
        for s in [
            "amethyst",
            "topaz",
            "tourmaline",
            "aquamarine",
            "chrysoprase",
            "peridot",
            "opal",
            "zircon",
            "jade",
        ] {
            assert!(semi.contains(&s), "{s}");
        }
    }

    #[test]
    fn default_covers_type_taxonomy() {
        let lex = Lexicon::default();
        for t in [
            "fob", "locket", "necklace", "bracelet", "armlet", "ring", "watch", "pendant",
            "earrings",
        ] {
            assert!(lex.entry(t, Category::JewelryType).is_some(), "{t}");
        }
        let connectives = lex.terms(|c| c == Category::Connective);
        assert_eq!(
            connectives,
            ["in", "with", "and", "adorned with", "featuring"]
        );
    }

    #[test]
    fn empty_file_is_empty_lexicon() {
        assert!(Lexicon::from_json("").unwrap().is_empty());
        assert!(Lexicon::from_json("  \n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_term_conflicts() {
        let text = r#"[{"term":"diamond","category":"precious_stone"},
                       {"term":"diamond","category":"precious_stone"}]"#;
        assert!(matches!(
            Lexicon::from_json(text),
            Err(Error::LexiconConflict { term, .. }) if term == "diamond"
        ));
    }

    #[test]
    fn unknown_category_rejected() {
        let text = r#"[{"term":"x","category":"gizmo"}]"#;
        assert!(matches!(
            Lexicon::from_json(text),
            Err(Error::LexiconParseError(_))
        ));
    }

    #[test]
    fn same_term_in_two_categories_is_allowed() {
        let lex = Lexicon::default();
        assert_eq!(lex.senses("pendant").len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let lex = Lexicon::default();
        let again = Lexicon::from_json(&lex.to_json().unwrap()).unwrap();
        assert_eq!(again.entries(), lex.entries());
    }

    #[test]
    fn classes_follow_hypernyms() {
        let lex = Lexicon::default();
        assert_eq!(lex.class_of("solitaire"), Some(JewelryClass::Ring));
        assert_eq!(lex.class_of("studs"), Some(JewelryClass::Earrings));
        assert_eq!(lex.class_of("earrings"), Some(JewelryClass::Earrings));
        assert_eq!(lex.class_of("fob"), None);
        assert!(JewelryClass::parse("tiara").is_err());
    }

    #[test]
    fn record_checks() {
        let lex = Lexicon::default();
        let mut r = JewelryRecord::new("ring", "rose gold");
        assert!(lex.check_record(&r).is_ok());
        r.jewelry_type = None;
        assert!(matches!(
            lex.check_record(&r),
            Err(Error::IncompleteRecord(_))
        ));
        let r = JewelryRecord::new("ring", "cheese");
        assert!(matches!(lex.check_record(&r), Err(Error::LexiconMiss(_))));
        let r = JewelryRecord::new("ring", "gold").stone("gold", 1);
        assert!(matches!(lex.check_record(&r), Err(Error::LexiconMiss(_))));
    }

    #[test]
    fn random_records_are_valid() {
        let lex = Lexicon::default();
        let mut rng = Rng::new(3);
        for _ in 0..200 {
            lex.check_record(&JewelryRecord::random(&lex, &mut rng))
                .unwrap();
        }
    }
}
