//! Two-tier menu selections, preset libraries and weighted prompt composition.
//!
//! Every menu category carries a weight `w`. A selection contributes one term per chosen
//! token with `x = 1`, and the composed input records `W_total = sum(w * x)` over its terms.
//! First-tier categories always outweigh second-tier ones; the weight table lives in the
//! preset file and is validated on load.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

pub const PRESETS_VERSION: u32 = 1;
pub const MIN_BACKGROUNDS: usize = 100;
pub const DIRECTOR_STYLE_COUNT: usize = 10;
/// Styles that must ship with every library.
pub const REQUIRED_DIRECTORS: [&str; 5] =
    ["Wes Anderson", "Martin Scorsese", "Stanley Kubrick", "Ridley Scott", "Russo Brothers"];
pub const TIMES: [&str; 3] = ["noon", "night", "sunrise_sunset"];
pub const LIGHT_TYPES: [&str; 3] = ["soft", "hard", "key"];
pub const LIGHT_DIRECTIONS: [&str; 2] = ["left", "right"];

const SHIPPED_PRESETS: &str = include_str!("../../../data/presets.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Environment,
    LightDirection,
    TimeOfDay,
    DirectorStyle,
    LightingEffect,
    ActorExpression,
    ActorFacialFeatureClass,
    Hairstyle,
    FacialDetail,
    HairLength,
    HairColor,
    ClothingStyle,
    ClothingMaterial,
    ClothingColor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    First,
    Second,
}

impl Category {
    /// Schema order: first tier, then second tier.
    pub const ALL: [Category; 14] = [
        Category::Environment,
        Category::LightDirection,
        Category::TimeOfDay,
        Category::DirectorStyle,
        Category::LightingEffect,
        Category::ActorExpression,
        Category::ActorFacialFeatureClass,
        Category::Hairstyle,
        Category::FacialDetail,
        Category::HairLength,
        Category::HairColor,
        Category::ClothingStyle,
        Category::ClothingMaterial,
        Category::ClothingColor,
    ];

    pub fn tier(self) -> Tier {
        match self {
            Category::Environment
            | Category::LightDirection
            | Category::TimeOfDay
            | Category::DirectorStyle
            | Category::LightingEffect
            | Category::ActorExpression
            | Category::ActorFacialFeatureClass
            | Category::Hairstyle => Tier::First,
            _ => Tier::Second,
        }
    }

    /// Categories weighted above the rest of their tier.
    pub fn is_emphasized(self) -> bool {
        matches!(
            self,
            Category::Environment
                | Category::TimeOfDay
                | Category::ActorExpression
                | Category::ActorFacialFeatureClass
                | Category::DirectorStyle
                | Category::FacialDetail
        )
    }

    /// Categories that describe a person and may be overridden per character.
    pub fn is_character_attribute(self) -> bool {
        matches!(
            self,
            Category::ActorExpression
                | Category::ActorFacialFeatureClass
                | Category::Hairstyle
                | Category::FacialDetail
                | Category::HairLength
                | Category::HairColor
                | Category::ClothingStyle
                | Category::ClothingMaterial
                | Category::ClothingColor
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Environment => "environment",
            Category::LightDirection => "light_direction",
            Category::TimeOfDay => "time_of_day",
            Category::DirectorStyle => "director_style",
            Category::LightingEffect => "lighting_effect",
            Category::ActorExpression => "actor_expression",
            Category::ActorFacialFeatureClass => "actor_facial_feature_class",
            Category::Hairstyle => "hairstyle",
            Category::FacialDetail => "facial_detail",
            Category::HairLength => "hair_length",
            Category::HairColor => "hair_color",
            Category::ClothingStyle => "clothing_style",
            Category::ClothingMaterial => "clothing_material",
            Category::ClothingColor => "clothing_color",
        }
    }

    /// Prompt phrase for a menu token of this category.
    pub fn phrase(self, token: &str) -> String {
        match self {
            Category::LightDirection => format!("{token} light source"),
            Category::LightingEffect => format!("{token} light"),
            Category::ActorExpression => format!("{token} expression"),
            Category::ActorFacialFeatureClass => format!("detailed {token}"),
            Category::Hairstyle => format!("{token} hairstyle"),
            Category::HairLength | Category::HairColor => format!("{token} hair"),
            Category::ClothingMaterial => format!("{token} fabric"),
            Category::ClothingColor => format!("{token} clothing"),
            _ => token.to_string(),
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("cannot read preset file: {0}")]
    Io(#[from] std::io::Error),
    #[error("preset file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectorStyle {
    pub name: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framing {
    pub id: String,
    pub description: String,
    pub character_slots: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetLibrary {
    pub presets_version: u32,
    pub backgrounds: Vec<String>,
    pub times: Vec<String>,
    pub light_types: Vec<String>,
    pub light_directions: Vec<String>,
    pub director_styles: Vec<DirectorStyle>,
    pub framings: Vec<Framing>,
    pub weights: BTreeMap<Category, f64>,
    /// Option lists for the character and costume categories.
    #[serde(default)]
    pub options: BTreeMap<Category, Vec<String>>,
}

fn token_problem(token: &str) -> Option<&'static str> {
    if token.trim().is_empty() {
        Some("empty token")
    } else if token.contains(['(', ')', ':']) {
        Some("token contains one of `(`, `)`, `:`")
    } else {
        None
    }
}

fn check_exact(field: &str, got: &[String], want: &[&str]) -> Result<(), PresetError> {
    let got_set: BTreeSet<&str> = got.iter().map(String::as_str).collect();
    let want_set: BTreeSet<&str> = want.iter().copied().collect();
    if got.len() != want.len() || got_set != want_set {
        return Err(PresetError::Invalid(format!("{field}: expected {want:?}, got {got:?}")));
    }
    Ok(())
}

fn check_tokens<'a>(field: &str, tokens: impl IntoIterator<Item = &'a str>) -> Result<(), PresetError> {
    let mut seen = BTreeSet::new();
    for t in tokens {
        if let Some(problem) = token_problem(t) {
            return Err(PresetError::Invalid(format!("{field}: {problem}: `{t}`")));
        }
        if !seen.insert(t) {
            return Err(PresetError::Invalid(format!("{field}: duplicate entry `{t}`")));
        }
    }
    Ok(())
}

/// Reads and validates a preset file.
pub fn load_presets(path: impl AsRef<Path>) -> Result<PresetLibrary, PresetError> {
    PresetLibrary::from_json(&std::fs::read_to_string(path)?)
}

impl PresetLibrary {
    pub fn from_json(text: &str) -> Result<Self, PresetError> {
        let library: PresetLibrary = serde_json::from_str(text)?;
        library.validate()?;
        Ok(library)
    }

    /// The library bundled with the crate.
    pub fn shipped() -> Self {
        PresetLibrary::from_json(SHIPPED_PRESETS).expect("bundled presets are valid")
    }

    pub fn validate(&self) -> Result<(), PresetError> {
        let invalid = |m: String| Err(PresetError::Invalid(m));
        if self.presets_version != PRESETS_VERSION {
            return invalid(format!("presets_version: {} != {PRESETS_VERSION}", self.presets_version));
        }
        if self.backgrounds.len() < MIN_BACKGROUNDS {
            return invalid(format!("backgrounds: {} < {MIN_BACKGROUNDS}", self.backgrounds.len()));
        }
        check_tokens("backgrounds", self.backgrounds.iter().map(String::as_str))?;
        check_exact("times", &self.times, &TIMES)?;
        check_exact("light_types", &self.light_types, &LIGHT_TYPES)?;
        check_exact("light_directions", &self.light_directions, &LIGHT_DIRECTIONS)?;

        let styles = self.director_styles.len();
        if styles < DIRECTOR_STYLE_COUNT {
            return invalid(format!("director_styles: {styles} < {DIRECTOR_STYLE_COUNT}"));
        }
        if styles > DIRECTOR_STYLE_COUNT {
            return invalid(format!("director_styles: {styles} > {DIRECTOR_STYLE_COUNT}"));
        }
        check_tokens("director_styles", self.director_styles.iter().map(|s| s.name.as_str()))?;
        for s in &self.director_styles {
            if let Some(problem) = token_problem(&s.prompt) {
                return invalid(format!("director_styles: {}: prompt {problem}", s.name));
            }
        }
        for name in REQUIRED_DIRECTORS {
            if self.style(name).is_none() {
                return invalid(format!("director_styles: missing `{name}`"));
            }
        }

        check_tokens("framings", self.framings.iter().map(|f| f.id.as_str()))?;
        if let Some(f) = self.framings.iter().find(|f| f.character_slots == 0) {
            return invalid(format!("framings: `{}` has no character slots", f.id));
        }

        for category in Category::ALL {
            match self.weights.get(&category) {
                None => return invalid(format!("weights: missing `{category}`")),
                Some(w) if !(w.is_finite() && *w > 0.0) => {
                    return invalid(format!("weights: `{category}` must be positive, got {w}"))
                }
                Some(_) => {}
            }
        }
        for (category, tokens) in &self.options {
            if !category.is_character_attribute() {
                return invalid(format!("options: `{category}` comes from its own preset list"));
            }
            check_tokens(&format!("options.{category}"), tokens.iter().map(String::as_str))?;
        }
        Ok(())
    }

    /// Looks a style up by name, ignoring case.
    pub fn style(&self, name: &str) -> Option<&DirectorStyle> {
        self.director_styles.iter().find(|s| s.name.eq_ignore_ascii_case(name.trim()))
    }

    pub fn options_for(&self, category: Category) -> Vec<String> {
        match category {
            Category::Environment => self.backgrounds.clone(),
            Category::LightDirection => self.light_directions.clone(),
            Category::TimeOfDay => self.times.clone(),
            Category::DirectorStyle => self.director_styles.iter().map(|s| s.name.clone()).collect(),
            Category::LightingEffect => self.light_types.clone(),
            other => self.options.get(&other).cloned().unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub category: Category,
    pub tier: Tier,
    pub weight: f64,
    pub options: Vec<String>,
}

/// The validated two-tier menu: categories in schema order with their weights and options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MenuSchema {
    categories: Vec<CategorySpec>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchemaError {
    #[error("tier ordering violated: min first-tier weight {min_first} <= max second-tier weight {max_second}")]
    TierOrder { min_first: f64, max_second: f64 },
    #[error("emphasis ordering violated in {tier:?} tier: emphasized minimum {emphasized} <= other maximum {other}")]
    Emphasis { tier: Tier, emphasized: f64, other: f64 },
    #[error("weight for `{0}` must be positive and finite")]
    BadWeight(Category),
    #[error("no weight for `{0}`")]
    MissingWeight(Category),
}

impl MenuSchema {
    pub fn from_library(library: &PresetLibrary) -> Result<Self, SchemaError> {
        MenuSchema::build(library, &library.weights)
    }

    pub fn shipped() -> Self {
        MenuSchema::from_library(&PresetLibrary::shipped()).expect("bundled weights are ordered")
    }

    /// Same library options under a different weight table.
    pub fn build(library: &PresetLibrary, weights: &BTreeMap<Category, f64>) -> Result<Self, SchemaError> {
        let categories = Category::ALL
            .into_iter()
            .map(|category| {
                let weight = *weights.get(&category).ok_or(SchemaError::MissingWeight(category))?;
                if !(weight.is_finite() && weight > 0.0) {
                    return Err(SchemaError::BadWeight(category));
                }
                Ok(CategorySpec { category, tier: category.tier(), weight, options: library.options_for(category) })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let schema = MenuSchema { categories };
        schema.check_ordering()?;
        Ok(schema)
    }

    fn check_ordering(&self) -> Result<(), SchemaError> {
        let weights = |pred: &dyn Fn(&CategorySpec) -> bool| -> Vec<f64> {
            self.categories.iter().filter(|c| pred(c)).map(|c| c.weight).collect()
        };
        let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
        let max = |v: Vec<f64>| v.into_iter().fold(f64::NEG_INFINITY, f64::max);

        let min_first = min(weights(&|c| c.tier == Tier::First));
        let max_second = max(weights(&|c| c.tier == Tier::Second));
        if min_first <= max_second {
            return Err(SchemaError::TierOrder { min_first, max_second });
        }
        for tier in [Tier::First, Tier::Second] {
            let emphasized = min(weights(&|c| c.tier == tier && c.category.is_emphasized()));
            let other = max(weights(&|c| c.tier == tier && !c.category.is_emphasized()));
            if emphasized <= other {
                return Err(SchemaError::Emphasis { tier, emphasized, other });
            }
        }
        Ok(())
    }

    pub fn categories(&self) -> &[CategorySpec] {
        &self.categories
    }

    pub fn spec(&self, category: Category) -> &CategorySpec {
        self.categories.iter().find(|c| c.category == category).expect("schema covers every category")
    }

    pub fn weight(&self, category: Category) -> f64 {
        self.spec(category).weight
    }

    pub fn weights(&self) -> BTreeMap<Category, f64> {
        self.categories.iter().map(|c| (c.category, c.weight)).collect()
    }

    /// Every weight multiplied by `c > 0`; orderings are preserved.
    pub fn scaled(&self, c: f64) -> Self {
        assert!(c.is_finite() && c > 0.0, "scale must be positive");
        let mut out = self.clone();
        for spec in &mut out.categories {
            spec.weight *= c;
        }
        out
    }
}

/// One or more tokens; accepts either a JSON string or an array of strings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Tokens(pub Vec<String>);

impl<'de> Deserialize<'de> for Tokens {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum OneOrMany {
            One(String),
            Many(Vec<String>),
        }
        Ok(match OneOrMany::deserialize(deserializer)? {
            OneOrMany::One(s) => Tokens(vec![s]),
            OneOrMany::Many(v) => Tokens(v),
        })
    }
}

impl<S: Into<String>> FromIterator<S> for Tokens {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Tokens(iter.into_iter().map(Into::into).collect())
    }
}

/// Raw menu choices as sent by a client, keyed by category name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Choices {
    #[serde(default)]
    pub selections: BTreeMap<String, Tokens>,
    /// Per-character overrides of character and costume categories.
    #[serde(default)]
    pub characters: BTreeMap<String, BTreeMap<String, Tokens>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
}

impl Choices {
    pub fn with(mut self, category: &str, token: &str) -> Self {
        self.selections.entry(category.to_string()).or_default().0.push(token.to_string());
        self
    }
}

/// Validated selections.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    #[serde(default)]
    pub selections: BTreeMap<Category, Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub character_overrides: BTreeMap<String, BTreeMap<Category, Vec<String>>>,
    /// Prompt block of the selected director style.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub style_prompt: Option<String>,
    /// Free-text passthrough, forwarded to the backend unweighted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_prompt: Option<String>,
}

impl PromptSpec {
    pub fn selection_count(&self) -> usize {
        self.selections.values().map(Vec::len).sum::<usize>()
            + self.character_overrides.values().flat_map(|m| m.values()).map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.selection_count() == 0
    }

    pub fn director_style(&self) -> Option<&str> {
        self.selections.get(&Category::DirectorStyle).and_then(|v| v.first()).map(String::as_str)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectionError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("`{token}` is not an option of `{category}`")]
    UnknownToken { category: String, token: String },
    #[error("`{0}` cannot be set per character")]
    NotACharacterAttribute(String),
    #[error("only one director style may be selected")]
    MultipleStyles,
    #[error("unknown director style `{0}`")]
    UnknownStyle(String),
}

fn resolve(schema: &MenuSchema, category: &str, tokens: &Tokens) -> Result<(Category, Vec<String>), SelectionError> {
    let cat = Category::from_str(category.trim()).map_err(|_| SelectionError::UnknownCategory(category.to_string()))?;
    let options = &schema.spec(cat).options;
    let mut chosen: Vec<String> = Vec::new();
    for token in &tokens.0 {
        let canonical = options
            .iter()
            .find(|o| o.eq_ignore_ascii_case(token.trim()))
            .ok_or_else(|| match cat {
                Category::DirectorStyle => SelectionError::UnknownStyle(token.clone()),
                _ => SelectionError::UnknownToken { category: cat.to_string(), token: token.clone() },
            })?;
        if !chosen.contains(canonical) {
            chosen.push(canonical.clone());
        }
    }
    Ok((cat, chosen))
}

/// Validates raw choices against the menu. Categories left out stay absent.
pub fn select(schema: &MenuSchema, library: &PresetLibrary, choices: &Choices) -> Result<PromptSpec, SelectionError> {
    let mut spec = PromptSpec { user_prompt: choices.user_prompt.clone().filter(|p| !p.trim().is_empty()), ..Default::default() };
    for (category, tokens) in &choices.selections {
        let (cat, chosen) = resolve(schema, category, tokens)?;
        if !chosen.is_empty() {
            spec.selections.insert(cat, chosen);
        }
    }
    if let Some(styles) = spec.selections.get(&Category::DirectorStyle) {
        if styles.len() > 1 {
            return Err(SelectionError::MultipleStyles);
        }
        let style = library.style(&styles[0]).ok_or_else(|| SelectionError::UnknownStyle(styles[0].clone()))?;
        spec.style_prompt = Some(style.prompt.clone());
    }
    for (name, overrides) in &choices.characters {
        let mut per_character = BTreeMap::new();
        for (category, tokens) in overrides {
            let (cat, chosen) = resolve(schema, category, tokens)?;
            if !cat.is_character_attribute() {
                return Err(SelectionError::NotACharacterAttribute(cat.to_string()));
            }
            if !chosen.is_empty() {
                per_character.insert(cat, chosen);
            }
        }
        if !per_character.is_empty() {
            spec.character_overrides.insert(name.trim().to_string(), per_character);
        }
    }
    Ok(spec)
}

/// Replaces the director style selection; the last applied style wins.
pub fn apply_director_style(spec: &PromptSpec, library: &PresetLibrary, style_name: &str) -> Result<PromptSpec, SelectionError> {
    let style = library.style(style_name).ok_or_else(|| SelectionError::UnknownStyle(style_name.to_string()))?;
    let mut out = spec.clone();
    out.selections.insert(Category::DirectorStyle, vec![style.name.clone()]);
    out.style_prompt = Some(style.prompt.clone());
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character: Option<String>,
    pub token: String,
    pub weight: f64,
    pub value: f64,
}

impl WeightedTerm {
    pub fn contribution(&self) -> f64 {
        self.weight * self.value
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedPromptInput {
    pub terms: Vec<WeightedTerm>,
    pub w_total: f64,
}

impl WeightedPromptInput {
    pub fn from_terms(terms: Vec<WeightedTerm>) -> Self {
        let w_total = terms.iter().map(WeightedTerm::contribution).sum();
        WeightedPromptInput { terms, w_total }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// One term per selected token, in schema category order, followed by per-character terms
/// (characters by name, then schema order). Each term has `x = 1`.
pub fn compose(spec: &PromptSpec, schema: &MenuSchema) -> WeightedPromptInput {
    let mut terms = Vec::with_capacity(spec.selection_count());
    for cat in schema.categories() {
        for token in spec.selections.get(&cat.category).into_iter().flatten() {
            let text = match (cat.category, &spec.style_prompt) {
                (Category::DirectorStyle, Some(prompt)) => prompt.clone(),
                _ => cat.category.phrase(token),
            };
            terms.push(WeightedTerm { category: cat.category, character: None, token: text, weight: cat.weight, value: 1.0 });
        }
    }
    for (name, overrides) in &spec.character_overrides {
        for cat in schema.categories() {
            for token in overrides.get(&cat.category).into_iter().flatten() {
                terms.push(WeightedTerm {
                    category: cat.category,
                    character: Some(name.clone()),
                    token: format!("{name} {}", cat.category.phrase(token)),
                    weight: cat.weight,
                    value: 1.0,
                });
            }
        }
    }
    WeightedPromptInput::from_terms(terms)
}

/// Canonical wire form: `(token:weight)` segments joined by `", "`, where weight is the
/// term's effective weight `w * x` printed with two decimals.
pub fn serialize_prompt(input: &WeightedPromptInput) -> String {
    input
        .terms
        .iter()
        .map(|t| format!("({}:{:.2})", t.token, t.contribution()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Reads `(token:weight)` segments back out of a serialized prompt. Text outside
/// parentheses and unparsable segments are skipped.
pub fn parse_prompt(prompt: &str) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut rest = prompt;
    while let Some(open) = rest.find('(') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(')') else { break };
        let segment = &after[..close];
        if let Some((token, weight)) = segment.rsplit_once(':') {
            if let Ok(w) = weight.trim().parse::<f64>() {
                out.push((token.to_string(), w));
            }
        }
        rest = &after[close + 1..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shipped() -> (PresetLibrary, MenuSchema) {
        let lib = PresetLibrary::shipped();
        let schema = MenuSchema::from_library(&lib).unwrap();
        (lib, schema)
    }

    fn raw_presets() -> serde_json::Value {
        serde_json::from_str(SHIPPED_PRESETS).unwrap()
    }

    #[test]
    fn shipped_library_constants() {
        let (lib, _) = shipped();
        assert!(lib.backgrounds.len() >= MIN_BACKGROUNDS);
        assert_eq!(lib.director_styles.len(), 10);
        for name in REQUIRED_DIRECTORS {
            assert!(lib.style(name).is_some(), "{name}");
        }
        assert!(lib.framings.len() >= 20);
    }

    #[test]
    fn nine_styles_rejected() {
        let mut doc = raw_presets();
        doc["director_styles"].as_array_mut().unwrap().pop();
        let err = PresetLibrary::from_json(&doc.to_string()).unwrap_err();
        assert_eq!(err.to_string(), "director_styles: 9 < 10");
    }

    #[test]
    fn exactly_one_hundred_backgrounds_accepted() {
        let mut doc = raw_presets();
        doc["backgrounds"].as_array_mut().unwrap().truncate(100);
        assert!(PresetLibrary::from_json(&doc.to_string()).is_ok());
        doc["backgrounds"].as_array_mut().unwrap().truncate(99);
        assert_eq!(PresetLibrary::from_json(&doc.to_string()).unwrap_err().to_string(), "backgrounds: 99 < 100");
    }

    #[test]
    fn missing_named_director_rejected() {
        let mut doc = raw_presets();
        let styles = doc["director_styles"].as_array_mut().unwrap();
        let idx = styles.iter().position(|s| s["name"] == "Ridley Scott").unwrap();
        styles[idx]["name"] = "Someone Else".into();
        assert!(PresetLibrary::from_json(&doc.to_string()).unwrap_err().to_string().contains("Ridley Scott"));
    }

    #[test]
    fn wrong_time_set_rejected() {
        let mut doc = raw_presets();
        doc["times"] = serde_json::json!(["noon", "night", "dawn"]);
        assert!(PresetLibrary::from_json(&doc.to_string()).unwrap_err().to_string().starts_with("times"));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("presets.json");
        std::fs::write(&path, SHIPPED_PRESETS).unwrap();
        assert_eq!(load_presets(&path).unwrap(), PresetLibrary::shipped());
        assert!(matches!(load_presets(dir.path().join("nope.json")), Err(PresetError::Io(_))));
    }

    #[test]
    fn shipped_weights_follow_tier_ordering() {
        let (_, schema) = shipped();
        let w = |c| schema.weight(c);
        assert_eq!(w(Category::Environment), 3.0);
        assert_eq!(w(Category::LightingEffect), 2.0);
        assert_eq!(w(Category::FacialDetail), 1.5);
        assert_eq!(w(Category::ClothingStyle), 1.0);
    }

    #[test]
    fn unordered_weights_rejected() {
        let (lib, schema) = shipped();
        let mut weights = schema.weights();
        weights.insert(Category::ClothingColor, 2.5);
        assert!(matches!(MenuSchema::build(&lib, &weights), Err(SchemaError::TierOrder { .. })));

        let mut weights = schema.weights();
        weights.insert(Category::Hairstyle, 3.5);
        assert!(matches!(MenuSchema::build(&lib, &weights), Err(SchemaError::Emphasis { tier: Tier::First, .. })));

        let mut weights = schema.weights();
        weights.insert(Category::HairColor, 1.5);
        assert!(matches!(MenuSchema::build(&lib, &weights), Err(SchemaError::Emphasis { tier: Tier::Second, .. })));
    }

    #[test]
    fn select_examples() {
        let (lib, schema) = shipped();
        let spec = select(&schema, &lib, &Choices::default().with("time_of_day", "night").with("lighting_effect", "soft")).unwrap();
        assert_eq!(spec.selection_count(), 2);

        assert!(select(&schema, &lib, &Choices::default()).unwrap().is_empty());

        assert_eq!(
            select(&schema, &lib, &Choices::default().with("time_of_day", "dawn")),
            Err(SelectionError::UnknownToken { category: "time_of_day".into(), token: "dawn".into() })
        );
        assert!(matches!(
            select(&schema, &lib, &Choices::default().with("mood", "grim")),
            Err(SelectionError::UnknownCategory(_))
        ));
    }

    #[test]
    fn select_overrides_and_styles() {
        let (lib, schema) = shipped();
        let choices: Choices = serde_json::from_value(serde_json::json!({
            "selections": {"director_style": "ridley scott", "hair_color": ["pink", "PINK"]},
            "characters": {"Olivia": {"facial_detail": "tired eyes"}}
        }))
        .unwrap();
        let spec = select(&schema, &lib, &choices).unwrap();
        assert_eq!(spec.director_style(), Some("Ridley Scott"));
        assert!(spec.style_prompt.is_some());
        assert_eq!(spec.selections[&Category::HairColor], ["pink"]);
        assert_eq!(spec.character_overrides["Olivia"][&Category::FacialDetail], ["tired eyes"]);

        let bad: Choices = serde_json::from_value(serde_json::json!({
            "characters": {"Olivia": {"environment": "beach"}}
        }))
        .unwrap();
        assert!(matches!(select(&schema, &lib, &bad), Err(SelectionError::NotACharacterAttribute(_))));

        let two = Choices::default().with("director_style", "Wes Anderson").with("director_style", "Ridley Scott");
        assert_eq!(select(&schema, &lib, &two), Err(SelectionError::MultipleStyles));
    }

    #[test]
    fn director_style_last_write_wins() {
        let (lib, _) = shipped();
        let spec = apply_director_style(&PromptSpec::default(), &lib, "Ridley Scott").unwrap();
        assert_eq!(spec.selection_count(), 1);
        let spec = apply_director_style(&spec, &lib, "Wes Anderson").unwrap();
        assert_eq!(spec.selections[&Category::DirectorStyle], ["Wes Anderson"]);
        assert_eq!(spec.style_prompt.as_deref(), Some(lib.style("Wes Anderson").unwrap().prompt.as_str()));
        assert_eq!(
            apply_director_style(&spec, &lib, "Orson Welles"),
            Err(SelectionError::UnknownStyle("Orson Welles".into()))
        );
    }

    #[test]
    fn all_styles_serialize_distinctly() {
        let (lib, schema) = shipped();
        let prompts: BTreeSet<String> = lib
            .director_styles
            .iter()
            .map(|s| serialize_prompt(&compose(&apply_director_style(&PromptSpec::default(), &lib, &s.name).unwrap(), &schema)))
            .collect();
        assert_eq!(prompts.len(), 10);
    }

    #[test]
    fn compose_examples() {
        let (lib, schema) = shipped();
        let empty = compose(&PromptSpec::default(), &schema);
        assert!(empty.terms.is_empty());
        assert_eq!(empty.w_total, 0.0);

        let spec = select(
            &schema,
            &lib,
            &Choices::default().with("environment", "beach").with("lighting_effect", "soft").with("clothing_style", "casual"),
        )
        .unwrap();
        let input = compose(&spec, &schema);
        // independent dot product over the configured table
        let oracle: f64 = [("environment", 1.0), ("lighting_effect", 1.0), ("clothing_style", 1.0)]
            .iter()
            .map(|(c, x)| lib.weights[&Category::from_str(c).unwrap()] * x)
            .sum();
        assert_eq!(oracle, 6.0);
        assert_eq!(input.w_total, 6.0);
        let cats: Vec<_> = input.terms.iter().map(|t| t.category).collect();
        assert_eq!(cats, [Category::Environment, Category::LightingEffect, Category::ClothingStyle]);
    }

    #[test]
    fn serialize_examples() {
        let single = WeightedPromptInput::from_terms(vec![WeightedTerm {
            category: Category::TimeOfDay,
            character: None,
            token: "night".into(),
            weight: 3.0,
            value: 1.0,
        }]);
        assert_eq!(serialize_prompt(&single), "(night:3.00)");
        assert_eq!(serialize_prompt(&WeightedPromptInput::default()), "");
    }

    #[test]
    fn parse_prompt_reads_segments() {
        let parsed = parse_prompt("(beach:3.00), (a, b and c:3.00), (left light source:2.00)");
        assert_eq!(
            parsed,
            vec![("beach".into(), 3.0), ("a, b and c".into(), 3.0), ("left light source".into(), 2.0)]
        );
        assert!(parse_prompt("").is_empty());
    }
}
