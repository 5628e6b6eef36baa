//! Fixture generators and independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use previz_core::catalog::ShotRecord;
use previz_core::prompting::{Category, MenuSchema, PromptSpec};
use previz_core::retrieval::{Constraints, SceneQuery};
use previz_core::{Gender, ScoreWeights, ShotScale, TimeOfDay};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const STUDY_SCRIPT: &str = include_str!("../../../../data/study_script.txt");
pub const STUDY_QUERY: &str = include_str!("../../../../data/study_query.json");
pub const STUDY_SETTINGS: &str = include_str!("../../../../data/study_settings.json");
pub const BEACH_CATALOG: &str = include_str!("../../../../data/beach_catalog.jsonl");

pub const TAGS: [&str; 6] = ["beach", "office", "forest", "pier", "city rooftop", "diner"];
pub const WORDS: [&str; 14] = [
    "waves", "seagulls", "golden", "hour", "desk", "rain", "neon", "trees", "fog", "sand", "coffee", "window",
    "shoreline", "crowd",
];
const TIMES: [TimeOfDay; 4] = [TimeOfDay::Noon, TimeOfDay::Night, TimeOfDay::SunriseSunset, TimeOfDay::Unspecified];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn words(rng: &mut ChaCha8Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn random_record(rng: &mut ChaCha8Rng, index: usize, movies: usize, max_count: u32) -> ShotRecord {
    let movie = rng.random_range(0..movies);
    let count = rng.random_range(1..=max_count);
    let mut tags: Vec<String> = vec![TAGS.choose(rng).unwrap().to_string()];
    if rng.random_bool(0.5) {
        tags.push(TAGS.choose(rng).unwrap().to_string());
    }
    ShotRecord {
        movie_id: format!("m{movie:02}"),
        shot_id: format!("s{index:04}"),
        image_uri: format!("catalog://m{movie:02}/s{index:04}.jpg"),
        setting_tags: tags,
        time_of_day: *TIMES.choose(rng).unwrap(),
        character_count: count,
        character_genders: (0..count)
            .map(|_| *[Gender::Male, Gender::Female, Gender::Unspecified].choose(rng).unwrap())
            .collect(),
        face_recognizability: (rng.random_range(0..=100) as f64) / 100.0,
        sharpness_ok: rng.random_bool(0.9),
        exposure_ok: rng.random_bool(0.9),
        shot_scale: *[ShotScale::CloseUp, ShotScale::Medium, ShotScale::Wide].choose(rng).unwrap(),
        caption: words(rng, 5),
    }
}

pub fn random_records(rng: &mut ChaCha8Rng, n: usize, movies: usize, max_count: u32) -> Vec<ShotRecord> {
    (0..n).map(|i| random_record(rng, i, movies, max_count)).collect()
}

pub fn to_jsonl(records: &[ShotRecord]) -> String {
    let mut out = String::from("{\"catalog_version\": 1}\n");
    for r in records {
        out.push_str(&serde_json::to_string(r).unwrap());
        out.push('\n');
    }
    out
}

/// Query whose fixed side never names the character count, so it is inferred from the script.
pub fn random_query(rng: &mut ChaCha8Rng) -> SceneQuery {
    let mut q = SceneQuery::default();
    let location = TAGS.choose(rng).unwrap().to_string();
    match rng.random_range(0..3) {
        0 => q.fixed.location_tag = Some(location),
        1 => q.variable.location_tag = Some(location),
        _ => {}
    }
    let time = *TIMES[..3].choose(rng).unwrap();
    match rng.random_range(0..3) {
        0 => q.fixed.time_of_day = Some(time),
        1 => q.variable.time_of_day = Some(time),
        _ => {}
    }
    let setting = words(rng, 4);
    if !setting.is_empty() {
        q.variable.setting = Some(setting);
    }
    q
}

// Oracles. These deliberately avoid the library's retrieval code.

pub const ORACLE_DIM: usize = 64;
pub const ORACLE_SEED: u64 = 0x5EED_0F_F11A;

pub fn oracle_embed(text: &str) -> Option<Vec<f64>> {
    let mut v = vec![0.0f64; ORACLE_DIM];
    for raw in text.split_whitespace() {
        let token: String = raw.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
        if token.is_empty() {
            continue;
        }
        let mut h = Sha256::new();
        h.update(ORACLE_SEED.to_le_bytes());
        h.update(token.as_bytes());
        let d = h.finalize();
        let bucket = u64::from_le_bytes([d[0], d[1], d[2], d[3], d[4], d[5], d[6], d[7]]) % ORACLE_DIM as u64;
        v[bucket as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    Some(v.into_iter().map(|x| x / norm).collect())
}

pub fn oracle_cosine(a: &str, b: &str) -> f64 {
    match (oracle_embed(a), oracle_embed(b)) {
        (Some(x), Some(y)) => x.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>().clamp(-1.0, 1.0),
        _ => 0.0,
    }
}

fn oracle_query_text(q: &SceneQuery) -> String {
    let mut parts = Vec::new();
    if let Some(l) = q.fixed.location_tag.clone().or(q.variable.location_tag.clone()) {
        parts.push(l);
    }
    match q.fixed.time_of_day.or(q.variable.time_of_day) {
        Some(TimeOfDay::Noon) => parts.push("noon".into()),
        Some(TimeOfDay::Night) => parts.push("night".into()),
        Some(TimeOfDay::SunriseSunset) => parts.push("sunrise sunset".into()),
        _ => {}
    }
    if let Some(s) = &q.variable.setting {
        parts.push(s.clone());
    }
    parts.join(" ")
}

fn oracle_admits(c: &Constraints, r: &ShotRecord) -> bool {
    if let Some(t) = &c.location_tag {
        if !r.setting_tags.contains(t) {
            return false;
        }
    }
    if let Some(t) = c.time_of_day {
        if r.time_of_day != t {
            return false;
        }
    }
    if let Some(n) = c.character_count {
        if r.character_count != n {
            return false;
        }
    }
    if let Some(want) = &c.character_genders {
        if want.len() != r.character_genders.len() {
            return false;
        }
        // Greedy assignment: exact matches first, then unspecified shots absorb the rest.
        let mut free: Vec<Gender> = r.character_genders.clone();
        let mut unmatched = Vec::new();
        for g in want {
            if *g == Gender::Unspecified {
                continue;
            }
            match free.iter().position(|x| x == g) {
                Some(i) => {
                    free.remove(i);
                }
                None => unmatched.push(*g),
            }
        }
        let spare = free.iter().filter(|g| **g == Gender::Unspecified).count();
        if unmatched.len() > spare {
            return false;
        }
    }
    true
}

/// Exhaustive ranking: score every admitted record, average per (movie, leading tag), sort by
/// mean descending then by key.
pub fn oracle_ranking(records: &[&ShotRecord], query: &SceneQuery, w: ScoreWeights) -> Vec<(String, f64)> {
    let qtext = oracle_query_text(query);
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in records {
        if !oracle_admits(&query.fixed, r) {
            continue;
        }
        let mut rtext = r.setting_tags.join(" ");
        if !r.caption.trim().is_empty() {
            rtext = format!("{rtext} {}", r.caption.trim());
        }
        let score = w.alpha * oracle_cosine(&qtext, &rtext) + w.beta * r.face_recognizability;
        let setting = match r.setting_tags.first() {
            Some(t) if !t.trim().is_empty() => t.split_whitespace().collect::<Vec<_>>().join("_"),
            _ => "untagged".to_string(),
        };
        let e = sums.entry((r.movie_id.clone(), setting)).or_insert((0.0, 0));
        e.0 += score;
        e.1 += 1;
    }
    let mut ranked: Vec<((String, String), f64)> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.into_iter().map(|((m, s), score)| (format!("{m}/{s}"), score)).collect()
}

/// Random selections drawn from the schema's own options, with up to two character overrides.
pub fn random_spec(rng: &mut ChaCha8Rng, schema: &MenuSchema) -> PromptSpec {
    let mut spec = PromptSpec::default();
    for cat in schema.categories() {
        if cat.options.is_empty() || !rng.random_bool(0.5) {
            continue;
        }
        let n = if cat.category == Category::DirectorStyle { 1 } else { rng.random_range(1..=2.min(cat.options.len())) };
        let mut chosen: Vec<String> = cat.options.choose_multiple(rng, n).cloned().collect();
        chosen.sort();
        spec.selections.insert(cat.category, chosen);
    }
    for name in ["Ethan", "Olivia"] {
        if !rng.random_bool(0.3) {
            continue;
        }
        let mut overrides = BTreeMap::new();
        for cat in schema.categories().iter().filter(|c| c.category.is_character_attribute() && !c.options.is_empty()) {
            if rng.random_bool(0.3) {
                overrides.insert(cat.category, vec![cat.options.choose(rng).unwrap().clone()]);
            }
        }
        if !overrides.is_empty() {
            spec.character_overrides.insert(name.to_string(), overrides);
        }
    }
    spec
}

/// Hand dot product over the configured weight table, one unit per selected token.
pub fn oracle_w_total(spec: &PromptSpec, weights: &BTreeMap<Category, f64>) -> f64 {
    let mut total = 0.0;
    for (cat, tokens) in &spec.selections {
        total += weights[cat] * tokens.len() as f64;
    }
    for overrides in spec.character_overrides.values() {
        for (cat, tokens) in overrides {
            total += weights[cat] * tokens.len() as f64;
        }
    }
    total
}

pub fn study_script() -> previz_core::Script {
    previz_core::screenplay::parse_script(STUDY_SCRIPT).unwrap()
}

pub fn study_catalog() -> previz_core::Catalog {
    previz_core::Catalog::ingest_str(BEACH_CATALOG, &previz_core::CurationRules::default()).unwrap().0
}

pub fn study_group() -> previz_core::ShotGroup {
    let script = study_script();
    let input: SceneQuery = serde_json::from_str(STUDY_QUERY).unwrap();
    let query = previz_core::retrieval::compile_query(&script, &input, 6).unwrap();
    previz_core::retrieval::Retriever::with_test_embedder(ScoreWeights::default())
        .unwrap()
        .match_groups(&script, &query, &study_catalog(), 1)
        .unwrap()
        .remove(0)
}

pub fn study_settings(schema: &MenuSchema) -> PromptSpec {
    let choices: previz_core::prompting::Choices = serde_json::from_str(STUDY_SETTINGS).unwrap();
    previz_core::prompting::select(schema, &previz_core::PresetLibrary::shipped(), &choices).unwrap()
}
