//! Scene matching: fixed/variable attribute queries, text-tag similarity scoring and
//! dialogue-aligned shot groups.
//!
//! Fixed attributes are hard filters applied per record; records that survive are grouped
//! by [`SceneKey`]. Variable attributes and the free-text setting only feed the similarity
//! text, so they reorder candidate scenes without changing which scenes are candidates.
//!
//! Each shot is scored as `alpha * cosine(query, shot) + beta * face_recognizability`, and a
//! scene's rank is the mean combined score of all its surviving shots.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use crate::catalog::SceneKey;
use crate::catalog::{Catalog, ShotRecord, ShotScale};
use crate::screenplay::Script;
use crate::types::{Gender, TimeOfDay};

pub const DEFAULT_EMBEDDING_DIM: usize = 64;
pub const DEFAULT_EMBEDDING_SEED: u64 = 0x5EED_0F_F11A;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("nothing to embed: text has no tokens")]
    EmptyText,
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
}

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `components`; `None` for a zero or non-finite vector.
    pub fn normalized(components: Vec<f64>) -> Option<Self> {
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return None;
        }
        Some(EmbeddingVector(components.into_iter().map(|c| c / norm).collect()))
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError>;
}

/// Lowercased whitespace tokens with surrounding punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Deterministic test embedder: each token is hashed (SHA-256 over the seed and the
/// token) into one of `dim` buckets, bucket counts are L2-normalized.
#[derive(Debug, Clone)]
pub struct HashedBagOfWords {
    dim: usize,
    seed: u64,
}

impl Default for HashedBagOfWords {
    fn default() -> Self {
        HashedBagOfWords { dim: DEFAULT_EMBEDDING_DIM, seed: DEFAULT_EMBEDDING_SEED }
    }
}

impl HashedBagOfWords {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        HashedBagOfWords { dim, seed }
    }

    pub fn bucket(&self, token: &str) -> usize {
        let digest = Sha256::new().chain_update(self.seed.to_le_bytes()).chain_update(token.as_bytes()).finalize();
        let mut head = [0u8; 8];
        head.copy_from_slice(&digest[..8]);
        (u64::from_le_bytes(head) % self.dim as u64) as usize
    }
}

impl Embedder for HashedBagOfWords {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0; self.dim];
        for token in tokenize(text) {
            counts[self.bucket(&token)] += 1.0;
        }
        EmbeddingVector::normalized(counts).ok_or(EmbedError::EmptyText)
    }
}

/// Remote encoder: `POST {base}/embed {"text": ...}` answering `{"vector": [...]}`.
pub struct HttpEmbedder {
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::EmbedderUnavailable(e.to_string()))?;
        Ok(HttpEmbedder { url: format!("{}/embed", base_url.trim_end_matches('/')), client })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        #[derive(Deserialize)]
        struct Reply {
            vector: Vec<f64>,
        }
        if tokenize(text).is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let unavailable = |e: reqwest::Error| EmbedError::EmbedderUnavailable(e.to_string());
        let reply: Reply = self
            .client
            .post(&self.url)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(unavailable)?
            .json()
            .map_err(unavailable)?;
        EmbeddingVector::normalized(reply.vector)
            .ok_or_else(|| EmbedError::EmbedderUnavailable("encoder returned a zero vector".into()))
    }
}

/// One side of a query. Every field is optional; `setting` is free text and may only
/// appear on the variable side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_of_day: Option<TimeOfDay>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub character_genders: Option<Vec<Gender>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<String>,
}

impl Constraints {
    fn keys(&self) -> Vec<&'static str> {
        let mut keys = Vec::new();
        if self.location_tag.is_some() {
            keys.push("location_tag");
        }
        if self.time_of_day.is_some() {
            keys.push("time_of_day");
        }
        if self.character_count.is_some() {
            keys.push("character_count");
        }
        if self.character_genders.is_some() {
            keys.push("character_genders");
        }
        if self.setting.is_some() {
            keys.push("setting");
        }
        keys
    }

    /// Hard-filter test of one record against these constraints.
    pub fn admits(&self, record: &ShotRecord) -> bool {
        self.location_tag.as_ref().is_none_or(|t| record.setting_tags.iter().any(|rt| rt == t))
            && self.time_of_day.is_none_or(|t| record.time_of_day == t)
            && self.character_count.is_none_or(|c| record.character_count == c)
            && self.character_genders.as_ref().is_none_or(|g| genders_compatible(g, &record.character_genders))
    }
}

/// Multiset match where `unspecified` on either side pairs with anything.
pub fn genders_compatible(wanted: &[Gender], actual: &[Gender]) -> bool {
    if wanted.len() != actual.len() {
        return false;
    }
    let count = |gs: &[Gender], g: Gender| gs.iter().filter(|x| **x == g).count();
    let loose = count(actual, Gender::Unspecified);
    count(wanted, Gender::Male) <= count(actual, Gender::Male) + loose
        && count(wanted, Gender::Female) <= count(actual, Gender::Female) + loose
}

/// Director selections before compilation; the same shape as [`SceneQuery`].
pub type DirectorInput = SceneQuery;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneQuery {
    #[serde(default)]
    pub fixed: Constraints,
    #[serde(default)]
    pub variable: Constraints,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("attribute `{0}` is both fixed and variable")]
    Contradictory(&'static str),
    #[error("free-text setting cannot be a fixed attribute")]
    FixedSetting,
    #[error("fixed character_count {count} exceeds the catalog limit {max}")]
    TooManyCharacters { count: u32, max: u32 },
    #[error("fixed character_genders has {genders} entries but character_count is {count}")]
    GenderCountMismatch { genders: usize, count: u32 },
}

impl SceneQuery {
    pub fn validate(&self, max_characters: u32) -> Result<(), QueryError> {
        if self.fixed.setting.is_some() {
            return Err(QueryError::FixedSetting);
        }
        let variable = self.variable.keys();
        if let Some(key) = self.fixed.keys().into_iter().find(|k| variable.contains(k)) {
            return Err(QueryError::Contradictory(key));
        }
        if let Some(count) = self.fixed.character_count {
            if count > max_characters {
                return Err(QueryError::TooManyCharacters { count, max: max_characters });
            }
            if let Some(g) = &self.fixed.character_genders {
                if g.len() != count as usize {
                    return Err(QueryError::GenderCountMismatch { genders: g.len(), count });
                }
            }
        }
        Ok(())
    }

    /// Text compared against each shot's tags and caption.
    pub fn setting_text(&self) -> String {
        let location = self.fixed.location_tag.as_ref().or(self.variable.location_tag.as_ref());
        let time = self.fixed.time_of_day.or(self.variable.time_of_day);
        let mut parts: Vec<&str> = Vec::new();
        if let Some(l) = location {
            parts.push(l);
        }
        if let Some(t) = time {
            parts.push(t.describe());
        }
        if let Some(s) = &self.variable.setting {
            parts.push(s);
        }
        parts.into_iter().filter(|p| !p.trim().is_empty()).collect::<Vec<_>>().join(" ")
    }
}

/// Builds the query from director selections, inferring the cast size and genders from the
/// script for whichever of those keys the director left untouched.
pub fn compile_query(script: &Script, input: &DirectorInput, max_characters: u32) -> Result<SceneQuery, QueryError> {
    let mut query = input.clone();
    for side in [&mut query.fixed, &mut query.variable] {
        if let Some(tag) = side.location_tag.as_mut() {
            *tag = tag.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        }
    }
    query.validate(max_characters)?;

    let cast: Vec<Gender> = {
        let mut g: Vec<Gender> = script.characters.iter().map(|c| c.gender).collect();
        g.sort();
        g
    };
    let count_open = query.fixed.character_count.is_none() && query.variable.character_count.is_none();
    let genders_open = query.fixed.character_genders.is_none() && query.variable.character_genders.is_none();

    if count_open {
        query.fixed.character_count = Some(match &query.fixed.character_genders {
            Some(g) => g.len() as u32,
            None => cast.len() as u32,
        });
    }
    if genders_open {
        let count = query.fixed.character_count.or(query.variable.character_count);
        if count.is_none_or(|c| c as usize == cast.len()) {
            query.fixed.character_genders = Some(cast);
        }
    }
    query.validate(max_characters)?;
    Ok(query)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        ScoreWeights { alpha: 0.7, beta: 0.3 }
    }
}

impl ScoreWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, RetrievalError> {
        let w = ScoreWeights { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        let ok = self.alpha.is_finite() && self.beta.is_finite() && self.alpha >= 0.0 && self.beta >= 0.0;
        if !ok || self.alpha + self.beta <= 0.0 {
            return Err(RetrievalError::InvalidWeights(self.alpha, self.beta));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        ScoreWeights { alpha: self.alpha * c, beta: self.beta * c }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredShot {
    pub record: ShotRecord,
    pub similarity: f64,
    pub combined_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotGroup {
    pub group_id: String,
    pub scene_key: SceneKey,
    pub establishing: ScoredShot,
    pub dialogue_frames: Vec<ScoredShot>,
    /// Mean combined score over every shot of the scene that passed the fixed filters.
    pub mean_score: f64,
    pub candidate_count: usize,
}

impl ShotGroup {
    /// Establishing frame first, then one frame per dialogue line.
    pub fn frames(&self) -> impl Iterator<Item = &ScoredShot> {
        std::iter::once(&self.establishing).chain(self.dialogue_frames.iter())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RetrievalError {
    #[error("no scene satisfies the fixed attributes")]
    NoMatch,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid score weights alpha={0} beta={1}: both must be >= 0 with a positive sum")]
    InvalidWeights(f64, f64),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

fn by_score_then_id(a: &ScoredShot, b: &ScoredShot) -> Ordering {
    b.combined_score
        .total_cmp(&a.combined_score)
        .then_with(|| a.record.shot_id.cmp(&b.record.shot_id))
}

pub struct Retriever {
    embedder: Arc<dyn Embedder>,
    weights: ScoreWeights,
}

impl Retriever {
    pub fn new(embedder: Arc<dyn Embedder>, weights: ScoreWeights) -> Result<Self, RetrievalError> {
        weights.validate()?;
        Ok(Retriever { embedder, weights })
    }

    pub fn with_test_embedder(weights: ScoreWeights) -> Result<Self, RetrievalError> {
        Retriever::new(Arc::new(HashedBagOfWords::default()), weights)
    }

    pub fn weights(&self) -> ScoreWeights {
        self.weights
    }

    fn query_vector(&self, query: &SceneQuery) -> Result<Option<EmbeddingVector>, EmbedError> {
        match self.embedder.embed(&query.setting_text()) {
            Ok(v) => Ok(Some(v)),
            Err(EmbedError::EmptyText) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn score_against(&self, record: &ShotRecord, query_vec: Option<&EmbeddingVector>) -> Result<ScoredShot, EmbedError> {
        let similarity = match query_vec {
            None => 0.0,
            Some(q) => match self.embedder.embed(&record.similarity_text()) {
                Ok(v) => q.cosine(&v),
                Err(EmbedError::EmptyText) => 0.0,
                Err(e) => return Err(e),
            },
        };
        let combined_score = self.weights.alpha * similarity + self.weights.beta * record.face_recognizability;
        Ok(ScoredShot { record: record.clone(), similarity, combined_score })
    }

    /// Scores one shot. The caller is responsible for having applied the fixed filters.
    pub fn score_shot(&self, record: &ShotRecord, query: &SceneQuery) -> Result<ScoredShot, RetrievalError> {
        let q = self.query_vector(query)?;
        Ok(self.score_against(record, q.as_ref())?)
    }

    /// Top-`k` shot groups for `script`, best first. Ties in mean score fall back to the
    /// scene key order.
    pub fn match_groups(&self, script: &Script, query: &SceneQuery, catalog: &Catalog, k: usize) -> Result<Vec<ShotGroup>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        query.validate(catalog.max_characters())?;
        let query_vec = self.query_vector(query)?;

        let mut groups = Vec::new();
        for (key, records) in catalog.scenes() {
            let survivors: Vec<&ShotRecord> = records.into_iter().filter(|r| query.fixed.admits(r)).collect();
            if survivors.is_empty() {
                continue;
            }
            let scored = survivors
                .into_iter()
                .map(|r| self.score_against(r, query_vec.as_ref()))
                .collect::<Result<Vec<_>, _>>()?;
            groups.push(assemble_group(key, scored, script));
        }
        if groups.is_empty() {
            return Err(RetrievalError::NoMatch);
        }
        groups.sort_by(|a, b| b.mean_score.total_cmp(&a.mean_score).then_with(|| a.scene_key.cmp(&b.scene_key)));
        groups.truncate(k);
        Ok(groups)
    }
}

fn assemble_group(key: &SceneKey, mut scored: Vec<ScoredShot>, script: &Script) -> ShotGroup {
    let candidate_count = scored.len();
    let mean_score = scored.iter().map(|s| s.combined_score).sum::<f64>() / candidate_count as f64;
    scored.sort_by(by_score_then_id);

    let establishing_at = scored.iter().position(|s| s.record.shot_scale == ShotScale::Wide).unwrap_or(0);
    let establishing = scored.remove(establishing_at);
    let remaining = if scored.is_empty() { vec![establishing.clone()] } else { scored };

    // Least-used shot first so that shots repeat cyclically once the scene runs out.
    let mut uses: HashMap<&str, usize> = HashMap::new();
    let mut dialogue_frames = Vec::with_capacity(script.lines.len());
    for line in &script.lines {
        let gender = script.speaker_gender(line);
        let preferred: Vec<&ScoredShot> = if gender == Gender::Unspecified {
            Vec::new()
        } else {
            remaining.iter().filter(|s| s.record.dominant_gender() == Some(gender)).collect()
        };
        let pool: Vec<&ScoredShot> = if preferred.is_empty() { remaining.iter().collect() } else { preferred };
        let pick = pool
            .into_iter()
            .min_by_key(|s| uses.get(s.record.shot_id.as_str()).copied().unwrap_or(0))
            .expect("scene has at least one shot");
        *uses.entry(pick.record.shot_id.as_str()).or_default() += 1;
        dialogue_frames.push(pick.clone());
    }

    ShotGroup {
        group_id: key.to_string(),
        scene_key: key.clone(),
        establishing,
        dialogue_frames,
        mean_score,
        candidate_count,
    }
}
