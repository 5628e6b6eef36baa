//! Shot metadata catalog: JSON-lines ingestion, curation filters and indexed lookup.
//!
//! A catalog file starts with a header line `{"catalog_version": 1}` followed by one
//! [`ShotRecord`] object per line. Records are accepted only if they pass both the
//! [`complexity_filter`] and the [`curation_filter`]; everything else is tallied by reason.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Gender, TimeOfDay};

pub const CATALOG_VERSION: u64 = 1;
pub const DEFAULT_MAX_CHARACTERS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotScale {
    CloseUp,
    Medium,
    Wide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRecord {
    pub movie_id: String,
    pub shot_id: String,
    pub image_uri: String,
    pub setting_tags: Vec<String>,
    pub time_of_day: TimeOfDay,
    pub character_count: u32,
    pub character_genders: Vec<Gender>,
    pub face_recognizability: f64,
    pub sharpness_ok: bool,
    pub exposure_ok: bool,
    pub shot_scale: ShotScale,
    #[serde(default)]
    pub caption: String,
}

impl ShotRecord {
    /// Grouping key: the movie plus the record's leading setting tag.
    pub fn scene_key(&self) -> SceneKey {
        let setting = self
            .setting_tags
            .first()
            .map(|t| t.split_whitespace().collect::<Vec<_>>().join("_"))
            .filter(|t| !t.is_empty())
            .unwrap_or_else(|| "untagged".to_string());
        SceneKey { movie_id: self.movie_id.clone(), setting }
    }

    /// The gender that outnumbers every other specified gender in frame, if any.
    pub fn dominant_gender(&self) -> Option<Gender> {
        let males = self.character_genders.iter().filter(|g| **g == Gender::Male).count();
        let females = self.character_genders.iter().filter(|g| **g == Gender::Female).count();
        match males.cmp(&females) {
            std::cmp::Ordering::Greater => Some(Gender::Male),
            std::cmp::Ordering::Less => Some(Gender::Female),
            std::cmp::Ordering::Equal => None,
        }
    }

    /// Text the retrieval scorer compares against: tags followed by the caption.
    pub fn similarity_text(&self) -> String {
        let mut parts: Vec<&str> = self.setting_tags.iter().map(String::as_str).collect();
        if !self.caption.trim().is_empty() {
            parts.push(self.caption.trim());
        }
        parts.join(" ")
    }

    fn structural_problem(&self) -> Option<String> {
        if self.shot_id.trim().is_empty() {
            return Some("empty shot_id".into());
        }
        if self.movie_id.trim().is_empty() {
            return Some("empty movie_id".into());
        }
        if self.character_genders.len() != self.character_count as usize {
            return Some(format!(
                "character_genders has {} entries, character_count is {}",
                self.character_genders.len(),
                self.character_count
            ));
        }
        if !(0.0..=1.0).contains(&self.face_recognizability) {
            return Some(format!("face_recognizability {} outside [0, 1]", self.face_recognizability));
        }
        None
    }

    fn normalize(&mut self) {
        self.setting_tags = self
            .setting_tags
            .iter()
            .map(|t| t.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
    }
}

/// Scene identity within the catalog: `(movie_id, normalized leading setting tag)`.
/// Ordering is lexicographic on movie id, then setting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SceneKey {
    pub movie_id: String,
    pub setting: String,
}

impl fmt::Display for SceneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.movie_id, self.setting)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationRules {
    pub require_two_characters: bool,
    pub require_sharp: bool,
    pub require_exposure_ok: bool,
    pub allowed_shot_scales: BTreeSet<ShotScale>,
    pub max_characters: u32,
}

impl Default for CurationRules {
    fn default() -> Self {
        CurationRules {
            require_two_characters: false,
            require_sharp: true,
            require_exposure_ok: true,
            allowed_shot_scales: [ShotScale::CloseUp, ShotScale::Medium, ShotScale::Wide].into(),
            max_characters: DEFAULT_MAX_CHARACTERS,
        }
    }
}

impl CurationRules {
    /// Every curation rule switched off; only the complexity limit applies.
    pub fn permissive() -> Self {
        CurationRules { require_sharp: false, require_exposure_ok: false, ..Default::default() }
    }

    /// Every rule switched on, restricted to close-up and medium two-character portraits.
    pub fn strict() -> Self {
        CurationRules {
            require_two_characters: true,
            require_sharp: true,
            require_exposure_ok: true,
            allowed_shot_scales: [ShotScale::CloseUp, ShotScale::Medium].into(),
            max_characters: DEFAULT_MAX_CHARACTERS,
        }
    }

    pub fn validate(&self) -> Result<(), CatalogError> {
        if self.max_characters < 1 {
            return Err(CatalogError::InvalidRules("max_characters must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Malformed,
    Invalid,
    Duplicate,
    Complexity,
    Blur,
    Exposure,
    ShotScale,
    CharacterCount,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Malformed => "malformed",
            RejectReason::Invalid => "invalid",
            RejectReason::Duplicate => "duplicate",
            RejectReason::Complexity => "complexity",
            RejectReason::Blur => "blur",
            RejectReason::Exposure => "exposure",
            RejectReason::ShotScale => "shot_scale",
            RejectReason::CharacterCount => "character_count",
        }
    }
}

/// Keeps shots with at most `max_characters` visible characters (boundary inclusive).
pub fn complexity_filter(record: &ShotRecord, max_characters: u32) -> bool {
    record.character_count <= max_characters
}

/// First curation rule the record violates, checked in a fixed order.
pub fn curation_failure(record: &ShotRecord, rules: &CurationRules) -> Option<RejectReason> {
    if rules.require_sharp && !record.sharpness_ok {
        Some(RejectReason::Blur)
    } else if rules.require_exposure_ok && !record.exposure_ok {
        Some(RejectReason::Exposure)
    } else if !rules.allowed_shot_scales.contains(&record.shot_scale) {
        Some(RejectReason::ShotScale)
    } else if rules.require_two_characters && record.character_count != 2 {
        Some(RejectReason::CharacterCount)
    } else {
        None
    }
}

pub fn curation_filter(record: &ShotRecord, rules: &CurationRules) -> bool {
    curation_failure(record, rules).is_none()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FormatError {
    /// 1-based line in the source stream.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub reasons: BTreeMap<String, usize>,
    pub format_errors: Vec<FormatError>,
}

impl IngestReport {
    fn reject(&mut self, reason: RejectReason) {
        self.rejected += 1;
        *self.reasons.entry(reason.as_str().to_string()).or_default() += 1;
    }
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected header {{\"catalog_version\": {CATALOG_VERSION}}}")]
    MissingHeader { line: usize },
    #[error("unsupported catalog_version {0}")]
    UnsupportedVersion(u64),
    #[error("invalid curation rules: {0}")]
    InvalidRules(String),
    #[error("shot `{0}` not found")]
    NotFound(String),
}

#[derive(Deserialize)]
struct Header {
    catalog_version: u64,
}

/// Conjunction of lookup predicates. Empty filter matches every record.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShotFilter {
    pub tags: Vec<String>,
    pub time_of_day: Option<TimeOfDay>,
    pub character_count: Option<u32>,
}

impl ShotFilter {
    pub fn tag(mut self, tag: impl Into<String>) -> Self {
        self.tags.push(tag.into().to_lowercase());
        self
    }

    pub fn time(mut self, time: TimeOfDay) -> Self {
        self.time_of_day = Some(time);
        self
    }

    pub fn count(mut self, count: u32) -> Self {
        self.character_count = Some(count);
        self
    }

    pub fn matches(&self, record: &ShotRecord) -> bool {
        self.tags.iter().all(|t| record.setting_tags.contains(t))
            && self.time_of_day.is_none_or(|t| record.time_of_day == t)
            && self.character_count.is_none_or(|c| record.character_count == c)
    }
}

/// Build-once, read-many shot store. Records are keyed (and iterated) by `shot_id`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    records: BTreeMap<String, ShotRecord>,
    by_tag: BTreeMap<String, BTreeSet<String>>,
    by_time: BTreeMap<TimeOfDay, BTreeSet<String>>,
    by_count: BTreeMap<u32, BTreeSet<String>>,
    by_scene: BTreeMap<SceneKey, BTreeSet<String>>,
    max_characters: u32,
}

impl Catalog {
    pub fn empty(max_characters: u32) -> Self {
        Catalog { max_characters, ..Default::default() }
    }

    /// Reads a JSON-lines catalog, keeping only records that pass `rules`.
    ///
    /// Malformed lines are counted as rejected with reason `malformed` and recorded in
    /// the report; ingestion carries on. Only a missing or unsupported header aborts.
    pub fn ingest<R: BufRead>(reader: R, rules: &CurationRules) -> Result<(Catalog, IngestReport), CatalogError> {
        rules.validate()?;
        let mut catalog = Catalog::empty(rules.max_characters);
        let mut report = IngestReport::default();
        let mut header_seen = false;

        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if !header_seen {
                let header: Header =
                    serde_json::from_str(trimmed).map_err(|_| CatalogError::MissingHeader { line: lineno })?;
                if header.catalog_version != CATALOG_VERSION {
                    return Err(CatalogError::UnsupportedVersion(header.catalog_version));
                }
                header_seen = true;
                continue;
            }

            let mut record: ShotRecord = match serde_json::from_str(trimmed) {
                Ok(r) => r,
                Err(e) => {
                    report.format_errors.push(FormatError { line: lineno, message: e.to_string() });
                    report.reject(RejectReason::Malformed);
                    continue;
                }
            };
            record.normalize();
            if let Some(problem) = record.structural_problem() {
                report.format_errors.push(FormatError { line: lineno, message: problem });
                report.reject(RejectReason::Invalid);
                continue;
            }
            if catalog.records.contains_key(&record.shot_id) {
                report.reject(RejectReason::Duplicate);
                continue;
            }
            if !complexity_filter(&record, rules.max_characters) {
                report.reject(RejectReason::Complexity);
                continue;
            }
            if let Some(reason) = curation_failure(&record, rules) {
                report.reject(reason);
                continue;
            }
            catalog.insert(record);
            report.accepted += 1;
        }
        Ok((catalog, report))
    }

    pub fn ingest_str(text: &str, rules: &CurationRules) -> Result<(Catalog, IngestReport), CatalogError> {
        Catalog::ingest(text.as_bytes(), rules)
    }

    fn insert(&mut self, record: ShotRecord) {
        let id = record.shot_id.clone();
        for tag in &record.setting_tags {
            self.by_tag.entry(tag.clone()).or_default().insert(id.clone());
        }
        self.by_time.entry(record.time_of_day).or_default().insert(id.clone());
        self.by_count.entry(record.character_count).or_default().insert(id.clone());
        self.by_scene.entry(record.scene_key()).or_default().insert(id.clone());
        self.records.insert(id, record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn max_characters(&self) -> u32 {
        self.max_characters
    }

    /// All records in `shot_id` order.
    pub fn records(&self) -> impl Iterator<Item = &ShotRecord> {
        self.records.values()
    }

    pub fn lookup(&self, shot_id: &str) -> Result<&ShotRecord, CatalogError> {
        self.records.get(shot_id).ok_or_else(|| CatalogError::NotFound(shot_id.to_string()))
    }

    /// Records satisfying every predicate of `filter`, ordered by `shot_id`.
    pub fn find(&self, filter: &ShotFilter) -> Vec<&ShotRecord> {
        let empty = BTreeSet::new();
        let mut sets: Vec<&BTreeSet<String>> = Vec::new();
        for tag in &filter.tags {
            sets.push(self.by_tag.get(tag).unwrap_or(&empty));
        }
        if let Some(t) = filter.time_of_day {
            sets.push(self.by_time.get(&t).unwrap_or(&empty));
        }
        if let Some(c) = filter.character_count {
            sets.push(self.by_count.get(&c).unwrap_or(&empty));
        }
        sets.sort_by_key(|s| s.len());
        let Some((first, rest)) = sets.split_first() else {
            return self.records.values().collect();
        };
        first
            .iter()
            .filter(|id| rest.iter().all(|s| s.contains(*id)))
            .map(|id| &self.records[id])
            .collect()
    }

    /// Scenes in key order with their member records in `shot_id` order.
    pub fn scenes(&self) -> impl Iterator<Item = (&SceneKey, Vec<&ShotRecord>)> {
        self.by_scene
            .iter()
            .map(|(key, ids)| (key, ids.iter().map(|id| &self.records[id]).collect()))
    }

    /// True when every index entry resolves and each index covers each record exactly once.
    pub fn indices_consistent(&self) -> bool {
        let all: Vec<&BTreeSet<String>> = self
            .by_tag
            .values()
            .chain(self.by_time.values())
            .chain(self.by_count.values())
            .chain(self.by_scene.values())
            .collect();
        let total = |sets: Vec<&BTreeSet<String>>| sets.iter().map(|s| s.len()).sum::<usize>();
        let tag_total: usize = self.records.values().map(|r| r.setting_tags.iter().collect::<BTreeSet<_>>().len()).sum();

        all.iter().all(|ids| ids.iter().all(|id| self.records.contains_key(id)))
            && total(self.by_time.values().collect()) == self.records.len()
            && total(self.by_count.values().collect()) == self.records.len()
            && total(self.by_scene.values().collect()) == self.records.len()
            && total(self.by_tag.values().collect()) == tag_total
    }
}
