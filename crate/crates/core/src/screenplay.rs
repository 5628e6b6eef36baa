//! Plain-text dialogue scripts.
//!
//! The accepted format has an optional heading and two sections:
//!
//! ```text
//! SCENE: Beach at dusk
//! CHARACTERS:
//! Ethan: Male, 37, thoughtful, carrying hidden regret.
//! Olivia: Female, 34, elegant, composed yet conflicted.
//! DIALOGUE:
//! Ethan: After all these years, do you think we made the wrong choice?
//! Olivia: If I said no, I'd be lying.
//! ```
//!
//! A character line is `Name: gender, age, description`. Gender and age are optional and
//! unknown tokens are tolerated (the token is kept as description text). A dialogue line is
//! `Name: utterance`; an utterance continues over following lines until the next `Name:`
//! prefix or the end of the block. Indented lines are always continuations.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Gender;

pub const MAX_AGE: u32 = 150;
const MAX_NAME_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterDecl {
    pub name: String,
    pub gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age: Option<u32>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueLine {
    pub index: usize,
    pub speaker: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<String>,
    pub characters: Vec<CharacterDecl>,
    pub lines: Vec<DialogueLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ParseError {
    /// 1-based source line.
    pub line: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseErrorKind {
    #[error("script text is empty")]
    EmptyInput,
    #[error("undeclared speaker `{0}`")]
    UndeclaredSpeaker(String),
    #[error("empty dialogue for `{0}`")]
    EmptyDialogue(String),
    #[error("malformed character declaration: {0}")]
    MalformedCharacter(String),
    #[error("missing `{0}` section")]
    MissingSection(&'static str),
    #[error("unexpected line: {0}")]
    UnexpectedLine(String),
}

impl ParseError {
    fn new(line: usize, kind: ParseErrorKind) -> Self {
        ParseError { line, kind }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum Locus {
    Script,
    Character(usize),
    Line(usize),
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locus::Script => f.write_str("script"),
            Locus::Character(i) => write!(f, "characters[{i}]"),
            Locus::Line(i) => write!(f, "lines[{i}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub loci: Vec<Locus>,
}

impl ValidationIssue {
    fn error(code: &str, message: impl Into<String>, loci: Vec<Locus>) -> Self {
        ValidationIssue { severity: Severity::Error, code: code.to_string(), message: message.into(), loci }
    }

    fn warning(code: &str, message: impl Into<String>, loci: Vec<Locus>) -> Self {
        ValidationIssue { severity: Severity::Warning, code: code.to_string(), message: message.into(), loci }
    }
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_name_like(candidate: &str) -> bool {
    let mut chars = candidate.chars();
    let Some(first) = chars.next() else { return false };
    candidate.chars().count() <= MAX_NAME_LEN
        && first.is_alphabetic()
        && chars.all(|c| c.is_alphanumeric() || matches!(c, ' ' | '\'' | '-' | '.' | '_'))
}

/// Splits `Name: rest` when the prefix looks like a character name.
fn speaker_prefix(line: &str) -> Option<(String, &str)> {
    let (name, rest) = line.split_once(':')?;
    let name = normalize_ws(name);
    is_name_like(&name).then_some((name, rest))
}

fn section_header(trimmed: &str) -> Option<Section> {
    let upper = trimmed.to_uppercase();
    match upper.as_str() {
        "CHARACTERS:" => Some(Section::Characters),
        "DIALOGUE:" => Some(Section::Dialogue),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Characters,
    Dialogue,
}

fn parse_age_token(token: &str) -> Option<Result<Option<u32>, String>> {
    match token {
        "?" | "-" => Some(Ok(None)),
        t if !t.is_empty() && t.chars().all(|c| c.is_ascii_digit()) => Some(match t.parse::<u32>() {
            Ok(age) if age <= MAX_AGE => Ok(Some(age)),
            _ => Err(format!("age {t} outside [0, {MAX_AGE}]")),
        }),
        _ => None,
    }
}

fn parse_character(line: &str, lineno: usize) -> Result<CharacterDecl, ParseError> {
    let malformed = |reason: String| ParseError::new(lineno, ParseErrorKind::MalformedCharacter(reason));
    let (name, rest) = line
        .split_once(':')
        .ok_or_else(|| malformed(format!("expected `Name: attributes`, got `{}`", line.trim())))?;
    let name = normalize_ws(name);
    if !is_name_like(&name) {
        return Err(malformed(format!("invalid character name `{name}`")));
    }

    let mut segments: Vec<String> =
        rest.split(',').map(normalize_ws).filter(|s| !s.is_empty()).collect();
    let mut gender = Gender::Unspecified;
    if let Some(g) = segments.first().and_then(|s| Gender::from_token(s)) {
        gender = g;
        segments.remove(0);
    }
    let mut age = None;
    if let Some(parsed) = segments.first().and_then(|s| parse_age_token(s)) {
        age = parsed.map_err(malformed)?;
        segments.remove(0);
    }
    Ok(CharacterDecl { name, gender, age, description: segments.join(", ") })
}

struct PendingLine {
    start: usize,
    speaker: String,
    parts: Vec<String>,
}

impl PendingLine {
    fn finish(self, index: usize) -> Result<DialogueLine, ParseError> {
        let text = normalize_ws(&self.parts.join(" "));
        if text.is_empty() {
            return Err(ParseError::new(self.start, ParseErrorKind::EmptyDialogue(self.speaker)));
        }
        Ok(DialogueLine { index, speaker: self.speaker, text })
    }
}

/// Parses the plain-text script format into a [`Script`].
///
/// Speakers are matched case-insensitively against the declared characters and stored
/// under their declared spelling. Structural checks beyond the grammar (duplicate names,
/// empty sections) are left to [`validate_script`].
pub fn parse_script(text: &str) -> Result<Script, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::new(1, ParseErrorKind::EmptyInput));
    }

    let mut section = Section::Preamble;
    let mut seen_characters = false;
    let mut seen_dialogue = false;
    let mut heading = None;
    let mut characters: Vec<CharacterDecl> = Vec::new();
    let mut by_name: HashMap<String, usize> = HashMap::new();
    let mut lines = Vec::new();
    let mut pending: Option<PendingLine> = None;
    let mut last_lineno = 0;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        last_lineno = lineno;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }

        if let Some(next) = section_header(trimmed) {
            if let Some(p) = pending.take() {
                lines.push(p.finish(lines.len())?);
            }
            match next {
                Section::Characters => seen_characters = true,
                Section::Dialogue => seen_dialogue = true,
                Section::Preamble => {}
            }
            section = next;
            continue;
        }

        match section {
            Section::Preamble => {
                let heading_text = trimmed
                    .split_once(':')
                    .filter(|(key, _)| key.trim().eq_ignore_ascii_case("scene"))
                    .map(|(_, value)| normalize_ws(value));
                match heading_text {
                    Some(h) if heading.is_none() => heading = (!h.is_empty()).then_some(h),
                    _ => {
                        return Err(ParseError::new(
                            lineno,
                            ParseErrorKind::UnexpectedLine(trimmed.to_string()),
                        ))
                    }
                }
            }
            Section::Characters => {
                let decl = parse_character(trimmed, lineno)?;
                by_name.entry(decl.name.to_lowercase()).or_insert(characters.len());
                characters.push(decl);
            }
            Section::Dialogue => {
                let indented = raw.starts_with(char::is_whitespace);
                let prefix = if indented && pending.is_some() { None } else { speaker_prefix(trimmed) };
                match (prefix, pending.as_mut()) {
                    (Some((name, rest)), _) => {
                        let Some(&ci) = by_name.get(&name.to_lowercase()) else {
                            return Err(ParseError::new(lineno, ParseErrorKind::UndeclaredSpeaker(name)));
                        };
                        if let Some(p) = pending.take() {
                            lines.push(p.finish(lines.len())?);
                        }
                        pending = Some(PendingLine {
                            start: lineno,
                            speaker: characters[ci].name.clone(),
                            parts: vec![rest.to_string()],
                        });
                    }
                    (None, Some(p)) => p.parts.push(trimmed.to_string()),
                    (None, None) => {
                        return Err(ParseError::new(
                            lineno,
                            ParseErrorKind::UnexpectedLine(trimmed.to_string()),
                        ))
                    }
                }
            }
        }
    }
    if let Some(p) = pending.take() {
        lines.push(p.finish(lines.len())?);
    }

    if !seen_characters {
        return Err(ParseError::new(last_lineno, ParseErrorKind::MissingSection("CHARACTERS:")));
    }
    if !seen_dialogue {
        return Err(ParseError::new(last_lineno, ParseErrorKind::MissingSection("DIALOGUE:")));
    }
    Ok(Script { heading, characters, lines })
}

/// Canonical writer. `parse_script(&serialize_script(s)) == s` for every script whose
/// strings are whitespace-normalized and whose names are valid.
pub fn serialize_script(script: &Script) -> String {
    let mut out = String::new();
    if let Some(h) = &script.heading {
        out.push_str(&format!("SCENE: {h}\n"));
    }
    out.push_str("CHARACTERS:\n");
    for c in &script.characters {
        let mut fields = vec![c.gender.as_str().to_string()];
        let description_looks_like_age =
            c.description.split(',').next().and_then(|s| parse_age_token(s.trim())).is_some();
        match c.age {
            Some(age) => fields.push(age.to_string()),
            None if description_looks_like_age => fields.push("?".to_string()),
            None => {}
        }
        if !c.description.is_empty() {
            fields.push(c.description.clone());
        }
        out.push_str(&format!("{}: {}\n", c.name, fields.join(", ")));
    }
    out.push_str("DIALOGUE:\n");
    for l in &script.lines {
        out.push_str(&format!("{}: {}\n", l.speaker, l.text));
    }
    out
}

/// Checks every structural invariant of a script. Never fails; an empty result means valid.
pub fn validate_script(script: &Script) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();

    if script.characters.is_empty() {
        issues.push(ValidationIssue::error("no_characters", "no characters declared", vec![Locus::Script]));
    }
    if script.lines.is_empty() {
        issues.push(ValidationIssue::error("no_lines", "no dialogue lines", vec![Locus::Script]));
    }

    let mut first_seen: HashMap<String, usize> = HashMap::new();
    for (i, c) in script.characters.iter().enumerate() {
        if c.name.trim().is_empty() {
            issues.push(ValidationIssue::error("empty_name", "character name is empty", vec![Locus::Character(i)]));
            continue;
        }
        if let Some(age) = c.age.filter(|a| *a > MAX_AGE) {
            issues.push(ValidationIssue::error(
                "age_out_of_range",
                format!("{}: age {age} outside [0, {MAX_AGE}]", c.name),
                vec![Locus::Character(i)],
            ));
        }
        match first_seen.get(&c.name.to_lowercase()) {
            Some(&j) => issues.push(ValidationIssue::error(
                "duplicate_name",
                format!("character `{}` declared more than once", c.name),
                vec![Locus::Character(j), Locus::Character(i)],
            )),
            None => {
                first_seen.insert(c.name.to_lowercase(), i);
            }
        }
        if c.gender == Gender::Unspecified {
            issues.push(ValidationIssue::warning(
                "gender_unspecified",
                format!("{}: gender unspecified, shot alignment ignores gender", c.name),
                vec![Locus::Character(i)],
            ));
        }
    }

    let mut spoke = vec![false; script.characters.len()];
    for (i, l) in script.lines.iter().enumerate() {
        if l.index != i {
            issues.push(ValidationIssue::error(
                "index_gap",
                format!("line index {} at position {i}", l.index),
                vec![Locus::Line(i)],
            ));
        }
        if l.text.trim().is_empty() {
            issues.push(ValidationIssue::error("empty_text", "dialogue text is empty", vec![Locus::Line(i)]));
        }
        match first_seen.get(&l.speaker.to_lowercase()) {
            Some(&ci) => spoke[ci] = true,
            None => issues.push(ValidationIssue::error(
                "undeclared_speaker",
                format!("speaker `{}` is not declared", l.speaker),
                vec![Locus::Line(i)],
            )),
        }
    }
    for (i, c) in script.characters.iter().enumerate() {
        if !spoke[i] && first_seen.get(&c.name.to_lowercase()) == Some(&i) {
            issues.push(ValidationIssue::warning(
                "silent_character",
                format!("{} never speaks", c.name),
                vec![Locus::Character(i)],
            ));
        }
    }
    issues
}

impl Script {
    pub fn character(&self, name: &str) -> Option<&CharacterDecl> {
        self.characters.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn speaker_gender(&self, line: &DialogueLine) -> Gender {
        self.character(&line.speaker).map_or(Gender::Unspecified, |c| c.gender)
    }

    pub fn has_errors(&self) -> bool {
        validate_script(self).iter().any(|i| i.severity == Severity::Error)
    }
}
