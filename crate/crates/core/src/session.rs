//! Storyboard sessions.
//!
//! A session binds one establishing frame plus one frame per dialogue line to the shots of
//! a chosen [`ShotGroup`]. Rendering appends revisions; reshot regenerates only pinned
//! frames and never touches the others. Revision 1 of a frame is kept forever so the
//! original can be compared with the latest.
//!
//! Seeds are derived from the session's base seed, the frame and the revision number, so a
//! session replays identically while every new revision still gets a fresh seed.

use std::collections::BTreeSet;
use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::generation::{self, Backend, BackendKind, GenerationError, GenerationRequest, ImageEncoding, Resolution};
use crate::prompting::{compose, serialize_prompt, MenuSchema, PromptSpec};
use crate::retrieval::ShotGroup;
use crate::screenplay::Script;
use crate::store::{ImageStore, StoreError};

pub const MANIFEST_VERSION: u64 = 1;
pub const ESTABLISHING_LINE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FrameId(pub u32);

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultRef {
    pub request_id: String,
    /// Content hash of the PNG; the file is stored as `<image>.png`.
    pub image: String,
    pub format: ImageEncoding,
    pub backend: BackendKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub revision_no: u32,
    pub request: GenerationRequest,
    pub result: ResultRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: FrameId,
    /// `-1` for the establishing frame, otherwise the dialogue line index.
    pub line_index: i64,
    pub source_shot_id: String,
    pub source_image_uri: String,
    pub revisions: Vec<Revision>,
    pub pinned: bool,
}

impl Frame {
    pub fn latest(&self) -> Option<&Revision> {
        self.revisions.last()
    }

    pub fn original(&self) -> Option<&Revision> {
        self.revisions.first()
    }
}

pub trait Clock: Send + Sync {
    /// Milliseconds since the Unix epoch.
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("group has {group} frames but the script needs {needed} (1 establishing + {lines} lines)")]
    Mismatch { group: usize, needed: usize, lines: usize },
    #[error("unknown frame {0}")]
    UnknownFrame(FrameId),
    #[error("no frames are pinned")]
    NoPinnedFrames,
    #[error("session has not been rendered")]
    NotRendered,
    #[error("unsupported manifest version: {0}")]
    ManifestVersion(String),
    #[error("manifest integrity: {0}")]
    Integrity(String),
    #[error("manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything a render needs besides the session.
pub struct RenderContext<'a> {
    pub backend: &'a dyn Backend,
    pub store: &'a dyn ImageStore,
    pub schema: &'a MenuSchema,
    pub resolution: Resolution,
    pub clock: &'a dyn Clock,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FrameOutcome {
    Rendered { revision_no: u32 },
    Skipped,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStatus {
    pub frame_id: FrameId,
    #[serde(flatten)]
    pub outcome: FrameOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderReport {
    pub frames: Vec<FrameStatus>,
}

impl RenderReport {
    pub fn failed(&self) -> Vec<FrameId> {
        self.frames.iter().filter(|f| matches!(f.outcome, FrameOutcome::Failed { .. })).map(|f| f.frame_id).collect()
    }

    pub fn rendered(&self) -> usize {
        self.frames.iter().filter(|f| matches!(f.outcome, FrameOutcome::Rendered { .. })).count()
    }

    pub fn is_complete(&self) -> bool {
        self.failed().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub base_seed: u64,
    pub script: Script,
    pub chosen_group: ShotGroup,
    pub frames: Vec<Frame>,
    pub settings: PromptSpec,
    pub created_at: u64,
    pub updated_at: u64,
}

/// Seed for one revision of one frame.
pub fn revision_seed(base_seed: u64, frame: FrameId, revision_no: u32) -> u64 {
    let digest = Sha256::new()
        .chain_update(base_seed.to_le_bytes())
        .chain_update(frame.0.to_le_bytes())
        .chain_update(revision_no.to_le_bytes())
        .finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Builds a session with one unrendered, unpinned frame per group member.
pub fn create_session(
    session_id: impl Into<String>,
    script: Script,
    group: ShotGroup,
    settings: PromptSpec,
    base_seed: u64,
    clock: &dyn Clock,
) -> Result<Session, SessionError> {
    if group.dialogue_frames.len() != script.lines.len() {
        return Err(SessionError::Mismatch {
            group: group.dialogue_frames.len() + 1,
            needed: script.lines.len() + 1,
            lines: script.lines.len(),
        });
    }
    let frames = group
        .frames()
        .enumerate()
        .map(|(i, shot)| Frame {
            frame_id: FrameId(i as u32),
            line_index: i as i64 - 1,
            source_shot_id: shot.record.shot_id.clone(),
            source_image_uri: shot.record.image_uri.clone(),
            revisions: Vec::new(),
            pinned: false,
        })
        .collect();
    let now = clock.now_ms();
    Ok(Session {
        session_id: session_id.into(),
        base_seed,
        script,
        chosen_group: group,
        frames,
        settings,
        created_at: now,
        updated_at: now,
    })
}

struct Job {
    index: usize,
    revision_no: u32,
    request: GenerationRequest,
}

impl Session {
    pub fn frame(&self, id: FrameId) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == id)
    }

    pub fn pinned(&self) -> Vec<FrameId> {
        self.frames.iter().filter(|f| f.pinned).map(|f| f.frame_id).collect()
    }

    pub fn is_rendered(&self) -> bool {
        self.frames.iter().any(|f| !f.revisions.is_empty())
    }

    pub fn speaker_of(&self, frame: &Frame) -> Option<&str> {
        usize::try_from(frame.line_index).ok().and_then(|i| self.script.lines.get(i)).map(|l| l.speaker.as_str())
    }

    pub fn line_text_of(&self, frame: &Frame) -> Option<&str> {
        usize::try_from(frame.line_index).ok().and_then(|i| self.script.lines.get(i)).map(|l| l.text.as_str())
    }

    fn job(&self, index: usize, settings: &PromptSpec, ctx: &RenderContext<'_>, lock_seed: bool) -> Job {
        let frame = &self.frames[index];
        let revision_no = frame.revisions.len() as u32 + 1;
        let seed = match (lock_seed, frame.latest()) {
            (true, Some(prev)) => prev.request.seed,
            _ => revision_seed(self.base_seed, frame.frame_id, revision_no),
        };
        let prompt = serialize_prompt(&compose(settings, ctx.schema));
        let request = GenerationRequest {
            request_id: format!("{}/{}/r{}", self.session_id, frame.frame_id, revision_no),
            base_image_uri: frame.source_image_uri.clone(),
            prompt,
            user_prompt: settings.user_prompt.clone(),
            seed,
            width: ctx.resolution.width,
            height: ctx.resolution.height,
        }
        .with_resolution(ctx.resolution);
        Job { index, revision_no, request }
    }

    fn run_jobs(&mut self, jobs: Vec<Job>, skipped: Vec<usize>, ctx: &RenderContext<'_>) -> RenderReport {
        let outcomes: Vec<(Job, Result<ResultRef, String>)> = jobs
            .into_par_iter()
            .map(|job| {
                let outcome = generation::generate(&job.request, ctx.backend)
                    .map_err(|e: GenerationError| e.to_string())
                    .and_then(|result| {
                        let image = ctx.store.put(&result.image_bytes).map_err(|e: StoreError| e.to_string())?;
                        Ok(ResultRef { request_id: result.request_id, image, format: result.format, backend: result.backend })
                    });
                (job, outcome)
            })
            .collect();

        let mut statuses: Vec<(usize, FrameStatus)> = skipped
            .into_iter()
            .map(|i| (i, FrameStatus { frame_id: self.frames[i].frame_id, outcome: FrameOutcome::Skipped }))
            .collect();
        for (job, outcome) in outcomes {
            let frame = &mut self.frames[job.index];
            let status = match outcome {
                Ok(result) => {
                    frame.revisions.push(Revision { revision_no: job.revision_no, request: job.request, result });
                    FrameOutcome::Rendered { revision_no: job.revision_no }
                }
                Err(error) => FrameOutcome::Failed { error },
            };
            statuses.push((job.index, FrameStatus { frame_id: frame.frame_id, outcome: status }));
        }
        statuses.sort_by_key(|(i, _)| *i);
        self.updated_at = ctx.clock.now_ms();
        RenderReport { frames: statuses.into_iter().map(|(_, s)| s).collect() }
    }

    /// Renders frames from the current settings. Without `force` only frames that have no
    /// revision yet are rendered, so a repeated call is a no-op and a call after a partial
    /// failure fills the gaps. With `force` every frame gains a revision.
    pub fn render_all(&mut self, ctx: &RenderContext<'_>, force: bool) -> RenderReport {
        let settings = self.settings.clone();
        let (todo, skipped): (Vec<usize>, Vec<usize>) =
            (0..self.frames.len()).partition(|&i| force || self.frames[i].revisions.is_empty());
        if todo.is_empty() {
            return RenderReport {
                frames: skipped
                    .into_iter()
                    .map(|i| FrameStatus { frame_id: self.frames[i].frame_id, outcome: FrameOutcome::Skipped })
                    .collect(),
            };
        }
        let jobs = todo.into_iter().map(|i| self.job(i, &settings, ctx, false)).collect();
        self.run_jobs(jobs, skipped, ctx)
    }

    /// Adopts `new_settings` and regenerates every pinned frame. Unpinned frames are left
    /// exactly as they were. With `lock_seed` a frame reuses its previous seed.
    pub fn reshot(&mut self, new_settings: PromptSpec, ctx: &RenderContext<'_>, lock_seed: bool) -> Result<RenderReport, SessionError> {
        let (pinned, unpinned): (Vec<usize>, Vec<usize>) = (0..self.frames.len()).partition(|&i| self.frames[i].pinned);
        if pinned.is_empty() {
            return Err(SessionError::NoPinnedFrames);
        }
        self.settings = new_settings;
        let settings = self.settings.clone();
        let jobs = pinned.into_iter().map(|i| self.job(i, &settings, ctx, lock_seed)).collect();
        Ok(self.run_jobs(jobs, unpinned, ctx))
    }

    fn set_pins(&mut self, ids: &[FrameId], value: bool) -> Result<(), SessionError> {
        let known: BTreeSet<FrameId> = self.frames.iter().map(|f| f.frame_id).collect();
        if let Some(id) = ids.iter().find(|id| !known.contains(id)) {
            return Err(SessionError::UnknownFrame(*id));
        }
        for frame in &mut self.frames {
            if ids.contains(&frame.frame_id) {
                frame.pinned = value;
            }
        }
        Ok(())
    }

    /// Pins every listed frame, or none if any id is unknown.
    pub fn pin(&mut self, ids: &[FrameId]) -> Result<(), SessionError> {
        self.set_pins(ids, true)
    }

    pub fn unpin(&mut self, ids: &[FrameId]) -> Result<(), SessionError> {
        self.set_pins(ids, false)
    }

    /// Structural invariants: frame/line bijection and contiguous revision numbering.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.frames.len() != self.script.lines.len() + 1 {
            return Err(format!("{} frames for {} lines", self.frames.len(), self.script.lines.len()));
        }
        for (i, frame) in self.frames.iter().enumerate() {
            if frame.frame_id != FrameId(i as u32) || frame.line_index != i as i64 - 1 {
                return Err(format!("frame at position {i} has id {} and line {}", frame.frame_id, frame.line_index));
            }
            for (r, rev) in frame.revisions.iter().enumerate() {
                if rev.revision_no != r as u32 + 1 {
                    return Err(format!("frame {i}: revision {} at position {r}", rev.revision_no));
                }
            }
        }
        Ok(())
    }

    /// Side-by-side view: latest and original revision of every frame.
    pub fn board(&self) -> Board {
        Board {
            session_id: self.session_id.clone(),
            group_id: self.chosen_group.group_id.clone(),
            settings: self.settings.clone(),
            frames: self
                .frames
                .iter()
                .map(|f| BoardFrame {
                    frame_id: f.frame_id,
                    line_index: f.line_index,
                    speaker: self.speaker_of(f).map(str::to_string),
                    line_text: self.line_text_of(f).map(str::to_string),
                    source_shot_id: f.source_shot_id.clone(),
                    source_image_uri: f.source_image_uri.clone(),
                    pinned: f.pinned,
                    revision_count: f.revisions.len(),
                    latest: f.latest().map(ImageRef::from),
                    original: f.original().map(ImageRef::from),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub revision_no: u32,
    pub image: String,
    pub seed: u64,
}

impl From<&Revision> for ImageRef {
    fn from(r: &Revision) -> Self {
        ImageRef { revision_no: r.revision_no, image: r.result.image.clone(), seed: r.request.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardFrame {
    pub frame_id: FrameId,
    pub line_index: i64,
    pub speaker: Option<String>,
    pub line_text: Option<String>,
    pub source_shot_id: String,
    pub source_image_uri: String,
    pub pinned: bool,
    pub revision_count: usize,
    pub latest: Option<ImageRef>,
    pub original: Option<ImageRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Board {
    pub session_id: String,
    pub group_id: String,
    pub settings: PromptSpec,
    pub frames: Vec<BoardFrame>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatestRef {
    pub revision_no: u32,
    pub request: GenerationRequest,
    pub image_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub frame_id: FrameId,
    pub line_index: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line_text: Option<String>,
    pub source_shot_id: String,
    pub source_image_uri: String,
    pub pinned: bool,
    pub latest: Option<LatestRef>,
    pub revisions: Vec<Revision>,
}

/// Export format handed to the cinematographer. Images live beside the manifest as
/// `<sha256>.png`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u64,
    pub session_id: String,
    pub base_seed: u64,
    pub created_at: u64,
    pub updated_at: u64,
    pub script: Script,
    pub chosen_group: ShotGroup,
    pub settings: PromptSpec,
    pub frames: Vec<ManifestFrame>,
}

impl Manifest {
    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    /// Every image hash the manifest references.
    pub fn images(&self) -> BTreeSet<String> {
        self.frames.iter().flat_map(|f| f.revisions.iter().map(|r| r.result.image.clone())).collect()
    }
}

pub fn image_file_name(hash: &str) -> String {
    format!("{hash}.png")
}

pub fn export_manifest(session: &Session) -> Result<Manifest, SessionError> {
    if !session.is_rendered() {
        return Err(SessionError::NotRendered);
    }
    let frames = session
        .frames
        .iter()
        .map(|f| ManifestFrame {
            frame_id: f.frame_id,
            line_index: f.line_index,
            speaker: session.speaker_of(f).map(str::to_string),
            line_text: session.line_text_of(f).map(str::to_string),
            source_shot_id: f.source_shot_id.clone(),
            source_image_uri: f.source_image_uri.clone(),
            pinned: f.pinned,
            latest: f.latest().map(|r| LatestRef {
                revision_no: r.revision_no,
                request: r.request.clone(),
                image_file: image_file_name(&r.result.image),
            }),
            revisions: f.revisions.clone(),
        })
        .collect();
    Ok(Manifest {
        manifest_version: MANIFEST_VERSION,
        session_id: session.session_id.clone(),
        base_seed: session.base_seed,
        created_at: session.created_at,
        updated_at: session.updated_at,
        script: session.script.clone(),
        chosen_group: session.chosen_group.clone(),
        settings: session.settings.clone(),
        frames,
    })
}

/// Rebuilds a session from manifest bytes, checking every referenced image in `store`
/// against its content hash.
pub fn import_manifest(bytes: &[u8], store: &dyn ImageStore) -> Result<Session, SessionError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes)?;
    match raw.get("manifest_version") {
        Some(v) if v.as_u64() == Some(MANIFEST_VERSION) => {}
        Some(v) => return Err(SessionError::ManifestVersion(v.to_string())),
        None => return Err(SessionError::ManifestVersion("missing".into())),
    }
    let manifest: Manifest = serde_json::from_value(raw)?;
    let integrity = |m: String| SessionError::Integrity(m);

    for hash in manifest.images() {
        store.get(&hash).map_err(|e| integrity(e.to_string()))?;
    }

    let session = Session {
        session_id: manifest.session_id,
        base_seed: manifest.base_seed,
        script: manifest.script,
        chosen_group: manifest.chosen_group,
        settings: manifest.settings,
        created_at: manifest.created_at,
        updated_at: manifest.updated_at,
        frames: manifest
            .frames
            .iter()
            .map(|f| Frame {
                frame_id: f.frame_id,
                line_index: f.line_index,
                source_shot_id: f.source_shot_id.clone(),
                source_image_uri: f.source_image_uri.clone(),
                revisions: f.revisions.clone(),
                pinned: f.pinned,
            })
            .collect(),
    };
    session.check_invariants().map_err(integrity)?;

    for (mf, frame) in manifest.frames.iter().zip(&session.frames) {
        let expected_latest = frame.latest().map(|r| LatestRef {
            revision_no: r.revision_no,
            request: r.request.clone(),
            image_file: image_file_name(&r.result.image),
        });
        if mf.latest != expected_latest {
            return Err(integrity(format!("frame {}: latest does not match its last revision", frame.frame_id)));
        }
        if mf.speaker.as_deref() != session.speaker_of(frame) || mf.line_text.as_deref() != session.line_text_of(frame) {
            return Err(integrity(format!("frame {}: line does not match the script", frame.frame_id)));
        }
    }
    Ok(session)
}
