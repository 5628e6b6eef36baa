//! Headless batch path: script + catalog + presets + query in, manifest and PNGs out.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use previz_core::prompting::Choices;
use previz_core::session::{export_manifest, FixedClock, RenderContext, SystemClock};
use previz_core::{Backend, DirStore, DirectorInput, Resolution, ScoreWeights};

use crate::engine::{session_id, Engine};
use crate::error::{ApiError, ErrorCode};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub script: PathBuf,
    pub catalog: PathBuf,
    pub presets: PathBuf,
    /// Inline JSON, or a path to a JSON file.
    pub query: String,
    pub settings: Option<PathBuf>,
    pub out: PathBuf,
    pub k: usize,
    /// With a seed the run is fully reproducible, timestamps included.
    pub seed: Option<u64>,
    pub weights: ScoreWeights,
    pub resolution: Resolution,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub session_id: String,
    pub group_id: String,
    pub frames: usize,
    pub manifest: PathBuf,
}

fn read_text(path: &Path, what: &str) -> Result<String, ApiError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ApiError::not_found(format!("{what} file {} does not exist", path.display())),
        _ => ApiError::parse(format!("cannot read {what} file {}: {e}", path.display())),
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, ApiError> {
    serde_json::from_str(text).map_err(|e| ApiError::parse(format!("{what}: {e}")).at(what.to_string()))
}

fn load_query(arg: &str) -> Result<DirectorInput, ApiError> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') {
        return parse_json(trimmed, "query");
    }
    parse_json(&read_text(Path::new(arg), "query")?, "query")
}

pub fn run(options: &RunOptions, backend: &dyn Backend) -> Result<RunSummary, ApiError> {
    let script_text = read_text(&options.script, "script")?;
    let engine = Engine::load(&options.presets, &options.catalog, options.weights)?;
    let script = engine.parse(&script_text)?;
    let query = load_query(&options.query)?;
    let choices: Choices = match &options.settings {
        Some(path) => parse_json(&read_text(path, "settings")?, "settings")?,
        None => Choices::default(),
    };
    let settings = engine.settings(&choices)?;

    let group = engine
        .match_groups(&script, &query, options.k)?
        .into_iter()
        .next()
        .ok_or_else(|| ApiError::new(ErrorCode::NoMatch, "no scene satisfies the fixed attributes"))?;

    let (seed, clock): (u64, Arc<dyn previz_core::session::Clock>) = match options.seed {
        Some(seed) => (seed, Arc::new(FixedClock(0))),
        None => (rand::random(), Arc::new(SystemClock)),
    };
    let id = session_id(&script, &group.group_id, seed);
    let group_id = group.group_id.clone();
    let mut session = engine.open_session(id, script, group, settings, seed, clock.as_ref())?;

    let store = DirStore::open(&options.out).map_err(|e| ApiError::conflict(format!("output directory: {e}")).at("out"))?;
    let ctx = RenderContext {
        backend,
        store: &store,
        schema: &engine.schema,
        resolution: options.resolution,
        clock: clock.as_ref(),
    };
    let report = session.render_all(&ctx, false);

    let manifest_path = options.out.join(MANIFEST_FILE);
    if session.is_rendered() {
        let manifest = export_manifest(&session).map_err(|e| ApiError::conflict(e.to_string()))?;
        std::fs::write(&manifest_path, manifest.to_json())
            .map_err(|e| ApiError::conflict(format!("writing {}: {e}", manifest_path.display())))?;
    }
    if let Some(failed) = report.failed().first() {
        return Err(ApiError::backend(format!(
            "{} of {} frames failed to render (first: frame {failed})",
            report.failed().len(),
            session.frames.len()
        )));
    }
    Ok(RunSummary { session_id: session.session_id, group_id, frames: session.frames.len(), manifest: manifest_path })
}
