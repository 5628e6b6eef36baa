//! The pipeline shared by the CLI and the API: parse, match, configure, open a session.

use std::path::Path;

use previz_core::catalog::CatalogError;
use previz_core::prompting::{select, Choices, PresetError, SelectionError};
use previz_core::retrieval::{compile_query, RetrievalError, Retriever};
use previz_core::screenplay::{parse_script, serialize_script, validate_script, Severity};
use previz_core::session::{create_session, Clock};
use previz_core::store::content_hash;
use previz_core::{
    Catalog, CurationRules, DirectorInput, MenuSchema, PresetLibrary, PromptSpec, ScoreWeights, Script, Session,
    ShotGroup,
};

use crate::error::{ApiError, ErrorCode};

pub struct Engine {
    pub library: PresetLibrary,
    pub schema: MenuSchema,
    pub catalog: Catalog,
    pub retriever: Retriever,
}

fn read(path: &Path, what: &str) -> Result<String, ApiError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ApiError::not_found(format!("{what} file {} does not exist", path.display())),
        _ => ApiError::parse(format!("cannot read {what} file {}: {e}", path.display())),
    })
}

impl Engine {
    pub fn new(library: PresetLibrary, catalog: Catalog, weights: ScoreWeights) -> Result<Self, ApiError> {
        library.validate().map_err(|e| ApiError::parse(e.to_string()).at("presets"))?;
        let schema = MenuSchema::from_library(&library).map_err(|e| ApiError::parse(e.to_string()).at("presets.weights"))?;
        let retriever = Retriever::with_test_embedder(weights).map_err(|e| ApiError::parse(e.to_string()))?;
        Ok(Engine { library, schema, catalog, retriever })
    }

    /// Loads presets and catalog from disk with the default curation rules.
    pub fn load(presets: &Path, catalog: &Path, weights: ScoreWeights) -> Result<Self, ApiError> {
        let library = PresetLibrary::from_json(&read(presets, "presets")?).map_err(|e: PresetError| {
            ApiError::parse(format!("presets: {e}")).at("presets")
        })?;
        let (catalog, _) = Catalog::ingest_str(&read(catalog, "catalog")?, &CurationRules::default())
            .map_err(|e: CatalogError| ApiError::parse(format!("catalog: {e}")).at("catalog"))?;
        Engine::new(library, catalog, weights)
    }

    /// Parses and validates a script. Validation warnings are allowed; errors are not.
    pub fn parse(&self, text: &str) -> Result<Script, ApiError> {
        let script = parse_script(text).map_err(|e| ApiError::parse(e.to_string()).at(format!("line {}", e.line)))?;
        if let Some(issue) = validate_script(&script).into_iter().find(|i| i.severity == Severity::Error) {
            let locus = issue.loci.first().map(|l| l.to_string()).unwrap_or_else(|| "script".into());
            return Err(ApiError::parse(format!("{}: {}", issue.code, issue.message)).at(locus));
        }
        Ok(script)
    }

    /// Top-`k` groups; an empty list when nothing survives the fixed filters.
    pub fn match_groups(&self, script: &Script, input: &DirectorInput, k: usize) -> Result<Vec<ShotGroup>, ApiError> {
        if k == 0 {
            return Err(ApiError::parse("k must be at least 1").at("k"));
        }
        let query = compile_query(script, input, self.catalog.max_characters())
            .map_err(|e| ApiError::parse(e.to_string()).at("query"))?;
        match self.retriever.match_groups(script, &query, &self.catalog, k) {
            Ok(groups) => Ok(groups),
            Err(RetrievalError::NoMatch) => Ok(Vec::new()),
            Err(RetrievalError::Embed(e)) => Err(ApiError::backend(e.to_string())),
            Err(e) => Err(ApiError::parse(e.to_string()).at("query")),
        }
    }

    pub fn settings(&self, choices: &Choices) -> Result<PromptSpec, ApiError> {
        select(&self.schema, &self.library, choices).map_err(|e| match &e {
            SelectionError::UnknownStyle(_) => ApiError::new(ErrorCode::UnknownStyle, e.to_string()).at("settings.director_style"),
            SelectionError::UnknownToken { category, .. } => ApiError::parse(e.to_string()).at(format!("settings.{category}")),
            SelectionError::UnknownCategory(c) => ApiError::parse(e.to_string()).at(format!("settings.{c}")),
            _ => ApiError::parse(e.to_string()).at("settings"),
        })
    }

    pub fn open_session(
        &self,
        id: String,
        script: Script,
        group: ShotGroup,
        settings: PromptSpec,
        seed: u64,
        clock: &dyn Clock,
    ) -> Result<Session, ApiError> {
        create_session(id, script, group, settings, seed, clock).map_err(|e| ApiError::conflict(e.to_string()))
    }
}

/// Content-derived script id: equal scripts share an id.
pub fn script_id(script: &Script) -> String {
    format!("sc-{}", &content_hash(serialize_script(script).as_bytes())[..16])
}

/// Session id derived from everything that determines its frames, so that CLI and API runs
/// over the same inputs produce the same manifest.
pub fn session_id(script: &Script, group_id: &str, seed: u64) -> String {
    let key = format!("{}\n{group_id}\n{seed}", serialize_script(script));
    format!("se-{}", &content_hash(key.as_bytes())[..16])
}
