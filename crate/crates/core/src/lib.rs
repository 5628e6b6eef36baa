//! Script-to-storyboard pre-visualization engine.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`screenplay`] parses a two-section dialogue script into a [`Script`].
//! 2. [`catalog`] ingests curated shot metadata (JSON-lines) into an indexed [`Catalog`].
//! 3. [`retrieval`] compiles director attributes into a [`SceneQuery`], scores shots and
//!    assembles dialogue-aligned [`ShotGroup`]s.
//! 4. [`prompting`] turns two-tier menu selections into a weighted prompt, and
//!    [`generation`] renders frames through a pluggable [`Backend`].
//! 5. [`session`] keeps the storyboard: pins, reshots, revision history and manifest export.

pub mod catalog;
pub mod generation;
pub mod prompting;
pub mod retrieval;
pub mod screenplay;
pub mod session;
pub mod store;

mod types;

pub use catalog::{Catalog, CurationRules, IngestReport, ShotRecord, ShotScale};
pub use generation::{
    Backend, BackendKind, GenerationError, GenerationRequest, GenerationResult, HealthStatus,
    HttpBackend, MockBackend, Resolution,
};
pub use prompting::{
    Category, MenuSchema, PresetLibrary, PromptSpec, Tier, WeightedPromptInput, WeightedTerm,
};
pub use retrieval::{
    Constraints, DirectorInput, Embedder, EmbeddingVector, HashedBagOfWords, SceneKey, SceneQuery,
    ScoreWeights, ScoredShot, ShotGroup,
};
pub use screenplay::{CharacterDecl, DialogueLine, Script};
pub use session::{Frame, FrameId, Manifest, Session};
pub use store::{DirStore, ImageStore, MemoryStore};
pub use types::{Gender, TimeOfDay};
