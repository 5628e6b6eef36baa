//! Content-addressed image storage. Images are keyed by the hex SHA-256 of their bytes.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("image store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("image {0} not found")]
    NotFound(String),
    #[error("image content hash {actual} does not match its key {expected}")]
    Integrity { expected: String, actual: String },
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn verify(expected: &str, bytes: Vec<u8>) -> Result<Vec<u8>, StoreError> {
    let actual = content_hash(&bytes);
    if actual != expected {
        return Err(StoreError::Integrity { expected: expected.to_string(), actual });
    }
    Ok(bytes)
}

pub trait ImageStore: Send + Sync {
    /// Stores `bytes` and returns their content hash. Storing the same bytes twice is a no-op.
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError>;

    /// Fetches an image, verifying its content against `hash`.
    fn get(&self, hash: &str) -> Result<Vec<u8>, StoreError>;

    fn contains(&self, hash: &str) -> bool;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    images: RwLock<HashMap<String, Vec<u8>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.images.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Overwrites the stored bytes without rehashing. Used to simulate corruption.
    pub fn corrupt(&self, hash: &str, bytes: Vec<u8>) {
        self.images.write().expect("store lock").insert(hash.to_string(), bytes);
    }
}

impl ImageStore for MemoryStore {
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = content_hash(bytes);
        self.images.write().expect("store lock").entry(hash.clone()).or_insert_with(|| bytes.to_vec());
        Ok(hash)
    }

    fn get(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let bytes = self
            .images
            .read()
            .expect("store lock")
            .get(hash)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(hash.to_string()))?;
        verify(hash, bytes)
    }

    fn contains(&self, hash: &str) -> bool {
        self.images.read().expect("store lock").contains_key(hash)
    }
}

/// Images as `<hash>.png` files in one directory.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(root.as_ref())?;
        Ok(DirStore { root: root.as_ref().to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, hash: &str) -> PathBuf {
        self.root.join(format!("{hash}.png"))
    }
}

impl ImageStore for DirStore {
    fn put(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let hash = content_hash(bytes);
        let path = self.path_for(&hash);
        if !path.exists() {
            let tmp = self.root.join(format!(".{hash}.tmp"));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, &path)?;
        }
        Ok(hash)
    }

    fn get(&self, hash: &str) -> Result<Vec<u8>, StoreError> {
        let bytes = fs::read(self.path_for(hash)).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(hash.to_string()),
            _ => StoreError::Io(e),
        })?;
        verify(hash, bytes)
    }

    fn contains(&self, hash: &str) -> bool {
        self.path_for(hash).exists()
    }
}
