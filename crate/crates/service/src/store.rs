//! Content-addressed artifact store on the local filesystem.
//!
//! ```text
//! <root>/scenes/<sha256>.json     canonical scene documents
//! <root>/plans/<id>/request.json  normalized plan request
//! <root>/plans/<id>/map.bin       best radio map (+ map.json sidecar)
//! <root>/plans/<id>/initial.bin   radio map at the first starting point
//! <root>/plans/<id>/weights.bin   weight map
//! <root>/plans/<id>/result.json   plan result, written last
//! ```
//!
//! Every file goes through write-then-rename, so an interrupted job leaves
//! earlier artifacts intact.

use std::io;
use std::path::{Path, PathBuf};

use radioplan_core::export::write_atomic;
use sha2::{Digest, Sha256};

pub const RESULT_FILE: &str = "result.json";
pub const REQUEST_FILE: &str = "request.json";
pub const MAP_FILE: &str = "map.bin";
pub const INITIAL_MAP_FILE: &str = "initial.bin";
pub const WEIGHTS_FILE: &str = "weights.bin";

#[derive(Clone, Debug)]
pub struct Store {
    root: PathBuf,
}

/// Lowercase hex SHA-256.
pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Ids are generated by the service; anything else cannot name a stored
/// artifact.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(root.join("scenes"))?;
        std::fs::create_dir_all(root.join("plans"))?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn scene_path(&self, id: &str) -> PathBuf {
        self.root.join("scenes").join(format!("{id}.json"))
    }

    pub fn put_scene(&self, id: &str, canonical: &[u8]) -> io::Result<()> {
        write_atomic(&self.scene_path(id), canonical).map_err(into_io)
    }

    pub fn scene_bytes(&self, id: &str) -> io::Result<Vec<u8>> {
        std::fs::read(self.scene_path(id))
    }

    /// Ids of all stored scenes, sorted.
    pub fn scene_ids(&self) -> io::Result<Vec<String>> {
        let mut ids: Vec<String> = std::fs::read_dir(self.root.join("scenes"))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".json")).map(str::to_string))
            .filter(|id| is_valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }

    pub fn plan_dir(&self, id: &str) -> PathBuf {
        self.root.join("plans").join(id)
    }

    pub fn plan_file(&self, id: &str, name: &str) -> PathBuf {
        self.plan_dir(id).join(name)
    }

    /// Ids of all plan directories, sorted.
    pub fn plan_ids(&self) -> io::Result<Vec<String>> {
        let mut ids: Vec<String> = std::fs::read_dir(self.root.join("plans"))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter(|id| is_valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

fn into_io(e: radioplan_core::Error) -> io::Error {
    match e {
        radioplan_core::Error::Io(e) => e,
        other => io::Error::other(other.to_string()),
    }
}
