//! Content-addressed store for corpora and trained models.
//!
//! A key is the SHA-256 of the stage kind, the crate version and the JSON
//! of every input that determines the stage output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::datagen::Dataset;
use crate::nn::{load_model, save_model, History, Model};

pub fn key<S: Serialize>(kind: &str, inputs: &S) -> String {
    let json = serde_json::to_string(inputs).expect("cache inputs serialize");
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(env!("CARGO_PKG_VERSION").as_bytes());
    h.update([0]);
    h.update(json.as_bytes());
    hex::encode(h.finalize())
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
    enabled: bool,
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<(), HarnessError>) -> Result<(), HarnessError> {
    let tmp = path.with_extension("partial");
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

impl Cache {
    /// A disabled cache never reads or writes.
    pub fn new(dir: PathBuf, enabled: bool) -> Self {
        Self { dir, enabled }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    fn prepare(&self) -> Result<(), HarnessError> {
        std::fs::create_dir_all(&self.dir).map_err(|e| HarnessError::io(&self.dir, e))
    }

    pub fn dataset_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("data-{key}.bin"))
    }

    pub fn model_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("model-{key}.bin"))
    }

    fn history_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("model-{key}.history.json"))
    }

    pub fn load_dataset(&self, key: &str) -> Option<Dataset> {
        if !self.enabled {
            return None;
        }
        let path = self.dataset_path(key);
        if !path.exists() {
            return None;
        }
        match Dataset::load(&path) {
            Ok(ds) => Some(ds),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    pub fn store_dataset(&self, key: &str, ds: &Dataset) -> Result<(), HarnessError> {
        if !self.enabled {
            return Ok(());
        }
        self.prepare()?;
        let path = self.dataset_path(key);
        write_atomic(&path, |tmp| ds.save(tmp).map_err(|e| HarnessError::Stage(format!("saving corpus: {e}"))))
    }

    pub fn load_model(&self, key: &str) -> Option<(Model<f32>, History)> {
        if !self.enabled {
            return None;
        }
        let (mp, hp) = (self.model_path(key), self.history_path(key));
        if !mp.exists() || !hp.exists() {
            return None;
        }
        let history = std::fs::read_to_string(&hp)
            .ok()
            .and_then(|t| serde_json::from_str::<History>(&t).ok());
        match (load_model(&mp), history) {
            (Ok(m), Some(h)) => Some((m, h)),
            _ => {
                log::warn!("ignoring unreadable cache entry {}", mp.display());
                None
            }
        }
    }

    pub fn store_model(&self, key: &str, model: &Model<f32>, history: &History) -> Result<(), HarnessError> {
        if !self.enabled {
            return Ok(());
        }
        self.prepare()?;
        let hp = self.history_path(key);
        let json = serde_json::to_string(history).expect("history serializes");
        write_atomic(&hp, |tmp| std::fs::write(tmp, json).map_err(|e| HarnessError::io(tmp, e)))?;
        let mp = self.model_path(key);
        write_atomic(&mp, |tmp| save_model(model, tmp).map_err(|e| HarnessError::Stage(format!("saving model: {e}"))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_depend_on_kind_and_inputs() {
        let a = key("data", &(1, 2));
        assert_eq!(a, key("data", &(1, 2)));
        assert_ne!(a, key("model", &(1, 2)));
        assert_ne!(a, key("data", &(1, 3)));
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn disabled_cache_is_inert() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path().join("c"), false);
        let sys = crate::signal::System::build(2, 2, 1, None, 0).unwrap();
        let ds = crate::datagen::generate_dataset(&sys.phi, 1, crate::datagen::SnrSpec::Fixed(10.0), 4, 0).unwrap();
        cache.store_dataset("k", &ds).unwrap();
        assert!(!dir.path().join("c").exists());
        assert!(cache.load_dataset("k").is_none());

        let cache = Cache::new(dir.path().join("c"), true);
        cache.store_dataset("k", &ds).unwrap();
        assert_eq!(cache.load_dataset("k").unwrap(), ds);
        std::fs::write(cache.dataset_path("k"), b"junk").unwrap();
        assert!(cache.load_dataset("k").is_none());
    }
}
