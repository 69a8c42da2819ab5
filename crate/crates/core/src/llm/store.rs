// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

/// One file per request hash; the file holds the raw completion text.
pub struct FixtureStore {
    dir: PathBuf,
    writes: Mutex<()>,
}

impl FixtureStore {
    pub fn new(dir: &Path) -> FixtureStore {
        FixtureStore {
            dir: dir.to_path_buf(),
            writes: Mutex::new(()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, hash: &str) -> io::Result<PathBuf> {
        if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a sha256 hex digest"));
        }
        Ok(self.dir.join(hash))
    }

    pub fn get(&self, hash: &str) -> io::Result<Option<String>> {
        match fs::read_to_string(self.path(hash)?) {
            Ok(text) => Ok(Some(text)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn put(&self, hash: &str, text: &str) -> io::Result<()> {
        let path = self.path(hash)?;
        let _guard = self.writes.lock().unwrap();
        fs::create_dir_all(&self.dir)?;
        crate::util::write_atomic(&path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn get_put() {
        let dir = tempfile::tempdir().unwrap();
        let store = FixtureStore::new(&dir.path().join("nested"));
        let h = "a".repeat(64);
        assert_eq!(store.get(&h).unwrap(), None);
        store.put(&h, "RSH shifts right").unwrap();
        assert_eq!(store.get(&h).unwrap().as_deref(), Some("RSH shifts right"));
        assert!(store.get("../etc/passwd").is_err());
    }
}
