use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Collects rendered files and writes them only once every one is ready.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(String, String)>,
}

impl Outputs {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    /// Writes each file through a temporary in `dir` followed by a rename, so
    /// a reader never sees a partial file.
    pub fn commit(self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        let mut written = Vec::with_capacity(self.files.len());
        for (name, contents) in self.files {
            let target = dir.join(&name);
            let mut tmp = tempfile::NamedTempFile::new_in(dir)
                .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
            tmp.write_all(contents.as_bytes())
                .and_then(|()| tmp.as_file().sync_all())
                .with_context(|| format!("cannot write {}", target.display()))?;
            tmp.persist(&target)
                .map_err(|e| e.error)
                .with_context(|| format!("cannot move output into place at {}", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_and_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested");
        let mut o = Outputs::default();
        o.add("a.csv", "1\n".into());
        o.commit(&out).unwrap();
        let mut o = Outputs::default();
        o.add("a.csv", "2\n".into());
        let paths = o.commit(&out).unwrap();
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "2\n");
        assert_eq!(std::fs::read_dir(&out).unwrap().count(), 1);
    }
}
