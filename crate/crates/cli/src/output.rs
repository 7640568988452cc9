//! Output directories whose files disappear unless the command succeeds.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

pub const REPORT_FILE: &str = "report.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const VOCAB_FILE: &str = "vocab.txt";

pub struct OutDir {
    dir: PathBuf,
    created: bool,
    files: Vec<PathBuf>,
    committed: bool,
}

impl OutDir {
    pub fn create(dir: &Path) -> std::io::Result<OutDir> {
        let created = !dir.exists();
        fs::create_dir_all(dir)?;
        Ok(OutDir { dir: dir.to_path_buf(), created, files: Vec::new(), committed: false })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Path for `name`, removed again if the command fails.
    pub fn claim(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        if !self.files.contains(&p) {
            self.files.push(p.clone());
        }
        p
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> std::io::Result<PathBuf> {
        let p = self.claim(name);
        fs::write(&p, contents)?;
        Ok(p)
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for OutDir {
    fn drop(&mut self) {
        if self.committed {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
            let mut tmp = f.as_os_str().to_owned();
            tmp.push(".tmp");
            let _ = fs::remove_file(PathBuf::from(tmp));
        }
        if self.created {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_hash(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// `key: value` provenance record written as `manifest.txt`.
#[derive(Default)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, threads: usize, resolved: &str) -> Manifest {
        let mut m = Manifest::default();
        m.add("version", format!("mlnmt {}", env!("CARGO_PKG_VERSION")));
        m.add("command", command);
        m.add("seed", seed);
        m.add("threads", threads);
        m.add("config", resolved);
        m
    }

    pub fn add(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string().replace('\n', " ")));
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let h = file_hash(path)?;
        self.add("input", format!("{} sha256:{h}", path.display()));
        Ok(())
    }

    /// Hashes every claimed output and writes the manifest into `out`.
    pub fn finish(mut self, out: &mut OutDir) -> std::io::Result<()> {
        let files = out.files.clone();
        for f in &files {
            if f.exists() {
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                self.add("output", format!("{name} sha256:{}", file_hash(f)?));
            }
        }
        let text: String = self.entries.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
        out.write(MANIFEST_FILE, text)?;
        Ok(())
    }
}
