use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;

/// Record written next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
}

/// Destination for a command's files. With `csv_only`, the table marked as
/// primary goes to stdout and everything else is dropped.
pub struct Sink {
    dir: PathBuf,
    csv_only: bool,
    written: Vec<PathBuf>,
    started: Instant,
}

impl Sink {
    pub fn new(dir: &Path, csv_only: bool) -> Result<Self> {
        if !csv_only {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            csv_only,
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        if self.csv_only {
            return Ok(());
        }
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }

    /// A file that is skipped under `--csv-only`.
    pub fn file(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        if self.csv_only {
            return Ok(());
        }
        let mut out = self.create(name)?;
        write(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// The command's main table: a file normally, stdout under `--csv-only`.
    pub fn primary(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        if self.csv_only {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
            return Ok(());
        }
        self.file(name, write)
    }

    pub fn finish(
        mut self,
        command: &str,
        config: serde_json::Value,
        seeds: serde_json::Value,
        inputs: Vec<PathBuf>,
    ) -> Result<()> {
        if self.csv_only {
            return Ok(());
        }
        let mut outputs = self.written.clone();
        outputs.push(self.dir.join("manifest.json"));
        let manifest = RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seeds,
            inputs,
            outputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        self.json("manifest.json", &manifest)?;
        for path in &self.written {
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }
}
