//! Output files. Each file records the command, the resolved configuration
//! and the seed: CSVs as leading `#` lines, JSON summaries as fields.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub struct RunOutput {
    dir: PathBuf,
    command: &'static str,
    config: Value,
    seed: Option<u64>,
    written: Vec<PathBuf>,
}

impl RunOutput {
    pub fn new(dir: &Path, command: &'static str, config: &impl Serialize, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            config: serde_json::to_value(config)?,
            seed,
            written: Vec::new(),
        })
    }

    fn path(&self, suffix: &str) -> PathBuf {
        self.dir.join(format!("{}_{suffix}", self.command.replace('-', "_")))
    }

    pub fn csv<R, I, T>(&mut self, suffix: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        let path = self.path(suffix);
        let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(out, "# command: {}", self.command)?;
        match self.seed {
            Some(s) => writeln!(out, "# seed: {s}")?,
            None => writeln!(out, "# seed: none")?,
        }
        writeln!(out, "# config: {}", serde_json::to_string(&self.config)?)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    pub fn summary(&mut self, result: &impl Serialize) -> Result<()> {
        let path = self.path("summary.json");
        let doc = json!({
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "result": result,
        });
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        Ok(())
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }
}

pub fn num(x: f64) -> String {
    x.to_string()
}
