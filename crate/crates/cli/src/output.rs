//! CSV and report emission. Every file starts with the config hash and seed.

use anyhow::{Context, Result};
use infhit::SubDistribution;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Real(f64),
    Count(u64),
    Flag(bool),
    Missing,
}

impl Cell {
    fn render(self) -> String {
        match self {
            // 17 significant digits round-trip any double
            Self::Real(v) => format!("{v:.16e}"),
            Self::Count(n) => n.to_string(),
            Self::Flag(b) => u8::from(b).to_string(),
            Self::Missing => String::new(),
        }
    }
}

pub struct Artifacts {
    dir: PathBuf,
    stamp: String,
    written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, config_hash: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            stamp: format!("# config_hash={config_hash} seed={seed}"),
            written: Vec::new(),
        })
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Cell>>) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "{}", self.stamp)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.into_iter().map(Cell::render))?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Writes `{t, <column>}` for one law.
    pub fn cdf(&mut self, name: &str, column: &str, law: &SubDistribution) -> Result<()> {
        let rows = law
            .grid()
            .iter()
            .zip(law.values())
            .map(|(&t, &v)| vec![Cell::Real(t), Cell::Real(v)])
            .collect();
        self.csv(name, &["t", column], rows)
    }

    /// Writes the report; the timestamp is confined to its header.
    pub fn report(&mut self, command: &str, body: &Report, config_echo: &str) -> Result<()> {
        let path = self.dir.join("report.txt");
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let mut text = String::new();
        writeln!(text, "{}", self.stamp)?;
        writeln!(text, "# generated_unix={now}")?;
        writeln!(text, "command: {command}")?;
        writeln!(text, "status: {}", body.status())?;
        text.push('\n');
        for line in &body.lines {
            writeln!(text, "{line}")?;
        }
        if !body.failures.is_empty() {
            writeln!(text, "\nfailures:")?;
            for f in &body.failures {
                writeln!(text, "  - {f}")?;
            }
        }
        if !body.invalid.is_empty() {
            writeln!(text, "\ninvalid:")?;
            for f in &body.invalid {
                writeln!(text, "  - {f}")?;
            }
        }
        writeln!(text, "\nartifacts:")?;
        for p in &self.written {
            let name = p.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
            writeln!(text, "  - {name}")?;
        }
        writeln!(text, "\nconfig:\n{config_echo}")?;
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }
}

/// Human-readable result of one command.
#[derive(Debug, Default)]
pub struct Report {
    pub lines: Vec<String>,
    pub failures: Vec<String>,
    pub invalid: Vec<String>,
}

impl Report {
    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn value(&mut self, name: &str, v: f64) {
        self.lines.push(format!("{name} = {v:.6e}"));
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.invalid.is_empty()
    }

    fn status(&self) -> &'static str {
        if self.passed() {
            "pass"
        } else {
            "fail"
        }
    }
}
