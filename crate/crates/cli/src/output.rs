//! Result files: CSV with `# key=value` header lines, JSON documents with a
//! `meta` block, and a plain-text manifest. Data files carry no timestamps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

/// Header fields stamped on every data file.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Meta {
    pub experiment: String,
    pub law: String,
    pub seed: u64,
    pub replicas: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub functional: Option<[f64; 2]>,
}

impl Meta {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("schema_version", SCHEMA_VERSION.to_string()),
            ("experiment", self.experiment.clone()),
            ("law", self.law.clone()),
            ("seed", self.seed.to_string()),
            ("replicas", self.replicas.to_string()),
        ];
        if let Some(n) = &self.n {
            v.push(("n", n.clone()));
        }
        if let Some(h) = self.h {
            v.push(("h", h.to_string()));
        }
        if let Some(w) = self.window {
            v.push(("window", w.to_string()));
        }
        if let Some([a, b]) = self.functional {
            v.push(("functional", format!("{a},{b}")));
        }
        v
    }
}

#[derive(Serialize)]
struct Document<'a, T> {
    schema_version: u32,
    meta: &'a Meta,
    data: &'a T,
}

pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

pub type IoResult<T> = std::result::Result<T, Box<dyn std::error::Error>>;

impl OutputDir {
    pub fn create(dir: &Path) -> IoResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, meta: &Meta, data: &T) -> IoResult<()> {
        let doc = Document {
            schema_version: SCHEMA_VERSION,
            meta,
            data,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_csv<R: Serialize>(&mut self, name: &str, meta: &Meta, rows: &[R]) -> IoResult<()> {
        let mut file = fs::File::create(self.dir.join(name))?;
        for (k, v) in meta.pairs() {
            writeln!(file, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(file);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn write_manifest(&self, m: &Manifest) -> IoResult<()> {
        let mut s = String::new();
        s.push_str(&format!("schema_version = {SCHEMA_VERSION}\n"));
        s.push_str(&format!("experiment = {}\n", m.experiment));
        s.push_str(&format!("code_version = fpp {}\n", env!("CARGO_PKG_VERSION")));
        s.push_str(&format!("base_seed = {}\n", m.seed));
        s.push_str(&format!("threads = {}\n", m.threads));
        s.push_str(&format!("wall_time_s = {:.3}\n", m.wall_time_s));
        s.push_str(&format!("boundary_flags = {}\n", m.boundary_flags));
        for (k, v) in &m.extra {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s.push_str(&format!("outputs = {}\n", self.written.join(", ")));
        s.push_str("\n[config]\n");
        s.push_str(&m.config_echo);
        fs::write(self.dir.join("manifest.txt"), s)?;
        Ok(())
    }
}

pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_s: f64,
    pub boundary_flags: usize,
    pub extra: Vec<(String, String)>,
    pub config_echo: String,
}

/// Reads a CSV written by [`OutputDir::write_csv`], skipping the header lines.
#[cfg(test)]
pub fn read_csv_records(path: &Path) -> IoResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}
