//! JSON envelopes and output files.

use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use crate::Failure;

#[derive(Serialize)]
struct Meta {
    generated_unix: u64,
    runtime_s: f64,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    status: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<Meta>,
    report: &'a T,
}

/// Where and how a command writes its report.
pub struct Sink {
    pub out: Option<std::path::PathBuf>,
    pub deterministic: bool,
    pub started: Instant,
}

impl Sink {
    pub fn emit<T: Serialize>(&self, command: &str, passed: bool, report: &T) -> Result<(), Failure> {
        let meta = (!self.deterministic).then(|| Meta {
            generated_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            runtime_s: self.started.elapsed().as_secs_f64(),
        });
        let env = Envelope { command, status: if passed { "pass" } else { "fail" }, meta, report };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        match &self.out {
            Some(path) => write_file(path, &text),
            None => {
                std::io::stdout().write_all(text.as_bytes())?;
                Ok(())
            }
        }
    }
}

pub fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(format!("cannot write {}: {e}", path.display())))
}

pub fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
