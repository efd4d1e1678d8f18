//! Run manifests: one `key=value` per line, UTF-8, insertion order.

use std::fmt::Display;
use std::path::Path;
use std::time::Instant;

use crate::CliError;

pub struct Manifest {
    entries: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        let mut m = Manifest { entries: Vec::new(), started: Instant::now() };
        m.push("command", command);
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_path(&mut self, key: &str, value: &Path) {
        self.push(key, value.display());
    }

    /// Records a duration in seconds under `key`.
    pub fn push_time(&mut self, key: &str, since: Instant) {
        self.push(key, format!("{:.6}", since.elapsed().as_secs_f64()));
    }

    /// Writes the manifest, appending the total wall-clock time first.
    pub fn write(mut self, path: &Path) -> Result<(), CliError> {
        let started = self.started;
        self.push_time("time_total_s", started);
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        std::fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
    }
}
