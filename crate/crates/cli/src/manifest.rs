use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::io;
use crate::settings::Settings;

/// Record of one run: resolved configuration, file digests and timings.
pub struct RunManifest {
    subcommand: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    timings: Vec<(String, f64)>,
    clock: Instant,
}

impl RunManifest {
    pub fn start(subcommand: &'static str) -> Self {
        Self { subcommand, inputs: vec![], outputs: vec![], timings: vec![], clock: Instant::now() }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.to_path_buf());
    }

    /// Closes the current timing stage.
    pub fn lap(&mut self, stage: &str) {
        self.timings.push((stage.to_string(), self.clock.elapsed().as_secs_f64()));
        self.clock = Instant::now();
    }

    fn digests(paths: &[PathBuf]) -> Result<Value, CliError> {
        paths
            .iter()
            .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": io::sha256(p)? })))
            .collect::<Result<Vec<_>, CliError>>()
            .map(Value::Array)
    }

    pub fn write(self, settings: &Settings, to: &Path) -> Result<(), CliError> {
        let config: Map<String, Value> =
            settings.resolved().iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect();
        let seed = settings.resolved().get("seed").and_then(|s| s.parse::<u64>().ok());
        let timings: Map<String, Value> = self.timings.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
        let doc = json!({
            "subcommand": self.subcommand,
            "version": env!("CARGO_PKG_VERSION"),
            "config": config,
            "seed": seed,
            "inputs": Self::digests(&self.inputs)?,
            "outputs": Self::digests(&self.outputs)?,
            "timings_seconds": timings,
        });
        let text = serde_json::to_string_pretty(&doc).expect("json") + "\n";
        io::write(to, &text)
    }
}
