//! Output directory handling: every artifact gets a `<name>.meta.json`
//! sidecar echoing the resolved configuration.

use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    command: &'static str,
    config: Value,
}

impl Outputs {
    pub fn new(dir: PathBuf, command: &'static str, config: Value) -> Result<Self, CliError> {
        fs::create_dir_all(&dir)?;
        Ok(Outputs { dir, command, config })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), bytes)?;
        let meta = json!({
            "artifact": "empiric",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "file": name,
            "config": self.config,
        });
        fs::write(self.dir.join(format!("{name}.meta.json")), pretty(&meta)?)?;
        println!("{}", self.dir.join(name).display());
        Ok(())
    }

    pub fn csv(
        &mut self,
        name: &str,
        fill: impl FnOnce(&mut Vec<u8>) -> empiric_core::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(empiric_core::Error::from)?;
        for row in rows {
            w.write_record(row).map_err(empiric_core::Error::from)?;
        }
        let buf = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.write(name, &buf)
    }

    pub fn json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = pretty(value)?;
        self.write(name, &text)
    }
}

fn pretty(value: &impl Serialize) -> Result<Vec<u8>, CliError> {
    let mut text = serde_json::to_vec_pretty(value).map_err(empiric_core::Error::from)?;
    text.push(b'\n');
    Ok(text)
}

#[derive(Clone, Debug, Serialize)]
pub struct Audit {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
#[serde(transparent)]
pub struct Audits(Vec<Audit>);

impl Audits {
    pub fn check(&mut self, name: &'static str, passed: bool, detail: impl Into<String>) {
        self.0.push(Audit {
            name,
            passed,
            detail: detail.into(),
        });
    }

    pub fn finish(&self) -> Result<(), CliError> {
        let failed: Vec<String> = self
            .0
            .iter()
            .filter(|a| !a.passed)
            .map(|a| format!("{} ({})", a.name, a.detail))
            .collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Audit(failed.join("; ")))
        }
    }
}
