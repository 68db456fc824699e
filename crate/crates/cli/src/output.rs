use std::collections::BTreeMap;
use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{Cli, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// One plot-ready CSV line.
#[derive(Debug, Clone, Serialize)]
pub struct Row {
    pub x: String,
    pub quantity: String,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Row {
    pub fn value(x: impl ToString, quantity: impl Into<String>, value: f64) -> Row {
        Row { x: x.to_string(), quantity: quantity.into(), value: Some(value), lower: None, upper: None }
    }

    pub fn bracket(x: impl ToString, quantity: impl Into<String>, value: f64, lower: f64, upper: f64) -> Row {
        Row { x: x.to_string(), quantity: quantity.into(), value: Some(value), lower: Some(lower), upper: Some(upper) }
    }
}

pub struct Outcome {
    pub name: String,
    pub anchor: &'static str,
    pub seed: u64,
    /// Digest of every input file read, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub result: Value,
    pub rows: Vec<Row>,
    pub failure: Option<String>,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn config_hash(cli: &Cli, outcome: &Outcome) -> String {
    let config = json!({ "command": cli.command, "format": cli.format, "inputs": outcome.inputs });
    digest(config.to_string().as_bytes())
}

fn render(cli: &Cli, outcome: &Outcome) -> Result<Vec<u8>, Failure> {
    let hash = config_hash(cli, outcome);
    let version = env!("CARGO_PKG_VERSION");
    match cli.format {
        Format::Json => {
            let envelope = json!({
                "tool": "covlab",
                "version": version,
                "command": outcome.name,
                "anchor": outcome.anchor,
                "seed": outcome.seed,
                "config_hash": hash,
                "config": cli.command,
                "result": outcome.result,
            });
            let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| Failure::Input(e.to_string()))?;
            text.push('\n');
            Ok(text.into_bytes())
        }
        Format::Csv => {
            let mut buf = format!(
                "# covlab {version} command={} anchor=\"{}\" seed={} config_hash={hash}\n",
                outcome.name, outcome.anchor, outcome.seed
            )
            .into_bytes();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                for row in &outcome.rows {
                    w.serialize(row).map_err(|e| Failure::Input(e.to_string()))?;
                }
                if outcome.rows.is_empty() {
                    w.write_record(["x", "quantity", "value", "lower", "upper"]).map_err(|e| Failure::Input(e.to_string()))?;
                }
                w.flush().map_err(|e| Failure::Input(e.to_string()))?;
            }
            Ok(buf)
        }
    }
}

pub fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), Failure> {
    let bytes = render(cli, outcome)?;
    match &cli.out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::Input(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(&bytes).map_err(|e| Failure::Input(e.to_string())),
    }
}
