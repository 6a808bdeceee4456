//! Report emission: every output embeds the resolved configuration and the
//! seed; the timestamp line can be suppressed for byte-identical reruns.

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::AppError;

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn key(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }

    pub fn parse(s: &str) -> Result<Self, AppError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(AppError::Config(format!("unknown format `{other}`"))),
        }
    }
}

pub struct ReportSink {
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub no_timestamp: bool,
}

/// Prints to stdout, treating a closed pipe as a no-op instead of a panic.
pub fn say(text: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "{text}");
}

impl ReportSink {
    fn emit(&self, text: &str) -> Result<(), AppError> {
        match &self.out {
            None => {
                use std::io::Write;
                let mut stdout = std::io::stdout().lock();
                let _ = write!(stdout, "{text}");
                Ok(())
            }
            Some(path) => std::fs::write(path, text)
                .map_err(|e| AppError::Failure(format!("cannot write {}: {e}", path.display()))),
        }
    }

    fn timestamp() -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    }

    /// CSV with `#`-prefixed provenance header lines.
    pub fn write_csv(&self, body: &str) -> Result<(), AppError> {
        let mut text = String::new();
        text.push_str(&format!("# config: {}\n", self.config));
        text.push_str(&format!("# seed: {}\n", self.seed));
        if !self.no_timestamp {
            text.push_str(&format!("# timestamp_unix: {}\n", Self::timestamp()));
        }
        text.push_str(body);
        self.emit(&text)
    }

    /// JSON document wrapping the payload with config and seed.
    pub fn write_json(&self, payload: serde_json::Value) -> Result<(), AppError> {
        let mut doc = serde_json::Map::new();
        doc.insert("config".into(), self.config.clone());
        doc.insert("seed".into(), serde_json::json!(self.seed));
        if !self.no_timestamp {
            doc.insert(
                "timestamp_unix".into(),
                serde_json::json!(Self::timestamp()),
            );
        }
        doc.insert("result".into(), payload);
        let text = serde_json::to_string_pretty(&serde_json::Value::Object(doc))
            .map_err(|e| AppError::Failure(e.to_string()))?;
        self.emit(&format!("{text}\n"))
    }
}
