use std::path::PathBuf;
use std::time::Duration;

use icls_core::llm::LlmSettings;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_DATABASE: &str = "icls.db";
pub const DEFAULT_PIPELINE_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub port: u16,
    pub database_path: PathBuf,
    pub admin_token: Option<String>,
    pub pipeline_timeout: Duration,
    pub llm: LlmSettings,
}

impl Config {
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|key| std::env::var(key).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let port = match lookup("PORT") {
            Some(p) => p
                .trim()
                .parse()
                .map_err(|_| format!("PORT is not a port number: `{p}`"))?,
            None => DEFAULT_PORT,
        };
        let database_path = lookup("DATABASE_URL")
            .map(|url| database_path(&url))
            .transpose()?
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATABASE));
        let pipeline_timeout = match lookup("PIPELINE_TIMEOUT_SECS") {
            Some(s) => Duration::from_secs(
                s.trim()
                    .parse()
                    .map_err(|_| format!("PIPELINE_TIMEOUT_SECS is not a number: `{s}`"))?,
            ),
            None => DEFAULT_PIPELINE_TIMEOUT,
        };
        Ok(Config {
            port,
            database_path,
            admin_token: lookup("ADMIN_BOOTSTRAP_TOKEN").filter(|t| !t.trim().is_empty()),
            pipeline_timeout,
            llm: LlmSettings::from_lookup(&lookup)?,
        })
    }
}

/// Accepts `sqlite://path`, `sqlite:path` or a plain path.
pub fn database_path(url: &str) -> Result<PathBuf, String> {
    let url = url.trim();
    let path = url
        .strip_prefix("sqlite://")
        .or_else(|| url.strip_prefix("sqlite:"))
        .unwrap_or(url);
    if path.is_empty() {
        return Err("DATABASE_URL names no file".into());
    }
    if url.contains("://") && !url.starts_with("sqlite://") {
        return Err(format!("DATABASE_URL must be a SQLite path, got `{url}`"));
    }
    Ok(PathBuf::from(path))
}
