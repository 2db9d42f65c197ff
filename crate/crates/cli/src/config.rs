//! `key = value` config files and the run record embedded in outputs.

use std::fs;
use std::path::Path;

use serde::Serialize;

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
    #[error("--config needs a path")]
    MissingPath,
}

/// Turns a config file into long flags. `true` becomes a bare switch and
/// `false` drops the key.
pub fn file_to_flags(path: &Path) -> Result<Vec<String>, ConfigError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: shown.clone(),
        source,
    })?;
    let mut flags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            path: shown.clone(),
            line: i + 1,
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: shown.clone(),
                line: i + 1,
            });
        }
        match value {
            "true" => flags.push(format!("--{key}")),
            "false" => {}
            v => flags.push(format!("--{key}={v}")),
        }
    }
    Ok(flags)
}

/// Splices config-file flags in right after the subcommand so that flags
/// given on the command line, which come later, take precedence.
pub fn expand_args(args: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or(ConfigError::MissingPath)?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let flags = file_to_flags(Path::new(&path))?;
    // program name, then the first non-flag token is the subcommand
    let insert_at = rest
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    let tail = rest.split_off(insert_at.min(rest.len()));
    rest.extend(flags);
    rest.extend(tail);
    Ok(rest)
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig<'a, T: Serialize> {
    pub artifact: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub args: &'a T,
}

impl<'a, T: Serialize> RunConfig<'a, T> {
    pub fn new(command: &'a str, args: &'a T) -> Self {
        Self {
            artifact: "ecsim",
            version: ARTIFACT_VERSION,
            command,
            args,
        }
    }

    pub fn json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serialises")
    }

    /// One-line form for CSV comment headers.
    pub fn csv_header(&self) -> String {
        format!("# run_config: {}\n", serde_json::to_string(self).expect("run config serialises"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_comments_and_switches() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "# header\nlattice = ring\nsites=6  # trailing\ndense = true\nforce_dense_large = false\n").unwrap();
        let flags = file_to_flags(f.path()).unwrap();
        assert_eq!(flags, vec!["--lattice=ring", "--sites=6", "--dense"]);
    }

    #[test]
    fn rejects_lines_without_equals() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "lattice ring").unwrap();
        assert!(matches!(file_to_flags(f.path()), Err(ConfigError::Syntax { line: 1, .. })));
    }

    #[test]
    fn file_flags_precede_command_line_flags() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sites = 6\ng = 2").unwrap();
        let args: Vec<String> = ["ecsim", "spectrum", "--config", f.path().to_str().unwrap(), "--sites", "4"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let out = expand_args(args).unwrap();
        assert_eq!(out, vec!["ecsim", "spectrum", "--sites=6", "--g=2", "--sites", "4"]);
    }
}
