//! Flat key=value configuration with flags > config file > defaults
//! precedence, and the run manifest written beside every output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::CliError;

/// Resolved configuration: every key present with its final value. Optional
/// keys use the empty string for "unset".
#[derive(Debug, Clone)]
pub struct Resolved {
    map: BTreeMap<String, String>,
}

/// Parse a flat key=value file. Blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Validation(format!("config line {}: expected key=value", lineno + 1))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

impl Resolved {
    pub fn new(defaults: &[(&str, &str)]) -> Self {
        Resolved {
            map: defaults
                .iter()
                .map(|&(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }

    /// Overlay a config file. Keys outside this subcommand's schema are
    /// ignored so a run manifest can be fed back in directly.
    pub fn overlay_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        for (k, v) in parse_kv(&text)? {
            if self.map.contains_key(&k) {
                self.map.insert(k, v);
            }
        }
        Ok(())
    }

    /// Overlay an explicitly passed flag value.
    pub fn set_flag(&mut self, key: &str, value: Option<String>) {
        if let Some(v) = value {
            self.map.insert(key.to_string(), v);
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.map
            .get(key)
            .unwrap_or_else(|| panic!("key '{key}' missing from schema"))
    }

    /// None when the key is unset (empty).
    pub fn get_opt(&self, key: &str) -> Option<&str> {
        let v = self.get(key);
        if v.is_empty() {
            None
        } else {
            Some(v)
        }
    }

    pub fn get_usize(&self, key: &str) -> Result<usize, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Validation(format!("{key}: expected an integer, got '{}'", self.get(key))))
    }

    pub fn get_u64(&self, key: &str) -> Result<u64, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Validation(format!("{key}: expected an integer, got '{}'", self.get(key))))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64, CliError> {
        self.get(key)
            .parse()
            .map_err(|_| CliError::Validation(format!("{key}: expected a number, got '{}'", self.get(key))))
    }

    pub fn get_bool(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "1" => Ok(true),
            "false" | "0" => Ok(false),
            other => Err(CliError::Validation(format!(
                "{key}: expected true or false, got '{other}'"
            ))),
        }
    }

    pub fn get_opt_usize(&self, key: &str) -> Result<Option<usize>, CliError> {
        match self.get_opt(key) {
            None => Ok(None),
            Some(_) => self.get_usize(key).map(Some),
        }
    }

    /// Comma-separated list.
    pub fn get_list(&self, key: &str) -> Vec<String> {
        self.get(key)
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.map.iter()
    }
}

/// Write `<subcommand>-manifest.txt` into the output directory: the full
/// resolved config plus subcommand, tool version, and output file names.
pub fn write_manifest(
    out_dir: &Path,
    subcommand: &str,
    cfg: &Resolved,
    outputs: &[(&str, String)],
) -> Result<(), CliError> {
    let mut lines: BTreeMap<String, String> = cfg
        .entries()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    lines.insert("subcommand".into(), subcommand.into());
    lines.insert("tool_version".into(), env!("CARGO_PKG_VERSION").into());
    for (name, file) in outputs {
        lines.insert(format!("output.{name}"), file.clone());
    }
    let body: String = lines
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let path = out_dir.join(format!("{subcommand}-manifest.txt"));
    fs::write(&path, body)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
