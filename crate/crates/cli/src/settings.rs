use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qa2sum::engine::RunConfig;
use toml::{Table, Value};

/// Parses the right-hand side of `--set key=value`. Anything that is not a
/// valid TOML value is taken as a bare string.
fn parse_value(raw: &str) -> Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Sets a dotted key, creating intermediate tables.
pub fn apply_override(root: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("invalid override key {key:?}");
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        table = match entry {
            Value::Table(t) => t,
            _ => bail!("override {key:?}: {part:?} is not a table"),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

pub fn parse_assignment(raw: &str) -> Result<(String, Value)> {
    let (key, value) = raw.split_once('=').with_context(|| format!("--set expects key=value, got {raw:?}"))?;
    Ok((key.trim().to_string(), parse_value(value.trim())))
}

/// Loads the config file (if any), applies `overrides` in order and validates.
pub fn load_config(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let raw = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            raw.parse::<Table>().with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Table::new(),
    };
    for (key, value) in overrides {
        apply_override(&mut table, key, value.clone())?;
    }
    let cfg: RunConfig = Value::Table(table).try_into().context("invalid config")?;
    cfg.validate()?;
    Ok(cfg)
}
