//! Plain-text `key = value` config files, merged beneath explicit flags.

use std::fs;

pub const SUBCOMMANDS: [&str; 6] = ["datagen", "critval", "monitor", "experiment63", "covest", "portfolio"];

/// Location of `--config` and its value in `argv`, if present.
fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p.to_string());
        }
    }
    None
}

/// Turn config lines into flag tokens. `true` enables a switch, `false`
/// leaves it off.
pub fn config_tokens(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected `key = value`", i + 1))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: invalid key `{key}`", i + 1));
        }
        match value {
            "true" => out.push(format!("--{key}")),
            "false" => {}
            v => {
                out.push(format!("--{key}"));
                out.push(v.to_string());
            }
        }
    }
    Ok(out)
}

/// Insert config tokens right after the subcommand so that later explicit
/// flags override them. Unknown keys surface as ordinary flag errors.
pub fn merge(argv: Vec<String>) -> Result<Vec<String>, ConfigError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Io(format!("{path}: {e}")))?;
    let tokens = config_tokens(&text).map_err(ConfigError::Invalid)?;
    let pos = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.as_str()))
        .map_or(argv.len(), |i| i + 1);
    let mut out = argv[..pos].to_vec();
    out.extend(tokens);
    out.extend_from_slice(&argv[pos..]);
    Ok(out)
}

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Invalid(String),
}
