//! File naming and provenance stamps shared by all subcommands.

use std::path::Path;

use anyhow::Context;
use serde::Serialize;
use wettingsim::io::write_atomic;
use wettingsim::ModelParams;

pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("WETTINGSIM_GIT_DESCRIBE"))
}

/// `J{j}_K{k}` with the shortest decimal form of each value.
pub fn point_tag(p: &ModelParams) -> String {
    format!("J{}_K{}", p.j(), p.k())
}

/// The `J=.. K=..` comment line; `fit` reads it back.
pub fn point_meta(p: &ModelParams) -> String {
    format!("J={} K={}", p.j(), p.k())
}

pub fn provenance(config_hash: &str) -> Vec<String> {
    vec![format!("version={}", version()), format!("config_hash={config_hash}")]
}

/// Reads `J=` and `K=` tokens from comment lines.
pub fn parse_point_meta(meta: &[String]) -> Option<(f64, f64)> {
    let (mut j, mut k) = (None, None);
    for token in meta.iter().flat_map(|l| l.split_whitespace()) {
        if let Some(v) = token.strip_prefix("J=") {
            j = v.parse().ok();
        } else if let Some(v) = token.strip_prefix("K=") {
            k = v.parse().ok();
        }
    }
    Some((j?, k?))
}

pub fn meta_value<'a>(meta: &'a [String], key: &str) -> Option<&'a str> {
    meta.iter()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .map(str::trim)
}

/// JSON object `{version, config_hash, ...body}`.
#[derive(Serialize)]
pub struct Stamped<'a, T: Serialize> {
    pub version: String,
    pub config_hash: &'a str,
    #[serde(flatten)]
    pub body: T,
}

pub fn write_json<T: Serialize>(path: &Path, config_hash: &str, body: T) -> anyhow::Result<()> {
    let stamped = Stamped {
        version: version(),
        config_hash,
        body,
    };
    let mut text = serde_json::to_string_pretty(&stamped)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_meta_round_trips() {
        let p = ModelParams::new(2.5, 0.1).unwrap();
        let meta = vec!["version=x".to_string(), point_meta(&p)];
        assert_eq!(parse_point_meta(&meta), Some((2.5, 0.1)));
        assert_eq!(point_tag(&p), "J2.5_K0.1");
        assert_eq!(meta_value(&meta, "version"), Some("x"));
    }
}
