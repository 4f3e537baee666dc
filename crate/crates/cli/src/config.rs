//! Key=value configuration documents with optional `[section]` headers.
//!
//! Accepted sections: `[fixture]`, `[embedding]`, `[checks]`, `[output]`.
//! A flat document (or a single line with `;`-separated pairs) is also
//! accepted; keys are unambiguous across sections. Errors carry the line.

use anyhow::{bail, Result};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct Settings {
    pub fixture: Option<String>,
    pub embed: Option<String>,
    pub f: Option<String>,
    pub p: Option<f64>,
    pub k: Option<u32>,
    pub pieces: Option<String>,
    pub peripherals: Option<Vec<usize>>,
    pub piece_k: Option<u32>,
    pub shared_small: bool,
    pub checks: Vec<String>,
    pub seed: Option<u64>,
    pub delta: Option<String>,
    pub samples: Option<u64>,
    pub stability_n: Option<u32>,
    pub trials: Option<u64>,
    pub instances: Option<usize>,
    pub max_m: Option<u64>,
    pub set_size: Option<usize>,
    pub out_dir: Option<String>,
    pub timings: bool,
}

const SECTIONS: [&str; 4] = ["fixture", "embedding", "checks", "output"];

pub fn parse_config(text: &str) -> Result<Settings> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(section) = line.strip_prefix('[') {
            let Some(name) = section.strip_suffix(']') else {
                bail!("config line {line_no}: unterminated section header `{line}`");
            };
            if !SECTIONS.contains(&name.trim()) {
                bail!("config line {line_no}: unknown section `[{}]`", name.trim());
            }
            continue;
        }
        for piece in line.split(';') {
            let piece = piece.trim();
            if piece.is_empty() {
                continue;
            }
            let Some((k, v)) = piece.split_once('=') else {
                bail!("config line {line_no}: expected `key = value`, got `{piece}`");
            };
            pairs.push((line_no, k.trim().to_lowercase(), v.trim().to_string()));
        }
    }

    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut s = Settings::default();
    for (line_no, key, value) in pairs {
        if let Some(prev) = seen.insert(key.clone(), line_no) {
            bail!("config line {line_no}: key `{key}` already set on line {prev}");
        }
        apply_pair(&mut s, &key, &value)
            .map_err(|e| anyhow::anyhow!("config line {line_no}: {e}"))?;
    }
    Ok(s)
}

fn apply_pair(s: &mut Settings, key: &str, value: &str) -> Result<()> {
    let parse_f64 = |v: &str| -> Result<f64> {
        v.parse().map_err(|_| anyhow::anyhow!("bad number `{v}` for `{key}`"))
    };
    let parse_u64 = |v: &str| -> Result<u64> {
        v.parse().map_err(|_| anyhow::anyhow!("bad integer `{v}` for `{key}`"))
    };
    let parse_bool = |v: &str| -> Result<bool> {
        match v {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => bail!("bad boolean `{v}` for `{key}`"),
        }
    };
    match key {
        "fixture" | "kind" => s.fixture = Some(value.to_string()),
        "embed" | "embedding" => s.embed = Some(value.to_string()),
        "f" => s.f = Some(value.to_string()),
        "p" => s.p = Some(parse_f64(value)?),
        "k" => s.k = Some(parse_u64(value)? as u32),
        "pieces" => s.pieces = Some(value.to_string()),
        "peripherals" => {
            let mut out = Vec::new();
            for tok in value.split(',') {
                out.push(
                    tok.trim()
                        .parse::<usize>()
                        .map_err(|_| anyhow::anyhow!("bad factor index `{tok}`"))?,
                );
            }
            s.peripherals = Some(out);
        }
        "piece-k" | "piece_k" => s.piece_k = Some(parse_u64(value)? as u32),
        "shared-small" | "shared_small" => s.shared_small = parse_bool(value)?,
        "check" | "checks" | "run" => {
            s.checks = value.split(',').map(|c| c.trim().to_lowercase()).collect()
        }
        "seed" => s.seed = Some(parse_u64(value)?),
        "delta" => s.delta = Some(value.to_string()),
        "samples" => s.samples = Some(parse_u64(value)?),
        "n" => s.stability_n = Some(parse_u64(value)? as u32),
        "trials" => s.trials = Some(parse_u64(value)?),
        "instances" => s.instances = Some(parse_u64(value)? as usize),
        "max-m" | "max_m" => s.max_m = Some(parse_u64(value)?),
        "size" => s.set_size = Some(parse_u64(value)? as usize),
        "dir" | "out" | "out-dir" | "out_dir" => s.out_dir = Some(value.to_string()),
        "timings" => s.timings = parse_bool(value)?,
        _ => bail!("unknown key `{key}`"),
    }
    Ok(())
}

impl Settings {
    /// Overlay: entries of `other` win where present.
    pub fn overlaid_with(mut self, other: Settings) -> Settings {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field;
                }
            };
        }
        take!(fixture);
        take!(embed);
        take!(f);
        take!(p);
        take!(k);
        take!(pieces);
        take!(peripherals);
        take!(piece_k);
        take!(seed);
        take!(delta);
        take!(samples);
        take!(stability_n);
        take!(trials);
        take!(instances);
        take!(max_m);
        take!(set_size);
        take!(out_dir);
        if !other.checks.is_empty() {
            self.checks = other.checks;
        }
        self.shared_small |= other.shared_small;
        self.timings |= other.timings;
        self
    }
}
