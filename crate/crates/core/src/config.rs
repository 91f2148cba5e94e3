//! `key = value` run configuration shared by the generator, trainer and
//! experiment.
//!
//! ```text
//! # comment
//! days = 25
//! noise_std = 80
//! max_epochs = 300
//!
//! [link Cf]
//! max_epochs = 200
//! ```
//!
//! Keys before the first `[link ...]` header are global. A link section may
//! only set trainer keys and overrides them for that link. Unknown keys are
//! errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::synthgen::SynthConfig;
use crate::trainer::LmConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Link id given to generated series.
    pub link_id: String,
    pub synth: SynthConfig,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            link_id: "Bb".to_string(),
            synth: SynthConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn parse_num<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("bad value `{value}` for `{key}`")))
}

/// Applies a trainer key. Returns `Ok(false)` if `key` is not a trainer key.
fn set_lm(lm: &mut LmConfig, line: usize, key: &str, value: &str) -> Result<bool> {
    match key {
        "mu_init" => lm.mu_init = parse_num(line, key, value)?,
        "mu_inc" => lm.mu_inc = parse_num(line, key, value)?,
        "mu_dec" => lm.mu_dec = parse_num(line, key, value)?,
        "mu_max" => lm.mu_max = parse_num(line, key, value)?,
        "max_epochs" => lm.max_epochs = parse_num(line, key, value)?,
        "error_goal" => lm.error_goal = parse_num(line, key, value)?,
        "seed" => lm.seed = parse_num(line, key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        // Override sections as (link, line, key, value), applied once the
        // global trainer settings are known.
        let mut overrides: Vec<(String, usize, String, String)> = Vec::new();
        let mut section: Option<String> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let raw = raw.split('#').next().unwrap_or("").trim();
            if raw.is_empty() {
                continue;
            }
            if let Some(inner) = raw.strip_prefix('[') {
                let inner = inner
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(line, "unterminated section header"))?;
                let mut parts = inner.split_whitespace();
                match (parts.next(), parts.next(), parts.next()) {
                    (Some("link"), Some(id), None) => section = Some(id.to_string()),
                    _ => return Err(Error::parse(line, format!("bad section `[{inner}]`"))),
                }
                continue;
            }
            let (key, value) = raw
                .split_once('=')
                .ok_or_else(|| Error::parse(line, format!("expected `key = value`, found `{raw}`")))?;
            let (key, value) = (key.trim(), value.trim());

            if let Some(link) = &section {
                let mut probe = LmConfig::default();
                if !set_lm(&mut probe, line, key, value)? {
                    return Err(Error::parse(
                        line,
                        format!("key `{key}` is not allowed in a link section"),
                    ));
                }
                overrides.push((link.clone(), line, key.to_string(), value.to_string()));
                continue;
            }

            if set_lm(&mut cfg.experiment.lm, line, key, value)? {
                continue;
            }
            let s = &mut cfg.synth;
            match key {
                "link_id" => cfg.link_id = value.to_string(),
                "days" => s.days = parse_num(line, key, value)?,
                "base_flow" => s.base_flow = parse_num(line, key, value)?,
                "morning_center" => s.morning_peak.center = parse_num(line, key, value)?,
                "morning_width" => s.morning_peak.width = parse_num(line, key, value)?,
                "morning_amplitude" => s.morning_peak.amplitude = parse_num(line, key, value)?,
                "evening_center" => s.evening_peak.center = parse_num(line, key, value)?,
                "evening_width" => s.evening_peak.width = parse_num(line, key, value)?,
                "evening_amplitude" => s.evening_peak.amplitude = parse_num(line, key, value)?,
                "noise_std" => s.noise_std = parse_num(line, key, value)?,
                "ar_coeff" => s.ar_coeff = parse_num(line, key, value)?,
                "synth_seed" => s.seed = parse_num(line, key, value)?,
                "window_len" => cfg.experiment.window_len = parse_num(line, key, value)?,
                "hidden" => cfg.experiment.hidden = parse_num(line, key, value)?,
                "train_count" => cfg.experiment.train_count = parse_num(line, key, value)?,
                other => return Err(Error::parse(line, format!("unknown key `{other}`"))),
            }
        }

        for (link, line, key, value) in overrides {
            let base = cfg.experiment.lm.clone();
            let lm = cfg.experiment.link_overrides.entry(link).or_insert(base);
            set_lm(lm, line, &key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.experiment.lm.validate()?;
        for lm in self.experiment.link_overrides.values() {
            lm.validate()?;
        }
        if self.experiment.window_len == 0 || self.experiment.hidden == 0 {
            return Err(Error::invalid("window_len and hidden must be >= 1"));
        }
        if self.experiment.train_count == 0 {
            return Err(Error::invalid("train_count must be >= 1"));
        }
        Ok(())
    }

    /// Serialises every setting; [`parse`](Self::parse) reads it back.
    pub fn to_text(&self) -> String {
        let s = &self.synth;
        let e = &self.experiment;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("link_id", self.link_id.clone());
        kv("days", s.days.to_string());
        kv("base_flow", s.base_flow.to_string());
        kv("morning_center", s.morning_peak.center.to_string());
        kv("morning_width", s.morning_peak.width.to_string());
        kv("morning_amplitude", s.morning_peak.amplitude.to_string());
        kv("evening_center", s.evening_peak.center.to_string());
        kv("evening_width", s.evening_peak.width.to_string());
        kv("evening_amplitude", s.evening_peak.amplitude.to_string());
        kv("noise_std", s.noise_std.to_string());
        kv("ar_coeff", s.ar_coeff.to_string());
        kv("synth_seed", s.seed.to_string());
        kv("window_len", e.window_len.to_string());
        kv("hidden", e.hidden.to_string());
        kv("train_count", e.train_count.to_string());
        write_lm(&mut kv, &e.lm);
        for (link, lm) in &e.link_overrides {
            let _ = writeln!(out, "\n[link {link}]");
            let mut kv = |k: &str, v: String| {
                let _ = writeln!(out, "{k} = {v}");
            };
            write_lm(&mut kv, lm);
        }
        out
    }
}

fn write_lm(kv: &mut impl FnMut(&str, String), lm: &LmConfig) {
    kv("mu_init", lm.mu_init.to_string());
    kv("mu_inc", lm.mu_inc.to_string());
    kv("mu_dec", lm.mu_dec.to_string());
    kv("mu_max", lm.mu_max.to_string());
    kv("max_epochs", lm.max_epochs.to_string());
    kv("error_goal", lm.error_goal.to_string());
    kv("seed", lm.seed.to_string());
}
