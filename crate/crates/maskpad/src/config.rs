//! Flat key=value configuration with `[section]` headers.
//!
//! Keys flatten to `section.key`. Command-line `--set section.key=value`
//! overrides win over file values, which win over the built-in defaults.
//! The fully resolved configuration is echoed into the output directory so
//! a run can be reproduced from its artifacts alone.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use maskpad_core::catalog::SynthConfig;
use maskpad_core::cgd::{CgdConfig, CgdVariant};
use maskpad_core::context::{Lighting, Scene};
use maskpad_core::metrics::ThresholdRule;
use maskpad_core::protocol::P3Restriction;
use maskpad_core::train::TrainConfig;

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn from_file(path: &Path) -> Result<Config> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("config line {}: expected key=value, got `{raw}`", line_no + 1);
            };
            let full_key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            values.insert(full_key, value.trim().to_string());
        }
        Ok(Config { values })
    }

    /// Apply `key=value` overrides (keys already in `section.key` form).
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for item in overrides {
            let Some((key, value)) = item.split_once('=') else {
                bail!("override `{item}` must have the form section.key=value");
            };
            self.values
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.values.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key {key}: {e}")),
        }
    }

    fn parse_bool(&self, key: &str, default: bool) -> Result<bool> {
        match self.values.get(key).map(String::as_str) {
            None => Ok(default),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => bail!("config key {key}: `{other}` is not a boolean"),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(raw) if raw.is_empty() => Ok(Vec::new()),
            Some(raw) => raw
                .split(',')
                .map(|item| {
                    item.trim()
                        .parse()
                        .map_err(|e| anyhow::anyhow!("config key {key}: {e}"))
                })
                .collect(),
        }
    }

    /// Generator settings from the `[synth]` section.
    pub fn synth_config(&self) -> Result<SynthConfig> {
        let d = SynthConfig::default();
        Ok(SynthConfig {
            subjects: self.parse_as("synth.subjects", d.subjects)?,
            frames_per_video: self.parse_as("synth.frames_per_video", d.frames_per_video)?,
            feature_dim: self.parse_as("synth.feature_dim", d.feature_dim)?,
            scene_count: self.parse_as("synth.scene_count", d.scene_count)?,
            light_count: self.parse_as("synth.light_count", d.light_count)?,
            sensor_count: self.parse_as("synth.sensor_count", d.sensor_count)?,
            w_material: self.parse_as("synth.w_material", d.w_material)?,
            w_subject: self.parse_as("synth.w_subject", d.w_subject)?,
            w_context: self.parse_as("synth.w_context", d.w_context)?,
            noise_sigma: self.parse_as("synth.noise_sigma", d.noise_sigma)?,
            material_scene_blend: self
                .parse_as("synth.material_scene_blend", d.material_scene_blend)?,
        })
    }

    /// Trainer settings from `[train]`, `[cgd]` and `[pairs]`.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let variant = match self.values.get("cgd.variant") {
            None => d.cgd.variant,
            Some(raw) => CgdVariant::parse(raw)
                .with_context(|| format!("config key cgd.variant: unknown variant `{raw}`"))?,
        };
        let enc_hidden = self.parse_list("train.enc_hidden", d.enc_hidden.to_vec())?;
        if enc_hidden.len() != 2 {
            bail!("config key train.enc_hidden must list exactly two widths");
        }
        Ok(TrainConfig {
            epochs: self.parse_as("train.epochs", d.epochs)?,
            batch_size: self.parse_as("train.batch_size", d.batch_size)?,
            learning_rate: self.parse_as("train.learning_rate", d.learning_rate)?,
            momentum: self.parse_as("train.momentum", d.momentum)?,
            weight_decay: self.parse_as("train.weight_decay", d.weight_decay)?,
            milestones: self.parse_list("train.milestones", d.milestones)?,
            gamma: self.parse_as("train.gamma", d.gamma)?,
            lambda_con: self.parse_as("train.lambda_con", d.lambda_con)?,
            cgd: CgdConfig {
                p_d_base: self.parse_as("cgd.p_d_base", d.cgd.p_d_base)?,
                variant,
            },
            tau_base: self.parse_as("train.tau_base", d.tau_base)?,
            seed: self.parse_as("train.seed", d.seed)?,
            patterns: self.parse_list("pairs.patterns", d.patterns)?,
            pattern_weights: self.parse_list("pairs.weights", d.pattern_weights)?,
            balance_polarity: self.parse_bool("pairs.balance_polarity", d.balance_polarity)?,
            enc_hidden: [enc_hidden[0], enc_hidden[1]],
            embed_dim: self.parse_as("train.embed_dim", d.embed_dim)?,
            head_hidden: self.parse_as("train.head_hidden", d.head_hidden)?,
            collect_cgd_audit: self.parse_bool("train.cgd_audit", d.collect_cgd_audit)?,
        })
    }

    /// Threshold rule from `eval.threshold_rule`: `eer`, `bpcer@<rate>` or
    /// `fixed@<theta>`.
    pub fn threshold_rule(&self) -> Result<ThresholdRule> {
        match self.values.get("eval.threshold_rule").map(String::as_str) {
            None | Some("eer") => Ok(ThresholdRule::Eer),
            Some(raw) => parse_threshold_rule(raw),
        }
    }

    /// Scene/lighting subset used by the P3 train/dev split, from
    /// `protocol.p3_scenes` / `protocol.p3_lights` (comma-separated codes).
    pub fn p3_restriction(&self) -> Result<P3Restriction> {
        let default = P3Restriction::default();
        let scenes = match self.parse_list::<u8>("protocol.p3_scenes", Vec::new())? {
            codes if codes.is_empty() && self.get("protocol.p3_scenes").is_none() => {
                default.scenes
            }
            codes => codes
                .into_iter()
                .map(|c| {
                    Scene::from_code(c)
                        .with_context(|| format!("protocol.p3_scenes: bad scene code {c}"))
                })
                .collect::<Result<_>>()?,
        };
        let lightings = match self.parse_list::<u8>("protocol.p3_lights", Vec::new())? {
            codes if codes.is_empty() && self.get("protocol.p3_lights").is_none() => {
                default.lightings
            }
            codes => codes
                .into_iter()
                .map(|c| {
                    Lighting::from_code(c)
                        .with_context(|| format!("protocol.p3_lights: bad lighting code {c}"))
                })
                .collect::<Result<_>>()?,
        };
        Ok(P3Restriction { scenes, lightings })
    }

    /// Render the resolved configuration deterministically.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.values {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }
}

pub fn parse_threshold_rule(raw: &str) -> Result<ThresholdRule> {
    if raw == "eer" {
        return Ok(ThresholdRule::Eer);
    }
    if let Some(rate) = raw.strip_prefix("bpcer@") {
        return Ok(ThresholdRule::BpcerTarget(rate.parse()?));
    }
    if let Some(theta) = raw.strip_prefix("fixed@") {
        return Ok(ThresholdRule::Fixed(theta.parse()?));
    }
    bail!("unknown threshold rule `{raw}`; expected eer, bpcer@<rate> or fixed@<theta>")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_sections_and_overrides() {
        let mut config = Config::parse(
            "top=1\n[train]\nepochs=5\nmilestones=2,3\n# comment\n[cgd]\nvariant=reverse\n",
        )
        .unwrap();
        assert_eq!(config.get("top"), Some("1"));
        assert_eq!(config.get("train.epochs"), Some("5"));
        config
            .apply_overrides(&["train.epochs=7".to_string()])
            .unwrap();
        let train = config.train_config().unwrap();
        assert_eq!(train.epochs, 7);
        assert_eq!(train.milestones, vec![2, 3]);
        assert_eq!(train.cgd.variant, CgdVariant::Reverse);
    }

    #[test]
    fn defaults_apply_when_missing() {
        let config = Config::parse("").unwrap();
        let train = config.train_config().unwrap();
        assert_eq!(train, TrainConfig::default());
        let synth = config.synth_config().unwrap();
        assert_eq!(synth, SynthConfig::default());
    }

    #[test]
    fn bad_lines_are_rejected(){
        assert!(Config::parse("not a pair").is_err());
        let mut config = Config::parse("").unwrap();
        assert!(config.apply_overrides(&["oops".to_string()]).is_err());
    }

    #[test]
    fn threshold_rules_parse() {
        assert_eq!(parse_threshold_rule("eer").unwrap(), ThresholdRule::Eer);
        assert_eq!(
            parse_threshold_rule("bpcer@0.01").unwrap(),
            ThresholdRule::BpcerTarget(0.01)
        );
        assert_eq!(
            parse_threshold_rule("fixed@0.5").unwrap(),
            ThresholdRule::Fixed(0.5)
        );
        assert!(parse_threshold_rule("nope").is_err());
    }

    #[test]
    fn render_is_sorted_and_stable() {
        let config = Config::parse("[b]\nx=1\n[a]\ny=2\n").unwrap();
        assert_eq!(config.render(), "a.y=2\nb.x=1\n");
    }

    #[test]
    fn p3_restriction_parses_codes() {
        use maskpad_core::context::{Lighting, Scene};
        let config = Config::parse("[protocol]\np3_scenes=1,4\np3_lights=6\n").unwrap();
        let p3 = config.p3_restriction().unwrap();
        assert_eq!(
            p3.scenes.into_iter().collect::<Vec<_>>(),
            vec![Scene::White, Scene::Sunshine]
        );
        assert_eq!(
            p3.lightings.into_iter().collect::<Vec<_>>(),
            vec![Lighting::Top]
        );

        let config = Config::parse("").unwrap();
        assert_eq!(config.p3_restriction().unwrap(), P3Restriction::default());

        let config = Config::parse("[protocol]\np3_scenes=9\n").unwrap();
        assert!(config.p3_restriction().is_err());
    }
}
