use std::fmt::Write as _;
use std::path::PathBuf;

use super::TrainError;
use crate::net::ShareMode;

/// Training hyperparameters, readable from `key=value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin: f64,
    pub lr: f64,
    pub weight_decay: f64,
    /// Half positive, half negative.
    pub pairs_per_anchor: usize,
    pub epochs: usize,
    pub seed: u64,
    pub input_size: usize,
    pub view_count: usize,
    pub render_resolution: usize,
    pub share_mode: ShareMode,
    pub data: Option<PathBuf>,
    pub meshes: Option<PathBuf>,
    pub val_fraction: f64,
    pub val_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 1.0,
            lr: 5e-5,
            weight_decay: 1e-5,
            pairs_per_anchor: 12,
            epochs: 25,
            seed: 0,
            input_size: 64,
            view_count: 12,
            render_resolution: 128,
            share_mode: ShareMode::Shared,
            data: None,
            meshes: None,
            val_fraction: 0.1,
            val_seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 14] = [
        "margin",
        "lr",
        "weight_decay",
        "pairs_per_anchor",
        "epochs",
        "seed",
        "input_size",
        "view_count",
        "render_resolution",
        "share_mode",
        "data",
        "meshes",
        "val_fraction",
        "val_seed",
    ];

    pub fn positives(&self) -> usize {
        self.pairs_per_anchor / 2
    }

    pub fn negatives(&self) -> usize {
        self.pairs_per_anchor / 2
    }

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, TrainError> {
            value.parse().map_err(|_| TrainError::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "margin" => self.margin = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "pairs_per_anchor" => self.pairs_per_anchor = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "input_size" => self.input_size = num(key, value)?,
            "view_count" => self.view_count = num(key, value)?,
            "render_resolution" => self.render_resolution = num(key, value)?,
            "share_mode" => self.share_mode = value.parse().map_err(TrainError::Config)?,
            "data" => self.data = Some(PathBuf::from(value)),
            "meshes" => self.meshes = Some(PathBuf::from(value)),
            "val_fraction" => self.val_fraction = num(key, value)?,
            "val_seed" => self.val_seed = num(key, value)?,
            other => return Err(TrainError::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainError::Config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| match e {
                    TrainError::Config(m) => TrainError::Config(format!("line {}: {m}", i + 1)),
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if self.pairs_per_anchor < 2 || self.pairs_per_anchor % 2 != 0 {
            return fail(format!("pairs_per_anchor must be even and at least 2, got {}", self.pairs_per_anchor));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.input_size < 8 || self.input_size % 8 != 0 {
            return fail(format!("input_size must be a positive multiple of 8, got {}", self.input_size));
        }
        if ![12, 20, 42].contains(&self.view_count) {
            return fail(format!("view_count must be 12, 20 or 42, got {}", self.view_count));
        }
        if self.render_resolution == 0 {
            return fail("render_resolution must be positive".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return fail(format!("val_fraction must be in [0, 1), got {}", self.val_fraction));
        }
        Ok(())
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "margin={}", self.margin);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "weight_decay={}", self.weight_decay);
        let _ = writeln!(s, "pairs_per_anchor={}", self.pairs_per_anchor);
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "input_size={}", self.input_size);
        let _ = writeln!(s, "view_count={}", self.view_count);
        let _ = writeln!(s, "render_resolution={}", self.render_resolution);
        let _ = writeln!(s, "share_mode={}", self.share_mode);
        if let Some(d) = &self.data {
            let _ = writeln!(s, "data={}", d.display());
        }
        if let Some(m) = &self.meshes {
            let _ = writeln!(s, "meshes={}", m.display());
        }
        let _ = writeln!(s, "val_fraction={}", self.val_fraction);
        let _ = writeln!(s, "val_seed={}", self.val_seed);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = TrainConfig {
            data: Some("d/manifest.tsv".into()),
            share_mode: ShareMode::Separate,
            ..TrainConfig::default()
        };
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!((c.positives(), c.negatives()), (6, 6));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainConfig::parse("epochs=3\nbatch=12\n").unwrap_err();
        assert!(err.to_string().contains("batch"), "{err}");
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in ["pairs_per_anchor=7", "margin=0", "epochs=0", "input_size=60", "view_count=13", "lr=abc", "nonsense"] {
            assert!(TrainConfig::parse(bad).is_err(), "{bad}");
        }
        let c = TrainConfig::parse("# comment\n\n lr = 0.001 \n").unwrap();
        assert_eq!(c.lr, 0.001);
    }
}
