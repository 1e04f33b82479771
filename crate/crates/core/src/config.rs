//! Plain-text `key = value` configuration with dotted section names.
//!
//! ```text
//! # scalar environment
//! env.chem_heal = 0.15
//! grid.n = 16
//! ```
//!
//! Precedence is built-in defaults, then the file, then explicit overrides.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::agents::dqn::DqnConfig;
use crate::agents::qlearning::QLearningConfig;
use crate::agents::td3::Td3Config;
use crate::baselines::PiConfig;
use crate::env_grid::GridConfig;
use crate::env_scalar::{ScalarEnvConfig, StochasticHealParams};
use crate::error::{Error, Result};
use crate::harness::BudgetConfig;

/// Scalar types a config field may hold.
pub trait ConfigValue: Sized {
    fn parse_value(raw: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

impl ConfigValue for f64 {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse::<f64>()
            .map_err(|e| format!("expected a number, got `{raw}` ({e})"))
    }
    fn render(&self) -> String {
        format!("{self}")
    }
}

impl ConfigValue for usize {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        raw.parse::<usize>()
            .map_err(|e| format!("expected a non-negative integer, got `{raw}` ({e})"))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse_value(raw: &str) -> std::result::Result<Self, String> {
        match raw {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            _ => Err(format!("expected a boolean, got `{raw}`")),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

/// Declares a config section: the struct, its defaults, and string access
/// by field name.
macro_rules! config_section {
    (
        $(#[$meta:meta])*
        pub struct $name:ident [$prefix:literal] {
            $(
                $(#[$fmeta:meta])*
                pub $field:ident : $ty:ty = $default:expr
            ),* $(,)?
        }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            $( $(#[$fmeta])* pub $field: $ty, )*
        }

        impl Default for $name {
            fn default() -> Self {
                Self { $( $field: $default, )* }
            }
        }

        impl $name {
            pub const PREFIX: &'static str = $prefix;
            pub const KEYS: &'static [&'static str] = &[$(stringify!($field)),*];

            pub fn set(&mut self, key: &str, value: &str) -> $crate::error::Result<()> {
                use $crate::config::ConfigValue;
                match key {
                    $(
                        stringify!($field) => {
                            self.$field = <$ty>::parse_value(value).map_err(|reason| {
                                $crate::error::Error::config(format!("{}.{}", $prefix, key), reason)
                            })?;
                            Ok(())
                        }
                    )*
                    _ => Err($crate::error::Error::config(
                        format!("{}.{}", $prefix, key),
                        "unknown key",
                    )),
                }
            }

            pub fn get(&self, key: &str) -> Option<String> {
                use $crate::config::ConfigValue;
                match key {
                    $( stringify!($field) => Some(self.$field.render()), )*
                    _ => None,
                }
            }
        }
    };
}
pub(crate) use config_section;

/// Every tunable of the toolkit, grouped by section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub env: ScalarEnvConfig,
    pub heal: StochasticHealParams,
    pub grid: GridConfig,
    pub qlearning: QLearningConfig,
    pub dqn: DqnConfig,
    pub td3: Td3Config,
    pub pi: PiConfig,
    pub budget: BudgetConfig,
}

macro_rules! for_each_section {
    ($self:expr, |$prefix:ident, $section:ident| $body:expr) => {{
        { let $prefix = ScalarEnvConfig::PREFIX; let $section = &$self.env; $body }
        { let $prefix = StochasticHealParams::PREFIX; let $section = &$self.heal; $body }
        { let $prefix = GridConfig::PREFIX; let $section = &$self.grid; $body }
        { let $prefix = QLearningConfig::PREFIX; let $section = &$self.qlearning; $body }
        { let $prefix = DqnConfig::PREFIX; let $section = &$self.dqn; $body }
        { let $prefix = Td3Config::PREFIX; let $section = &$self.td3; $body }
        { let $prefix = PiConfig::PREFIX; let $section = &$self.pi; $body }
        { let $prefix = BudgetConfig::PREFIX; let $section = &$self.budget; $body }
    }};
}

impl Config {
    /// Sets one dotted key, e.g. `env.chem_heal`.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (section, key) = dotted
            .split_once('.')
            .ok_or_else(|| Error::config(dotted, "expected `section.key`"))?;
        let value = value.trim();
        match section {
            "env" => self.env.set(key, value),
            "heal" => self.heal.set(key, value),
            "grid" => self.grid.set(key, value),
            "qlearning" => self.qlearning.set(key, value),
            "dqn" => self.dqn.set(key, value),
            "td3" => self.td3.set(key, value),
            "pi" => self.pi.set(key, value),
            "budget" => self.budget.set(key, value),
            _ => Err(Error::config(dotted, "unknown section")),
        }
    }

    pub fn get(&self, dotted: &str) -> Option<String> {
        let (section, key) = dotted.split_once('.')?;
        match section {
            "env" => self.env.get(key),
            "heal" => self.heal.get(key),
            "grid" => self.grid.get(key),
            "qlearning" => self.qlearning.get(key),
            "dqn" => self.dqn.get(key),
            "td3" => self.td3.get(key),
            "pi" => self.pi.get(key),
            "budget" => self.budget.get(key),
            _ => None,
        }
    }

    /// All dotted keys in canonical order.
    pub fn keys() -> Vec<String> {
        let mut out = Vec::new();
        let sections: [(&str, &[&str]); 8] = [
            (ScalarEnvConfig::PREFIX, ScalarEnvConfig::KEYS),
            (StochasticHealParams::PREFIX, StochasticHealParams::KEYS),
            (GridConfig::PREFIX, GridConfig::KEYS),
            (QLearningConfig::PREFIX, QLearningConfig::KEYS),
            (DqnConfig::PREFIX, DqnConfig::KEYS),
            (Td3Config::PREFIX, Td3Config::KEYS),
            (PiConfig::PREFIX, PiConfig::KEYS),
            (BudgetConfig::PREFIX, BudgetConfig::KEYS),
        ];
        for (prefix, keys) in sections {
            out.extend(keys.iter().map(|k| format!("{prefix}.{k}")));
        }
        out
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: idx + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Applies `key=value` override strings (the CLI's `--set`).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "override must look like `key=value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Canonical `key = value` dump; `from_text(dump())` reproduces `self`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for_each_section!(self, |prefix, section| {
            for key in section_keys(prefix) {
                let value = section.get(key).expect("declared key");
                let _ = writeln!(out, "{prefix}.{key} = {value}");
            }
        });
        out
    }

    /// Short content hash of the canonical dump, recorded in artifacts.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.dump().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.heal.validate()?;
        self.grid.validate()?;
        self.qlearning.validate()?;
        self.dqn.validate()?;
        self.td3.validate()?;
        self.pi.validate()?;
        Ok(())
    }
}

fn section_keys(prefix: &str) -> &'static [&'static str] {
    match prefix {
        "env" => ScalarEnvConfig::KEYS,
        "heal" => StochasticHealParams::KEYS,
        "grid" => GridConfig::KEYS,
        "qlearning" => QLearningConfig::KEYS,
        "dqn" => DqnConfig::KEYS,
        "td3" => Td3Config::KEYS,
        "pi" => PiConfig::KEYS,
        "budget" => BudgetConfig::KEYS,
        _ => &[],
    }
}

/// Checks that `value` lies in `[lo, hi]`, naming the field on failure.
pub(crate) fn check_range(key: &str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::config(key, format!("{value} outside [{lo}, {hi}]")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_override_sets_field() {
        let mut cfg = Config::default();
        cfg.set("env.chem_heal", "0.25").unwrap();
        assert_eq!(cfg.env.chem_heal, 0.25);
        cfg.set("grid.n", "8").unwrap();
        assert_eq!(cfg.grid.n, 8);
    }

    #[test]
    fn file_text_with_comments() {
        let cfg = Config::from_text("# header\nenv.horizon = 60  # short\n\nheal.enabled = true\n").unwrap();
        assert_eq!(cfg.env.horizon, 60);
        assert!(cfg.heal.enabled);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = Config::default().set("env.bogus", "1").unwrap_err();
        assert!(err.to_string().contains("env.bogus"));
        let err = Config::default().set("nosection.x", "1").unwrap_err();
        assert!(err.to_string().contains("nosection.x"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = Config::from_text("env.horizon = 5\nbroken line\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn dump_round_trips_every_key() {
        let mut cfg = Config::default();
        cfg.set("env.wear_high", "0.0131").unwrap();
        cfg.set("dqn.batch", "17").unwrap();
        let again = Config::from_text(&cfg.dump()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        assert_ne!(cfg.hash(), Config::default().hash());
        assert_eq!(cfg.dump().lines().count(), Config::keys().len());
    }

    #[test]
    fn every_key_accepts_its_default() {
        let defaults = Config::default();
        for key in Config::keys() {
            let mut cfg = Config::default();
            let v = defaults.get(&key).unwrap();
            cfg.set(&key, &v).unwrap();
            assert_eq!(cfg, defaults, "{key}");
        }
    }
}
