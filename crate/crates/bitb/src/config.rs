//! Experiment configuration: a `key = value` text file, overridden by flags.
//!
//! Recognised keys (defaults in brackets):
//!
//! | key       | value                               | default           |
//! |-----------|-------------------------------------|-------------------|
//! | `suite`   | one of [`Suite::ALL`]               | `properties`      |
//! | `depth`   | `N1xN2`, each in `1..=8`            | `4x4`             |
//! | `dims`    | `nxm`, each 1 or 2                  | `1x1`             |
//! | `seed`    | unsigned integer                    | `0`               |
//! | `weights` | `one` or `random:c0,B`              | `random:0.5,2`    |
//! | `kernel`  | `product_hilbert`, `bicommutator`, `zero` | `product_hilbert` |
//! | `r`       | integer ≥ 1                         | `4`               |
//! | `delta`   | number in `(0, 1]`                  | `1`               |
//! | `trials`  | integer ≥ 1                         | `20`              |
//! | `out`     | output directory                    | `bitb-out`        |
//!
//! Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use bitb_core::operator_lab::builtin_kernel;

/// Per-axis depth limit.
pub const MAX_DEPTH: u32 = 8;
/// Limit on `n·N₁ + m·N₂`, the base-2 log of the number of product cells.
pub const MAX_CELL_BITS: u32 = 16;

pub const KEYS: [&str; 10] = ["suite", "depth", "dims", "seed", "weights", "kernel", "r", "delta", "trials", "out"];

/// A configuration problem; the CLI maps it to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Properties,
    Paraproducts,
    Atoms,
    Hardy,
    Goodness,
    Decay,
    Wbp,
    Expansion,
    Tbprobe,
}

impl Suite {
    pub const ALL: [Suite; 9] = [
        Suite::Properties,
        Suite::Paraproducts,
        Suite::Atoms,
        Suite::Hardy,
        Suite::Goodness,
        Suite::Decay,
        Suite::Wbp,
        Suite::Expansion,
        Suite::Tbprobe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Properties => "properties",
            Suite::Paraproducts => "paraproducts",
            Suite::Atoms => "atoms",
            Suite::Hardy => "hardy",
            Suite::Goodness => "goodness",
            Suite::Decay => "decay",
            Suite::Wbp => "wbp",
            Suite::Expansion => "expansion",
            Suite::Tbprobe => "tbprobe",
        }
    }

    /// Suites that evaluate a kernel, which is only implemented for `n = m = 1`.
    pub fn uses_kernel(self) -> bool {
        matches!(self, Suite::Decay | Suite::Wbp | Suite::Expansion | Suite::Tbprobe)
    }
}

impl FromStr for Suite {
    type Err = UsageError;
    fn from_str(s: &str) -> Result<Self, UsageError> {
        Suite::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| {
            let names: Vec<_> = Suite::ALL.iter().map(|x| x.name()).collect();
            usage(format!("unknown suite '{s}' (valid: {})", names.join(", ")))
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightRegime {
    One,
    Random { c0: f64, bound: f64 },
}

impl FromStr for WeightRegime {
    type Err = UsageError;
    fn from_str(s: &str) -> Result<Self, UsageError> {
        if s == "one" {
            return Ok(WeightRegime::One);
        }
        let bad = || usage(format!("weights must be 'one' or 'random:c0,B', got '{s}'"));
        let rest = s.strip_prefix("random:").ok_or_else(bad)?;
        let (c0, bound) = rest.split_once(',').ok_or_else(bad)?;
        let c0: f64 = c0.trim().parse().map_err(|_| bad())?;
        let bound: f64 = bound.trim().parse().map_err(|_| bad())?;
        if !(c0 > 0.0 && c0 <= 1.0 && bound >= 1.0 && bound.is_finite()) {
            return Err(usage(format!("random weights need 0 < c0 ≤ 1 ≤ B, got c0 = {c0}, B = {bound}")));
        }
        Ok(WeightRegime::Random { c0, bound })
    }
}

impl fmt::Display for WeightRegime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightRegime::One => f.write_str("one"),
            WeightRegime::Random { c0, bound } => write!(f, "random:{c0},{bound}"),
        }
    }
}

fn parse_pair<T: FromStr>(key: &str, s: &str) -> Result<[T; 2], UsageError> {
    let bad = || usage(format!("{key} must look like AxB, got '{s}'"));
    let (a, b) = s.split_once('x').ok_or_else(bad)?;
    Ok([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?])
}

fn parse_num<T: FromStr>(key: &str, s: &str) -> Result<T, UsageError> {
    s.parse().map_err(|_| usage(format!("{key} expects a number, got '{s}'")))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub suite: Suite,
    pub depths: [u32; 2],
    pub dims: [u8; 2],
    pub seed: u64,
    pub weights: WeightRegime,
    pub kernel: String,
    pub r: u32,
    pub delta: f64,
    pub trials: u32,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            suite: Suite::Properties,
            depths: [4, 4],
            dims: [1, 1],
            seed: 0,
            weights: WeightRegime::Random { c0: 0.5, bound: 2.0 },
            kernel: "product_hilbert".into(),
            r: 4,
            delta: 1.0,
            trials: 20,
            out: PathBuf::from("bitb-out"),
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let value = value.trim();
        match key {
            "suite" => self.suite = value.parse()?,
            "depth" => self.depths = parse_pair(key, value)?,
            "dims" => self.dims = parse_pair(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "weights" => self.weights = value.parse()?,
            "kernel" => self.kernel = value.to_string(),
            "r" => self.r = parse_num(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "trials" => self.trials = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(usage(format!("unknown key '{other}' (valid keys: {})", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Parses a configuration file on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self, UsageError> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected 'key = value', got '{line}'", i + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn parse_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    /// The file form, one line per key; [`ExperimentConfig::parse_str`] reads it back unchanged.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        for (key, value) in [
            ("suite", self.suite.to_string()),
            ("depth", format!("{}x{}", self.depths[0], self.depths[1])),
            ("dims", format!("{}x{}", self.dims[0], self.dims[1])),
            ("seed", self.seed.to_string()),
            ("weights", self.weights.to_string()),
            ("kernel", self.kernel.clone()),
            ("r", self.r.to_string()),
            ("delta", self.delta.to_string()),
            ("trials", self.trials.to_string()),
            ("out", self.out.display().to_string()),
        ] {
            s.push_str(&format!("{key} = {value}\n"));
        }
        s
    }

    /// Range checks, the cost guard, and suite-specific requirements.
    pub fn validate(&self) -> Result<(), UsageError> {
        for (k, &d) in self.depths.iter().enumerate() {
            if d == 0 || d > MAX_DEPTH {
                return Err(usage(format!("depth of axis {} is {d}; allowed range is 1..={MAX_DEPTH}", k + 1)));
            }
        }
        if self.dims.iter().any(|&d| d != 1 && d != 2) {
            return Err(usage(format!("dims must be 1 or 2 per axis, got {}x{}", self.dims[0], self.dims[1])));
        }
        let bits = self.dims[0] as u32 * self.depths[0] + self.dims[1] as u32 * self.depths[1];
        if bits > MAX_CELL_BITS {
            return Err(usage(format!(
                "the product mesh would have 2^{bits} cells; the limit is 2^{MAX_CELL_BITS} (lower depth or dims)"
            )));
        }
        if self.r == 0 {
            return Err(usage("r must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(usage(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.trials == 0 {
            return Err(usage("trials must be at least 1"));
        }
        builtin_kernel(&self.kernel).map_err(|e| usage(e.to_string()))?;
        if self.suite.uses_kernel() && self.dims != [1, 1] {
            return Err(usage(format!("suite {} needs dims 1x1", self.suite)));
        }
        match self.suite {
            Suite::Decay if self.depths[0] != self.depths[1] => {
                Err(usage("the decay suite needs the same depth on both axes"))
            }
            Suite::Expansion if self.depths.iter().any(|&d| d > 4) => {
                Err(usage("the expansion suite is limited to depth 4 per axis"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(ExperimentConfig::parse_str("").unwrap(), ExperimentConfig::default());
        assert_eq!(ExperimentConfig::parse_str("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn depth_nine_is_rejected() {
        let cfg = ExperimentConfig::parse_str("depth = 9x4").unwrap();
        assert!(cfg.validate().unwrap_err().0.contains("1..=8"));
    }

    #[test]
    fn unknown_key_lists_valid_keys() {
        let err = ExperimentConfig::parse_str("colour = blue").unwrap_err();
        assert!(err.0.contains("colour") && err.0.contains("trials"));
    }

    #[test]
    fn emit_then_parse_round_trips() {
        let cfg = ExperimentConfig {
            suite: Suite::Decay,
            depths: [7, 7],
            weights: WeightRegime::Random { c0: 0.25, bound: 3.5 },
            delta: 0.75,
            out: PathBuf::from("some dir/out"),
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::parse_str(&cfg.emit()).unwrap(), cfg);
        assert_eq!(ExperimentConfig::parse_str(&ExperimentConfig::default().emit()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn value_parsing() {
        assert_eq!("one".parse::<WeightRegime>().unwrap(), WeightRegime::One);
        assert!("random:0,2".parse::<WeightRegime>().is_err());
        assert!("random:0.5".parse::<WeightRegime>().is_err());
        assert!("nonsense".parse::<Suite>().is_err());
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("depth", "4").is_err());
        cfg.kernel = "riesz".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn suite_requirements() {
        let mut cfg = ExperimentConfig { suite: Suite::Wbp, dims: [2, 1], ..Default::default() };
        assert!(cfg.validate().is_err());
        cfg.dims = [1, 1];
        assert!(cfg.validate().is_ok());
        cfg.suite = Suite::Expansion;
        cfg.depths = [5, 3];
        assert!(cfg.validate().is_err());
        let big = ExperimentConfig { dims: [2, 2], depths: [5, 4], ..Default::default() };
        assert!(big.validate().is_err());
    }
}
