//! Flat `key = value` run configuration.
//!
//! Config files are plain text: one assignment per line, `#` comment lines,
//! and three section headers (`[problem]`, `[optimizer]`, `[harness]`) that
//! group keys for readability. Keys are globally unique, so headers never
//! change what an assignment means, but unknown keys, unknown headers, and
//! a key assigned twice in one file are all rejected. Every key has a
//! default, so the empty file (or no file at all) is a valid config.
//!
//! Resolution order: defaults, then the file, then `--set KEY=VALUE`
//! overrides in the order given (later wins), then the `--seeds` shorthand.
//! Values are only parsed where they are used: a quadratic run never reads
//! `features`. [`RawConfig::dump_resolved`] emits the fully resolved
//! settings back in file syntax, so a recorded dump re-runs as-is.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{
    DivergencePolicy, Engine, ExperimentConfig, ProblemSpec, MIN_PROBE_SEEDS,
};
use crate::moments::RootPolicy;
use crate::optim::{BiasMode, HAdamConfig};

/// Section layout, key order, and defaults, all in the order `dump_resolved`
/// emits them.
const LAYOUT: &[(&str, &[(&str, &str)])] = &[
    (
        "problem",
        &[
            ("problem", "quadratic"),
            ("dim", "10"),
            ("x0", "1.0"),
            ("n_examples", "2000"),
            ("features", "20"),
            ("classes", "4"),
            ("hidden", "16"),
            ("data_seed", "7"),
            ("noise_rate", "1.0"),
            ("label_flip", "0.15"),
        ],
    ),
    (
        "optimizer",
        &[
            ("alpha", "0.001"),
            ("beta1", "0.9"),
            ("beta2", "0.999"),
            ("order", "2"),
            ("epsilon", "1e-8"),
            ("root_policy", "naive"),
            ("bias_mode", "folded"),
            ("engine", "hadam"),
        ],
    ),
    (
        "harness",
        &[
            ("steps", "2000"),
            ("batch_size", "32"),
            ("record_every", "50"),
            ("divergence_policy", "halt"),
            ("metric_window", "50"),
            ("seeds", "1,2,3,4,5"),
            ("orders", "2,3,4,5,6,7,8,9"),
            ("probe_seeds", "64"),
        ],
    ),
];

fn known_key(key: &str) -> bool {
    LAYOUT
        .iter()
        .any(|(_, keys)| keys.iter().any(|(k, _)| *k == key))
}

fn known_section(name: &str) -> bool {
    LAYOUT.iter().any(|(s, _)| *s == name)
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {msg}")]
    BadValue { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn bad(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Splits a `--set` argument into key and value at the first `=`.
pub fn split_set_arg(arg: &str) -> Result<(&str, &str), ConfigError> {
    match arg.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(ConfigError::Invalid(format!(
            "--set expects KEY=VALUE, got `{arg}`"
        ))),
    }
}

/// Fully typed and validated configuration for one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub experiment: ExperimentConfig,
    /// Order grid for the sweep command.
    pub orders: Vec<u32>,
    /// Batch draws pooled by the probe command.
    pub probe_seeds: usize,
}

/// Untyped key/value settings. Starts from defaults and accumulates
/// overrides; `build` does all value parsing and cross-field validation in
/// one place.
#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self::defaults()
    }
}

impl RawConfig {
    pub fn defaults() -> Self {
        let mut values = BTreeMap::new();
        for (_, keys) in LAYOUT {
            for (key, default) in *keys {
                values.insert(key.to_string(), default.to_string());
            }
        }
        RawConfig { values }
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.apply_text(&text)
    }

    /// Parses one file's worth of assignments. Rejects unknown keys and
    /// sections, and a key assigned twice within this text.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut seen = BTreeSet::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let s = raw_line.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            if let Some(rest) = s.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("malformed section header `{s}`"),
                    });
                };
                if !known_section(name) {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("unknown section `[{name}]`"),
                    });
                }
                continue;
            }
            let Some((k, v)) = s.split_once('=') else {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("expected `key = value`, got `{s}`"),
                });
            };
            let key = k.trim();
            let value = v.trim();
            if !known_key(key) {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("unknown key `{key}`"),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("key `{key}` assigned twice"),
                });
            }
            self.values.insert(key.to_string(), value.to_string());
        }
        Ok(())
    }

    /// One `--set` override. Later calls win over earlier ones.
    pub fn apply_set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !known_key(key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// The `--seeds` shorthand; applied last, after every other override.
    pub fn apply_seeds(&mut self, spec: &str) {
        self.values.insert("seeds".to_string(), spec.trim().to_string());
    }

    fn raw(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .expect("defaults cover every known key")
    }

    fn get_f64(&self, key: &str) -> Result<f64, ConfigError> {
        let raw = self.raw(key);
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(v) => Err(bad(key, format!("must be finite, got {v}"))),
            Err(_) => Err(bad(key, format!("expected a number, got `{raw}`"))),
        }
    }

    fn get_u64(&self, key: &str) -> Result<u64, ConfigError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| bad(key, format!("expected a non-negative integer, got `{raw}`")))
    }

    fn get_u32(&self, key: &str) -> Result<u32, ConfigError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| bad(key, format!("expected a non-negative integer, got `{raw}`")))
    }

    fn get_usize(&self, key: &str) -> Result<usize, ConfigError> {
        let raw = self.raw(key);
        raw.parse()
            .map_err(|_| bad(key, format!("expected a non-negative integer, got `{raw}`")))
    }

    fn get_u64_list(&self, key: &str) -> Result<Vec<u64>, ConfigError> {
        self.raw(key)
            .split(',')
            .map(|part| {
                let p = part.trim();
                p.parse().map_err(|_| {
                    bad(key, format!("expected comma-separated integers, got `{p}`"))
                })
            })
            .collect()
    }

    fn get_u32_list(&self, key: &str) -> Result<Vec<u32>, ConfigError> {
        self.raw(key)
            .split(',')
            .map(|part| {
                let p = part.trim();
                p.parse().map_err(|_| {
                    bad(key, format!("expected comma-separated integers, got `{p}`"))
                })
            })
            .collect()
    }

    fn positive_usize(&self, key: &str) -> Result<usize, ConfigError> {
        let v = self.get_usize(key)?;
        if v == 0 {
            return Err(bad(key, "must be at least 1"));
        }
        Ok(v)
    }

    fn problem_spec(&self) -> Result<ProblemSpec, ConfigError> {
        let classes = || -> Result<usize, ConfigError> {
            let c = self.get_usize("classes")?;
            if c < 2 {
                return Err(bad("classes", "need at least 2 classes"));
            }
            Ok(c)
        };
        let flip = || -> Result<f64, ConfigError> {
            let p = self.get_f64("label_flip")?;
            if !(0.0..=1.0).contains(&p) {
                return Err(bad("label_flip", format!("must lie in [0, 1], got {p}")));
            }
            Ok(p)
        };
        let rate = || -> Result<f64, ConfigError> {
            let r = self.get_f64("noise_rate")?;
            if r <= 0.0 {
                return Err(bad("noise_rate", format!("must be positive, got {r}")));
            }
            Ok(r)
        };
        match self.raw("problem") {
            "quadratic" => Ok(ProblemSpec::Quadratic {
                dim: self.positive_usize("dim")?,
                x0: self.get_f64("x0")?,
            }),
            "rosenbrock" => Ok(ProblemSpec::Rosenbrock),
            "noisy_quadratic" => Ok(ProblemSpec::NoisyQuadratic {
                dim: self.positive_usize("dim")?,
                n: self.positive_usize("n_examples")?,
                x0: self.get_f64("x0")?,
                data_seed: self.get_u64("data_seed")?,
            }),
            "logistic" => Ok(ProblemSpec::Logistic {
                n: self.positive_usize("n_examples")?,
                features: self.positive_usize("features")?,
                classes: classes()?,
                data_seed: self.get_u64("data_seed")?,
            }),
            "mlp" => Ok(ProblemSpec::Mlp {
                n: self.positive_usize("n_examples")?,
                features: self.positive_usize("features")?,
                hidden: self.positive_usize("hidden")?,
                classes: classes()?,
                data_seed: self.get_u64("data_seed")?,
            }),
            "skew_mlp" => Ok(ProblemSpec::SkewMlp {
                n: self.positive_usize("n_examples")?,
                features: self.positive_usize("features")?,
                hidden: self.positive_usize("hidden")?,
                classes: classes()?,
                data_seed: self.get_u64("data_seed")?,
                noise_rate: rate()?,
                label_flip: flip()?,
            }),
            other => Err(bad(
                "problem",
                format!(
                    "unknown problem `{other}` (quadratic, rosenbrock, noisy_quadratic, \
                     logistic, mlp, skew_mlp)"
                ),
            )),
        }
    }

    pub fn build(&self) -> Result<FullConfig, ConfigError> {
        let optimizer = HAdamConfig {
            alpha: self.get_f64("alpha")?,
            beta1: self.get_f64("beta1")?,
            beta2: self.get_f64("beta2")?,
            order: self.get_u32("order")?,
            epsilon: self.get_f64("epsilon")?,
            root_policy: match self.raw("root_policy") {
                "naive" => RootPolicy::Naive,
                "signed" => RootPolicy::Signed,
                other => return Err(bad("root_policy", format!("expected naive or signed, got `{other}`"))),
            },
            bias_mode: match self.raw("bias_mode") {
                "folded" => BiasMode::Folded,
                "explicit" => BiasMode::Explicit,
                other => return Err(bad("bias_mode", format!("expected folded or explicit, got `{other}`"))),
            },
        };
        let engine = match self.raw("engine") {
            "hadam" => Engine::HAdam,
            "reference_adam" => Engine::ReferenceAdam,
            other => return Err(bad("engine", format!("expected hadam or reference_adam, got `{other}`"))),
        };
        let divergence_policy = match self.raw("divergence_policy") {
            "halt" => DivergencePolicy::Halt,
            "continue" => DivergencePolicy::Continue,
            other => {
                return Err(bad(
                    "divergence_policy",
                    format!("expected halt or continue, got `{other}`"),
                ))
            }
        };
        let seeds = self.get_u64_list("seeds")?;
        let mut uniq = BTreeSet::new();
        for &s in &seeds {
            // per-seed output files are keyed by seed, so repeats would collide
            if !uniq.insert(s) {
                return Err(bad("seeds", format!("seed {s} listed twice")));
            }
        }
        let experiment = ExperimentConfig {
            problem: self.problem_spec()?,
            optimizer,
            engine,
            steps: self.get_u64("steps")?,
            batch_size: self.get_usize("batch_size")?,
            seeds,
            record_every: self.get_u64("record_every")?,
            metric_window: self.get_usize("metric_window")?,
            divergence_policy,
        };
        experiment
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;

        let orders = self.get_u32_list("orders")?;
        let mut seen = BTreeSet::new();
        for &k in &orders {
            if k < 2 {
                return Err(bad("orders", format!("sweep orders start at 2, got {k}")));
            }
            if !seen.insert(k) {
                return Err(bad("orders", format!("order {k} listed twice")));
            }
        }
        let probe_seeds = self.get_usize("probe_seeds")?;
        if probe_seeds < MIN_PROBE_SEEDS {
            return Err(bad(
                "probe_seeds",
                format!("need at least {MIN_PROBE_SEEDS} probe batches, got {probe_seeds}"),
            ));
        }
        Ok(FullConfig {
            experiment,
            orders,
            probe_seeds,
        })
    }

    /// Emits every setting in file syntax, grouped by section. Parsing the
    /// dump back reproduces this config exactly.
    pub fn dump_resolved(&self) -> String {
        let mut out = String::new();
        for (section, keys) in LAYOUT {
            out.push_str(&format!("[{section}]\n"));
            for (key, _) in *keys {
                out.push_str(&format!("{key} = {}\n", self.raw(key)));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_to_the_default_experiment() {
        let full = RawConfig::defaults().build().unwrap();
        assert_eq!(full.experiment, ExperimentConfig::default());
        assert_eq!(full.orders, vec![2, 3, 4, 5, 6, 7, 8, 9]);
        assert_eq!(full.probe_seeds, 64);
    }

    #[test]
    fn file_overrides_defaults() {
        let mut raw = RawConfig::defaults();
        raw.apply_text(
            "# training setup\n\
             [problem]\n\
             problem = skew_mlp\n\
             n_examples = 500\n\
             \n\
             [optimizer]\n\
             alpha = 0.01\n\
             order = 3\n\
             root_policy = signed\n\
             \n\
             [harness]\n\
             steps = 100\n\
             seeds = 7, 8\n",
        )
        .unwrap();
        let full = raw.build().unwrap();
        assert_eq!(full.experiment.optimizer.alpha, 0.01);
        assert_eq!(full.experiment.optimizer.order, 3);
        assert_eq!(full.experiment.optimizer.root_policy, RootPolicy::Signed);
        assert_eq!(full.experiment.steps, 100);
        assert_eq!(full.experiment.seeds, vec![7, 8]);
        assert!(matches!(
            full.experiment.problem,
            ProblemSpec::SkewMlp { n: 500, .. }
        ));
    }

    #[test]
    fn unknown_key_is_rejected_with_line_number() {
        let mut raw = RawConfig::defaults();
        let err = raw.apply_text("alpha = 0.1\nlearning_rate = 0.2\n").unwrap_err();
        match err {
            ConfigError::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("learning_rate"), "{msg}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn unknown_section_is_rejected() {
        let mut raw = RawConfig::defaults();
        let err = raw.apply_text("[optimiser]\nalpha = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("unknown section"), "{err}");
    }

    #[test]
    fn duplicate_key_in_one_file_is_rejected() {
        let mut raw = RawConfig::defaults();
        let err = raw.apply_text("alpha = 0.1\nalpha = 0.2\n").unwrap_err();
        assert!(err.to_string().contains("assigned twice"), "{err}");
    }

    #[test]
    fn missing_equals_is_a_parse_error() {
        let mut raw = RawConfig::defaults();
        let err = raw.apply_text("alpha 0.1\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn set_overrides_file_and_seeds_override_set() {
        let mut raw = RawConfig::defaults();
        raw.apply_text("alpha = 0.5\nseeds = 1,2\n").unwrap();
        raw.apply_set("alpha", "0.25").unwrap();
        raw.apply_set("seeds", "3,4").unwrap();
        raw.apply_seeds("9,10,11");
        let full = raw.build().unwrap();
        assert_eq!(full.experiment.optimizer.alpha, 0.25);
        assert_eq!(full.experiment.seeds, vec![9, 10, 11]);
    }

    #[test]
    fn set_rejects_unknown_keys() {
        let mut raw = RawConfig::defaults();
        assert!(matches!(
            raw.apply_set("momentum", "0.9"),
            Err(ConfigError::UnknownKey(_))
        ));
    }

    #[test]
    fn split_set_arg_requires_equals() {
        assert_eq!(split_set_arg("alpha=0.1").unwrap(), ("alpha", "0.1"));
        assert_eq!(split_set_arg(" order = 4 ").unwrap(), ("order", "4"));
        assert!(split_set_arg("alpha").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let check_with = |sets: &[(&str, &str)], key: &str, needle: &str| {
            let mut raw = RawConfig::defaults();
            for (k, v) in sets {
                raw.apply_set(k, v).unwrap();
            }
            let err = raw.build().unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(key), "{key}: {msg}");
            assert!(msg.contains(needle), "{key}: {msg}");
        };
        let check =
            |key: &str, value: &str, needle: &str| check_with(&[(key, value)], key, needle);
        check("alpha", "banana", "expected a number");
        check("alpha", "inf", "finite");
        check("steps", "-3", "integer");
        check("seeds", "1,,2", "comma-separated");
        check("seeds", "1,2,1", "listed twice");
        check("orders", "1,2", "start at 2");
        check("orders", "3,3", "listed twice");
        check("probe_seeds", "10", "at least 30");
        check("root_policy", "cursed", "naive or signed");
        check("problem", "cubic", "unknown problem");
        check("dim", "0", "at least 1");
        // problem parameters are parsed only where used, so select a
        // problem that reads them
        check_with(
            &[("problem", "skew_mlp"), ("label_flip", "1.5")],
            "label_flip",
            "[0, 1]",
        );
        check_with(
            &[("problem", "skew_mlp"), ("noise_rate", "-1.0")],
            "noise_rate",
            "positive",
        );
        check_with(&[("problem", "logistic"), ("classes", "1")], "classes", "at least 2");
    }

    #[test]
    fn optimizer_constraints_surface_as_invalid() {
        let mut raw = RawConfig::defaults();
        raw.apply_set("order", "1").unwrap();
        assert!(matches!(raw.build(), Err(ConfigError::Invalid(_))));

        let mut raw = RawConfig::defaults();
        raw.apply_set("engine", "reference_adam").unwrap();
        raw.apply_set("order", "4").unwrap();
        assert!(matches!(raw.build(), Err(ConfigError::Invalid(_))));

        let mut raw = RawConfig::defaults();
        raw.apply_set("engine", "reference_adam").unwrap();
        assert!(raw.build().is_ok(), "second order reference engine is fine");
    }

    #[test]
    fn enum_values_parse() {
        let mut raw = RawConfig::defaults();
        raw.apply_set("bias_mode", "explicit").unwrap();
        raw.apply_set("divergence_policy", "continue").unwrap();
        raw.apply_set("root_policy", "signed").unwrap();
        let full = raw.build().unwrap();
        assert_eq!(full.experiment.optimizer.bias_mode, BiasMode::Explicit);
        assert_eq!(
            full.experiment.divergence_policy,
            DivergencePolicy::Continue
        );
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut raw = RawConfig::defaults();
        let err = raw
            .apply_file(Path::new("/nonexistent/hadam.conf"))
            .unwrap_err();
        assert!(matches!(err, ConfigError::Io { .. }), "{err}");
    }

    #[test]
    fn dump_round_trips_through_the_parser() {
        let mut raw = RawConfig::defaults();
        raw.apply_text(
            "problem = mlp\nn_examples = 300\nhidden = 8\nalpha = 0.0025\norder = 5\nseeds = 11,12,13\n",
        )
        .unwrap();
        let full = raw.build().unwrap();
        let dump = raw.dump_resolved();

        let mut reparsed = RawConfig::defaults();
        reparsed.apply_text(&dump).unwrap();
        assert_eq!(reparsed.build().unwrap(), full);
        // and a dump of the reparse is byte-identical
        assert_eq!(reparsed.dump_resolved(), dump);
    }

    #[test]
    fn every_default_is_a_parseable_value() {
        // guards the LAYOUT table itself: each default must survive its own
        // parser
        let full = RawConfig::defaults().build().unwrap();
        assert!(full.experiment.validate().is_ok());
    }
}
