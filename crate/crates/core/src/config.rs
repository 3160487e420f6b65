//! Experiment configuration: a TOML file describing the data, the shared
//! training setup and the arm matrix (methods × schemes × noise × participation).
//!
//! ```toml
//! features = "train.fova"      # or a [synthetic] table
//! scheme = "shard-1"           # or [arms].schemes = [...]
//!
//! [federation]
//! rounds = 20
//! clients = 20
//!
//! [arms]
//! methods = ["lp-softmax", "ova-2stage"]
//! noise = [{ kind = "symmetric", ratio = 0.4 }]
//! ```
//!
//! Every key has a default except the data source and at least one scheme.

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::fed::{AnchorRounding, HeadInit, Method, NoiseSetting, RunConfig, StageConfig};
use crate::feature_store::SyntheticSpec;
use crate::noise::NoiseKind;
use crate::optimizer::{AdamWConfig, OptimizerConfig};
use crate::partition::Scheme;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    Features { path: PathBuf },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataConfig {
    pub source: DataSource,
    pub eval_features: Option<PathBuf>,
    /// Samples per class held out for evaluation when no eval file is given.
    pub eval_per_class: usize,
    pub l2_normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    /// Shared settings; method, scheme, noise and participation are set per arm.
    pub base: RunConfig,
    pub methods: Vec<Method>,
    pub schemes: Vec<Scheme>,
    /// `None` is the clean arm and always comes first.
    pub noise: Vec<Option<NoiseSetting>>,
    pub participation: Vec<f64>,
    /// Run a paired IID arm for every non-IID one so R(t) is defined.
    pub iid_reference: bool,
}

const TOP_KEYS: &[&str] = &[
    "features",
    "eval_features",
    "eval_per_class",
    "l2_normalize",
    "synthetic",
    "scheme",
    "federation",
    "training",
    "schedule",
    "arms",
];

struct Walker {
    errors: Vec<String>,
}

impl Walker {
    fn unknown(&mut self, table: &Table, allowed: &[&str], section: &str) {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                self.errors.push(format!(
                    "{section}: unknown key `{key}` (expected one of: {})",
                    allowed.join(", ")
                ));
            }
        }
    }

    fn section<'a>(&mut self, table: &'a Table, key: &str) -> Option<&'a Table> {
        match table.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                self.errors.push(format!("`{key}` must be a table"));
                None
            }
        }
    }

    fn float(&mut self, t: &Table, key: &str, default: f64, section: &str) -> f64 {
        match t.get(key) {
            None => default,
            Some(Value::Float(f)) => *f,
            Some(Value::Integer(i)) => *i as f64,
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected a number, got {}", v.type_str()));
                default
            }
        }
    }

    fn int(&mut self, t: &Table, key: &str, default: u64, section: &str) -> u64 {
        match t.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected a non-negative integer, got {v}"));
                default
            }
        }
    }

    fn boolean(&mut self, t: &Table, key: &str, default: bool, section: &str) -> bool {
        match t.get(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected true or false, got {v}"));
                default
            }
        }
    }

    fn string<'a>(&mut self, t: &'a Table, key: &str, section: &str) -> Option<&'a str> {
        match t.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(v) => {
                self.errors.push(format!("{section}.{key}: expected a string, got {}", v.type_str()));
                None
            }
        }
    }

    /// A scalar or an array of scalars, each handed to `parse`.
    fn list<T>(
        &mut self,
        t: &Table,
        key: &str,
        section: &str,
        mut parse: impl FnMut(&Value) -> Result<T, String>,
    ) -> Option<Vec<T>> {
        let v = t.get(key)?;
        let items: Vec<&Value> = match v {
            Value::Array(a) => a.iter().collect(),
            other => vec![other],
        };
        let mut out = Vec::new();
        for item in items {
            match parse(item) {
                Ok(x) => out.push(x),
                Err(e) => self.errors.push(format!("{section}.{key}: {e}")),
            }
        }
        Some(out)
    }

    fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        if !ok {
            self.errors.push(msg());
        }
    }
}

fn as_f64(v: &Value) -> Result<f64, String> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(format!("expected a number, got {other}")),
    }
}

fn parse_noise(v: &Value) -> Result<NoiseSetting, String> {
    let t = v
        .as_table()
        .ok_or_else(|| format!("expected {{ kind = ..., ratio = ... }}, got {v}"))?;
    for k in t.keys() {
        if k != "kind" && k != "ratio" {
            return Err(format!("unknown noise key `{k}`"));
        }
    }
    let kind = match t.get("kind").and_then(Value::as_str) {
        Some("symmetric") => NoiseKind::Symmetric,
        Some("asymmetric") => NoiseKind::Asymmetric,
        Some(other) => return Err(format!("unknown noise kind `{other}`; choices: symmetric, asymmetric")),
        None => return Err("noise entry needs `kind`".into()),
    };
    let ratio = t.get("ratio").ok_or("noise entry needs `ratio`").map_err(String::from).and_then(as_f64)?;
    if !(0.0..=1.0).contains(&ratio) {
        return Err(format!("noise ratio {ratio} outside [0, 1]"));
    }
    Ok(NoiseSetting { kind, ratio })
}

fn check_scheme(s: &Scheme) -> Result<(), String> {
    match *s {
        Scheme::Shard { k: 0 } => Err("shard count must be >= 1".into()),
        Scheme::DirichletBernoulli { p, alpha } if !(p > 0.0 && p <= 1.0) || !(alpha > 0.0) => {
            Err(format!("dirichlet needs 0 < p <= 1 and alpha > 0, got p={p}, alpha={alpha}"))
        }
        Scheme::Zipf { s } if !(s > 0.0) => Err(format!("zipf exponent must be > 0, got {s}")),
        _ => Ok(()),
    }
}

fn parse_synthetic(w: &mut Walker, t: &Table) -> SyntheticSpec {
    let sec = "synthetic";
    w.unknown(
        t,
        &[
            "num_classes",
            "dim",
            "samples_per_class",
            "centroid_separation",
            "within_class_std",
            "shared_offset",
            "seed",
        ],
        sec,
    );
    let spec = SyntheticSpec {
        num_classes: w.int(t, "num_classes", 10, sec) as usize,
        dim: w.int(t, "dim", 64, sec) as usize,
        samples_per_class: w.int(t, "samples_per_class", 100, sec) as usize,
        centroid_separation: w.float(t, "centroid_separation", 10.0, sec),
        within_class_std: w.float(t, "within_class_std", 1.0, sec),
        shared_offset: w.float(t, "shared_offset", 0.0, sec),
        seed: w.int(t, "seed", 0, sec),
    };
    if let Err(e) = spec.validate() {
        w.errors.push(format!("synthetic: {e}"));
    }
    spec
}

/// Parses and validates a config. Returns every violation found, not just the
/// first.
pub fn validate_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let root: Table = toml::from_str(text).map_err(|e| vec![format!("TOML syntax: {e}")])?;
    let mut w = Walker { errors: Vec::new() };
    w.unknown(&root, TOP_KEYS, "config");

    // data
    let features = w.string(&root, "features", "config").map(PathBuf::from);
    let synthetic = w.section(&root, "synthetic").map(|t| parse_synthetic(&mut w, t));
    let source = match (features, synthetic) {
        (Some(path), None) => Some(DataSource::Features { path }),
        (None, Some(spec)) => Some(DataSource::Synthetic(spec)),
        (Some(_), Some(_)) => {
            w.errors.push("give either `features` or [synthetic], not both".into());
            None
        }
        (None, None) => {
            w.errors.push("missing data source: set `features = \"...\"` or a [synthetic] table".into());
            None
        }
    };
    let eval_features = w.string(&root, "eval_features", "config").map(PathBuf::from);
    let eval_per_class = w.int(&root, "eval_per_class", 20, "config") as usize;
    w.check(eval_features.is_some() || eval_per_class >= 1, || {
        "eval_per_class must be >= 1 when no eval_features file is given".into()
    });
    let l2_normalize = w.boolean(&root, "l2_normalize", false, "config");

    // federation
    let defaults = RunConfig::default();
    let empty = Table::new();
    let fed = w.section(&root, "federation").unwrap_or(&empty);
    w.unknown(fed, &["rounds", "clients", "participation", "seeds"], "federation");
    let rounds = w.int(fed, "rounds", defaults.rounds as u64, "federation") as usize;
    let num_clients = w.int(fed, "clients", defaults.num_clients as u64, "federation") as usize;
    w.check(rounds >= 1, || format!("federation.rounds must be >= 1, got {rounds}"));
    w.check(num_clients >= 1, || format!("federation.clients must be >= 1, got {num_clients}"));
    let participation = w
        .list(fed, "participation", "federation", as_f64)
        .unwrap_or_else(|| vec![1.0]);
    for &p in &participation {
        w.check(p > 0.0 && p <= 1.0, || format!("federation.participation {p} outside (0, 1]"));
    }
    let seeds = w
        .list(fed, "seeds", "federation", |v| match v {
            Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            other => Err(format!("seeds must be non-negative integers, got {other}")),
        })
        .unwrap_or_else(|| defaults.seeds.clone());
    w.check(!seeds.is_empty(), || "federation.seeds must not be empty".into());

    // training
    let tr = w.section(&root, "training").unwrap_or(&empty);
    w.unknown(
        tr,
        &[
            "optimizer",
            "lr",
            "weight_decay",
            "beta1",
            "beta2",
            "eps",
            "local_epochs",
            "batch_size",
            "reset_optimizer",
            "bias",
            "init",
            "init_std",
        ],
        "training",
    );
    let adam = AdamWConfig::default();
    let lr = w.float(tr, "lr", adam.lr, "training");
    let weight_decay = w.float(tr, "weight_decay", adam.weight_decay, "training");
    let beta1 = w.float(tr, "beta1", adam.beta1, "training");
    let beta2 = w.float(tr, "beta2", adam.beta2, "training");
    let eps = w.float(tr, "eps", adam.eps, "training");
    w.check(lr > 0.0, || format!("training.lr must be > 0, got {lr}"));
    w.check(weight_decay >= 0.0, || format!("training.weight_decay must be >= 0, got {weight_decay}"));
    w.check((0.0..1.0).contains(&beta1), || format!("training.beta1 {beta1} outside [0, 1)"));
    w.check((0.0..1.0).contains(&beta2), || format!("training.beta2 {beta2} outside [0, 1)"));
    w.check(eps > 0.0, || format!("training.eps must be > 0, got {eps}"));
    let optimizer = match w.string(tr, "optimizer", "training").unwrap_or("adamw") {
        "adamw" => OptimizerConfig::AdamW(AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        }),
        "gradient" => OptimizerConfig::Gradient { lr },
        other => {
            w.errors.push(format!("training.optimizer: unknown `{other}`; choices: adamw, gradient"));
            OptimizerConfig::default()
        }
    };
    let sd = StageConfig::default();
    let local_epochs = w.int(tr, "local_epochs", sd.local_epochs as u64, "training") as usize;
    let batch_size = w.int(tr, "batch_size", sd.batch_size as u64, "training") as usize;
    w.check(batch_size >= 1, || "training.batch_size must be >= 1".into());
    let reset_optimizer = w.boolean(tr, "reset_optimizer", true, "training");
    let bias = w.boolean(tr, "bias", true, "training");
    let init_std = w.float(tr, "init_std", 0.01, "training");
    let init = match w.string(tr, "init", "training").unwrap_or("zeros") {
        "zeros" => HeadInit::Zeros,
        "gaussian" => {
            w.check(init_std > 0.0, || format!("training.init_std must be > 0, got {init_std}"));
            HeadInit::Gaussian { std: init_std }
        }
        other => {
            w.errors.push(format!("training.init: unknown `{other}`; choices: zeros, gaussian"));
            HeadInit::Zeros
        }
    };

    // schedule
    let sc = w.section(&root, "schedule").unwrap_or(&empty);
    w.unknown(
        sc,
        &["stage1_rounds", "anchor_fraction", "anchors_per_epoch", "anchor_rounding"],
        "schedule",
    );
    let stage1_rounds = w.int(sc, "stage1_rounds", sd.stage1_rounds as u64, "schedule") as usize;
    let anchor_fraction = w.float(sc, "anchor_fraction", sd.anchor_fraction, "schedule");
    w.check((0.0..=1.0).contains(&anchor_fraction), || {
        format!("schedule.anchor_fraction {anchor_fraction} outside [0, 1]")
    });
    let anchors_per_epoch = w.boolean(sc, "anchors_per_epoch", sd.anchors_per_epoch, "schedule");
    let anchor_rounding = match w.string(sc, "anchor_rounding", "schedule") {
        None => sd.anchor_rounding,
        Some("stochastic") => AnchorRounding::Stochastic,
        Some("ceil") => AnchorRounding::Ceil,
        Some(other) => {
            w.errors.push(format!("schedule.anchor_rounding: unknown `{other}`; choices: stochastic, ceil"));
            sd.anchor_rounding
        }
    };

    // arms
    let arms = w.section(&root, "arms").unwrap_or(&empty);
    w.unknown(arms, &["methods", "schemes", "noise", "iid_reference"], "arms");
    let methods = w
        .list(arms, "methods", "arms", |v| {
            v.as_str().ok_or_else(|| format!("expected a method name, got {v}"))?.parse()
        })
        .unwrap_or_else(|| Method::ALL.to_vec());
    w.check(!matches!(arms.get("methods"), Some(Value::Array(a)) if a.is_empty()), || {
        "arms.methods must not be empty".into()
    });
    let parse_scheme = |v: &Value| -> Result<Scheme, String> {
        let s: Scheme = v.as_str().ok_or_else(|| format!("expected a scheme name, got {v}"))?.parse()?;
        check_scheme(&s)?;
        Ok(s)
    };
    let mut schemes = w.list(&root, "scheme", "config", parse_scheme).unwrap_or_default();
    schemes.extend(w.list(arms, "schemes", "arms", parse_scheme).unwrap_or_default());
    let mut seen = Vec::new();
    schemes.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
    w.check(!schemes.is_empty() || root.contains_key("scheme") || arms.contains_key("schemes"), || {
        "missing partition: set `scheme = \"...\"` or [arms].schemes".into()
    });
    let mut noise = vec![None];
    noise.extend(
        w.list(arms, "noise", "arms", parse_noise)
            .unwrap_or_default()
            .into_iter()
            .filter(|n| n.ratio > 0.0)
            .map(Some),
    );
    let iid_reference = w.boolean(arms, "iid_reference", true, "arms");

    if !w.errors.is_empty() {
        return Err(w.errors);
    }
    Ok(ExperimentConfig {
        data: DataConfig {
            source: source.expect("checked above"),
            eval_features,
            eval_per_class,
            l2_normalize,
        },
        base: RunConfig {
            rounds,
            num_clients,
            participation: participation[0],
            seeds,
            method: methods[0],
            stage: StageConfig {
                stage1_rounds,
                anchor_fraction,
                local_epochs,
                batch_size,
                anchors_per_epoch,
                anchor_rounding,
            },
            optimizer,
            reset_optimizer,
            bias,
            init,
            scheme: schemes[0],
            noise: None,
        },
        methods,
        schemes,
        noise,
        participation,
        iid_reference,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = validate_config("features = \"x.fova\"\nscheme = \"shard-1\"\n").unwrap();
        let b = &cfg.base;
        assert_eq!((b.num_clients, b.rounds), (100, 50));
        assert_eq!(b.stage.local_epochs, 3);
        assert_eq!(b.stage.batch_size, 50);
        assert_eq!(b.seeds, vec![0, 42, 777, 1337, 15254]);
        match b.optimizer {
            OptimizerConfig::AdamW(a) => {
                assert_eq!(a.lr, 0.01);
                assert_eq!(a.weight_decay, 1e-4);
            }
            _ => panic!("expected AdamW"),
        }
        assert_eq!(cfg.schemes, vec![Scheme::Shard { k: 1 }]);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        assert_eq!(cfg.noise, vec![None]);
    }

    #[test]
    fn collects_every_violation() {
        let text = r#"
            features = "x.fova"
            scheme = "banana"
            [federation]
            participation = 1.5
            rounds = 0
            [schedule]
            anchor_fraction = 2.0
            colour = "red"
        "#;
        let errs = validate_config(text).unwrap_err();
        let all = errs.join("\n");
        assert!(all.contains("participation 1.5"), "{all}");
        assert!(all.contains("rounds must be >= 1"), "{all}");
        assert!(all.contains("anchor_fraction"), "{all}");
        assert!(all.contains("unknown key `colour`"), "{all}");
        assert!(all.contains("choices"), "{all}");
        assert!(errs.len() >= 5);
    }

    #[test]
    fn missing_pieces() {
        let errs = validate_config("").unwrap_err().join("\n");
        assert!(errs.contains("missing data source"));
        assert!(errs.contains("missing partition"));
    }

    #[test]
    fn synthetic_and_arms() {
        let text = r#"
            [synthetic]
            num_classes = 4
            dim = 8
            samples_per_class = 30
            centroid_separation = 5
            within_class_std = 1
            [federation]
            participation = [1.0, 0.5]
            seeds = [3]
            [arms]
            methods = ["ova-2stage"]
            schemes = ["iid", "zipf:2", "dirichlet:0.5,0.1"]
            noise = [{ kind = "symmetric", ratio = 0.4 }, { kind = "asymmetric", ratio = 0.2 }]
        "#;
        let cfg = validate_config(text).unwrap();
        assert!(matches!(cfg.data.source, DataSource::Synthetic(ref s) if s.num_classes == 4));
        assert_eq!(cfg.participation, vec![1.0, 0.5]);
        assert_eq!(cfg.schemes.len(), 3);
        assert_eq!(cfg.noise.len(), 3);
        assert_eq!(cfg.base.seeds, vec![3]);
    }

    #[test]
    fn bad_noise_and_method() {
        let text = r#"
            features = "x"
            scheme = "iid"
            [arms]
            methods = ["svm"]
            noise = [{ kind = "sideways", ratio = 0.1 }, { kind = "symmetric", ratio = 3 }]
        "#;
        let errs = validate_config(text).unwrap_err().join("\n");
        assert!(errs.contains("unknown method"));
        assert!(errs.contains("sideways"));
        assert!(errs.contains("outside [0, 1]"));
    }
}
