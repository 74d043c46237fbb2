//! Experiment configuration: a flat JSON document with dotted keys.
//!
//! The wire format is deliberately primitive — one JSON object whose keys are
//! dotted paths (`lr.client`, `attack.kind`) and whose values are scalars or
//! arrays — so configs stay grep-able and any language can write one.
//! [`ExperimentConfig::from_flat`] layers such a document over the defaults,
//! and `to_flat` emits the fully resolved document back out; because the map
//! is ordered, its JSON serialization is canonical and can be hashed to
//! identify a run regardless of the original key order.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::attack::{AttackKind, AttackSpec};
use crate::data::{BlobSpec, PartitionScheme};
use crate::defense::DefenseKind;
use crate::model::{ModelKind, ModelSpec};
use crate::{ceil_frac, Error, Result};

/// Paths to an IDX-format image/label corpus (optional alternative to
/// synthetic blobs).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdxPaths {
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
}

impl IdxPaths {
    pub fn is_complete(&self) -> bool {
        !self.train_images.is_empty()
            && !self.train_labels.is_empty()
            && !self.test_images.is_empty()
            && !self.test_labels.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.train_images.is_empty()
            && self.train_labels.is_empty()
            && self.test_images.is_empty()
            && self.test_labels.is_empty()
    }
}

/// Fully resolved settings for one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Total server rounds T.
    pub rounds: usize,
    /// Total clients n.
    pub n: usize,
    /// Clients sampled per round k.
    pub k: usize,
    /// Byzantine fraction ξ of the population.
    pub xi: f64,
    /// Fraction γ of each client's data shared with the server.
    pub gamma: f64,
    /// Momentum weight α on the previous global model.
    pub alpha: f64,
    /// Mix β between detection (1.0) and verification (0.0) scores.
    pub beta: f64,
    /// Credibility-trim fraction d for detector adaptation.
    pub d: f64,
    /// Master seed; every other random stream derives from it.
    pub seed: u64,
    /// Client-side minibatch size.
    pub batch_size: usize,
    pub lr_client: f64,
    pub lr_server: f64,
    pub lr_detection: f64,
    pub epochs_client: usize,
    pub epochs_server: usize,
    /// Detector pretraining passes over harvested source-domain probes.
    pub pretrain_epochs: usize,
    /// Clean federated warm-up rounds used to harvest those probes.
    pub pretrain_rounds: usize,
    pub data_num_classes: usize,
    pub data_dim: usize,
    pub data_per_class: usize,
    pub data_spread: f64,
    pub data_scheme: PartitionScheme,
    pub data_idx: IdxPaths,
    pub model_kind: ModelKind,
    pub model_hidden: Vec<usize>,
    /// Probe block override; empty means the model's default probe.
    pub model_probe_block: String,
    pub attack_kind: AttackKind,
    pub attack_c: f64,
    pub attack_a: f64,
    pub attack_g: f64,
    pub defense_kind: DefenseKind,
    /// Adversary count krum is sized for; `None` derives ⌈ξ·k⌉.
    pub defense_assumed_byzantine: Option<usize>,
    /// Trim fraction for trimmed-mean; `None` derives from ξ.
    pub defense_trim_fraction: Option<f64>,
    pub defense_weiszfeld_tol: f64,
    pub defense_weiszfeld_max_iters: usize,
    /// Whether the credibility defense runs its shared-shard refinement pass.
    pub defense_unified_update: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            rounds: 60,
            n: 10,
            k: 10,
            xi: 0.2,
            gamma: 0.05,
            alpha: 0.1,
            beta: 0.5,
            d: 0.1,
            seed: 42,
            batch_size: 32,
            lr_client: 0.1,
            lr_server: 0.1,
            lr_detection: 0.02,
            epochs_client: 5,
            epochs_server: 1,
            pretrain_epochs: 50,
            pretrain_rounds: 5,
            data_num_classes: 10,
            data_dim: 16,
            data_per_class: 150,
            data_spread: 0.15,
            data_scheme: PartitionScheme::NonIid2,
            data_idx: IdxPaths::default(),
            model_kind: ModelKind::MlpClassifier,
            model_hidden: vec![16],
            model_probe_block: String::new(),
            attack_kind: AttackKind::None,
            attack_c: 5.0,
            attack_a: -5.0,
            attack_g: 0.3,
            defense_kind: DefenseKind::Brca,
            defense_assumed_byzantine: None,
            defense_trim_fraction: None,
            defense_weiszfeld_tol: 1e-10,
            defense_weiszfeld_max_iters: 200,
            defense_unified_update: true,
        }
    }
}

/// Keys a config document must state explicitly.
pub const REQUIRED_KEYS: [&str; 5] = ["rounds", "n", "k", "attack.kind", "defense.kind"];

fn bad(key: &str, value: &Value, want: &str) -> Error {
    Error::InvalidConfig(format!("key `{key}`: expected {want}, got {value}"))
}

fn as_usize(key: &str, value: &Value) -> Result<usize> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| bad(key, value, "a non-negative integer"))
}

fn as_u64(key: &str, value: &Value) -> Result<u64> {
    value
        .as_u64()
        .ok_or_else(|| bad(key, value, "a non-negative integer"))
}

fn as_f64(key: &str, value: &Value) -> Result<f64> {
    value
        .as_f64()
        .ok_or_else(|| bad(key, value, "a number"))
}

fn as_bool(key: &str, value: &Value) -> Result<bool> {
    value.as_bool().ok_or_else(|| bad(key, value, "a boolean"))
}

fn as_string(key: &str, value: &Value) -> Result<String> {
    value
        .as_str()
        .map(str::to_owned)
        .ok_or_else(|| bad(key, value, "a string"))
}

fn as_usize_array(key: &str, value: &Value) -> Result<Vec<usize>> {
    value
        .as_array()
        .ok_or_else(|| bad(key, value, "an array of integers"))?
        .iter()
        .map(|v| as_usize(key, v))
        .collect()
}

fn as_enum<T: serde::de::DeserializeOwned>(key: &str, value: &Value, names: &str) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|_| bad(key, value, names))
}

impl ExperimentConfig {
    /// Apply one dotted-key setting.
    pub fn set_key(&mut self, key: &str, value: &Value) -> Result<()> {
        match key {
            "rounds" => self.rounds = as_usize(key, value)?,
            "n" => self.n = as_usize(key, value)?,
            "k" => self.k = as_usize(key, value)?,
            "xi" => self.xi = as_f64(key, value)?,
            "gamma" => self.gamma = as_f64(key, value)?,
            "alpha" => self.alpha = as_f64(key, value)?,
            "beta" => self.beta = as_f64(key, value)?,
            "d" => self.d = as_f64(key, value)?,
            "seed" => self.seed = as_u64(key, value)?,
            "batch_size" => self.batch_size = as_usize(key, value)?,
            "lr.client" => self.lr_client = as_f64(key, value)?,
            "lr.server" => self.lr_server = as_f64(key, value)?,
            "lr.detection" => self.lr_detection = as_f64(key, value)?,
            "epochs.client" => self.epochs_client = as_usize(key, value)?,
            "epochs.server" => self.epochs_server = as_usize(key, value)?,
            "pretrain.epochs" => self.pretrain_epochs = as_usize(key, value)?,
            "pretrain.rounds" => self.pretrain_rounds = as_usize(key, value)?,
            "data.num_classes" => self.data_num_classes = as_usize(key, value)?,
            "data.dim" => self.data_dim = as_usize(key, value)?,
            "data.per_class" => self.data_per_class = as_usize(key, value)?,
            "data.spread" => self.data_spread = as_f64(key, value)?,
            "data.scheme" => {
                self.data_scheme =
                    as_enum(key, value, "one of non-iid-1|non-iid-2|non-iid-3|iid")?
            }
            "data.idx.train_images" => self.data_idx.train_images = as_string(key, value)?,
            "data.idx.train_labels" => self.data_idx.train_labels = as_string(key, value)?,
            "data.idx.test_images" => self.data_idx.test_images = as_string(key, value)?,
            "data.idx.test_labels" => self.data_idx.test_labels = as_string(key, value)?,
            "model.kind" => {
                self.model_kind = as_enum(
                    key,
                    value,
                    "one of logistic-regression|mlp-classifier|mlp-autoencoder",
                )?
            }
            "model.hidden" => self.model_hidden = as_usize_array(key, value)?,
            "model.probe_block" => self.model_probe_block = as_string(key, value)?,
            "attack.kind" => {
                self.attack_kind = as_enum(
                    key,
                    value,
                    "one of none|same-value|sign-flipping|gaussian",
                )?
            }
            "attack.c" => self.attack_c = as_f64(key, value)?,
            "attack.a" => self.attack_a = as_f64(key, value)?,
            "attack.g" => self.attack_g = as_f64(key, value)?,
            "defense.kind" => {
                self.defense_kind = as_enum(
                    key,
                    value,
                    "one of brca|no-defense|krum|geomed|trimmed-mean|abnormal",
                )?
            }
            "defense.assumed_byzantine" => {
                self.defense_assumed_byzantine = Some(as_usize(key, value)?)
            }
            "defense.trim_fraction" => self.defense_trim_fraction = Some(as_f64(key, value)?),
            "defense.weiszfeld_tol" => self.defense_weiszfeld_tol = as_f64(key, value)?,
            "defense.weiszfeld_max_iters" => {
                self.defense_weiszfeld_max_iters = as_usize(key, value)?
            }
            "defense.unified_update" => self.defense_unified_update = as_bool(key, value)?,
            _ => return Err(Error::InvalidConfig(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Build a config from a flat dotted-key document, erroring on missing
    /// required keys, unknown keys, bad value types, or invalid settings.
    pub fn from_flat(map: &BTreeMap<String, Value>) -> Result<Self> {
        for required in REQUIRED_KEYS {
            if !map.contains_key(required) {
                return Err(Error::InvalidConfig(format!(
                    "missing required key `{required}`"
                )));
            }
        }
        let mut config = Self::default();
        for (key, value) in map {
            config.set_key(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    /// Parse a JSON document of flat dotted keys.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        let map = flatten_document(&value)?;
        Self::from_flat(&map)
    }

    /// The fully resolved flat document. Optional keys appear only when set.
    pub fn to_flat(&self) -> BTreeMap<String, Value> {
        let mut map = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            map.insert(k.to_owned(), v);
        };
        put("rounds", self.rounds.into());
        put("n", self.n.into());
        put("k", self.k.into());
        put("xi", json_f64(self.xi));
        put("gamma", json_f64(self.gamma));
        put("alpha", json_f64(self.alpha));
        put("beta", json_f64(self.beta));
        put("d", json_f64(self.d));
        put("seed", self.seed.into());
        put("batch_size", self.batch_size.into());
        put("lr.client", json_f64(self.lr_client));
        put("lr.server", json_f64(self.lr_server));
        put("lr.detection", json_f64(self.lr_detection));
        put("epochs.client", self.epochs_client.into());
        put("epochs.server", self.epochs_server.into());
        put("pretrain.epochs", self.pretrain_epochs.into());
        put("pretrain.rounds", self.pretrain_rounds.into());
        put("data.num_classes", self.data_num_classes.into());
        put("data.dim", self.data_dim.into());
        put("data.per_class", self.data_per_class.into());
        put("data.spread", json_f64(self.data_spread));
        put(
            "data.scheme",
            serde_json::to_value(self.data_scheme).expect("scheme serializes"),
        );
        if !self.data_idx.is_empty() {
            put("data.idx.train_images", self.data_idx.train_images.clone().into());
            put("data.idx.train_labels", self.data_idx.train_labels.clone().into());
            put("data.idx.test_images", self.data_idx.test_images.clone().into());
            put("data.idx.test_labels", self.data_idx.test_labels.clone().into());
        }
        put(
            "model.kind",
            serde_json::to_value(self.model_kind).expect("model kind serializes"),
        );
        put(
            "model.hidden",
            Value::Array(self.model_hidden.iter().map(|&h| h.into()).collect()),
        );
        if !self.model_probe_block.is_empty() {
            put("model.probe_block", self.model_probe_block.clone().into());
        }
        put(
            "attack.kind",
            serde_json::to_value(self.attack_kind).expect("attack kind serializes"),
        );
        put("attack.c", json_f64(self.attack_c));
        put("attack.a", json_f64(self.attack_a));
        put("attack.g", json_f64(self.attack_g));
        put(
            "defense.kind",
            serde_json::to_value(self.defense_kind).expect("defense kind serializes"),
        );
        if let Some(f) = self.defense_assumed_byzantine {
            put("defense.assumed_byzantine", f.into());
        }
        if let Some(t) = self.defense_trim_fraction {
            put("defense.trim_fraction", json_f64(t));
        }
        put("defense.weiszfeld_tol", json_f64(self.defense_weiszfeld_tol));
        put(
            "defense.weiszfeld_max_iters",
            self.defense_weiszfeld_max_iters.into(),
        );
        put("defense.unified_update", self.defense_unified_update.into());
        map
    }

    /// Canonical JSON form: the flat document with sorted keys.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.to_flat()).expect("flat config serializes")
    }

    /// Enforce every cross-field rule. Called by [`Self::from_flat`]; call
    /// again after manual field edits.
    pub fn validate(&self) -> Result<()> {
        let rule = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::InvalidConfig(msg)) };
        rule(self.rounds >= 1, format!("rounds must be >= 1, got {}", self.rounds))?;
        rule(self.n >= 1, format!("n must be >= 1, got {}", self.n))?;
        rule(
            (1..=self.n).contains(&self.k),
            format!("k must be in 1..=n, got k={} n={}", self.k, self.n),
        )?;
        rule(
            (0.0..0.5).contains(&self.xi),
            format!("xi must be in [0, 0.5), got {}", self.xi),
        )?;
        rule(
            self.gamma > 0.0 && self.gamma < 1.0,
            format!("gamma must be in (0, 1), got {}", self.gamma),
        )?;
        rule(
            (0.0..1.0).contains(&self.alpha),
            format!("alpha must be in [0, 1), got {}", self.alpha),
        )?;
        rule(
            (0.0..=1.0).contains(&self.beta),
            format!("beta must be in [0, 1], got {}", self.beta),
        )?;
        rule(
            (0.0..0.5).contains(&self.d),
            format!("d must be in [0, 0.5), got {}", self.d),
        )?;
        rule(self.batch_size >= 1, "batch_size must be >= 1".into())?;
        for (name, lr) in [
            ("lr.client", self.lr_client),
            ("lr.server", self.lr_server),
            ("lr.detection", self.lr_detection),
        ] {
            rule(
                lr.is_finite() && lr > 0.0,
                format!("{name} must be > 0, got {lr}"),
            )?;
        }
        rule(
            self.data_num_classes >= 2,
            format!("data.num_classes must be >= 2, got {}", self.data_num_classes),
        )?;
        rule(self.data_dim >= 1, "data.dim must be >= 1".into())?;
        rule(
            self.data_per_class >= 5,
            format!("data.per_class must be >= 5, got {}", self.data_per_class),
        )?;
        rule(
            self.data_spread.is_finite() && self.data_spread > 0.0,
            format!("data.spread must be > 0, got {}", self.data_spread),
        )?;
        if !self.data_idx.is_empty() && !self.data_idx.is_complete() {
            return Err(Error::InvalidConfig(
                "data.idx.* keys must be given all together (train/test images and labels)"
                    .into(),
            ));
        }
        let cpc = self.data_scheme.classes_per_client(self.data_num_classes);
        rule(
            cpc <= self.data_num_classes,
            format!(
                "partition scheme needs {cpc} classes per client but only {} exist",
                self.data_num_classes
            ),
        )?;
        rule(
            (self.n * cpc) % self.data_num_classes == 0,
            format!(
                "n={} clients x {cpc} classes each must divide evenly into {} classes",
                self.n, self.data_num_classes
            ),
        )?;
        rule(
            self.model_kind != ModelKind::MlpAutoencoder,
            "model.kind mlp-autoencoder cannot serve as the federated task model".into(),
        )?;
        self.model_spec()?.validate()?;
        self.attack_spec().validate()?;
        match self.defense_kind {
            DefenseKind::Krum => {
                let f = self.assumed_byzantine();
                rule(
                    self.k >= f + 3,
                    format!(
                        "krum sized for f={f} adversaries needs k >= {}, got k={}",
                        f + 3,
                        self.k
                    ),
                )?;
            }
            DefenseKind::TrimmedMean => {
                let t = ceil_frac(self.trim_fraction(), self.k);
                rule(
                    (0.0..0.5).contains(&self.trim_fraction()),
                    format!(
                        "defense.trim_fraction must be in [0, 0.5), got {}",
                        self.trim_fraction()
                    ),
                )?;
                rule(
                    2 * t < self.k,
                    format!(
                        "trimmed mean drops {t} from each end and needs k > {}, got k={}",
                        2 * t,
                        self.k
                    ),
                )?;
            }
            DefenseKind::Geomed => {
                rule(
                    self.defense_weiszfeld_tol > 0.0 && self.defense_weiszfeld_tol.is_finite(),
                    format!(
                        "defense.weiszfeld_tol must be > 0, got {}",
                        self.defense_weiszfeld_tol
                    ),
                )?;
                rule(
                    self.defense_weiszfeld_max_iters >= 1,
                    "defense.weiszfeld_max_iters must be >= 1".into(),
                )?;
            }
            DefenseKind::Brca | DefenseKind::Abnormal => {
                // Anomaly scores are standardized across the round's updates,
                // which needs at least two of them.
                rule(
                    self.k >= 2,
                    format!(
                        "defense {} scores updates against each other and needs k >= 2, got k={}",
                        self.defense_kind.name(),
                        self.k
                    ),
                )?;
            }
            _ => {}
        }
        Ok(())
    }

    /// The task model induced by the model and data settings.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let mut spec = match self.model_kind {
            ModelKind::LogisticRegression => {
                ModelSpec::logistic_regression(self.data_dim, self.data_num_classes)
            }
            ModelKind::MlpClassifier => ModelSpec::mlp_classifier(
                self.data_dim,
                self.model_hidden.clone(),
                self.data_num_classes,
            ),
            ModelKind::MlpAutoencoder => {
                return Err(Error::InvalidConfig(
                    "model.kind mlp-autoencoder cannot serve as the federated task model".into(),
                ))
            }
        };
        if !self.model_probe_block.is_empty() {
            spec.probe_block = self.model_probe_block.clone();
        }
        spec.validate()?;
        Ok(spec)
    }

    /// The synthetic-data recipe induced by the data settings.
    pub fn blob_spec(&self) -> BlobSpec {
        BlobSpec {
            num_classes: self.data_num_classes,
            dim: self.data_dim,
            per_class: self.data_per_class,
            spread: self.data_spread,
        }
    }

    /// The attack settings, seeded from the master seed.
    pub fn attack_spec(&self) -> AttackSpec {
        AttackSpec {
            kind: self.attack_kind,
            c: self.attack_c,
            a: self.attack_a,
            g: self.attack_g,
            seed: self.seed,
        }
    }

    /// Adversary count the sized defenses assume: explicit override or ⌈ξ·k⌉.
    pub fn assumed_byzantine(&self) -> usize {
        self.defense_assumed_byzantine
            .unwrap_or_else(|| ceil_frac(self.xi, self.k))
    }

    /// Trim fraction for trimmed-mean: explicit override or ξ.
    pub fn trim_fraction(&self) -> f64 {
        self.defense_trim_fraction.unwrap_or(self.xi)
    }
}

fn json_f64(v: f64) -> Value {
    serde_json::Number::from_f64(v)
        .map(Value::Number)
        .expect("finite config number")
}

/// Interpret a parsed JSON document as a flat dotted-key map.
pub fn flatten_document(value: &Value) -> Result<BTreeMap<String, Value>> {
    let object = value
        .as_object()
        .ok_or_else(|| Error::InvalidConfig("config must be a JSON object".into()))?;
    let mut map = BTreeMap::new();
    for (key, v) in object {
        if v.is_object() {
            return Err(Error::InvalidConfig(format!(
                "key `{key}`: nested objects are not allowed; use flat dotted keys"
            )));
        }
        map.insert(key.clone(), v.clone());
    }
    Ok(map)
}

/// Parse one `KEY=VALUE` override. The value is read as JSON when possible
/// (numbers, booleans, arrays, quoted strings) and as a bare string
/// otherwise, so `attack.kind=same-value` works unquoted.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!("override `{text}` must look like KEY=VALUE"))
    })?;
    if key.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "override `{text}` has an empty key"
        )));
    }
    let value = match serde_json::from_str::<Value>(raw) {
        Ok(v) if !v.is_object() => v,
        _ => Value::String(raw.to_owned()),
    };
    Ok((key.to_owned(), value))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> BTreeMap<String, Value> {
        let text = r#"{
            "rounds": 5, "n": 10, "k": 10,
            "attack.kind": "same-value", "defense.kind": "brca"
        }"#;
        flatten_document(&serde_json::from_str(text).unwrap()).unwrap()
    }

    #[test]
    fn minimal_document_fills_defaults() {
        let config = ExperimentConfig::from_flat(&minimal()).unwrap();
        assert_eq!(config.rounds, 5);
        assert_eq!(config.attack_kind, AttackKind::SameValue);
        assert_eq!(config.defense_kind, DefenseKind::Brca);
        assert_eq!(config.lr_client, 0.1);
        assert_eq!(config.lr_detection, 0.02);
        assert_eq!(config.epochs_client, 5);
        assert_eq!(config.xi, 0.2);
        assert_eq!(config.gamma, 0.05);
        assert_eq!(config.data_scheme, PartitionScheme::NonIid2);
    }

    #[test]
    fn missing_required_key_is_named_in_the_error() {
        let mut map = minimal();
        map.remove("attack.kind");
        let err = ExperimentConfig::from_flat(&map).unwrap_err();
        assert!(err.to_string().contains("attack.kind"), "{err}");
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut map = minimal();
        map.insert("learning_rate".into(), 1.into());
        let err = ExperimentConfig::from_flat(&map).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
    }

    #[test]
    fn wrong_value_types_are_rejected() {
        for (key, value) in [
            ("rounds", Value::String("ten".into())),
            ("xi", Value::Bool(true)),
            ("model.hidden", Value::from(16)),
            ("defense.kind", Value::String("median".into())),
            ("data.scheme", Value::String("non-iid-9".into())),
            ("rounds", Value::from(-3)),
        ] {
            let mut map = minimal();
            map.insert(key.into(), value);
            assert!(
                ExperimentConfig::from_flat(&map).is_err(),
                "{key} accepted a bad value"
            );
        }
    }

    #[test]
    fn out_of_range_settings_are_rejected() {
        for (key, value) in [
            ("xi", Value::from(0.5)),
            ("gamma", Value::from(0.0)),
            ("gamma", Value::from(1.0)),
            ("alpha", Value::from(1.0)),
            ("beta", Value::from(1.5)),
            ("d", Value::from(0.5)),
            ("k", Value::from(11)),
            ("lr.client", Value::from(0.0)),
            ("data.per_class", Value::from(3)),
            ("model.kind", Value::String("mlp-autoencoder".into())),
        ] {
            let mut map = minimal();
            map.insert(key.into(), value.clone());
            assert!(
                ExperimentConfig::from_flat(&map).is_err(),
                "{key}={value} accepted"
            );
        }
    }

    #[test]
    fn partition_feasibility_is_checked() {
        // 10 clients x 2 classes each does not divide into 6 classes.
        let mut map = minimal();
        map.insert("data.num_classes".into(), Value::from(6));
        assert!(ExperimentConfig::from_flat(&map).is_err());
        // 12 clients works: 12*2 = 24 = 6 classes x 4 pieces.
        map.insert("n".into(), Value::from(12));
        map.insert("k".into(), Value::from(12));
        assert!(ExperimentConfig::from_flat(&map).is_ok());
    }

    #[test]
    fn krum_and_trimmed_mean_sizing_rules() {
        let mut map = minimal();
        map.insert("defense.kind".into(), Value::String("krum".into()));
        map.insert("defense.assumed_byzantine".into(), Value::from(8));
        assert!(ExperimentConfig::from_flat(&map).is_err());
        map.insert("defense.assumed_byzantine".into(), Value::from(2));
        assert!(ExperimentConfig::from_flat(&map).is_ok());

        let mut map = minimal();
        map.insert("defense.kind".into(), Value::String("trimmed-mean".into()));
        map.insert("defense.trim_fraction".into(), Value::from(0.3));
        let config = ExperimentConfig::from_flat(&map).unwrap();
        assert_eq!(config.trim_fraction(), 0.3);
        map.insert("k".into(), Value::from(2));
        map.insert("n".into(), Value::from(10));
        assert!(ExperimentConfig::from_flat(&map).is_err());
    }

    #[test]
    fn resolved_document_round_trips() {
        let mut map = minimal();
        map.insert("gamma".into(), Value::from(0.01));
        map.insert("model.hidden".into(), serde_json::json!([8, 4]));
        let config = ExperimentConfig::from_flat(&map).unwrap();
        let flat = config.to_flat();
        let back = ExperimentConfig::from_flat(&flat).unwrap();
        assert_eq!(config, back);
        assert_eq!(config.canonical_json(), back.canonical_json());
    }

    #[test]
    fn canonical_json_ignores_key_order() {
        // BTreeMap already sorts; build two documents with different textual
        // order and confirm identical canonical output.
        let a = ExperimentConfig::from_json_str(
            r#"{"rounds":5,"n":10,"k":10,"attack.kind":"gaussian","defense.kind":"krum"}"#,
        )
        .unwrap();
        let b = ExperimentConfig::from_json_str(
            r#"{"defense.kind":"krum","attack.kind":"gaussian","k":10,"n":10,"rounds":5}"#,
        )
        .unwrap();
        assert_eq!(a.canonical_json(), b.canonical_json());
    }

    #[test]
    fn nested_objects_are_rejected() {
        let err = ExperimentConfig::from_json_str(
            r#"{"rounds":5,"n":10,"k":10,"attack":{"kind":"none"},"defense.kind":"brca"}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("flat dotted keys"), "{err}");
    }

    #[test]
    fn overrides_parse_json_and_bare_strings() {
        assert_eq!(
            parse_override("xi=0.3").unwrap(),
            ("xi".into(), Value::from(0.3))
        );
        assert_eq!(
            parse_override("attack.kind=same-value").unwrap(),
            ("attack.kind".into(), Value::String("same-value".into()))
        );
        assert_eq!(
            parse_override("model.hidden=[8,4]").unwrap(),
            ("model.hidden".into(), serde_json::json!([8, 4]))
        );
        assert_eq!(
            parse_override("defense.unified_update=false").unwrap(),
            ("defense.unified_update".into(), Value::Bool(false))
        );
        assert!(parse_override("no-equals-sign").is_err());
        assert!(parse_override("=5").is_err());
    }

    #[test]
    fn idx_paths_must_come_complete() {
        let mut map = minimal();
        map.insert(
            "data.idx.train_images".into(),
            Value::String("/tmp/x".into()),
        );
        assert!(ExperimentConfig::from_flat(&map).is_err());
        for key in [
            "data.idx.train_labels",
            "data.idx.test_images",
            "data.idx.test_labels",
        ] {
            map.insert(key.into(), Value::String("/tmp/x".into()));
        }
        let config = ExperimentConfig::from_flat(&map).unwrap();
        assert!(config.data_idx.is_complete());
        let flat = config.to_flat();
        assert!(flat.contains_key("data.idx.test_labels"));
    }

    #[test]
    fn attack_spec_carries_the_master_seed() {
        let mut map = minimal();
        map.insert("seed".into(), Value::from(99));
        let config = ExperimentConfig::from_flat(&map).unwrap();
        assert_eq!(config.attack_spec().seed, 99);
        assert_eq!(config.assumed_byzantine(), 2); // ceil(0.2 * 10)
    }
}
