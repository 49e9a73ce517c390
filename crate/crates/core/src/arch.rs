//! Requirement sentence → target architecture.
//!
//! The mapping is a keyword rule table plus two count patterns
//! (`N classes`/`N-class` and `N-dimensional`/`N features`). A sentence
//! with no task keyword is rejected rather than guessed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::tokenize;
use crate::error::{Error, Result};
use crate::requirement::{Requirement, TaskMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Classification => "classification",
            TaskKind::Regression => "regression",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" => Ok(TaskKind::Classification),
            "regression" => Ok(TaskKind::Regression),
            other => Err(Error::input(format!("unknown task kind {other:?}"))),
        }
    }
}

/// Whatever a requirement sentence says explicitly about its task.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskHint {
    pub kind: Option<TaskKind>,
    pub n_classes: Option<usize>,
    pub n_inputs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TaskType {
    kind: TaskKind,
    n_classes: Option<usize>,
    n_inputs: usize,
}

impl TaskType {
    pub fn classification(n_classes: usize, n_inputs: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::input(format!(
                "classification needs at least 2 classes, got {n_classes}"
            )));
        }
        if n_inputs == 0 {
            return Err(Error::input("task needs at least one input"));
        }
        Ok(Self {
            kind: TaskKind::Classification,
            n_classes: Some(n_classes),
            n_inputs,
        })
    }

    pub fn regression(n_inputs: usize) -> Result<Self> {
        if n_inputs == 0 {
            return Err(Error::input("task needs at least one input"));
        }
        Ok(Self {
            kind: TaskKind::Regression,
            n_classes: None,
            n_inputs,
        })
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn n_classes(&self) -> Option<usize> {
        self.n_classes
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn out_dim(&self) -> usize {
        self.n_classes.unwrap_or(1)
    }
}

/// Keyword → task-kind rules. Loadable from TOML so new phrasings need no rebuild.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleTable {
    pub regression: Vec<String>,
    pub classification: Vec<String>,
    /// Words that imply a class count, e.g. `binary = 2`.
    pub class_words: BTreeMap<String, usize>,
}

impl Default for RuleTable {
    fn default() -> Self {
        Self {
            regression: vec!["regression".into(), "regress".into()],
            classification: vec![
                "classification".into(),
                "classify".into(),
                "classifying".into(),
                "analysis".into(),
            ],
            class_words: BTreeMap::from([("binary".into(), 2), ("ternary".into(), 3)]),
        }
    }
}

impl RuleTable {
    pub fn from_toml(text: &str) -> Result<Self> {
        let t: RuleTable =
            toml::from_str(text).map_err(|e| Error::Config(format!("rule table: {e}")))?;
        if t.regression.is_empty() && t.classification.is_empty() {
            return Err(Error::Config("rule table has no task keywords".into()));
        }
        if let Some((w, _)) = t.class_words.iter().find(|(_, &k)| k < 2) {
            return Err(Error::Config(format!("class word {w:?} maps to fewer than 2 classes")));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    fn normalized(words: &[String]) -> Vec<String> {
        words.iter().map(|w| w.trim().to_lowercase()).collect()
    }
}

/// Extracts task kind and counts from a sentence. Never guesses: absent
/// facts stay `None`.
pub fn parse_hint(sentence: &str, rules: &RuleTable) -> TaskHint {
    let tokens = tokenize(sentence);
    let regression = RuleTable::normalized(&rules.regression);
    let classification = RuleTable::normalized(&rules.classification);
    let has = |set: &[String]| tokens.iter().any(|t| set.contains(t));

    // regression wins over "analysis"-style words ("regression analysis")
    let kind = if has(&regression) {
        Some(TaskKind::Regression)
    } else if has(&classification) {
        Some(TaskKind::Classification)
    } else {
        None
    };

    let mut n_classes = None;
    let mut n_inputs = None;
    for (i, t) in tokens.iter().enumerate() {
        let Ok(n) = t.parse::<usize>() else {
            if n_classes.is_none() {
                if let Some(&k) = rules.class_words.get(t.as_str()) {
                    n_classes = Some(k);
                }
            }
            continue;
        };
        match tokens.get(i + 1).map(String::as_str) {
            Some("classes" | "class" | "categories" | "way") if n_classes.is_none() => {
                n_classes = Some(n)
            }
            Some("dimensional" | "features" | "feature" | "inputs") if n_inputs.is_none() => {
                n_inputs = Some(n)
            }
            _ => {}
        }
    }
    TaskHint {
        kind,
        n_classes: if kind == Some(TaskKind::Regression) {
            None
        } else {
            n_classes
        },
        n_inputs,
    }
}

/// Resolves a requirement to a complete task type, filling counts the
/// sentence leaves out from `meta` when given.
pub fn infer_task_type(req: &Requirement, meta: Option<&TaskMeta>, rules: &RuleTable) -> Result<TaskType> {
    let hint = parse_hint(req.sentence(), rules);
    let kind = hint
        .kind
        .ok_or_else(|| Error::UnrecognizedRequirement(req.sentence().to_string()))?;
    if let Some(m) = meta {
        if m.kind != kind {
            return Err(Error::Consistency(format!(
                "requirement says {} but task metadata says {}",
                kind.as_str(),
                m.kind.as_str()
            )));
        }
    }
    let n_inputs = resolve("feature count", hint.n_inputs, meta.map(|m| m.n_features), req)?;
    match kind {
        TaskKind::Regression => TaskType::regression(n_inputs),
        TaskKind::Classification => {
            let k = resolve("class count", hint.n_classes, meta.and_then(|m| m.n_classes), req)?;
            TaskType::classification(k, n_inputs)
        }
    }
}

fn resolve(what: &str, from_text: Option<usize>, from_meta: Option<usize>, req: &Requirement) -> Result<usize> {
    match (from_text, from_meta) {
        (Some(a), Some(b)) if a != b => Err(Error::Consistency(format!(
            "requirement states {what} {a} but task metadata has {b}"
        ))),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::input(format!(
            "{what} missing from requirement {:?} and no task metadata given",
            req.sentence()
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SizeProfile {
    pub hidden_dim: usize,
    pub n_layers: usize,
}

impl Default for SizeProfile {
    fn default() -> Self {
        Self {
            hidden_dim: 32,
            n_layers: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterMode {
    FullWeights,
    Lora,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraConfig {
    pub r: usize,
    pub alpha: f32,
    pub dropout: f32,
    /// Layer names (`layer0`, `layer1`, …) carrying adapters.
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub family: Family,
    pub task: TaskKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub hidden_dim: usize,
    pub n_layers: usize,
    pub adapter_mode: AdapterMode,
    pub lora: Option<LoraConfig>,
}

/// Rule-table architecture choice: always an MLP with generated full weights.
pub fn build_arch_spec(task: &TaskType, profile: &SizeProfile) -> ArchitectureSpec {
    ArchitectureSpec {
        family: Family::Mlp,
        task: task.kind(),
        in_dim: task.n_inputs(),
        out_dim: task.out_dim(),
        hidden_dim: profile.hidden_dim,
        n_layers: profile.n_layers,
        adapter_mode: AdapterMode::FullWeights,
        lora: None,
    }
}

impl ArchitectureSpec {
    /// The same network with LoRA adapters on `lora.targets`.
    pub fn with_lora(mut self, lora: LoraConfig) -> Self {
        self.adapter_mode = AdapterMode::Lora;
        self.lora = Some(lora);
        self
    }

    /// Layer widths from input to output.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.n_layers + 3);
        dims.push(self.in_dim);
        dims.extend(std::iter::repeat_n(self.hidden_dim, self.n_layers + 1));
        dims.push(self.out_dim);
        dims
    }

    pub fn num_layers(&self) -> usize {
        self.n_layers + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("architecture dimensions must be positive".into()));
        }
        match self.task {
            TaskKind::Regression if self.out_dim != 1 => {
                return Err(Error::Config("regression targets have one output".into()))
            }
            TaskKind::Classification if self.out_dim < 2 => {
                return Err(Error::Config("classifiers need at least two outputs".into()))
            }
            _ => {}
        }
        match (self.adapter_mode, &self.lora) {
            (AdapterMode::Lora, None) => Err(Error::Config("lora mode without lora config".into())),
            (AdapterMode::FullWeights, Some(_)) => {
                Err(Error::Config("lora config given in full-weights mode".into()))
            }
            _ => Ok(()),
        }
    }

    /// Canonical `key=value` text, one key per line, fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "family=mlp");
        let _ = writeln!(s, "task={}", self.task.as_str());
        let _ = writeln!(s, "in_dim={}", self.in_dim);
        let _ = writeln!(s, "out_dim={}", self.out_dim);
        let _ = writeln!(s, "hidden_dim={}", self.hidden_dim);
        let _ = writeln!(s, "n_layers={}", self.n_layers);
        match &self.lora {
            None => {
                let _ = writeln!(s, "adapter_mode=full_weights");
            }
            Some(l) => {
                let _ = writeln!(s, "adapter_mode=lora");
                let _ = writeln!(s, "lora_r={}", l.r);
                let _ = writeln!(s, "lora_alpha={}", l.alpha);
                let _ = writeln!(s, "lora_dropout={}", l.dropout);
                let _ = writeln!(s, "lora_targets={}", l.targets.join(","));
            }
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output (extra keys are ignored).
    pub fn from_text(text: &str) -> Result<Self> {
        let kv = parse_kv(text)?;
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::format(format!("architecture is missing {k:?}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::format(format!("{k} is not an integer")))
        };
        if get("family")? != "mlp" {
            return Err(Error::format(format!("unsupported family {:?}", get("family")?)));
        }
        let task = TaskKind::parse(get("task")?).map_err(|e| Error::format(e.to_string()))?;
        let mut spec = ArchitectureSpec {
            family: Family::Mlp,
            task,
            in_dim: num("in_dim")?,
            out_dim: num("out_dim")?,
            hidden_dim: num("hidden_dim")?,
            n_layers: num("n_layers")?,
            adapter_mode: AdapterMode::FullWeights,
            lora: None,
        };
        if spec.n_layers > 1024 {
            return Err(Error::format("n_layers is implausibly large"));
        }
        match get("adapter_mode")? {
            "full_weights" => {}
            "lora" => {
                let fl = |k: &str| -> Result<f32> {
                    get(k)?
                        .parse()
                        .map_err(|_| Error::format(format!("{k} is not a number")))
                };
                let targets: Vec<String> = get("lora_targets")?
                    .split(',')
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect();
                if let Some(t) = targets.iter().find(|t| !(0..spec.num_layers()).any(|k| **t == format!("layer{k}"))) {
                    return Err(Error::format(format!("lora target {t:?} is not a layer")));
                }
                let (alpha, dropout) = (fl("lora_alpha")?, fl("lora_dropout")?);
                if !alpha.is_finite() || !(0.0..1.0).contains(&dropout) {
                    return Err(Error::format("lora alpha must be finite and dropout in [0, 1)"));
                }
                spec = spec.with_lora(LoraConfig {
                    r: num("lora_r")?,
                    alpha,
                    dropout,
                    targets,
                });
            }
            other => return Err(Error::format(format!("unknown adapter mode {other:?}"))),
        }
        spec.validate().map_err(|e| Error::format(e.to_string()))?;
        Ok(spec)
    }
}

/// `key=value` lines; blank lines skipped; duplicate keys rejected.
pub(crate) fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("malformed header line {line:?}")))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::format(format!("duplicate header key {k:?}")));
        }
    }
    Ok(out)
}
