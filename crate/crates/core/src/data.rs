//! Task datasets: CSV ingestion, seeded splits, standardization, batches.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::{TaskKind, TaskType};
use crate::error::{Error, Result};
use crate::requirement::{SampleRow, TaskMeta};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f32>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(c) => Targets::Classes(rows.iter().map(|&i| c[i]).collect()),
            Targets::Values(v) => Targets::Values(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

/// A mini-batch ready for a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Tensor,
    pub y: Targets,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Regression targets as an `n × 1` tensor.
    pub fn value_tensor(&self) -> Result<Tensor> {
        match &self.y {
            Targets::Values(v) => Tensor::new(vec![v.len(), 1], v.clone()),
            Targets::Classes(_) => Err(Error::input("batch holds class labels, not values")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Eval,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Seeded 70/15/15 shuffle split of `n` rows.
    pub fn seeded(n: usize, seed: u64) -> Result<Self> {
        let n_train = (n as f64 * 0.70).round() as usize;
        let n_eval = (n as f64 * 0.15).round() as usize;
        if n_train == 0 || n_eval == 0 || n_train + n_eval >= n {
            return Err(Error::input(format!("{n} rows are too few for a train/eval/test split")));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test = idx.split_off(n_train + n_eval);
        let eval = idx.split_off(n_train);
        Ok(Self { train: idx, eval, test })
    }
}

/// A task dataset with standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub domain_tag: String,
    pub features: Tensor,
    pub targets: Targets,
    pub splits: Splits,
    pub task: TaskType,
    /// Original label strings in class-index order (classification only).
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Splits the rows with `seed` and standardizes every feature column with
    /// the train split's mean and standard deviation.
    pub fn from_raw(
        name: &str,
        domain_tag: &str,
        features: Tensor,
        targets: Targets,
        class_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        let (n, f) = features.dims2()?;
        if targets.len() != n {
            return Err(Error::input(format!("{n} feature rows but {} targets", targets.len())));
        }
        let task = match &targets {
            Targets::Classes(c) => {
                let k = c.iter().copied().max().map_or(0, |m| m + 1).max(class_names.len());
                let distinct: BTreeSet<usize> = c.iter().copied().collect();
                if distinct.len() < 2 {
                    return Err(Error::input(format!("{name}: label column has a single class")));
                }
                TaskType::classification(k, f)?
            }
            Targets::Values(_) => TaskType::regression(f)?,
        };
        let splits = Splits::seeded(n, seed)?;
        let features = standardize(features, &splits.train)?;
        if !features.is_finite() {
            return Err(Error::input(format!("{name}: features are not finite")));
        }
        Ok(Self {
            name: name.to_string(),
            domain_tag: domain_tag.to_string(),
            features,
            targets,
            splits,
            task,
            class_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.shape()[1]
    }

    pub fn split(&self, which: Split) -> &[usize] {
        match which {
            Split::Train => &self.splits.train,
            Split::Eval => &self.splits.eval,
            Split::Test => &self.splits.test,
        }
    }

    pub fn batch(&self, rows: &[usize]) -> Result<Batch> {
        if rows.is_empty() {
            return Err(Error::input("empty batch"));
        }
        Ok(Batch {
            x: self.features.select_rows(rows)?,
            y: self.targets.select(rows),
        })
    }

    pub fn split_batch(&self, which: Split) -> Result<Batch> {
        self.batch(self.split(which))
    }

    pub fn meta(&self) -> TaskMeta {
        TaskMeta {
            kind: self.task.kind(),
            n_features: self.n_features(),
            n_classes: self.task.n_classes(),
            domain_tag: Some(self.domain_tag.clone()),
        }
    }

    /// Test accuracy of always predicting the most frequent train class.
    pub fn majority_accuracy(&self) -> Option<f64> {
        let Targets::Classes(c) = &self.targets else {
            return None;
        };
        let mut counts = BTreeMap::new();
        for &i in &self.splits.train {
            *counts.entry(c[i]).or_insert(0usize) += 1;
        }
        let majority = counts
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&k, _)| k)?;
        let hits = self.splits.test.iter().filter(|&&i| c[i] == majority).count();
        Some(hits as f64 / self.splits.test.len() as f64)
    }
}

fn standardize(features: Tensor, train: &[usize]) -> Result<Tensor> {
    let (_, f) = features.dims2()?;
    let mut mean = vec![0.0f64; f];
    let mut var = vec![0.0f64; f];
    for &i in train {
        for (m, &v) in mean.iter_mut().zip(features.row(i)) {
            *m += v as f64;
        }
    }
    let nt = train.len() as f64;
    mean.iter_mut().for_each(|m| *m /= nt);
    for &i in train {
        for ((s, &v), m) in var.iter_mut().zip(features.row(i)).zip(&mean) {
            *s += (v as f64 - m).powi(2);
        }
    }
    let std: Vec<f64> = var
        .iter()
        .map(|s| {
            let sd = (s / nt).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let shape = features.shape().to_vec();
    let mut data = features.into_data();
    for row in data.chunks_mut(f) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&std) {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
    Tensor::new(shape, data)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Last,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub label_column: LabelColumn,
    pub kind: TaskKind,
    /// Domain tag for the requirement sentence; defaults to the file stem.
    pub domain_tag: Option<String>,
    pub seed: u64,
}

impl CsvSchema {
    pub fn classification_last(seed: u64) -> Self {
        Self {
            label_column: LabelColumn::Last,
            kind: TaskKind::Classification,
            domain_tag: None,
            seed,
        }
    }
}

/// Loads a headed CSV as a task dataset.
///
/// A feature column is categorical when its first value does not parse as a
/// number; categories are one-hot encoded in order of first appearance.
/// Class labels map to `0..C` in sorted order (numeric order when every
/// label is numeric).
pub fn load_csv_task(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    read_csv_task(file, path, &name, schema)
}

/// The first `max_rows` rows of a headed CSV as prompt samples, features
/// rendered `name: value` in column order.
pub fn sample_rows(path: &Path, label_column: &LabelColumn, max_rows: usize) -> Result<Vec<SampleRow>> {
    let ingest = |row: usize, message: String| Error::Ingestion {
        path: path.to_path_buf(),
        row,
        column: 0,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| ingest(0, e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| ingest(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = match label_column {
        LabelColumn::Last => headers.len().checked_sub(1).ok_or_else(|| ingest(1, "no columns".into()))?,
        LabelColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| ingest(1, format!("no column named {n:?}")))?,
    };
    let mut out = Vec::new();
    for (i, rec) in rdr.records().take(max_rows).enumerate() {
        let rec = rec.map_err(|e| ingest(i + 2, e.to_string()))?;
        let features = headers
            .iter()
            .zip(rec.iter())
            .enumerate()
            .filter(|(c, _)| *c != label_idx)
            .map(|(_, (h, v))| format!("{h}: {v}"))
            .collect::<Vec<_>>()
            .join(", ");
        let label = rec.get(label_idx).unwrap_or_default().to_string();
        out.push(SampleRow { features, label });
    }
    Ok(out)
}

/// [`load_csv_task`] over any reader; `path` is only used in error messages.
pub fn read_csv_task<R: Read>(reader: R, path: &Path, name: &str, schema: &CsvSchema) -> Result<Dataset> {
    let ingest = |row: usize, column: usize, message: String| Error::Ingestion {
        path: PathBuf::from(path),
        row,
        column,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| ingest(1, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.len() < 2 {
        return Err(ingest(1, 0, "need at least one feature column and a label column".into()));
    }
    let label_idx = match &schema.label_column {
        LabelColumn::Last => headers.len() - 1,
        LabelColumn::Name(n) => headers
            .iter()
            .position(|h| h == n)
            .ok_or_else(|| ingest(1, 0, format!("no column named {n:?}")))?,
    };

    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ingest(line, 0, e.to_string()))?;
        if rec.len() != headers.len() {
            return Err(ingest(
                line,
                0,
                format!("{} fields, header has {}", rec.len(), headers.len()),
            ));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(ingest(2, 0, "no data rows".into()));
    }

    // feature encoding plan
    enum Col {
        Numeric,
        Categorical(Vec<String>),
    }
    let mut plan = Vec::new();
    for c in (0..headers.len()).filter(|&c| c != label_idx) {
        if rows[0][c].parse::<f64>().is_ok() {
            plan.push((c, Col::Numeric));
        } else {
            let mut cats: Vec<String> = Vec::new();
            for r in &rows {
                if r[c].is_empty() {
                    continue;
                }
                if !cats.contains(&r[c]) {
                    cats.push(r[c].clone());
                }
            }
            plan.push((c, Col::Categorical(cats)));
        }
    }
    let width: usize = plan
        .iter()
        .map(|(_, p)| match p {
            Col::Numeric => 1,
            Col::Categorical(c) => c.len(),
        })
        .sum();

    let mut data = Vec::with_capacity(rows.len() * width);
    for (i, r) in rows.iter().enumerate() {
        let line = i + 2;
        for (c, p) in &plan {
            let cell = &r[*c];
            match p {
                Col::Numeric => {
                    let v: f64 = cell
                        .parse()
                        .map_err(|_| ingest(line, c + 1, format!("cannot parse {cell:?} as a number")))?;
                    if !v.is_finite() {
                        return Err(ingest(line, c + 1, format!("non-finite value {cell:?}")));
                    }
                    data.push(v as f32);
                }
                Col::Categorical(cats) => {
                    if cell.is_empty() {
                        return Err(ingest(line, c + 1, "empty categorical value".into()));
                    }
                    data.extend(cats.iter().map(|k| if k == cell { 1.0 } else { 0.0 }));
                }
            }
        }
    }
    let features = Tensor::new(vec![rows.len(), width], data)?;

    let (targets, class_names) = match schema.kind {
        TaskKind::Classification => {
            let raw: Vec<&str> = rows.iter().map(|r| r[label_idx].as_str()).collect();
            if let Some(i) = raw.iter().position(|l| l.is_empty()) {
                return Err(ingest(i + 2, label_idx + 1, "empty label".into()));
            }
            let mut distinct: Vec<&str> = raw.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let numeric: Option<Vec<f64>> = distinct.iter().map(|l| l.parse::<f64>().ok()).collect();
            if let Some(vals) = numeric {
                let mut paired: Vec<(f64, &str)> = vals.into_iter().zip(distinct.iter().copied()).collect();
                paired.sort_by(|a, b| a.0.total_cmp(&b.0));
                distinct = paired.into_iter().map(|(_, s)| s).collect();
            }
            if distinct.len() < 2 {
                return Err(Error::input(format!(
                    "{}: label column has a single class",
                    path.display()
                )));
            }
            let index: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, &l)| (l, i)).collect();
            let labels = raw.iter().map(|l| index[l]).collect();
            (
                Targets::Classes(labels),
                distinct.iter().map(|s| s.to_string()).collect(),
            )
        }
        TaskKind::Regression => {
            let mut vals = Vec::with_capacity(rows.len());
            for (i, r) in rows.iter().enumerate() {
                let cell = &r[label_idx];
                let v: f32 = cell
                    .parse()
                    .map_err(|_| ingest(i + 2, label_idx + 1, format!("cannot parse target {cell:?}")))?;
                if !v.is_finite() {
                    return Err(ingest(i + 2, label_idx + 1, format!("non-finite target {cell:?}")));
                }
                vals.push(v);
            }
            (Targets::Values(vals), Vec::new())
        }
    };
    let tag = schema
        .domain_tag
        .clone()
        .unwrap_or_else(|| name.replace(['_', '-', '.'], " "));
    Dataset::from_raw(name, &tag, features, targets, class_names, schema.seed)
}
