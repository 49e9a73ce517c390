//! Method × task grid with averages, runtimes and relative efficiency.

use std::fmt::Write as _;
use std::path::Path;

use crate::arch::SizeProfile;
use crate::baselines::{run_baseline, BaselineConfig, Method, MethodResult};
use crate::data::{load_csv_task, CsvSchema};
use crate::error::{Error, Result};
use crate::requirement::fallback_template;
use crate::synthetic::make_synthetic_suite;
use crate::trainer::{Checkpoint, TaskRequirementPair};

/// Resolves a task-set argument: `synthetic` (the suite's training tasks),
/// `synthetic-shifted` (their held-out siblings), a CSV file, or a directory
/// of CSVs (label in the last column), loaded in file-name order. Every pair
/// gets its template requirement.
pub fn load_task_set(source: &str, seed: u64, synthetic_k: usize) -> Result<Vec<TaskRequirementPair>> {
    match source {
        "synthetic" => return Ok(make_synthetic_suite(seed, synthetic_k)?.tasks),
        "synthetic-shifted" => return Ok(make_synthetic_suite(seed, synthetic_k)?.siblings),
        _ => {}
    }
    let path = Path::new(source);
    let files = if path.is_dir() {
        let mut files: Vec<_> = std::fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")))
            .collect();
        files.sort();
        files
    } else if path.is_file() {
        vec![path.to_path_buf()]
    } else {
        return Err(Error::input(format!("task set {source:?} is not synthetic, a CSV file or a directory")));
    };
    if files.is_empty() {
        return Err(Error::input(format!("no CSV files in {source}")));
    }
    files
        .iter()
        .map(|f| {
            let ds = load_csv_task(f, &CsvSchema::classification_last(seed))?;
            let req = fallback_template(&ds.meta())?;
            Ok(TaskRequirementPair::new(ds, req))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub result: MethodResult,
    /// Slowest runtime on this task divided by this cell's runtime.
    pub relative_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_metric: f64,
    pub epochs: usize,
    pub mean_runtime_s: f64,
    /// Slowest mean runtime divided by this method's mean runtime.
    pub relative_efficiency: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub methods: Vec<Method>,
    pub tasks: Vec<String>,
    /// Row-major: task outer, method inner.
    pub cells: Vec<Cell>,
    pub summaries: Vec<MethodSummary>,
    /// The single checkpoint every generated model came from.
    pub checkpoint_id: Option<String>,
}

impl ExperimentReport {
    pub fn cell(&self, method: Method, task: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.result.method == method && c.result.task == task)
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,task,metric,epochs,runtime_s,relative_efficiency,checkpoint_id\n");
        for c in &self.cells {
            let r = &c.result;
            let _ = writeln!(
                s,
                "{},{},{:.6},{},{:.6},{:.4},{}",
                r.method,
                r.task,
                r.metric,
                r.epochs,
                r.runtime_s,
                c.relative_efficiency,
                r.checkpoint_id.as_deref().unwrap_or("")
            );
        }
        s
    }

    /// Markdown table: one row per method, metric per task (in percent),
    /// average, epochs, mean runtime and relative efficiency.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Method |");
        for t in &self.tasks {
            let _ = write!(s, " {t} |");
        }
        s.push_str(" Avg. | #Epoch | E2E Runtime (s) | Relative Efficiency |\n|---|");
        s.push_str(&"---|".repeat(self.tasks.len() + 4));
        s.push('\n');
        for m in &self.methods {
            let _ = write!(s, "| {m} |");
            for t in &self.tasks {
                match self.cell(*m, t) {
                    Some(c) => {
                        let _ = write!(s, " {:.1} |", 100.0 * c.result.metric);
                    }
                    None => s.push_str(" - |"),
                }
            }
            if let Some(sm) = self.summary(*m) {
                let _ = write!(
                    s,
                    " {:.1} | {} | {:.4} | {:.1} |",
                    100.0 * sm.mean_metric,
                    sm.epochs,
                    sm.mean_runtime_s,
                    sm.relative_efficiency
                );
            }
            s.push('\n');
        }
        if let Some(id) = &self.checkpoint_id {
            let _ = writeln!(s, "\nAll generated models come from checkpoint `{id}`.");
        }
        s
    }
}

/// Runs every method on every pair, in fixed grid order.
pub fn run_experiment(
    pairs: &[TaskRequirementPair],
    methods: &[Method],
    checkpoint: Option<&Checkpoint>,
    profile: &SizeProfile,
    cfg: &BaselineConfig,
) -> Result<ExperimentReport> {
    if pairs.is_empty() || methods.is_empty() {
        return Err(Error::input("experiment needs at least one task and one method"));
    }
    let mut cells = Vec::with_capacity(pairs.len() * methods.len());
    for pair in pairs {
        let results: Vec<MethodResult> = methods
            .iter()
            .map(|&m| {
                log::info!("{}: {m}", pair.dataset.name);
                run_baseline(m, pair, checkpoint, profile, cfg)
            })
            .collect::<Result<_>>()?;
        let slowest = results.iter().map(|r| r.runtime_s).fold(0.0, f64::max);
        cells.extend(results.into_iter().map(|r| Cell {
            relative_efficiency: efficiency(slowest, r.runtime_s),
            result: r,
        }));
    }
    let mut summaries: Vec<MethodSummary> = methods
        .iter()
        .map(|&m| {
            let mine: Vec<&MethodResult> = cells.iter().map(|c| &c.result).filter(|r| r.method == m).collect();
            let n = mine.len() as f64;
            MethodSummary {
                method: m,
                mean_metric: mine.iter().map(|r| r.metric).sum::<f64>() / n,
                epochs: mine.first().map_or(0, |r| r.epochs),
                mean_runtime_s: mine.iter().map(|r| r.runtime_s).sum::<f64>() / n,
                relative_efficiency: 0.0,
            }
        })
        .collect();
    let slowest = summaries.iter().map(|s| s.mean_runtime_s).fold(0.0, f64::max);
    for s in &mut summaries {
        s.relative_efficiency = efficiency(slowest, s.mean_runtime_s);
    }

    let ids: Vec<&str> = cells.iter().filter_map(|c| c.result.checkpoint_id.as_deref()).collect();
    if ids.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Consistency("generated models come from more than one checkpoint".into()));
    }
    let checkpoint_id = ids.first().map(|s| s.to_string());
    Ok(ExperimentReport {
        methods: methods.to_vec(),
        tasks: pairs.iter().map(|p| p.dataset.name.clone()).collect(),
        cells,
        summaries,
        checkpoint_id,
    })
}

fn efficiency(slowest: f64, runtime: f64) -> f64 {
    if runtime <= 0.0 {
        // below timer resolution
        if slowest <= 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        slowest / runtime
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::make_synthetic_suite;

    #[test]
    fn grid_invariants() {
        let suite = make_synthetic_suite(5, 2).unwrap();
        let cfg = BaselineConfig {
            epochs: 2,
            ..BaselineConfig::default()
        };
        let r = run_experiment(
            &suite.tasks,
            &[Method::Finetune, Method::Lora],
            None,
            &SizeProfile::default(),
            &cfg,
        )
        .unwrap();
        assert_eq!(r.cells.len(), 4);
        let max = r.summaries.iter().map(|s| s.relative_efficiency).fold(f64::INFINITY, f64::min);
        assert_eq!(max, 1.0);
        for s in &r.summaries {
            let mean = r
                .cells
                .iter()
                .filter(|c| c.result.method == s.method)
                .map(|c| c.result.metric)
                .sum::<f64>()
                / 2.0;
            assert!((s.mean_metric - mean).abs() < 1e-12);
        }
        assert_eq!(r.to_csv().lines().count(), 5);
        assert!(r.to_markdown().contains("| finetune |"));
    }
}
