//! Timing harness for the demo tasks.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::engine::{Copilot, EngineError, Phase};
use crate::fixtures::Task;
use crate::tools::MockServices;

pub const CSV_HEADER: [&str; 5] = [
    "task",
    "steps",
    "mean_ms",
    "stddev_ms",
    "mean_engine_overhead_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub task: String,
    #[serde(skip)]
    pub instruction: String,
    pub steps: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    /// Wall time minus time spent in tool adapters, per step.
    pub mean_engine_overhead_ms: f64,
}

/// Why a bench stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchAbort {
    pub task: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Set when a task did not finish; `rows` then holds the tasks before it.
    pub aborted: Option<BenchAbort>,
}

impl BenchReport {
    pub fn is_complete(&self) -> bool {
        self.aborted.is_none()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // An empty report still gets its header.
        if self.rows.is_empty() {
            w.write_record(CSV_HEADER).expect("in-memory write");
        }
        for row in &self.rows {
            w.serialize(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Largest over smallest per-step overhead across rows.
    pub fn overhead_ratio(&self) -> Option<f64> {
        let values = self.rows.iter().map(|r| r.mean_engine_overhead_ms);
        let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = values.fold(f64::INFINITY, f64::min);
        (min > 0.0 && max.is_finite()).then(|| max / min)
    }
}

/// Mean and sample standard deviation; a single sample has deviation 0.
pub fn mean_stddev(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Sample {
    steps: usize,
    total_ms: f64,
    overhead_ms: f64,
}

fn run_once(
    copilot: &Copilot,
    task: &Task,
    credentials: &BTreeMap<String, String>,
) -> Result<Sample, String> {
    let id = copilot
        .create_session_with_credentials(None, credentials)
        .map_err(|e| e.to_string())?;
    let start = Instant::now();
    let phase = copilot
        .submit_instruction(&id, &task.instruction)
        .map_err(|e| e.to_string())?;
    let total_us = start.elapsed().as_secs_f64() * 1e6;
    if !matches!(phase, Phase::Done { .. }) {
        return Err(match phase {
            Phase::Failed { error } => error.to_string(),
            other => format!("stopped in {}", other.name()),
        });
    }
    let trace = copilot
        .get_trace(&id)
        .map_err(|e: EngineError| e.to_string())?;
    let steps = trace.events_in_turn(1).count();
    let tool_us: u64 = trace.events.iter().filter_map(|e| e.tool_us).sum();
    let overhead_us = (total_us - tool_us as f64).max(0.0) / steps.max(1) as f64;
    Ok(Sample {
        steps,
        total_ms: total_us / 1e3,
        overhead_ms: overhead_us / 1e3,
    })
}

/// Runs each task `repetitions` times after one warm-up run, resetting the
/// mock services before every run. Stops at the first task that does not
/// finish.
pub fn run_bench(
    copilot: &Copilot,
    services: &MockServices,
    tasks: &[Task],
    repetitions: usize,
    credentials: &BTreeMap<String, String>,
) -> BenchReport {
    let mut report = BenchReport::default();
    for task in tasks {
        let mut samples = Vec::with_capacity(repetitions);
        let mut failure = None;
        for rep in 0..=repetitions {
            services.reset();
            match run_once(copilot, task, credentials) {
                Ok(s) if rep > 0 => samples.push(s),
                Ok(_) => {}
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        services.reset();
        if failure.is_none() && samples.windows(2).any(|w| w[0].steps != w[1].steps) {
            failure = Some("step count differs between repetitions".into());
        }
        if let Some(reason) = failure {
            report.aborted = Some(BenchAbort {
                task: task.label.clone(),
                reason,
            });
            break;
        }
        let totals: Vec<f64> = samples.iter().map(|s| s.total_ms).collect();
        let overheads: Vec<f64> = samples.iter().map(|s| s.overhead_ms).collect();
        let (mean_ms, stddev_ms) = mean_stddev(&totals);
        report.rows.push(BenchRow {
            task: task.label.clone(),
            instruction: task.instruction.clone(),
            steps: samples.first().map_or(0, |s| s.steps),
            mean_ms,
            stddev_ms,
            mean_engine_overhead_ms: mean_stddev(&overheads).0,
        });
    }
    report
}
