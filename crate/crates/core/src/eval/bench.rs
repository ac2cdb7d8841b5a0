//! Solver timing and quality table, one row per city count.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Outcome};
use super::pipeline::{run_pipeline_eval, solved_instances, PipelineConfig, Predictor};
use crate::decode::median;
use crate::instance::{derive_seed, validate_tour, TspInstance};
use crate::par::{self, Execution};
use crate::solvers::{solve, Algorithm, SolverConfig};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub ns: Vec<usize>,
    /// Instances timed together in each repetition.
    pub timing_instances: usize,
    pub warmups: usize,
    pub reps: usize,
    pub algorithms: Vec<Algorithm>,
    pub solvers: SolverConfig,
    /// City counts at which heuristic e0 is measured.
    pub quality_ns: Vec<usize>,
    pub quality_instances: usize,
    pub seed: u64,
    /// Parallelism for quality runs; timing cells are always serial.
    #[serde(default)]
    pub execution: Execution,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            ns: (4..=12).collect(),
            timing_instances: 5,
            warmups: 3,
            reps: 20,
            algorithms: Algorithm::ALL.to_vec(),
            solvers: SolverConfig::default(),
            quality_ns: vec![10],
            quality_instances: 480,
            seed: 0,
            execution: Execution::Sequential,
        }
    }
}

/// Times are per instance in milliseconds; `None` marks a skipped cell
/// (size guard or not requested).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub exhaustive_ms: Option<f64>,
    pub dp_ms: Option<f64>,
    pub branch_bound_ms: Option<f64>,
    pub genetic_ms: Option<f64>,
    pub ant_colony_ms: Option<f64>,
    pub genetic_e0: Option<f64>,
    pub ant_colony_e0: Option<f64>,
    pub fcn_ms: Option<f64>,
    pub decode_ms: Option<f64>,
    pub decode_evaluations: Option<u64>,
    pub pipeline_e0: Option<f64>,
}

impl BenchRow {
    pub fn time(&self, algo: Algorithm) -> Option<f64> {
        match algo {
            Algorithm::Exh => self.exhaustive_ms,
            Algorithm::Dp => self.dp_ms,
            Algorithm::Bb => self.branch_bound_ms,
            Algorithm::Ga => self.genetic_ms,
            Algorithm::Aco => self.ant_colony_ms,
        }
    }

    fn time_mut(&mut self, algo: Algorithm) -> &mut Option<f64> {
        match algo {
            Algorithm::Exh => &mut self.exhaustive_ms,
            Algorithm::Dp => &mut self.dp_ms,
            Algorithm::Bb => &mut self.branch_bound_ms,
            Algorithm::Ga => &mut self.genetic_ms,
            Algorithm::Aco => &mut self.ant_colony_ms,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Whether the measured times of `algo` strictly increase with n over
    /// the rows where it ran.
    pub fn strictly_increasing(&self, algo: Algorithm) -> bool {
        let times: Vec<f64> = self.rows.iter().filter_map(|r| r.time(algo)).collect();
        times.windows(2).all(|w| w[0] < w[1])
    }

    pub fn row(&self, n: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

/// Median over `reps` timed runs, after `warmups` untimed ones, in ms.
pub fn time_median(warmups: usize, reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    for _ in 0..warmups {
        f()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        f()?;
        samples.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(&mut samples))
}

fn time_solver(algo: Algorithm, batch: &[TspInstance], cfg: &BenchConfig) -> Result<f64> {
    let total = time_median(cfg.warmups, cfg.reps, || {
        for inst in batch {
            std::hint::black_box(solve(algo, inst, &cfg.solvers)?);
        }
        Ok(())
    })?;
    Ok(total / batch.len() as f64)
}

/// Fraction of `instances` on which `algo` matches the stored optimum.
/// Each instance gets its own seed so runs are independent.
pub fn heuristic_e0(algo: Algorithm, instances: &[TspInstance], solvers: &SolverConfig, exec: Execution) -> Result<f64> {
    let outcomes = par::map_range(exec, instances.len(), |k| -> Result<Outcome> {
        let inst = &instances[k];
        let mut cfg = solvers.clone();
        cfg.ga.seed = derive_seed(solvers.ga.seed, k as u64);
        cfg.aco.seed = derive_seed(solvers.aco.seed, k as u64);
        let tour = solve(algo, inst, &cfg)?;
        Ok(Outcome {
            produced: tour.length,
            optimal: inst.length.expect("solved instances carry lengths"),
            valid: validate_tour(inst, &tour.order).is_valid(),
        })
    });
    let outcomes: Vec<Outcome> = outcomes.into_iter().collect::<Result<_>>()?;
    Ok(compute_metrics(&outcomes)?.e0)
}

/// Timing table over `cfg.ns`. With a predictor, the learned pipeline is
/// run on the same timing batch for the FCN, decode and e0 columns.
pub fn benchmark_solvers(cfg: &BenchConfig, pipeline: Option<(&dyn Predictor, &PipelineConfig)>) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    for &n in &cfg.ns {
        let seed = derive_seed(cfg.seed, n as u64);
        let batch = solved_instances(n, cfg.timing_instances.max(1), seed, Execution::Sequential)?;
        let mut row = BenchRow { n, ..Default::default() };
        for &algo in &cfg.algorithms {
            if algo.size_limit().is_none_or(|lim| n <= lim) {
                *row.time_mut(algo) = Some(time_solver(algo, &batch, cfg)?);
            }
        }
        if cfg.quality_ns.contains(&n) {
            let quality = solved_instances(n, cfg.quality_instances, derive_seed(seed, 1), cfg.execution)?;
            if cfg.algorithms.contains(&Algorithm::Ga) {
                row.genetic_e0 = Some(heuristic_e0(Algorithm::Ga, &quality, &cfg.solvers, cfg.execution)?);
            }
            if cfg.algorithms.contains(&Algorithm::Aco) {
                row.ant_colony_e0 = Some(heuristic_e0(Algorithm::Aco, &quality, &cfg.solvers, cfg.execution)?);
            }
        }
        if let Some((predictor, pcfg)) = pipeline {
            let mut pcfg = pcfg.clone();
            pcfg.execution = Execution::Sequential;
            pcfg.exclude_collisions = false;
            let r = run_pipeline_eval(predictor, &batch, &pcfg)?;
            row.fcn_ms = Some(r.mean_predict_ms);
            row.decode_ms = Some(r.mean_decode_ms);
            row.decode_evaluations = r.rows.first().map(|s| s.density_evaluations);
            row.pipeline_e0 = Some(r.metrics.e0);
        }
        report.rows.push(row);
    }
    Ok(report)
}
