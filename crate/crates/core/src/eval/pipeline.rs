//! render -> predict -> binarize -> decode -> score, plus the sweeps
//! built on top of it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, MetricsReport, Outcome};
use crate::decode::{decode_timing, post_process_with, DecodeConfig, TimingTable};
use crate::instance::{derive_seed, generate_instance, normalize, validate_tour, Bounds, TspInstance};
use crate::net::FcnModel;
use crate::par::{self, Execution};
use crate::raster::{probs_to_mask, render_image, render_label, LabelMask, RasterImage, RenderConfig};
use crate::solvers::solve_dp;
use crate::{Error, Result};

/// Largest city count the default resolution is checked for.
pub const RESOLUTION_SAFE_N: usize = 12;

/// Anything that maps a rendered input to a class mask.
pub trait Predictor: Sync {
    fn name(&self) -> &str;
    fn predict(&self, instance: &TspInstance, image: &RasterImage) -> Result<LabelMask>;
}

/// Network inference followed by argmax binarization.
pub struct FcnPredictor<'a> {
    model: &'a FcnModel<f32>,
    exec: Execution,
}

impl<'a> FcnPredictor<'a> {
    /// Fails if the model resolution differs from the render resolution.
    pub fn new(model: &'a FcnModel<f32>, render: &RenderConfig, exec: Execution) -> Result<Self> {
        let s = model.config.input_size;
        if (render.width, render.height) != (s, s) {
            return Err(Error::Shape(format!(
                "model takes {s}x{s} images, render config is {}x{}",
                render.width, render.height
            )));
        }
        Ok(FcnPredictor { model, exec })
    }
}

impl Predictor for FcnPredictor<'_> {
    fn name(&self) -> &str {
        "fcn"
    }

    fn predict(&self, _instance: &TspInstance, image: &RasterImage) -> Result<LabelMask> {
        probs_to_mask(&self.model.predict(image, self.exec)?)
    }
}

/// Ignores the image and returns the rendered optimal-tour label.
pub struct OraclePassthrough {
    pub render: RenderConfig,
}

impl Predictor for OraclePassthrough {
    fn name(&self) -> &str {
        "oracle-passthrough"
    }

    fn predict(&self, instance: &TspInstance, _image: &RasterImage) -> Result<LabelMask> {
        let tour = instance
            .known_tour()
            .ok_or_else(|| Error::InvalidInstance(format!("{} has no known tour", instance.id)))?;
        render_label(instance, &tour, &self.render)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Input rendering; `mode` switches between full graph and scatter.
    pub render: RenderConfig,
    pub decode: DecodeConfig,
    /// Leave out instances whose cities share a pixel.
    pub exclude_collisions: bool,
    #[serde(default)]
    pub execution: Execution,
}

impl PipelineConfig {
    pub fn new(render: RenderConfig) -> Self {
        PipelineConfig {
            render,
            decode: DecodeConfig::default(),
            exclude_collisions: true,
            execution: Execution::Sequential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub n: usize,
    pub produced: f64,
    pub optimal: f64,
    pub valid: bool,
    pub collision: bool,
    pub predict_ms: f64,
    pub decode_ms: f64,
    pub density_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub predictor: String,
    pub metrics: MetricsReport,
    /// Instances with a city-pixel collision (scored or not).
    pub collisions: usize,
    pub excluded: usize,
    pub mean_predict_ms: f64,
    pub mean_decode_ms: f64,
    pub rows: Vec<SampleRow>,
}

impl PipelineReport {
    pub fn collision_rate(&self) -> f64 {
        self.collisions as f64 / (self.rows.len() + self.excluded) as f64
    }
}

fn optimal_length(inst: &TspInstance) -> Result<f64> {
    match inst.length {
        Some(l) => Ok(l),
        None => Ok(solve_dp(inst)?.length),
    }
}

fn evaluate_one(predictor: &dyn Predictor, inst: &TspInstance, cfg: &PipelineConfig) -> Result<SampleRow> {
    let collision = normalize(inst, cfg.render.width, cfg.render.height)?.has_collision();
    let optimal = optimal_length(inst)?;
    let image = render_image(inst, &cfg.render)?;
    let t0 = Instant::now();
    let mask = predictor.predict(inst, &image)?;
    let t1 = Instant::now();
    let sol = post_process_with(&mask, inst, &cfg.decode, Execution::Sequential)?;
    let t2 = Instant::now();
    Ok(SampleRow {
        id: inst.id.clone(),
        n: inst.n(),
        produced: sol.length,
        optimal,
        valid: validate_tour(inst, &sol.order).is_valid(),
        collision,
        predict_ms: (t1 - t0).as_secs_f64() * 1e3,
        decode_ms: (t2 - t1).as_secs_f64() * 1e3,
        density_evaluations: sol.diagnostics.counters.density_evaluations,
    })
}

/// Scores `predictor` on `instances`, using stored optimal lengths when
/// present and the DP solver otherwise.
pub fn run_pipeline_eval(predictor: &dyn Predictor, instances: &[TspInstance], cfg: &PipelineConfig) -> Result<PipelineReport> {
    cfg.render.validate()?;
    let rows: Vec<SampleRow> = par::map(cfg.execution, instances, |inst| evaluate_one(predictor, inst, cfg))
        .into_iter()
        .collect::<Result<_>>()?;
    let collisions = rows.iter().filter(|r| r.collision).count();
    let (kept, dropped): (Vec<SampleRow>, Vec<SampleRow>) =
        rows.into_iter().partition(|r| !(cfg.exclude_collisions && r.collision));
    let outcomes: Vec<Outcome> = kept
        .iter()
        .map(|r| Outcome {
            produced: r.produced,
            optimal: r.optimal,
            valid: r.valid,
        })
        .collect();
    let mean = |f: fn(&SampleRow) -> f64| kept.iter().map(f).sum::<f64>() / kept.len().max(1) as f64;
    Ok(PipelineReport {
        predictor: predictor.name().to_string(),
        metrics: compute_metrics(&outcomes)?,
        collisions,
        excluded: dropped.len(),
        mean_predict_ms: mean(|r| r.predict_ms),
        mean_decode_ms: mean(|r| r.decode_ms),
        rows: kept,
    })
}

/// Seeded instances of `n` cities with DP-optimal tours attached.
pub fn solved_instances(n: usize, count: usize, seed: u64, exec: Execution) -> Result<Vec<TspInstance>> {
    par::map_range(exec, count, |k| {
        let inst = generate_instance(n, derive_seed(seed, k as u64), Bounds::default())?;
        let tour = solve_dp(&inst)?;
        Ok(inst.with_solution(&tour))
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub report: PipelineReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationSweep {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

/// Full pipeline at each city count in `ns`.
pub fn generalization_sweep(
    predictor: &dyn Predictor,
    ns: &[usize],
    per_n: usize,
    seed: u64,
    cfg: &PipelineConfig,
) -> Result<GeneralizationSweep> {
    let mut out = GeneralizationSweep::default();
    for &n in ns {
        if n > RESOLUTION_SAFE_N {
            out.warnings.push(format!(
                "n={n} is above the {RESOLUTION_SAFE_N}-city resolution check; expect more pixel collisions"
            ));
        }
        let instances = solved_instances(n, per_n, derive_seed(seed, n as u64), cfg.execution)?;
        out.rows.push(SweepRow {
            n,
            report: run_pipeline_eval(predictor, &instances, cfg)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepartureRow {
    pub m: usize,
    pub metrics: MetricsReport,
    pub density_evaluations: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepartureSweep {
    pub rows: Vec<DepartureRow>,
    pub timing: TimingTable,
}

/// Accuracy and decode cost against the number of departure cities, on
/// fixed masks. `batch` pairs each mask with its solved instance.
pub fn departure_sweep(
    batch: &[(LabelMask, TspInstance)],
    ms: &[usize],
    timing_reps: usize,
    seed: u64,
    exec: Execution,
) -> Result<DepartureSweep> {
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let cfg = DecodeConfig {
            m: Some(m),
            departure: None,
            seed,
        };
        let results = par::map(exec, batch, |(mask, inst)| -> Result<(Outcome, u64)> {
            let sol = post_process_with(mask, inst, &cfg, Execution::Sequential)?;
            let outcome = Outcome {
                produced: sol.length,
                optimal: optimal_length(inst)?,
                valid: validate_tour(inst, &sol.order).is_valid(),
            };
            Ok((outcome, sol.diagnostics.counters.density_evaluations))
        });
        let mut outcomes = Vec::with_capacity(batch.len());
        let mut evaluations = 0;
        for r in results {
            let (o, e) = r?;
            outcomes.push(o);
            evaluations += e;
        }
        rows.push(DepartureRow {
            m,
            metrics: compute_metrics(&outcomes)?,
            density_evaluations: evaluations,
        });
    }
    Ok(DepartureSweep {
        rows,
        timing: decode_timing(batch, ms, timing_reps, seed)?,
    })
}
