//! One function per subcommand. Each writes its artifacts under `ctx.out`
//! and returns what goes into the run manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::json;
use tspfcn::dataset::{self, Dataset, DatasetManifest};
use tspfcn::decode::{post_process_with, DecodeConfig};
use tspfcn::eval::{
    benchmark_solvers, compute_metrics, departure_sweep, generalization_sweep, run_pipeline_eval, solved_instances, write_csv,
    write_json, BenchConfig, FcnPredictor, OraclePassthrough, Outcome, PipelineConfig, Predictor,
};
use tspfcn::instance::{read_jsonl, validate_tour, write_jsonl, TspInstance};
use tspfcn::net::{save_checkpoint, train, write_curve_csv, FcnModel, Sample, SnapshotSpec, TrainConfig};
use tspfcn::raster::{
    load_mask_png, probs_to_image, probs_to_mask, render_image, render_label, save_mask_png, save_png, RenderConfig,
};
use tspfcn::solvers::{solve, Algorithm, SolverConfig};

use crate::args::{render_for_size, PredictorArgs, RenderArgs};
use crate::{Command, Ctx, Run, SweepKind, Usage, DATA_DIR_ENV};

/// `p` as given if it exists or is absolute, else under the data root.
pub fn resolve_data(p: &Path) -> PathBuf {
    if p.is_absolute() || p.exists() {
        return p.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(root) => PathBuf::from(root).join(p),
        None => p.to_path_buf(),
    }
}

fn guard_inputs(ctx: &Ctx, inputs: &[PathBuf]) -> Result<()> {
    let out = ctx.out.canonicalize().unwrap_or_else(|_| ctx.out.clone());
    for p in inputs {
        let dir = if p.is_dir() { p.clone() } else { p.parent().map(Path::to_path_buf).unwrap_or_default() };
        if dir.canonicalize().is_ok_and(|d| d == out) {
            return Err(Usage(format!("--out {} would write into the input {}", ctx.out.display(), p.display())).into());
        }
    }
    Ok(())
}

pub fn dispatch(cmd: Command, ctx: &Ctx) -> Result<Run> {
    match cmd {
        Command::Gen { n, count, render } => gen(ctx, n, count, &render),
        Command::Render { instances, render } => render_cmd(ctx, &resolve_data(&instances), &render),
        Command::Solve { instances, algo } => solve_cmd(ctx, &resolve_data(&instances), algo.into()),
        Command::Train {
            data,
            test,
            arch,
            resume,
            iterations,
            chunk_size,
            snapshot_every,
            eval_samples,
            lr,
            dropout,
            score_channels,
            probe,
            no_snapshots,
        } => {
            let mut cfg = TrainConfig {
                max_iterations: iterations,
                chunk_size,
                snapshot_every,
                eval_samples,
                seed: ctx.seed,
                execution: ctx.exec,
                ..TrainConfig::default()
            };
            cfg.adam.learning_rate = lr;
            let mut arch = arch.config();
            if let Some(d) = dropout {
                arch.dropout_rate = d;
            }
            if let Some(s) = score_channels {
                arch.score_channels = s;
            }
            let test = test.as_deref().map(resolve_data);
            let snapshots = (!no_snapshots).then_some(probe);
            train_cmd(ctx, &resolve_data(&data), test.as_deref(), arch, resume.as_deref(), &cfg, snapshots)
        }
        Command::Predict { data, predictor } => predict_cmd(ctx, &resolve_data(&data), &predictor),
        Command::Decode {
            masks,
            instances,
            m,
            departure,
        } => {
            let cfg = DecodeConfig {
                m,
                departure,
                seed: ctx.seed,
            };
            decode_cmd(ctx, &masks, &resolve_data(&instances), &cfg)
        }
        Command::Eval {
            data,
            n,
            count,
            m,
            keep_collisions,
            predictor,
            render,
        } => {
            predictor.require()?;
            let model = predictor.load()?;
            let (instances, base, inputs) = match data {
                Some(d) => {
                    let d = resolve_data(&d);
                    let ds = Dataset::open(&d)?;
                    (ds.instances, ds.manifest.render, vec![d])
                }
                None => {
                    let n = n.expect("clap requires --n without --data");
                    (solved_instances(n, count, ctx.seed, ctx.exec)?, default_render(&model), vec![])
                }
            };
            let mut cfg = PipelineConfig::new(render.apply(base));
            cfg.decode.m = m;
            cfg.decode.seed = ctx.seed;
            cfg.exclude_collisions = !keep_collisions;
            cfg.execution = ctx.exec;
            eval_cmd(ctx, &instances, model.as_ref(), &predictor, &cfg, inputs)
        }
        Command::Bench {
            n,
            algos,
            reps,
            warmups,
            timing_instances,
            quality_n,
            quality_instances,
            predictor,
            render,
        } => {
            let cfg = BenchConfig {
                ns: n.0,
                timing_instances,
                warmups,
                reps,
                algorithms: if algos.is_empty() {
                    Algorithm::ALL.to_vec()
                } else {
                    algos.into_iter().map(Algorithm::from).collect()
                },
                solvers: SolverConfig::default(),
                quality_ns: quality_n.0,
                quality_instances,
                seed: ctx.seed,
                execution: ctx.exec,
            };
            bench_cmd(ctx, &cfg, &predictor, &render)
        }
        Command::Sweep { kind } => match kind {
            SweepKind::Generalization {
                n,
                per_n,
                keep_collisions,
                predictor,
                render,
            } => {
                predictor.require()?;
                let model = predictor.load()?;
                let mut cfg = PipelineConfig::new(render.apply(default_render(&model)));
                cfg.exclude_collisions = !keep_collisions;
                cfg.decode.seed = ctx.seed;
                cfg.execution = ctx.exec;
                let pred = make_predictor(model.as_ref(), &cfg.render, ctx)?;
                let sweep = generalization_sweep(pred.as_ref(), &n.0, per_n, ctx.seed, &cfg)?;
                for w in &sweep.warnings {
                    eprintln!("warning: {w}");
                }
                #[derive(Serialize)]
                struct Row {
                    n: usize,
                    samples: usize,
                    excluded: usize,
                    collisions: usize,
                    e0: f64,
                    e1: f64,
                    e2: f64,
                    e5: f64,
                    e10: f64,
                    r_aver: Option<f64>,
                }
                let rows: Vec<Row> = sweep
                    .rows
                    .iter()
                    .map(|r| {
                        let m = &r.report.metrics;
                        Row {
                            n: r.n,
                            samples: m.samples,
                            excluded: r.report.excluded,
                            collisions: r.report.collisions,
                            e0: m.e0,
                            e1: m.e1,
                            e2: m.e2,
                            e5: m.e5,
                            e10: m.e10,
                            r_aver: m.r_aver,
                        }
                    })
                    .collect();
                let csv = ctx.out.join("sweep.csv");
                write_csv(&csv, &rows)?;
                let json_path = ctx.out.join("sweep.json");
                write_json(&json_path, &sweep)?;
                for r in &rows {
                    println!("n={:<3} e0={:.4} e5={:.4} samples={}", r.n, r.e0, r.e5, r.samples);
                }
                Ok(Run {
                    config: json!({ "ns": n.0, "per_n": per_n, "pipeline": cfg, "predictor": pred.name() }),
                    inputs: predictor.checkpoint.into_iter().collect(),
                    outputs: vec![csv, json_path],
                })
            }
            SweepKind::Departures {
                n,
                count,
                flip,
                m,
                timing_reps,
                render,
            } => {
                let rcfg = render.apply(RenderConfig::full());
                let instances = solved_instances(n, count, ctx.seed, ctx.exec)?;
                let batch = instances
                    .into_iter()
                    .enumerate()
                    .map(|(k, inst)| {
                        let tour = inst.known_tour().expect("solved");
                        let mask = render_label(&inst, &tour, &rcfg)?;
                        Ok((mask.flip_path_pixels(flip, tspfcn::instance::derive_seed(ctx.seed, k as u64)), inst))
                    })
                    .collect::<tspfcn::Result<Vec<_>>>()?;
                let sweep = departure_sweep(&batch, &m.0, timing_reps, ctx.seed, ctx.exec)?;
                #[derive(Serialize)]
                struct Row {
                    m: usize,
                    e0: f64,
                    e5: f64,
                    r_aver: Option<f64>,
                    density_evaluations: u64,
                    mean_ms: f64,
                }
                let rows: Vec<Row> = sweep
                    .rows
                    .iter()
                    .zip(&sweep.timing.rows)
                    .map(|(r, t)| Row {
                        m: r.m,
                        e0: r.metrics.e0,
                        e5: r.metrics.e5,
                        r_aver: r.metrics.r_aver,
                        density_evaluations: r.density_evaluations,
                        mean_ms: t.mean_ms,
                    })
                    .collect();
                let csv = ctx.out.join("sweep.csv");
                write_csv(&csv, &rows)?;
                let json_path = ctx.out.join("sweep.json");
                write_json(&json_path, &sweep)?;
                for r in &rows {
                    println!("m={:<3} e0={:.4} evaluations={} ms={:.4}", r.m, r.e0, r.density_evaluations, r.mean_ms);
                }
                println!("time-vs-m R^2 = {:.4}", sweep.timing.r_squared);
                Ok(Run {
                    config: json!({ "n": n, "count": count, "flip": flip, "ms": m.0, "timing_reps": timing_reps, "render": rcfg }),
                    inputs: vec![],
                    outputs: vec![csv, json_path],
                })
            }
        },
    }
}

fn default_render(model: &Option<FcnModel<f32>>) -> RenderConfig {
    match model {
        Some(m) => render_for_size(m.config.input_size),
        None => RenderConfig::full(),
    }
}

fn make_predictor<'a>(
    model: Option<&'a FcnModel<f32>>,
    render: &RenderConfig,
    ctx: &Ctx,
) -> Result<Box<dyn Predictor + 'a>> {
    Ok(match model {
        Some(m) => Box::new(FcnPredictor::new(m, render, ctx.exec)?),
        None => Box::new(OraclePassthrough { render: render.clone() }),
    })
}

fn gen(ctx: &Ctx, n: usize, count: usize, render: &RenderArgs) -> Result<Run> {
    let rcfg = render.apply(RenderConfig::desk());
    let items = dataset::generate(n, count, ctx.seed, &rcfg, ctx.exec)?;
    let manifest = DatasetManifest {
        count,
        n,
        seed: ctx.seed,
        render: rcfg,
    };
    dataset::write(&ctx.out, &manifest, &items)?;
    println!("wrote {count} instances of {n} cities to {}", ctx.out.display());
    Ok(Run {
        config: serde_json::to_value(&manifest)?,
        inputs: vec![],
        outputs: vec![ctx.out.clone()],
    })
}

fn render_cmd(ctx: &Ctx, instances: &Path, render: &RenderArgs) -> Result<Run> {
    guard_inputs(ctx, &[instances.to_path_buf()])?;
    let rcfg = render.apply(RenderConfig::full());
    rcfg.validate()?;
    let insts = read_jsonl(instances)?;
    for sub in ["images", "labels"] {
        std::fs::create_dir_all(ctx.out.join(sub))?;
    }
    let mut labels = 0;
    for inst in &insts {
        save_png(&render_image(inst, &rcfg)?, &dataset::image_path(&ctx.out, &inst.id))?;
        if let Some(tour) = inst.known_tour() {
            save_mask_png(&render_label(inst, &tour, &rcfg)?, &dataset::label_path(&ctx.out, &inst.id))?;
            labels += 1;
        }
    }
    println!("rendered {} images and {labels} labels", insts.len());
    Ok(Run {
        config: json!({ "render": rcfg }),
        inputs: vec![instances.to_path_buf()],
        outputs: vec![ctx.out.join("images"), ctx.out.join("labels")],
    })
}

fn solve_cmd(ctx: &Ctx, instances: &Path, algo: Algorithm) -> Result<Run> {
    guard_inputs(ctx, &[instances.to_path_buf()])?;
    let insts = read_jsonl(instances)?;
    let mut cfg = SolverConfig::default();
    cfg.ga.seed = ctx.seed;
    cfg.aco.seed = ctx.seed;
    #[derive(Serialize)]
    struct Row {
        id: String,
        n: usize,
        length: f64,
        ms: f64,
    }
    let results = tspfcn::par::map(ctx.exec, &insts, |inst| -> tspfcn::Result<(TspInstance, Row)> {
        let t = Instant::now();
        let tour = solve(algo, inst, &cfg)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        let row = Row {
            id: inst.id.clone(),
            n: inst.n(),
            length: tour.length,
            ms,
        };
        Ok((inst.clone().with_solution(&tour), row))
    });
    let mut solved = Vec::with_capacity(insts.len());
    let mut rows = Vec::with_capacity(insts.len());
    for r in results {
        let (i, row) = r?;
        solved.push(i);
        rows.push(row);
    }
    let jsonl = ctx.out.join("solutions.jsonl");
    write_jsonl(&jsonl, &solved)?;
    let csv = ctx.out.join("solve.csv");
    write_csv(&csv, &rows)?;
    println!("solved {} instances with {}", rows.len(), algo.name());
    Ok(Run {
        config: json!({ "algorithm": algo, "solvers": cfg }),
        inputs: vec![instances.to_path_buf()],
        outputs: vec![jsonl, csv],
    })
}

fn load_samples(dir: &Path) -> Result<Vec<Sample>> {
    Dataset::open(dir)
        .and_then(|d| d.samples())
        .with_context(|| format!("loading dataset {}", dir.display()))
}

fn train_cmd(
    ctx: &Ctx,
    data: &Path,
    test: Option<&Path>,
    arch: tspfcn::net::ArchConfig,
    resume: Option<&Path>,
    cfg: &TrainConfig,
    probe: Option<usize>,
) -> Result<Run> {
    let mut inputs = vec![data.to_path_buf()];
    inputs.extend(test.map(Path::to_path_buf));
    inputs.extend(resume.map(Path::to_path_buf));
    guard_inputs(ctx, &inputs)?;
    let train_set = load_samples(data)?;
    let test_set = match test {
        Some(t) => load_samples(t)?,
        None => Vec::new(),
    };
    let mut model = match resume {
        Some(p) => tspfcn::net::load_checkpoint::<f32>(p)?,
        None => FcnModel::<f32>::init(arch, ctx.seed)?,
    };
    let snapshots = probe.map(|probe| SnapshotSpec {
        dir: ctx.out.join("snapshots"),
        probe,
    });
    let started = Instant::now();
    let report = train(&mut model, &train_set, &test_set, cfg, snapshots.as_ref())?;
    let ckpt = ctx.out.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    let curve = ctx.out.join("curve.csv");
    write_curve_csv(&curve, &report.curve)?;
    println!(
        "trained {} iterations in {:.1}s, loss {:.5} -> {:.5}",
        report.iterations,
        started.elapsed().as_secs_f64(),
        report.initial_loss().unwrap_or(f64::NAN),
        report.final_loss().unwrap_or(f64::NAN)
    );
    let mut outputs = vec![ckpt, curve];
    outputs.extend(snapshots.map(|s| s.dir));
    Ok(Run {
        config: json!({ "arch": model.config, "train": cfg, "resumed": resume.is_some() }),
        inputs,
        outputs,
    })
}

fn predict_cmd(ctx: &Ctx, data: &Path, predictor: &PredictorArgs) -> Result<Run> {
    predictor.require()?;
    let mut inputs = vec![data.to_path_buf()];
    inputs.extend(predictor.checkpoint.clone());
    guard_inputs(ctx, &inputs)?;
    let ds = Dataset::open(data)?;
    let model = predictor.load()?;
    let render = ds.manifest.render.clone();
    let masks = ctx.out.join("masks");
    std::fs::create_dir_all(&masks)?;
    let probs_dir = ctx.out.join("probs");
    if model.is_some() {
        std::fs::create_dir_all(&probs_dir)?;
    }
    let oracle = OraclePassthrough { render: render.clone() };
    for inst in &ds.instances {
        let image = tspfcn::raster::load_png_sized(&dataset::image_path(data, &inst.id), render.width, render.height)?;
        let mask = match &model {
            Some(m) => {
                FcnPredictor::new(m, &render, ctx.exec)?;
                let probs = m.predict(&image, ctx.exec)?;
                save_png(&probs_to_image(&probs)?, &probs_dir.join(format!("{}.png", inst.id)))?;
                probs_to_mask(&probs)?
            }
            None => oracle.predict(inst, &image)?,
        };
        save_mask_png(&mask, &masks.join(format!("{}.png", inst.id)))?;
    }
    println!("predicted {} masks", ds.instances.len());
    let mut outputs = vec![masks];
    if model.is_some() {
        outputs.push(probs_dir);
    }
    Ok(Run {
        config: json!({
            "predictor": if model.is_some() { "fcn" } else { "oracle-passthrough" },
            "render": render,
        }),
        inputs,
        outputs,
    })
}

fn decode_cmd(ctx: &Ctx, masks: &Path, instances: &Path, cfg: &DecodeConfig) -> Result<Run> {
    let inputs = vec![masks.to_path_buf(), instances.to_path_buf()];
    guard_inputs(ctx, &inputs)?;
    let insts = read_jsonl(instances)?;
    #[derive(Serialize)]
    struct Row {
        id: String,
        n: usize,
        length: f64,
        optimal: Option<f64>,
        valid: bool,
        density_evaluations: u64,
        order: String,
    }
    let results = tspfcn::par::map(ctx.exec, &insts, |inst| -> Result<Row> {
        let path = masks.join(format!("{}.png", inst.id));
        let mask = load_mask_png(&path)?;
        let sol = post_process_with(&mask, inst, cfg, tspfcn::Execution::Sequential)?;
        Ok(Row {
            id: inst.id.clone(),
            n: inst.n(),
            length: sol.length,
            optimal: inst.length,
            valid: validate_tour(inst, &sol.order).is_valid(),
            density_evaluations: sol.diagnostics.counters.density_evaluations,
            order: sol.order.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" "),
        })
    });
    let rows: Vec<Row> = results.into_iter().collect::<Result<_>>()?;
    let csv = ctx.out.join("tours.csv");
    write_csv(&csv, &rows)?;
    let mut outputs = vec![csv];
    let outcomes: Option<Vec<Outcome>> = rows
        .iter()
        .map(|r| {
            r.optimal.map(|optimal| Outcome {
                produced: r.length,
                optimal,
                valid: r.valid,
            })
        })
        .collect();
    if let Some(outcomes) = outcomes.filter(|o| !o.is_empty()) {
        let metrics = compute_metrics(&outcomes)?;
        println!("e0={:.4} e5={:.4} over {} tours", metrics.e0, metrics.e5, metrics.samples);
        let path = ctx.out.join("metrics.json");
        write_json(&path, &metrics)?;
        outputs.push(path);
    } else {
        println!("decoded {} tours", rows.len());
    }
    Ok(Run {
        config: json!({ "decode": cfg }),
        inputs,
        outputs,
    })
}

fn eval_cmd(
    ctx: &Ctx,
    instances: &[TspInstance],
    model: Option<&FcnModel<f32>>,
    predictor: &PredictorArgs,
    cfg: &PipelineConfig,
    mut inputs: Vec<PathBuf>,
) -> Result<Run> {
    inputs.extend(predictor.checkpoint.clone());
    guard_inputs(ctx, &inputs)?;
    let pred = make_predictor(model, &cfg.render, ctx)?;
    let report = run_pipeline_eval(pred.as_ref(), instances, cfg)?;
    let csv = ctx.out.join("samples.csv");
    write_csv(&csv, &report.rows)?;
    let json_path = ctx.out.join("eval.json");
    write_json(
        &json_path,
        &json!({
            "predictor": report.predictor,
            "metrics": report.metrics,
            "collisions": report.collisions,
            "collision_rate": report.collision_rate(),
            "excluded": report.excluded,
            "mean_predict_ms": report.mean_predict_ms,
            "mean_decode_ms": report.mean_decode_ms,
        }),
    )?;
    let m = &report.metrics;
    println!(
        "{}: e0={:.4} e1={:.4} e2={:.4} e5={:.4} e10={:.4} r_aver={} samples={} collisions={}",
        report.predictor,
        m.e0,
        m.e1,
        m.e2,
        m.e5,
        m.e10,
        m.r_aver.map_or("-".into(), |r| format!("{r:.5}")),
        m.samples,
        report.collisions
    );
    Ok(Run {
        config: json!({ "pipeline": cfg, "instances": instances.len() }),
        inputs,
        outputs: vec![csv, json_path],
    })
}

fn bench_cmd(ctx: &Ctx, cfg: &BenchConfig, predictor: &PredictorArgs, render: &RenderArgs) -> Result<Run> {
    let model = predictor.load()?;
    let pcfg = PipelineConfig::new(render.apply(default_render(&model)));
    let pred = if predictor.is_set() {
        Some(make_predictor(model.as_ref(), &pcfg.render, ctx)?)
    } else {
        None
    };
    let report = benchmark_solvers(cfg, pred.as_deref().map(|p| (p, &pcfg)))?;
    let csv = ctx.out.join("bench.csv");
    write_csv(&csv, &report.rows)?;
    let json_path = ctx.out.join("bench.json");
    write_json(&json_path, &report)?;
    let cell = |v: Option<f64>| v.map_or("-".to_string(), |t| format!("{t:.4}"));
    for r in &report.rows {
        println!(
            "n={:<3} exh={} dp={} bb={} ga={} aco={}",
            r.n,
            cell(r.exhaustive_ms),
            cell(r.dp_ms),
            cell(r.branch_bound_ms),
            cell(r.genetic_ms),
            cell(r.ant_colony_ms)
        );
    }
    Ok(Run {
        config: json!({ "bench": cfg, "pipeline": pred.as_ref().map(|_| &pcfg) }),
        inputs: predictor.checkpoint.clone().into_iter().collect(),
        outputs: vec![csv, json_path],
    })
}
