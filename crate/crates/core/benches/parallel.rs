//! Sequential against rayon execution on the three batch-heavy paths.
//! Build with `--no-default-features` to see the fallback cost of the
//! dispatch itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tspfcn::eval::{run_pipeline_eval, solved_instances, OraclePassthrough, PipelineConfig};
use tspfcn::instance::{derive_seed, generate_instance, Bounds};
use tspfcn::net::{ArchConfig, FcnModel};
use tspfcn::par;
use tspfcn::raster::{render_input, RenderConfig};
use tspfcn::solvers::solve_dp;
use tspfcn::Execution;

const MODES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn label(e: Execution) -> &'static str {
    match e {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn exact_batch(c: &mut Criterion) {
    let insts: Vec<_> = (0..32)
        .map(|k| generate_instance(10, derive_seed(1, k), Bounds::default()).unwrap())
        .collect();
    let mut g = c.benchmark_group("dp_batch_n10x32");
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| par::map(e, &insts, |i| solve_dp(i).unwrap().length))
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let insts = solved_instances(9, 32, 2, Execution::Parallel).unwrap();
    let render = RenderConfig::full();
    let oracle = OraclePassthrough { render: render.clone() };
    let mut g = c.benchmark_group("oracle_pipeline_n9x32");
    g.sample_size(10);
    for e in MODES {
        let mut cfg = PipelineConfig::new(render.clone());
        cfg.execution = e;
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &cfg, |b, cfg| {
            b.iter(|| run_pipeline_eval(&oracle, &insts, cfg).unwrap().metrics.e0)
        });
    }
    g.finish();
}

fn conv_forward(c: &mut Criterion) {
    let model = FcnModel::<f32>::init(ArchConfig::desk(), 3).unwrap();
    let inst = generate_instance(10, 4, Bounds::default()).unwrap();
    let image = render_input(&inst, &RenderConfig::desk()).unwrap();
    let mut g = c.benchmark_group("fcn_desk_predict");
    g.sample_size(10);
    for e in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(label(e)), &e, |b, &e| {
            b.iter(|| model.predict(&image, e).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, exact_batch, pipeline, conv_forward);
criterion_main!(benches);
