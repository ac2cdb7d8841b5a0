use proptest::prelude::*;
use tspfcn::dataset::{self, Dataset, DatasetManifest};
use tspfcn::decode::{post_process, DecodeConfig};
use tspfcn::eval::{run_pipeline_eval, solved_instances, FcnPredictor, OraclePassthrough, PipelineConfig, Predictor};
use tspfcn::instance::{generate_instance, validate_tour, Bounds};
use tspfcn::net::{load_checkpoint, save_checkpoint, train, ArchConfig, FcnModel, TrainConfig};
use tspfcn::raster::{render_label, RenderConfig};
use tspfcn::solvers::{solve, solve_dp, Algorithm, SolverConfig};
use tspfcn::Execution;

fn tiny_render() -> RenderConfig {
    RenderConfig {
        width: 32,
        height: 32,
        ..RenderConfig::desk()
    }
}

#[test]
fn dataset_train_checkpoint_predict_decode() {
    let dir = tempfile::tempdir().unwrap();
    let render = tiny_render();
    let items = dataset::generate(6, 4, 21, &render, Execution::Sequential).unwrap();
    let manifest = DatasetManifest {
        count: 4,
        n: 6,
        seed: 21,
        render: render.clone(),
    };
    let root = dir.path().join("data");
    dataset::write(&root, &manifest, &items).unwrap();
    let ds = Dataset::open(&root).unwrap();
    let samples = ds.samples().unwrap();

    let mut model = FcnModel::<f32>::init(ArchConfig::tiny(), 2).unwrap();
    let cfg = TrainConfig {
        max_iterations: 20,
        chunk_size: 4,
        snapshot_every: 10,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &samples, &samples[..2], &cfg, None).unwrap();
    assert_eq!(report.curve.len(), 3);
    assert!(report.curve.iter().all(|r| r.test_loss.is_some()));

    let ckpt = dir.path().join("m.ckpt");
    save_checkpoint(&model, &ckpt).unwrap();
    let back = load_checkpoint::<f32>(&ckpt).unwrap();
    let (a, b) = (
        FcnPredictor::new(&model, &render, Execution::Sequential).unwrap(),
        FcnPredictor::new(&back, &render, Execution::Parallel).unwrap(),
    );
    let pcfg = PipelineConfig {
        exclude_collisions: false,
        ..PipelineConfig::new(render.clone())
    };
    for (inst, s) in ds.instances.iter().zip(&samples) {
        let mask = a.predict(inst, &s.image).unwrap();
        assert_eq!(mask, b.predict(inst, &s.image).unwrap());
    }
    let r = run_pipeline_eval(&b, &ds.instances, &pcfg).unwrap();
    assert_eq!(r.metrics.samples, 4);
    assert_eq!(r.metrics.invalid, 0);
    assert!(r.rows.iter().all(|row| row.produced >= row.optimal * (1.0 - 1e-12)));
}

#[test]
fn f32_and_f64_models_agree() {
    let m64 = FcnModel::<f64>::init(ArchConfig::tiny(), 9).unwrap();
    let m32: FcnModel<f32> = m64.cast();
    let inst = generate_instance(7, 4, Bounds::default()).unwrap();
    let image = tspfcn::raster::render_image(&inst, &tiny_render()).unwrap();
    let p64 = m64.predict(&image, Execution::Sequential).unwrap();
    let p32 = m32.predict(&image, Execution::Sequential).unwrap();
    let worst = p64.path.iter().zip(&p32.path).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn pipeline_report_does_not_depend_on_execution() {
    let insts = solved_instances(9, 24, 4, Execution::Sequential).unwrap();
    let oracle = OraclePassthrough {
        render: RenderConfig::full(),
    };
    let run = |e| {
        let mut cfg = PipelineConfig::new(RenderConfig::full());
        cfg.execution = e;
        let mut r = run_pipeline_eval(&oracle, &insts, &cfg).unwrap();
        for row in &mut r.rows {
            row.predict_ms = 0.0;
            row.decode_ms = 0.0;
        }
        (r.metrics, r.rows)
    };
    assert_eq!(run(Execution::Sequential), run(Execution::Parallel));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Whatever the mask, decoding yields a valid tour no shorter than the
    /// optimum and spends exactly m n (n-1) / 2 density evaluations.
    #[test]
    fn corrupted_labels_decode_to_valid_tours(
        n in 4usize..10,
        seed in any::<u64>(),
        flip in 0.0f64..0.5,
        m in 1usize..12,
    ) {
        let inst = generate_instance(n, seed, Bounds::default()).unwrap();
        let tour = solve_dp(&inst).unwrap();
        let mask = render_label(&inst, &tour, &RenderConfig::desk()).unwrap().flip_path_pixels(flip, seed);
        let sol = post_process(&mask, &inst, &DecodeConfig { m: Some(m), departure: Some(0), seed }).unwrap();
        prop_assert!(validate_tour(&inst, &sol.order).is_valid());
        prop_assert_eq!(sol.order[0], 0);
        prop_assert!(sol.length >= tour.length * (1.0 - 1e-12));
        prop_assert_eq!(sol.diagnostics.counters.density_evaluations, (m * n * (n - 1) / 2) as u64);
    }

    #[test]
    fn no_solver_beats_the_dp(n in 4usize..9, seed in any::<u64>()) {
        let inst = generate_instance(n, seed, Bounds::default()).unwrap();
        let best = solve_dp(&inst).unwrap().length;
        let cfg = SolverConfig::default();
        for algo in [Algorithm::Exh, Algorithm::Bb, Algorithm::Aco] {
            let t = solve(algo, &inst, &cfg).unwrap();
            prop_assert!(validate_tour(&inst, &t.order).is_valid());
            prop_assert!(t.length >= best * (1.0 - 1e-12), "{:?}", algo);
        }
    }
}
