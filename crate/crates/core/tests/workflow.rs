use valdesign::design::{optimize_sensor, OptimizerOptions, SensorSearch};
use valdesign::projectile::{Acceleration, Altitude, MaxAltitude};
use valdesign::validation::*;
use valdesign::{Distribution, ModelFunctional, RngSpec};

const X_PRED: [f64; 4] = [0.05, 0.01, 1.0, 100.0];
const X_VAL: [f64; 4] = [1.0, 0.1, 0.5, 100.0];

fn theta() -> Distribution {
    Distribution::product(vec![
        Distribution::normal(9.81, 0.01).unwrap(),
        Distribution::normal(-11.5, 0.5).unwrap(),
    ])
    .unwrap()
}

fn small_opts(seed: u64) -> OptimizerOptions {
    OptimizerOptions { n_starts: 2, n_samples: 40, max_evals: 300, rng: RngSpec::seeded(seed), ..Default::default() }
}

#[test]
fn sensor_grid_prefers_the_altitude_near_apex() {
    let (alt, acc, qoi) = (Altitude::default(), Acceleration::default(), MaxAltitude::default());
    let grid: Vec<Vec<f64>> = (1..=40).map(|i| vec![0.5 * i as f64]).collect();
    let design = optimize_sensor(
        &[&alt as &dyn ModelFunctional, &acc],
        &SensorSearch::Grid(grid),
        &X_VAL,
        &qoi,
        &theta(),
        &small_opts(3),
    )
    .unwrap();
    assert_eq!(design.functional, "altitude");
    assert_eq!(design.candidates.len(), 2);
    let t_star = valdesign::projectile::time_of_max(&X_VAL, &[9.81, -11.5]).unwrap();
    assert!((design.z[0] - t_star).abs() <= 0.5, "{:?} vs {t_star}", design.z);
}

#[test]
fn workflow_is_thread_count_invariant() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let (qoi, alt) = (MaxAltitude::default(), Altitude::default());
            let source = FineModelSource::default();
            let wf = Workflow {
                h_qoi: &qoi,
                x_pred: X_PRED.to_vec(),
                prior: theta(),
                calibration: None,
                scenario: ScenarioChoice::Fixed(X_VAL.to_vec()),
                h_lab: vec![&alt as &dyn ModelFunctional],
                sensor: SensorChoice::Fixed { index: 0, z: vec![10.0] },
                source: &source,
                epsilon: 1.0,
                eta: 0.9,
                cov_budget: COV_BUDGET,
                n_exp: 200,
                n_model: 200,
                opts: small_opts(9),
                rng: RngSpec::seeded(11),
                out_dir: None,
            };
            wf.run().unwrap()
        })
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(format!("{:?}", a.verdict), format!("{:?}", b.verdict));
    assert!(a.verdict.gamma.is_some());
}

#[test]
fn workflow_writes_intermediate_results() {
    let dir = tempfile::tempdir().unwrap();
    let theta = Distribution::dirac(vec![9.81, -11.5]).unwrap();
    let (qoi, alt) = (MaxAltitude::default(), Altitude::default());
    let source = ModelSource { theta: theta.clone() };
    let wf = Workflow {
        h_qoi: &qoi,
        x_pred: X_PRED.to_vec(),
        prior: theta,
        calibration: None,
        scenario: ScenarioChoice::Fixed(X_VAL.to_vec()),
        h_lab: vec![&alt as &dyn ModelFunctional],
        sensor: SensorChoice::Fixed { index: 0, z: vec![5.0] },
        source: &source,
        epsilon: 1e-9,
        eta: 0.9,
        cov_budget: COV_BUDGET,
        n_exp: 20,
        n_model: 20,
        opts: small_opts(1),
        rng: RngSpec::seeded(2),
        out_dir: Some(dir.path().to_path_buf()),
    };
    let report = wf.run().unwrap();
    assert_eq!(report.verdict.verdict, Some(Verdict::NotInvalidated));
    let names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert!(names.iter().any(|n| n.ends_with(".json")), "{names:?}");
    assert!(names.iter().any(|n| n.ends_with(".csv")), "{names:?}");
}
