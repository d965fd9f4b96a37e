//! The subcommands.

use std::path::{Path, PathBuf};

use serde::Serialize;
use valdesign::calibration::{posterior_sample, LikelihoodSpec};
use valdesign::design::{
    optimize_scenario, optimize_sensor, scan_with, verify_recovery, DesignResult,
    OptimizerOptions, SensorObjective, SensorSearch,
};
use valdesign::distribution::Distribution;
use valdesign::functional::ModelFunctional;
use valdesign::io::write_json;
use valdesign::param::Bounds;
use valdesign::rng::RngSpec;
use valdesign::sensitivity::influence_matrix;
use valdesign::validation::{
    propagate, CalibrationStage, ExperimentSource, PropagationFlag, RecordedSource,
    ScenarioChoice, SensorChoice, Verdict, Workflow,
};

use crate::config::{bounds, Loaded, ScenarioMode, SourceKind};
use crate::error::CliError;
use crate::family::Family;
use crate::run::RunDir;

/// Status line and exit code of a finished command.
pub struct Outcome {
    pub status: String,
    pub code: i32,
}

impl Outcome {
    fn ok(status: impl Into<String>) -> Self {
        Self {
            status: status.into(),
            code: 0,
        }
    }
}

/// Everything a command needs besides its own flags.
pub struct Context {
    pub cfg: Loaded,
    pub family: Family,
    pub theta: Distribution,
    pub seed: u64,
    pub out_root: PathBuf,
}

impl Context {
    pub fn new(cfg: Loaded, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let family = Family::build(&cfg)?;
        let theta = cfg.theta()?;
        let seed = seed.unwrap_or(cfg.config.seed);
        let out_root = out.unwrap_or_else(|| cfg.resolve(&cfg.config.output_dir));
        Ok(Self {
            cfg,
            family,
            theta,
            seed,
            out_root,
        })
    }

    fn rng(&self) -> RngSpec {
        RngSpec::seeded(self.seed)
    }

    pub fn options(&self) -> Result<OptimizerOptions, CliError> {
        let o = &self.cfg.config.optimizer;
        let d = OptimizerOptions::default();
        let opts = OptimizerOptions {
            max_evals: o.max_evals.unwrap_or(d.max_evals),
            n_starts: o.n_starts.unwrap_or(d.n_starts),
            n_samples: o.n_samples.unwrap_or(d.n_samples),
            initial_mesh: o.initial_mesh.unwrap_or(d.initial_mesh),
            min_mesh: o.min_mesh.unwrap_or(d.min_mesh),
            rotated_poll: o.rotated_poll.unwrap_or(d.rotated_poll),
            shake_radii: o.shake_radii.clone().unwrap_or(d.shake_radii),
            max_failed_shakes: o.max_failed_shakes.unwrap_or(d.max_failed_shakes),
            rng: self.rng().child(1),
        };
        opts.validate()
            .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        Ok(opts)
    }

    fn qoi(&self) -> Result<Box<dyn ModelFunctional>, CliError> {
        self.family.functional(&self.cfg.config.qoi)
    }

    fn observables(&self) -> Result<Vec<Box<dyn ModelFunctional>>, CliError> {
        if self.cfg.config.observables.is_empty() {
            return Err(CliError::Config("`observables` must list at least one functional".into()));
        }
        self.cfg
            .config
            .observables
            .iter()
            .map(|id| self.family.functional(id))
            .collect()
    }

    fn x_lab(&self) -> Result<Bounds, CliError> {
        let iv = self
            .cfg
            .config
            .x_lab
            .as_ref()
            .ok_or_else(|| CliError::Config("`x_lab` is required for this command".into()))?;
        bounds("x_lab", iv)
    }

    fn family_name(&self) -> String {
        format!("{:?}", self.cfg.config.family).to_lowercase()
    }

    fn finish(&self, run: &RunDir, status: &str) -> Result<(), CliError> {
        run.finish(&self.cfg.path, self.family_name(), self.seed, status)?;
        Ok(())
    }

    fn scenario_design(&self, run: &RunDir, opts: &OptimizerOptions) -> Result<DesignResult, CliError> {
        let h = self.qoi()?;
        let r = optimize_scenario(h.as_ref(), &self.cfg.config.x_pred, &self.theta, &self.x_lab()?, opts)?;
        r.write_csv(run.path("scenario_design.csv"))?;
        r.write_json(run.path("scenario_design.json"))?;
        Ok(r)
    }

    fn sensor_search(&self, x_val: &[f64]) -> Result<SensorSearch, CliError> {
        let s = self.cfg.config.sensor.clone().unwrap_or_default();
        if let Some(b) = &s.search_box {
            return Ok(SensorSearch::Box(bounds("sensor.box", b)?));
        }
        if let Some(p) = &s.points {
            return Ok(SensorSearch::Grid(p.clone()));
        }
        if let Some(axes) = &s.grid {
            let mut pts: Vec<Vec<f64>> = vec![vec![]];
            for a in axes {
                if a.n == 0 {
                    return Err(CliError::Config("sensor.grid: axis with zero points".into()));
                }
                let vals: Vec<f64> = (0..a.n)
                    .map(|k| {
                        if a.n == 1 {
                            a.lo
                        } else {
                            a.lo + (a.hi - a.lo) * k as f64 / (a.n - 1) as f64
                        }
                    })
                    .collect();
                pts = pts
                    .into_iter()
                    .flat_map(|p| {
                        vals.iter().map(move |v| {
                            let mut q = p.clone();
                            q.push(*v);
                            q
                        })
                    })
                    .collect();
            }
            return Ok(SensorSearch::Grid(pts));
        }
        Ok(SensorSearch::Grid(self.family.default_sensor_grid(x_val, &self.theta)?))
    }
}

fn influence_text(
    h: &dyn ModelFunctional,
    x: &[f64],
    theta: &Distribution,
    n: usize,
    rng: RngSpec,
    path: &Path,
) -> Result<(), CliError> {
    let m = influence_matrix(h, x, &[], theta, n, rng)?;
    std::fs::write(path, m.to_text())?;
    Ok(())
}

pub fn design_scenario(ctx: &Context) -> Result<Outcome, CliError> {
    let run = RunDir::create(&ctx.out_root, "design-scenario")?;
    let opts = ctx.options()?;
    let r = ctx.scenario_design(&run, &opts)?;
    let h = ctx.qoi()?;
    let c = &ctx.cfg.config;
    let irng = opts.rng.child(0);
    influence_text(h.as_ref(), &c.x_pred, &ctx.theta, opts.n_samples, irng, &run.path("influence_x_pred.txt"))?;
    influence_text(h.as_ref(), &r.best_point, &ctx.theta, opts.n_samples, irng, &run.path("influence_x_opt.txt"))?;
    if let Some(x) = &c.x_val {
        influence_text(h.as_ref(), x, &ctx.theta, opts.n_samples, irng, &run.path("influence_x_val.txt"))?;
    }
    let status = format!(
        "x_val = {:?}, normalized objective {:.6e}, flat: [{}]",
        r.best_point,
        r.normalized_objective,
        r.flat_coordinates.join(", ")
    );
    ctx.finish(&run, "ok")?;
    Ok(Outcome::ok(status))
}

pub fn design_sensor(ctx: &Context) -> Result<Outcome, CliError> {
    let mut run = RunDir::create(&ctx.out_root, "design-sensor")?;
    let opts = ctx.options()?;
    let x_val = match &ctx.cfg.config.x_val {
        Some(x) => x.clone(),
        None => ctx.scenario_design(&run, &opts)?.best_point,
    };
    let h_qoi = ctx.qoi()?;
    let obs = ctx.observables()?;
    let refs: Vec<&dyn ModelFunctional> = obs.iter().map(|b| b.as_ref()).collect();
    let search = ctx.sensor_search(&x_val)?;
    let d = optimize_sensor(&refs, &search, &x_val, h_qoi.as_ref(), &ctx.theta, &opts)?;
    d.write_json(run.path("sensor_design.json"))?;
    if let SensorSearch::Grid(g) = &search {
        let obj = SensorObjective::new(h_qoi.as_ref(), &x_val, &ctx.theta, opts.n_samples, opts.rng.child(0))?;
        for h in &refs {
            scan_with(&obj, *h, g).write_csv(run.path(&format!("sensor_scan_{}.csv", h.id())))?;
        }
    }
    if let Some(v) = &ctx.cfg.config.transport.velocity_file {
        run.add_input(ctx.cfg.resolve(v));
    }
    ctx.finish(&run, "ok")?;
    Ok(Outcome::ok(format!(
        "observable {} at z = {:?}, objective {:.6e}",
        d.functional, d.z, d.objective
    )))
}

fn calibration_data(ctx: &Context, override_path: Option<&Path>) -> Result<(LikelihoodSpec, Box<dyn ModelFunctional>, PathBuf), CliError> {
    let c = ctx
        .cfg
        .config
        .calibration
        .as_ref()
        .ok_or_else(|| CliError::Config("a [calibration] section is required".into()))?;
    let h = ctx.family.functional(&c.observable)?;
    let path = match override_path {
        Some(p) => p.to_path_buf(),
        None => ctx.cfg.resolve(c.observations.as_ref().ok_or_else(|| {
            CliError::Config("calibration.observations is missing and no --observations given".into())
        })?),
    };
    if !path.is_file() {
        return Err(CliError::Config(format!("observation file {} not found", path.display())));
    }
    let (dx, _, dz) = h.arity();
    let spec = LikelihoodSpec::read_csv(&path, c.sigma, dx, dz)?;
    Ok((spec, h, path))
}

pub fn calibrate(ctx: &Context, observations: Option<&Path>) -> Result<Outcome, CliError> {
    let (spec, h, path) = calibration_data(ctx, observations)?;
    let c = ctx.cfg.config.calibration.as_ref().expect("checked above");
    let mut run = RunDir::create(&ctx.out_root, "calibrate")?;
    run.add_input(path);
    let chain = posterior_sample(&spec, h.as_ref(), &ctx.theta, c.chain_length, &c.proposal_scale, ctx.rng().child(3))?;
    let labels = h.layout().model.clone();
    chain.write_csv(run.path("posterior_chain.csv"), &labels)?;
    chain.write_summary_json(run.path("posterior_summary.json"), &labels)?;
    ctx.finish(&run, "ok")?;
    Ok(Outcome::ok(format!(
        "posterior mean {:?}, acceptance rate {:.3}",
        chain.mean(),
        chain.acceptance_rate
    )))
}

pub fn verify(ctx: &Context, starts: Option<usize>) -> Result<Outcome, CliError> {
    let v = ctx
        .cfg
        .config
        .verify
        .as_ref()
        .ok_or_else(|| CliError::Config("a [verify] section with `x_full` is required".into()))?;
    let mut opts = ctx.options()?;
    if let Some(n) = starts {
        opts.n_starts = n;
    }
    let run = RunDir::create(&ctx.out_root, "verify")?;
    let h = ctx.qoi()?;
    let t = verify_recovery(h.as_ref(), &ctx.cfg.config.x_pred, &ctx.theta, &bounds("verify.x_full", &v.x_full)?, &opts)?;
    t.write_csv(run.path("verification.csv"))?;
    t.write_json(run.path("verification.json"))?;
    ctx.finish(&run, "ok")?;
    let worst = t
        .rows
        .iter()
        .filter_map(|r| r.normalized_objective)
        .fold(0.0, f64::max);
    Ok(Outcome::ok(format!(
        "{} runs, worst normalized objective {worst:.6e}, flat: [{}]",
        t.rows.len(),
        t.flat_coordinates.join(", ")
    )))
}

#[derive(Serialize)]
struct PropagationSummary<'a> {
    functional: &'a str,
    x: &'a [f64],
    n: usize,
    mean: f64,
    std: f64,
    cov: f64,
    q025: f64,
    q975: f64,
    cov_budget: f64,
    status: PropagationFlag,
}

pub fn propagate_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let c = &ctx.cfg.config;
    let x = c.propagate.x.clone().unwrap_or_else(|| c.x_pred.clone());
    let h = ctx.qoi()?;
    let run = RunDir::create(&ctx.out_root, "propagate")?;
    let p = propagate(h.as_ref(), &x, &[], &ctx.theta, c.propagate.n, ctx.rng().child(4))?;
    p.write_csv(run.path("qoi_samples.csv"))?;
    let status = if p.cov > c.propagate.cov_budget {
        PropagationFlag::UncertaintyTooLarge
    } else {
        PropagationFlag::Proceed
    };
    write_json(
        run.path("qoi_summary.json"),
        &PropagationSummary {
            functional: h.id(),
            x: &x,
            n: c.propagate.n,
            mean: p.mean,
            std: p.std,
            cov: p.cov,
            q025: p.q025,
            q975: p.q975,
            cov_budget: c.propagate.cov_budget,
            status,
        },
    )?;
    let label = match status {
        PropagationFlag::Proceed => "proceed",
        PropagationFlag::UncertaintyTooLarge => "exit validation: QoI uncertainty too large",
    };
    ctx.finish(&run, label)?;
    Ok(Outcome::ok(format!(
        "mean {:.6e}, 95% interval [{:.6e}, {:.6e}], CoV {:.3e}: {label}",
        p.mean, p.q025, p.q975, p.cov
    )))
}

pub fn validate(ctx: &Context, data: Option<&Path>) -> Result<Outcome, CliError> {
    let c = &ctx.cfg.config;
    let v = c
        .validation
        .as_ref()
        .ok_or_else(|| CliError::Config("a [validation] section is required".into()))?;
    let mut run = RunDir::create(&ctx.out_root, "validate")?;
    let opts = ctx.options()?;
    let h_qoi = ctx.qoi()?;
    let mut obs = ctx.observables()?;

    let source: Box<dyn ExperimentSource> = match (data, v.source) {
        (Some(p), _) => {
            run.add_input(p.to_path_buf());
            Box::new(RecordedSource::read_csv(p)?)
        }
        (None, SourceKind::Csv) => {
            let p = ctx.cfg.resolve(v.data.as_ref().ok_or_else(|| {
                CliError::Config("validation.data is required when source = \"csv\"".into())
            })?);
            run.add_input(p.clone());
            Box::new(RecordedSource::read_csv(&p)?)
        }
        (None, SourceKind::FineModel) => ctx.family.fine_source()?,
        (None, SourceKind::Model) => Family::model_source(&ctx.theta),
    };

    let calib = if v.calibrate {
        let (spec, h, path) = calibration_data(ctx, None)?;
        run.add_input(path);
        let cc = c.calibration.as_ref().expect("checked above");
        Some((spec, h, cc.chain_length, cc.proposal_scale.clone()))
    } else {
        None
    };

    let mut scenario = match v.scenario {
        ScenarioMode::Fixed => ScenarioChoice::Fixed(c.x_val.clone().ok_or_else(|| {
            CliError::Config("validation.scenario = \"fixed\" needs `x_val`".into())
        })?),
        ScenarioMode::Optimize => ScenarioChoice::Optimize(ctx.x_lab()?),
    };

    // a fixed sensor point or the default sensor grid depends on x_val, so
    // the scenario is settled here first
    if v.sensor.is_some() || c.sensor.is_none() {
        if let ScenarioChoice::Optimize(_) = scenario {
            scenario = ScenarioChoice::Fixed(ctx.scenario_design(&run, &opts)?.best_point);
        }
    }
    let x_known = match &scenario {
        ScenarioChoice::Fixed(x) => x.clone(),
        ScenarioChoice::Optimize(_) => c.x_pred.clone(),
    };
    let sensor = match &v.sensor {
        None => SensorChoice::Optimize(ctx.sensor_search(&x_known)?),
        Some(fs) => {
            let z = ctx.family.sensor_point(&fs.z, &x_known, &ctx.theta)?;
            let index = match obs.iter().position(|h| h.id() == fs.observable) {
                Some(i) => i,
                None => {
                    obs.push(ctx.family.functional(&fs.observable)?);
                    obs.len() - 1
                }
            };
            SensorChoice::Fixed { index, z }
        }
    };

    let refs: Vec<&dyn ModelFunctional> = obs.iter().map(|b| b.as_ref()).collect();
    let w = Workflow {
        h_qoi: h_qoi.as_ref(),
        x_pred: c.x_pred.clone(),
        prior: ctx.theta.clone(),
        calibration: calib.as_ref().map(|(spec, h, n, scale)| CalibrationStage {
            likelihood: spec.clone(),
            h_obs: h.as_ref(),
            n: *n,
            proposal_scale: scale.clone(),
        }),
        scenario,
        h_lab: refs,
        sensor,
        source: source.as_ref(),
        epsilon: v.epsilon,
        eta: v.eta,
        cov_budget: v.cov_budget,
        n_exp: v.n_exp,
        n_model: v.n_model,
        opts,
        rng: ctx.rng().child(2),
        out_dir: Some(run.dir.clone()),
    };
    let report = w.run()?;
    let verdict = &report.verdict;
    let (status, code) = match verdict.verdict {
        Some(Verdict::NotInvalidated) => ("not invalidated", 0),
        Some(Verdict::Invalidated) => ("invalidated", 1),
        None => ("exit validation: QoI uncertainty too large", 0),
    };
    ctx.finish(&run, status)?;
    let gamma = verdict
        .gamma
        .map(|g| format!("gamma = {g:.4}, "))
        .unwrap_or_default();
    Ok(Outcome {
        status: format!("{gamma}{status}"),
        code,
    })
}
