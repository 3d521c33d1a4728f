use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::json;
use tvprior::adaptive::{Schedule, Sharing};
use tvprior::data::Task;
use tvprior::export::{
    alpha_histogram, select_features, sparsity_report, trajectory_rows, write_histogram_tsv, write_sparsity_tsv,
    write_trajectories_tsv, Selection,
};
use tvprior::harness::{self, FitReport, Hyper, InitKind, Model, RunConfig, TrainedModel, DEFAULT_ROUNDS};
use tvprior::io::{ingest, save};
use tvprior::synth::{generate as draw, GenSpec};
use tvprior::{Error, Result};

use crate::{EvaluateArgs, ExportArgs, FitFlags, GenerateArgs, InitArg, ScheduleArg, SharingArg, SpecKind, TrainArgs};

/// Prefixes I/O errors with the offending path; other errors pass through.
fn at(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| at(path)(e.into()))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| at(path)(e.into()))?;
    Ok(BufWriter::new(file))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(path) => GenSpec { seed: a.seed, ..read_json(path)? },
        None => match a.kind {
            SpecKind::Regression => GenSpec::default_regression(a.seed),
            SpecKind::Text => GenSpec::default_text(a.seed),
        },
    };
    let (data, truth) = draw(&spec)?;
    save(&data, &a.out).map_err(at(&a.out))?;
    if let Some(path) = &a.truth {
        let all: Vec<usize> = (0..truth.features).collect();
        let rows =
            trajectory_rows(&truth, &all, data.feature_names.as_deref(), data.words.as_deref(), data.task == Task::Sage);
        let mut w = create(path)?;
        write_trajectories_tsv(&rows, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

impl FitFlags {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.sharing {
            cfg.sharing = match s {
                SharingArg::Shared => Sharing::Shared,
                SharingArg::PerWord => Sharing::PerWord,
            };
        }
        match (self.schedule, self.rounds) {
            (Some(ScheduleArg::Joint), _) => cfg.schedule = Schedule::Joint,
            (Some(ScheduleArg::Block), r) => {
                cfg.schedule = Schedule::BlockCoordinate { rounds: r.unwrap_or(DEFAULT_ROUNDS) }
            }
            (None, Some(r)) => {
                if let Schedule::BlockCoordinate { rounds } = &mut cfg.schedule {
                    *rounds = r;
                }
            }
            (None, None) => {}
        }
        if let Some(i) = self.init {
            cfg.init = match i {
                InitArg::Lasso => InitKind::Lasso,
                InitArg::Zero => InitKind::Zero,
            };
        }
        if self.tune_init {
            cfg.init_strength = None;
        } else if let Some(s) = self.init_strength {
            cfg.init_strength = Some(s);
        }
        if self.freeze_zero_groups {
            cfg.freeze_zero_groups = true;
        }
        if let Some(c) = self.truncation {
            cfg.truncation = c;
        }
        if let Some(m) = self.max_iter {
            cfg.optimizer.max_iter = m;
        }
        if let Some(g) = self.grad_tol {
            cfg.optimizer.grad_tol = g;
        }
        if let Some(m) = self.memory {
            cfg.optimizer.memory = m;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let model: Model = a.model.parse()?;
    let data = ingest(&a.data).map_err(at(&a.data))?;
    let through = a.through.unwrap_or(data.timesteps);
    if through == 0 || through > data.timesteps {
        return Err(Error::Config(format!("--through must lie in 1..={}", data.timesteps)));
    }
    let window = data.window(1, through)?.data;
    let mut cfg = RunConfig::new(model, through, Vec::new());
    a.fit.apply(&mut cfg);
    cfg.optimizer.validate()?;
    let hyper = match model {
        Model::Adaptive => Hyper {
            tau: Some(a.tau),
            init_strength: match cfg.init_strength {
                Some(s) => Some(s),
                None => return Err(Error::Config("train takes a fixed --init-strength; tuning needs evaluate".into())),
            },
            ..Hyper::default()
        },
        Model::RidgeTs => Hyper { ts_alpha: Some(a.ts_alpha), ts_lambda: Some(a.ts_lambda), ..Hyper::default() },
        _ => Hyper { strength: Some(a.strength), ..Hyper::default() },
    };
    let fitted = harness::train(&window, &cfg, model, &hyper)?;
    write_json(&fitted, &a.out)
}

fn run_config(a: &EvaluateArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(path) => read_json(path)?,
        None => {
            let model: Model = a.model.as_deref().ok_or_else(|| Error::Config("--model is required".into()))?.parse()?;
            let dev = a.dev.ok_or_else(|| Error::Config("--dev is required".into()))?;
            let test = a.test.clone().ok_or_else(|| Error::Config("--test is required".into()))?;
            RunConfig::new(model, dev, test)
        }
    };
    if let Some(m) = &a.model {
        cfg.model = m.parse()?;
    }
    if let Some(d) = a.dev {
        cfg.dev_timestep = d;
    }
    if let Some(t) = &a.test {
        cfg.test_timesteps = t.clone();
    }
    if let Some(g) = &a.tau_grid {
        cfg.grids.tau = g.clone();
    }
    if let Some(g) = &a.strength_grid {
        cfg.grids.strength = g.clone();
    }
    if let Some(g) = &a.ts_alpha_grid {
        cfg.grids.ts_alpha = g.clone();
    }
    if let Some(g) = &a.ts_lambda_grid {
        cfg.grids.ts_lambda = g.clone();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    a.fit.apply(&mut cfg);
    Ok(cfg)
}

fn write_metrics(report: &FitReport, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "timestep\ttrain_instances\ttest_instances\t{}", report.metric)?;
    for s in &report.steps {
        writeln!(w, "{}\t{}\t{}\t{}", s.timestep, s.train_instances, s.test_instances, s.metric)?;
    }
    let tested: usize = report.steps.iter().map(|s| s.test_instances).sum();
    writeln!(w, "overall\t\t{tested}\t{}", report.overall)?;
    w.flush()?;
    Ok(())
}

pub fn evaluate(a: EvaluateArgs) -> Result<()> {
    let cfg = run_config(&a)?;
    let data = ingest(&a.data).map_err(at(&a.data))?;
    let (report, last_model) = harness::rolling_eval_with_model(&data, &cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| at(&a.out_dir)(e.into()))?;
    write_json(&report, &a.out_dir.join("report.json"))?;
    write_json(&last_model, &a.out_dir.join("model.json"))?;
    write_metrics(&report, &a.out_dir.join("metrics.tsv"))?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": "evaluate",
        "data": {
            "path": a.data.display().to_string(),
            "task": data.task,
            "timesteps": data.timesteps,
            "features": data.num_features,
            "vocab": data.vocab,
            "instances": data.len(),
        },
        "config": cfg,
        "seed": cfg.seed,
        "outputs": ["report.json", "model.json", "metrics.tsv"],
    });
    write_json(&manifest, &a.out_dir.join("manifest.json"))
}

pub fn export(a: ExportArgs) -> Result<()> {
    if a.report.is_none() && a.model.is_none() {
        return Err(Error::Config("export needs --report, --model or both".into()));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| at(&a.out_dir)(e.into()))?;
    if let Some(path) = &a.report {
        let report: FitReport = read_json(path)?;
        let alphas = report
            .feature_alpha
            .as_ref()
            .ok_or_else(|| Error::Config("report carries no E[alpha]; only adaptive runs have one".into()))?;
        let truncation = read_truncation(path)?;
        let h = alpha_histogram(alphas, a.bins, truncation)?;
        let mut w = create(&a.out_dir.join("alpha_histogram.tsv"))?;
        write_histogram_tsv(&h, &mut w)?;
        w.flush()?;
    }
    if let Some(path) = &a.model {
        let model: TrainedModel = read_json(path)?;
        let beta = &model.beta;
        let names = model.feature_names.as_deref();
        let selection = match (&a.features, &a.indices) {
            (Some(p), _) => Selection::Pattern(p.clone()),
            (None, Some(idx)) => Selection::Indices(idx.clone()),
            (None, None) => Selection::All,
        };
        let selected = select_features(&selection, beta.features, names)?;
        let rows = trajectory_rows(beta, &selected, names, model.words.as_deref(), model.task == Task::Sage);
        let mut w = create(&a.out_dir.join("trajectories.tsv"))?;
        write_trajectories_tsv(&rows, &mut w)?;
        w.flush()?;

        let epsilon = a.epsilon.unwrap_or(tvprior::export::DEFAULT_EPSILON);
        let rep = sparsity_report(beta, epsilon)?;
        let mut w = create(&a.out_dir.join("sparsity.tsv"))?;
        write_sparsity_tsv(&rep, names, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Truncation C used by the run behind `report_path`, read from the
/// manifest next to it when there is one.
fn read_truncation(report_path: &Path) -> Result<f64> {
    let manifest = report_path.with_file_name("manifest.json");
    if manifest.exists() {
        let m: serde_json::Value = read_json(&manifest)?;
        if let Some(c) = m["config"]["truncation"].as_f64() {
            return Ok(c);
        }
    }
    Ok(tvprior::varprior::DEFAULT_TRUNCATION)
}
