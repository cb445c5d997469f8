use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use taylorcast_core::analytic_lab::{
    compare_euler_taylor, comparison_csv, derivative_table_csv, fit_derivative_estimator,
    fit_sin2d_estimator, EstimatorConfig, Family,
};
use taylorcast_core::checkpoint::Checkpoint;
use taylorcast_core::config::KeyValues;
use taylorcast_core::data::{
    fractional_ground_truth, generate_moving_shapes, ClipSource, FieldSource, ScalarFieldSpec,
    ShapesSource, VideoClip,
};
use taylorcast_core::forecast::{rollout as run_rollout, tau_grid, RolloutPlan};
use taylorcast_core::metrics::{ssim, MetricReport};
use taylorcast_core::model::{fit, Model, ModelConfig, Trainer};
use taylorcast_core::{seed, Error, Tensor};

use crate::output::{num, parallel_map, tau_file_name, write_image, Csv};
use crate::run_config::RunConfig;
use crate::CliError;

pub struct Context {
    pub config_file: Option<PathBuf>,
    pub flags: KeyValues,
    pub threads: usize,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.tsn";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";

impl Context {
    fn resolve(
        &self,
        command: &'static str,
        defaults: KeyValues,
        known: &[&str],
    ) -> Result<RunConfig, CliError> {
        RunConfig::resolve(
            command,
            defaults,
            known,
            self.config_file.as_deref(),
            &self.flags,
        )
    }
}

fn defaults(pairs: &[(&str, &str)]) -> KeyValues {
    let mut kv = KeyValues::new();
    for (k, v) in pairs {
        kv.set(k, v);
    }
    kv
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

enum Dataset {
    Shapes(ShapesSource),
    Field(FieldSource),
}

impl Dataset {
    /// Reads `dataset`, `data_seed` and `blobs`; `data_seed` defaults to a
    /// value derived from the master seed under `label`.
    fn from_run(
        rc: &mut RunConfig,
        label: &str,
        grid: (usize, usize),
        observed: usize,
        future: usize,
    ) -> Result<Self, CliError> {
        let master: u64 = rc.get("seed")?;
        rc.set_default("data_seed", seed::derive(master, label, 0));
        let data_seed: u64 = rc.get("data_seed")?;
        match rc.str("dataset")? {
            "shapes" => {
                rc.values_remove("blobs");
                Ok(Dataset::Shapes(ShapesSource::new(
                    grid, observed, future, data_seed,
                )))
            }
            "field" => {
                rc.set_default("blobs", 3);
                Ok(Dataset::Field(FieldSource {
                    grid,
                    blobs: rc.get("blobs")?,
                    observed,
                    future,
                    seed: data_seed,
                }))
            }
            other => Err(usage(format!(
                "unknown dataset `{other}` (expected shapes or field)"
            ))),
        }
    }

    fn source(&self) -> &(dyn ClipSource + Sync) {
        match self {
            Dataset::Shapes(s) => s,
            Dataset::Field(f) => f,
        }
    }
}

fn load_model(rc: &RunConfig) -> Result<Model, CliError> {
    let path = rc.str("checkpoint")?;
    let model = Checkpoint::load(path)
        .and_then(|c| c.to_model())
        .map_err(|e| runtime(format!("{path}: {e}")))?;
    if model.config().in_channels != 1 {
        return Err(runtime(
            "synthetic datasets are single-channel; checkpoint expects more channels",
        ));
    }
    Ok(model)
}

fn save_checkpoint(checkpoint: &Checkpoint, dir: &Path) -> Result<(), CliError> {
    let tmp = dir.join(format!("{CHECKPOINT_FILE}.tmp"));
    let path = dir.join(CHECKPOINT_FILE);
    checkpoint.save(&tmp)?;
    std::fs::rename(&tmp, &path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

const TRAIN_KEYS: &[&str] = &["dataset", "data_seed", "blobs", "resume", "out"];

pub fn train(ctx: &Context) -> Result<(), CliError> {
    let mut known: Vec<&str> = ModelConfig::keys().to_vec();
    known.extend_from_slice(TRAIN_KEYS);
    let base = defaults(&[("dataset", "shapes"), ("out", "runs/train")]);
    let first = ctx.resolve("train", base.clone(), &known)?;

    let resumed = match first.has("resume") {
        true => {
            let path = first.str("resume")?;
            let ckpt = Checkpoint::load(path).map_err(|e| runtime(format!("{path}: {e}")))?;
            if ckpt.training.is_none() {
                return Err(runtime(format!(
                    "{path} holds no optimiser state to resume from"
                )));
            }
            Some(ckpt)
        }
        false => None,
    };
    let mut model_defaults = match &resumed {
        Some(c) => c.config.to_key_values(),
        None => {
            let mut kv = ModelConfig::default().to_key_values();
            kv.remove("gamma");
            kv
        }
    };
    model_defaults.merge(&base);
    let mut rc = ctx.resolve("train", model_defaults, &known)?;
    let gamma = if rc.str("dataset")? == "field" { 2 } else { 4 };
    rc.set_default("gamma", gamma);

    let mut cfg = ModelConfig::default();
    cfg.apply(rc.values()).map_err(usage)?;
    cfg.validate().map_err(usage)?;
    if cfg.in_channels != 1 {
        return Err(usage(
            "synthetic datasets are single-channel; set in_channels=1",
        ));
    }
    if let Some(c) = &resumed {
        let mut same = cfg.clone();
        same.epochs = c.config.epochs;
        if same != c.config {
            return Err(usage(
                "configuration differs from the checkpoint being resumed (only epochs may change)",
            ));
        }
    }
    let dataset = Dataset::from_run(
        &mut rc,
        "train-data",
        (cfg.height, cfg.width),
        cfg.clip_length,
        cfg.horizon,
    )?;
    let dir = rc.save()?;

    let mut trainer = match &resumed {
        Some(c) => {
            let mut c = c.clone();
            c.config.epochs = cfg.epochs;
            c.to_trainer()?
        }
        None => Trainer::new(Model::new(cfg.clone())?),
    };
    if resumed.is_none() {
        save_checkpoint(&Checkpoint::from_trainer(&trainer), &dir)?;
    }

    let log_path = dir.join(TRAIN_LOG_FILE);
    let append = resumed.is_some() && log_path.exists();
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log_path)
        .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    if !append {
        log.write_all(b"epoch,loss,lr,train_ssim\n")
            .map_err(|e| runtime(format!("{}: {e}", log_path.display())))?;
    }

    let result = fit(&mut trainer, dataset.source(), |t, stats| {
        writeln!(
            log,
            "{},{},{},{}",
            stats.epoch,
            num(stats.loss),
            num(stats.lr),
            num(stats.train_ssim)
        )?;
        log.flush()?;
        save_checkpoint(&Checkpoint::from_trainer(t), &dir)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        println!(
            "epoch {} loss {:.5} lr {:.2e} train_ssim {:.4}",
            stats.epoch, stats.loss, stats.lr, stats.train_ssim
        );
        Ok(())
    });
    match result {
        Ok(_) => {
            println!("checkpoint: {}", dir.join(CHECKPOINT_FILE).display());
            Ok(())
        }
        Err(e @ Error::Diverged { .. }) => Err(runtime(format!(
            "{e}; last good checkpoint: {}",
            dir.join(CHECKPOINT_FILE).display()
        ))),
        Err(e) => Err(e.into()),
    }
}

const EVAL_KEYS: &[&str] = &[
    "checkpoint",
    "dataset",
    "data_seed",
    "blobs",
    "clips",
    "horizon",
    "out",
    "seed",
];

pub fn eval(ctx: &Context) -> Result<(), CliError> {
    let base = defaults(&[
        ("dataset", "shapes"),
        ("clips", "16"),
        ("out", "runs/eval"),
        ("seed", "0"),
    ]);
    let mut rc = ctx.resolve("eval", base, EVAL_KEYS)?;
    let model = load_model(&rc)?;
    let cfg = model.config().clone();
    rc.set_default("horizon", cfg.horizon);
    let horizon: usize = rc.get("horizon")?;
    let clips: usize = rc.get("clips")?;
    if horizon == 0 || clips == 0 {
        return Err(usage("horizon and clips must be positive"));
    }
    let dataset = Dataset::from_run(
        &mut rc,
        "test-data",
        (cfg.height, cfg.width),
        cfg.clip_length,
        horizon,
    )?;
    let dir = rc.save()?;

    let taus: Vec<f64> = (1..=horizon).map(|k| k as f64).collect();
    let reports = parallel_map(clips, ctx.threads, |i| {
        let (clip, future) = dataset.source().sample(i as u64)?;
        let pred = model.forward(&clip, &taus)?;
        Ok(MetricReport::from_frames(&pred, &future.frame_list())?)
    })?;

    let n = clips as f64;
    let mut per_frame = Csv::new(&["t", "mse", "mae", "ssim", "psnr"]);
    let mut means = [0.0; 4];
    for k in 0..horizon {
        let mut row = [0.0; 4];
        for r in &reports {
            let m = r.per_frame[k];
            for (slot, v) in row.iter_mut().zip([m.mse, m.mae, m.ssim, m.psnr]) {
                *slot += v;
            }
        }
        let row = row.map(|v| v / n);
        for (mean, v) in means.iter_mut().zip(row) {
            *mean += v;
        }
        let mut cells = vec![(k + 1).to_string()];
        cells.extend(row.iter().map(|&v| num(v)));
        per_frame.row(&cells);
    }
    let means = means.map(|v| v / horizon as f64);
    let mut summary = Csv::new(&["mse", "mae", "ssim", "psnr"]);
    summary.row(&means.map(num));
    per_frame.save(&dir.join("metrics_per_frame.csv"))?;
    summary.save(&dir.join("metrics_summary.csv"))?;
    println!(
        "{clips} clips, horizon {horizon}: mse {:.5} mae {:.5} ssim {:.4} psnr {:.2}",
        means[0], means[1], means[2], means[3]
    );
    Ok(())
}

const PREDICT_KEYS: &[&str] = &[
    "checkpoint",
    "clip",
    "dataset",
    "data_seed",
    "blobs",
    "index",
    "taus",
    "grid",
    "out",
    "seed",
];

/// Observed window plus whatever reference the input offers at offset `tau`.
struct PredictInput {
    observed: VideoClip,
    truth: Box<dyn Fn(f64) -> Result<Option<Tensor>, CliError>>,
}

fn predict_input(rc: &mut RunConfig, cfg: &ModelConfig) -> Result<PredictInput, CliError> {
    let t = cfg.clip_length;
    if rc.has("clip") {
        for key in ["dataset", "data_seed", "blobs", "index"] {
            rc.values_remove(key);
        }
        let path = rc.str("clip")?.to_string();
        let (clip, _) = VideoClip::load(&path).map_err(|e| runtime(format!("{path}: {e}")))?;
        if clip.len() < t
            || clip.channels() != cfg.in_channels
            || (clip.height(), clip.width()) != (cfg.height, cfg.width)
        {
            return Err(runtime(format!(
                "{path}: clip of {} frames {}x{}x{} does not fit a model expecting {t} frames {}x{}x{}",
                clip.len(),
                clip.channels(),
                clip.height(),
                clip.width(),
                cfg.in_channels,
                cfg.height,
                cfg.width
            )));
        }
        let observed = clip.window(0, t)?;
        let truth = move |tau: f64| {
            let k = t as f64 - 1.0 + tau;
            let idx = k.round();
            Ok((idx == k && idx >= 0.0 && (idx as usize) < clip.len())
                .then(|| clip.frame(idx as usize)))
        };
        return Ok(PredictInput {
            observed,
            truth: Box::new(truth),
        });
    }
    let index: u64 = rc.get("index")?;
    let last = (t - 1) as f64;
    let dataset = Dataset::from_run(rc, "test-data", (cfg.height, cfg.width), t, 1)?;
    match dataset {
        Dataset::Shapes(s) => {
            let scene = s.scene(index)?;
            let observed = generate_moving_shapes(&scene, t)?;
            let truth = move |tau: f64| {
                let at = last + tau;
                if at < 0.0 {
                    return Ok(None);
                }
                Ok(Some(fractional_ground_truth(&scene, at)?))
            };
            Ok(PredictInput {
                observed,
                truth: Box::new(truth),
            })
        }
        Dataset::Field(f) => {
            let spec =
                ScalarFieldSpec::random(f.grid, f.blobs, seed::derive(f.seed, "field", index))?;
            let observed = spec.generate(t)?;
            let truth = move |tau: f64| Ok((last + tau >= 0.0).then(|| spec.render(last + tau)));
            Ok(PredictInput {
                observed,
                truth: Box::new(truth),
            })
        }
    }
}

fn predict_taus(rc: &RunConfig) -> Result<Vec<f64>, CliError> {
    let taus = match (rc.has("taus"), rc.has("grid")) {
        (true, false) => rc.list::<f64>("taus")?,
        (false, true) => {
            let g: Vec<f64> = rc.list("grid")?;
            let count = g.get(2).copied().unwrap_or(f64::NAN);
            if g.len() != 3 || count.fract() != 0.0 || count < 1.0 {
                return Err(usage(
                    "grid expects start,step,count with a positive integer count",
                ));
            }
            tau_grid(g[0], g[1], count as usize).map_err(usage)?
        }
        _ => return Err(usage("predict needs exactly one of `taus` or `grid`")),
    };
    if taus.is_empty() || taus.iter().any(|t| !t.is_finite()) {
        return Err(usage("offsets must be finite"));
    }
    let mut names: Vec<String> = taus
        .iter()
        .map(|&t| tau_file_name("pred", t, "pgm"))
        .collect();
    names.sort();
    names.dedup();
    if names.len() != taus.len() {
        return Err(usage("offsets must differ at two decimals"));
    }
    Ok(taus)
}

pub fn predict(ctx: &Context) -> Result<(), CliError> {
    let base = defaults(&[
        ("dataset", "shapes"),
        ("index", "0"),
        ("out", "runs/predict"),
        ("seed", "0"),
    ]);
    let mut rc = ctx.resolve("predict", base, PREDICT_KEYS)?;
    let taus = predict_taus(&rc)?;
    let model = load_model(&rc)?;
    let input = predict_input(&mut rc, model.config())?;
    let dir = rc.save()?;

    let frames = model.forward(&input.observed, &taus)?;
    let mut csv = Csv::new(&["tau", "file", "diff_file", "mse", "mae", "ssim", "psnr"]);
    for (&tau, frame) in taus.iter().zip(&frames) {
        let file = tau_file_name("pred", tau, "pgm");
        write_image(&dir.join(&file), frame)?;
        let mut cells = vec![num(tau), file];
        match (input.truth)(tau)? {
            Some(truth) => {
                let diff = frame.zip_map(&truth, |p, g| (p - g).abs())?;
                let diff_file = tau_file_name("diff", tau, "pgm");
                write_image(&dir.join(&diff_file), &diff)?;
                let m = MetricReport::from_frames(std::slice::from_ref(frame), &[truth])?;
                cells.push(diff_file);
                cells.extend([m.mse, m.mae, m.ssim, m.psnr].map(num));
            }
            None => cells.extend(std::iter::repeat_n(String::new(), 5)),
        }
        csv.row(&cells);
    }
    csv.save(&dir.join("predictions.csv"))?;
    println!("{} frames written to {}", taus.len(), dir.display());
    Ok(())
}

const ROLLOUT_KEYS: &[&str] = &[
    "checkpoint",
    "dataset",
    "data_seed",
    "blobs",
    "clips",
    "horizon",
    "steps",
    "out",
    "seed",
];

pub fn rollout(ctx: &Context) -> Result<(), CliError> {
    let base = defaults(&[
        ("dataset", "shapes"),
        ("clips", "8"),
        ("horizon", "70"),
        ("steps", "10,7,5,2,1"),
        ("out", "runs/rollout"),
        ("seed", "0"),
    ]);
    let mut rc = ctx.resolve("rollout", base, ROLLOUT_KEYS)?;
    let horizon: usize = rc.get("horizon")?;
    let clips: usize = rc.get("clips")?;
    let steps: Vec<usize> = rc.list("steps")?;
    if clips == 0 || horizon == 0 {
        return Err(usage("horizon and clips must be positive"));
    }
    if let Some(s) = steps.iter().find(|&&s| s == 0 || s > horizon) {
        return Err(usage(format!("step {s} outside [1, {horizon}]")));
    }
    let model = load_model(&rc)?;
    let cfg = model.config().clone();
    if let Some(s) = steps.iter().find(|&&s| s > cfg.clip_length) {
        return Err(runtime(format!(
            "step {s} exceeds the model's window of {} frames",
            cfg.clip_length
        )));
    }
    let dataset = Dataset::from_run(
        &mut rc,
        "test-data",
        (cfg.height, cfg.width),
        cfg.clip_length,
        horizon,
    )?;
    let dir = rc.save()?;

    let plans: Vec<RolloutPlan> = steps
        .iter()
        .map(|&s| RolloutPlan::new(horizon, s))
        .collect::<Result<_, _>>()?;
    let curves = parallel_map(clips, ctx.threads, |i| {
        let (clip, future) = dataset.source().sample(i as u64)?;
        plans
            .iter()
            .map(|plan| {
                let r = run_rollout(&model, &clip, plan)?;
                r.frames
                    .iter()
                    .enumerate()
                    .map(|(k, f)| Ok(ssim(f, &future.frame(k))?))
                    .collect::<Result<Vec<f64>, CliError>>()
            })
            .collect::<Result<Vec<_>, CliError>>()
    })?;

    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(steps.iter().map(|s| format!("step_{s}")))
        .collect();
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    let mut last = vec![0.0; steps.len()];
    for k in 0..horizon {
        let mut cells = vec![(k + 1).to_string()];
        for (j, slot) in last.iter_mut().enumerate() {
            let mean = curves.iter().map(|c| c[j][k]).sum::<f64>() / clips as f64;
            *slot = mean;
            cells.push(num(mean));
        }
        csv.row(&cells);
    }
    csv.save(&dir.join("rollout_ssim.csv"))?;
    for (s, v) in steps.iter().zip(&last) {
        println!("step {s}: ssim at t+{horizon} = {v:.4}");
    }
    Ok(())
}

const LAB_KEYS: &[&str] = &[
    "family",
    "mode",
    "steps",
    "t0",
    "horizon",
    "order",
    "euler_dt",
    "width",
    "window",
    "dt",
    "train_points",
    "tau_points",
    "lr",
    "out",
    "seed",
];

fn lab_families(rc: &RunConfig) -> Result<Vec<Family>, CliError> {
    match rc.str("family")? {
        "all" => Ok(vec![Family::Sin, Family::Cos, Family::Exp]),
        name => Ok(vec![name.parse::<Family>().map_err(usage)?]),
    }
}

pub fn lab(ctx: &Context) -> Result<(), CliError> {
    let est = EstimatorConfig::default();
    let base = defaults(&[
        ("family", "all"),
        ("mode", "table"),
        ("out", "runs/lab"),
        ("seed", "0"),
    ]);
    let mut rc = ctx.resolve("lab", base, LAB_KEYS)?;
    let families = lab_families(&rc)?;
    let mode = rc.str("mode")?.to_string();
    match mode.as_str() {
        "table" => {
            for key in ["t0", "horizon", "order", "euler_dt"] {
                if rc.has(key) {
                    return Err(usage(format!("`{key}` applies to mode=euler")));
                }
            }
            for (key, v) in [
                ("steps", est.steps.to_string()),
                ("width", est.width.to_string()),
                ("window", est.window.to_string()),
                ("dt", num(est.dt)),
                ("train_points", est.train_points.to_string()),
                ("tau_points", est.tau_points.to_string()),
                ("lr", num(est.lr)),
            ] {
                rc.set_default(key, v);
            }
            let cfg = EstimatorConfig {
                steps: rc.get("steps")?,
                width: rc.get("width")?,
                window: rc.get("window")?,
                dt: rc.get("dt")?,
                train_points: rc.get("train_points")?,
                tau_points: rc.get("tau_points")?,
                lr: rc.get("lr")?,
                seed: rc.get("seed")?,
                ..est
            };
            let dir = rc.save()?;
            lab_table(&families, &cfg, &dir)
        }
        "euler" => {
            for key in [
                "steps",
                "width",
                "window",
                "dt",
                "train_points",
                "tau_points",
                "lr",
            ] {
                if rc.has(key) {
                    return Err(usage(format!("`{key}` applies to mode=table")));
                }
            }
            if families.contains(&Family::Sin2D) {
                return Err(usage("mode=euler works on the one-dimensional families"));
            }
            for (key, v) in [
                ("t0", "4.75"),
                ("horizon", "2"),
                ("order", "4"),
                ("euler_dt", "0.25"),
            ] {
                rc.set_default(key, v);
            }
            let t0: f64 = rc.get("t0")?;
            let horizon: f64 = rc.get("horizon")?;
            let order: usize = rc.get("order")?;
            let euler_dt: f64 = rc.get("euler_dt")?;
            let runs = families
                .iter()
                .map(|&f| {
                    Ok((
                        f,
                        compare_euler_taylor(f, t0, horizon, order, euler_dt).map_err(usage)?,
                    ))
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let dir = rc.save()?;
            for (family, rows) in runs {
                let path = dir.join(format!("euler_vs_taylor_{family}.csv"));
                crate::output::write_file(&path, comparison_csv(&rows).as_bytes())?;
                let max = |f: fn(&_) -> f64| rows.iter().map(f).fold(0.0, f64::max);
                println!(
                    "{family}: max error taylor {:.3e} euler {:.3e}",
                    max(|r: &taylorcast_core::analytic_lab::ComparisonRow| r.taylor_error()),
                    max(|r: &taylorcast_core::analytic_lab::ComparisonRow| r.euler_error())
                );
            }
            Ok(())
        }
        other => Err(usage(format!(
            "unknown mode `{other}` (expected table or euler)"
        ))),
    }
}

fn lab_table(families: &[Family], cfg: &EstimatorConfig, dir: &Path) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for &family in families {
        if family == Family::Sin2D {
            let (_, report) = fit_sin2d_estimator(cfg)?;
            let mut csv = Csv::new(&["t_star", "term", "mean_abs_diff"]);
            for (n, d) in report.mean_abs_diff.iter().enumerate() {
                csv.row(&[num(report.t_star), (n + 1).to_string(), num(*d)]);
            }
            csv.save(&dir.join("sin2d_table.csv"))?;
            println!("sin2d: mean |diff| per term {:?}", report.mean_abs_diff);
            continue;
        }
        let (_, report) = fit_derivative_estimator(family, cfg)?;
        let worst = report.abs_errors().into_iter().take(4).fold(0.0, f64::max);
        println!(
            "{family}: final loss {:.3e}, max |error| of first four terms {worst:.4}",
            report.final_loss
        );
        reports.push(report);
    }
    if !reports.is_empty() {
        crate::output::write_file(
            &dir.join("derivative_table.csv"),
            derivative_table_csv(&reports).as_bytes(),
        )?;
    }
    Ok(())
}

const GEN_KEYS: &[&str] = &[
    "dataset",
    "data_seed",
    "blobs",
    "count",
    "grid",
    "observed",
    "future",
    "out",
    "seed",
];

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let base = defaults(&[
        ("dataset", "shapes"),
        ("count", "16"),
        ("grid", "32"),
        ("observed", "10"),
        ("future", "10"),
        ("out", "data"),
        ("seed", "0"),
    ]);
    let mut rc = ctx.resolve("gen-data", base, GEN_KEYS)?;
    let count: usize = rc.get("count")?;
    let grid: usize = rc.get("grid")?;
    let observed: usize = rc.get("observed")?;
    let future: usize = rc.get("future")?;
    if count == 0 || grid == 0 || observed == 0 || future == 0 {
        return Err(usage("count, grid, observed and future must be positive"));
    }
    let dataset = Dataset::from_run(&mut rc, "data", (grid, grid), observed, future)?;
    let data_seed: u64 = rc.get("data_seed")?;
    let dir = rc.save()?;

    let names = parallel_map(count, ctx.threads, |i| {
        let (obs, fut) = dataset.source().sample(i as u64)?;
        let mut frames = obs.frame_list();
        frames.extend(fut.frame_list());
        let clip = VideoClip::from_frames(&frames, obs.dt, obs.origin_time)?;
        let name = format!("clip_{i:05}.clip");
        clip.save(dir.join(&name), Some(data_seed))?;
        Ok((name, clip.len()))
    })?;
    let mut manifest = Csv::new(&["index", "file", "frames", "observed", "height", "width"]);
    for (i, (name, frames)) in names.into_iter().enumerate() {
        manifest.row(&[
            i.to_string(),
            name,
            frames.to_string(),
            observed.to_string(),
            grid.to_string(),
            grid.to_string(),
        ]);
    }
    manifest.save(&dir.join("manifest.csv"))?;
    println!("{count} clips written to {}", dir.display());
    Ok(())
}
