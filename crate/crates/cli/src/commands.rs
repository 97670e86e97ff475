use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use dlif::analysis::{
    self, aggregate, compare_cohorts, map_errors, parametric_map, wilcoxon_signed_rank, write_aggregate_csv,
    MetricsReport, MetricsRow, DEFAULT_T_STAR,
};
use dlif::basis::Family;
use dlif::epica::{epica, IcaConfig};
use dlif::io::{
    load_checkpoint, load_run_config, load_samples, map_volume, read_curve, read_dpt, read_index, read_json,
    read_map, read_mask, save_checkpoint, to_input_dims, write_curve, write_dpt, write_index, write_json,
    write_subject, Manifest, RunConfig,
};
use dlif::model::{model_grad_check, toy_config, ModelConfig};
use dlif::nn::write_attention_csv;
use dlif::sim::{cohort_specs, render_subject};
use dlif::tensor::primitive_suite;
use dlif::trainer::{cross_validate, write_loss_log};
use dlif::grid::SampledCurve;

#[derive(Parser, Debug)]
#[command(name = "dlif", version, about = "Arterial input function estimation from dynamic PET")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic cohort
    Simulate(SimulateArgs),
    /// Cross-validated training
    Train(TrainArgs),
    /// Estimate input functions with a trained checkpoint
    Estimate(EstimateArgs),
    /// ICA decomposition baseline
    Epica(EpicaArgs),
    /// Voxelwise Logan V_T map
    Logan(LoganArgs),
    /// Score estimated curves (and maps) against references
    Evaluate(EvaluateArgs),
    /// Finite-difference check of all graph primitives and the full model
    Gradcheck(GradcheckArgs),
    /// Aggregate metric files into the cohort table
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cubic volume edge length (multiple of 4)
    #[arg(long)]
    dims: Option<usize>,
    /// Noise level in SUV for a one-minute frame
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Cohort directory written by `simulate`
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Head configuration, e.g. "Gaussian + Peak" or "exp"
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Disable random flip augmentation
    #[arg(long)]
    no_flips: bool,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input volumes (.dpt)
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also export attention matrices
    #[arg(long)]
    attention: bool,
}

#[derive(Args, Debug)]
pub struct EpicaArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Reference curve whose peak calibrates the estimate
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct LoganArgs {
    #[arg(long)]
    input: PathBuf,
    /// Plasma input function (curve CSV)
    #[arg(long)]
    aif: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_T_STAR)]
    t_star: f64,
    /// Reference V_T map for MAE/RMSE
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long, required = true, num_args = 1..)]
    estimate: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Paired estimates of a second method, for Wilcoxon tests
    #[arg(long, num_args = 1..)]
    baseline: Vec<PathBuf>,
    /// One cohort label per estimate, for Mann-Whitney tests
    #[arg(long, num_args = 1..)]
    cohort: Vec<String>,
    #[arg(long, default_value = "dlif")]
    method: String,
    /// Estimated V_T maps (.dpt) ...
    #[arg(long, num_args = 1..)]
    map_estimate: Vec<PathBuf>,
    /// ... and their references
    #[arg(long, num_args = 1..)]
    map_reference: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// metrics.json files from `train` or `evaluate`
    #[arg(long, required = true, num_args = 1..)]
    metrics: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match cli.cmd {
        Command::Simulate(a) => simulate(a, args),
        Command::Train(a) => train(a, args),
        Command::Estimate(a) => estimate(a, args),
        Command::Epica(a) => run_epica(a, args),
        Command::Logan(a) => logan(a, args),
        Command::Evaluate(a) => evaluate(a, args),
        Command::Gradcheck(a) => gradcheck(a, args),
        Command::Report(a) => report(a, args),
    }
}

fn out_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    })
}

fn simulate(a: SimulateArgs, args: Vec<String>) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    if let Some(n) = a.subjects {
        cfg.sim.subjects = n;
    }
    if let Some(s) = a.seed {
        cfg.sim.seed = s;
    }
    if let Some(d) = a.dims {
        cfg.sim.dims = [d; 3];
    }
    if let Some(n) = a.noise {
        cfg.sim.noise_sigma = n;
    }
    ensure!(cfg.sim.subjects > 0, "--subjects must be at least 1");
    let sim = cfg.sim.clone();
    out_dir(&a.out)?;
    let specs = cohort_specs(sim.subjects, sim.seed, &sim.ranges, sim.dims, &sim.grid)?;
    let entries = specs
        .par_iter()
        .map(|s| {
            let out = render_subject(s, &sim.grid, sim.noise_sigma)?;
            write_subject(&a.out, s, &out)
        })
        .collect::<dlif::Result<Vec<_>>>()?;
    write_index(&a.out, &entries)?;
    write_json(&a.out.join("config.json"), &sim)?;
    let mut m = Manifest::new("simulate", args, Some(sim.seed), &sim)?;
    m.outputs = entries
        .iter()
        .flat_map(|e| [e.volume.clone(), e.aif.clone(), e.mask.clone(), e.vt.clone()])
        .collect();
    m.write(&a.out)?;
    println!("wrote {} subjects to {}", entries.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainRow {
    fold: usize,
    #[serde(flatten)]
    row: MetricsRow,
    active_weights: Option<usize>,
    true_peak: f64,
    pred_peak: f64,
}

fn train(a: TrainArgs, args: Vec<String>) -> Result<()> {
    let mut cfg = base_config(&a.config)?;
    if let Some(name) = &a.model {
        let named = ModelConfig::ablation(name)?;
        cfg.model.head = named.head;
        cfg.model.use_peak = named.use_peak;
        cfg.model.use_sparse = named.use_sparse;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(f) = a.folds {
        cfg.train.folds = f;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if a.no_flips {
        cfg.train.augment_flips = false;
    }
    cfg.paths.data = Some(a.data.clone());
    cfg.paths.out = Some(a.out.clone());
    cfg.model.validate()?;
    cfg.train.validate()?;

    let entries = read_index(&a.data)?;
    let samples = load_samples(&a.data, &entries, cfg.model.input_dims)?;
    if let Some(s) = samples.first() {
        ensure!(
            s.volume.grid == cfg.model.grid,
            "cohort frames do not match the model time grid"
        );
    }
    out_dir(&a.out)?;
    let folds = cross_validate(&samples, &cfg.model, &cfg.train)?;

    let method = cfg.model.label();
    let est_dir = a.out.join("estimates");
    out_dir(&est_dir)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for f in &folds {
        let ck = format!("fold{}.ckpt", f.fold);
        save_checkpoint(&a.out.join(&ck), &f.trainer)?;
        let log = format!("fold{}_loss.csv", f.fold);
        let mut buf = Vec::new();
        write_loss_log(&mut buf, &f.log)?;
        fs::write(a.out.join(&log), buf)?;
        outputs.extend([ck, log]);
        for r in &f.results {
            let curve = SampledCurve::new(cfg.model.grid.clone(), r.estimate.clone())?;
            let name = format!("{}_dlif.csv", r.subject);
            write_curve(&est_dir.join(&name), &curve)?;
            outputs.push(format!("estimates/{name}"));
            rows.push(TrainRow {
                fold: f.fold,
                row: MetricsRow {
                    method: method.clone(),
                    subject: r.subject.clone(),
                    cohort: r.cohort.clone(),
                    metrics: r.metrics,
                },
                active_weights: r.active_weights,
                true_peak: r.true_peak,
                pred_peak: r.pred_peak,
            });
        }
    }
    rows.sort_by(|x, y| x.row.subject.cmp(&y.row.subject));
    write_json(&a.out.join("metrics.json"), &rows)?;
    write_json(&a.out.join("config.json"), &cfg)?;
    outputs.extend(["metrics.json".to_string(), "config.json".to_string()]);
    let mut m = Manifest::new("train", args, Some(cfg.train.seed), &cfg)?;
    m.add_input(&a.data.join(dlif::io::COHORT_INDEX))?;
    for e in &entries {
        m.add_input(&a.data.join(&e.volume))?;
        m.add_input(&a.data.join(&e.aif))?;
    }
    m.outputs = outputs;
    m.write(&a.out)?;
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| rows.iter().map(|r| f(&r.row.metrics)).sum::<f64>() / n;
    println!(
        "{method}: {} held-out subjects, mean r {:.3}, IoU(0-30) {:.3}, IoU(30-90) {:.3}",
        rows.len(),
        mean(|m| m.r),
        mean(|m| m.iou_early),
        mean(|m| m.iou_late)
    );
    Ok(())
}

fn estimate(a: EstimateArgs, args: Vec<String>) -> Result<()> {
    let ck = load_checkpoint(&a.checkpoint, None)?;
    let model = ck.model;
    out_dir(&a.out)?;
    let mut m = Manifest::new("estimate", args, None, &model.cfg)?;
    m.add_input(&a.checkpoint)?;
    for input in &a.input {
        let vol = to_input_dims(read_dpt(input)?, model.cfg.input_dims)
            .with_context(|| format!("{}", input.display()))?;
        let pred = model.predict(&vol)?;
        let s = stem(input);
        let curve = format!("{s}_dlif.csv");
        write_curve(&a.out.join(&curve), &pred.curve)?;
        let params = format!("{s}_params.json");
        write_json(&a.out.join(&params), &pred.aif)?;
        m.outputs.extend([curve, params]);
        if a.attention {
            let name = format!("{s}_attention.csv");
            let mut buf = Vec::new();
            write_attention_csv(&mut buf, &pred.attention)?;
            fs::write(a.out.join(&name), buf)?;
            m.outputs.push(name);
        }
        m.add_input(input)?;
    }
    m.write(&a.out)?;
    Ok(())
}

fn run_epica(a: EpicaArgs, args: Vec<String>) -> Result<()> {
    let vol = read_dpt(&a.input)?;
    let mask = read_mask(&a.mask)?;
    let reference = read_curve(&a.reference)?;
    let cfg = IcaConfig {
        n_components: a.components,
        seed: a.seed,
        ..Default::default()
    };
    let res = epica(&vol, &mask, &reference, &cfg)?;
    out_dir(&a.out)?;
    let s = stem(&a.input);
    let curve = format!("{s}_epica.csv");
    write_curve(&a.out.join(&curve), &SampledCurve::new(vol.grid.clone(), res.scaled.clone())?)?;
    let detail = format!("{s}_epica.json");
    write_json(&a.out.join(&detail), &res)?;
    if res.tie {
        eprintln!("note: time-to-peak tie broken by peak-to-tail ratio");
    }
    let mut m = Manifest::new("epica", args, Some(a.seed), &cfg)?;
    for p in [&a.input, &a.mask, &a.reference] {
        m.add_input(p)?;
    }
    m.outputs = vec![curve, detail];
    m.write(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct LoganSummary {
    t_star: f64,
    fitted: usize,
    failures: usize,
    errors: Option<analysis::MapErrors>,
}

fn logan(a: LoganArgs, args: Vec<String>) -> Result<()> {
    let vol = read_dpt(&a.input)?;
    let cp = read_curve(&a.aif)?;
    let mask = read_mask(&a.mask)?;
    let map = parametric_map(&vol, &cp, a.t_star, &mask)?;
    let errors = match &a.reference {
        Some(r) => Some(map_errors(&map.vt, &read_map(r)?.1)?),
        None => None,
    };
    out_dir(&a.out)?;
    let s = stem(&a.input);
    let name = format!("{s}_vt.dpt");
    write_dpt(&a.out.join(&name), &map_volume(vol.dims, vol.voxel_mm, map.vt.clone())?)?;
    let summary = LoganSummary {
        t_star: a.t_star,
        fitted: map.fitted,
        failures: map.failures,
        errors,
    };
    write_json(&a.out.join("logan.json"), &summary)?;
    let mut m = Manifest::new("logan", args, None, &serde_json::json!({ "t_star": a.t_star }))?;
    for p in [&a.input, &a.aif, &a.mask] {
        m.add_input(p)?;
    }
    if let Some(r) = &a.reference {
        m.add_input(r)?;
    }
    m.outputs = vec![name, "logan.json".into()];
    m.write(&a.out)?;
    println!("fitted {} voxels, {} failures", map.fitted, map.failures);
    Ok(())
}

#[derive(Serialize)]
struct EvaluateStats {
    wilcoxon: Vec<analysis::CohortTest>,
    cohorts: Vec<analysis::CohortTest>,
    maps: Vec<analysis::MapErrors>,
    /// Tests that could not run (too few or all-tied samples), with the reason.
    skipped: Vec<String>,
}

fn evaluate(a: EvaluateArgs, args: Vec<String>) -> Result<()> {
    ensure!(
        a.estimate.len() == a.truth.len(),
        "{} estimates but {} reference curves",
        a.estimate.len(),
        a.truth.len()
    );
    ensure!(
        a.cohort.is_empty() || a.cohort.len() == a.estimate.len(),
        "--cohort needs one label per estimate"
    );
    ensure!(
        a.baseline.is_empty() || a.baseline.len() == a.estimate.len(),
        "--baseline needs one curve per estimate"
    );
    ensure!(
        a.map_estimate.len() == a.map_reference.len(),
        "--map-estimate and --map-reference must pair up"
    );
    let score = |e: &Path, t: &Path| -> Result<MetricsReport> {
        Ok(MetricsReport::compute(&read_curve(e)?, &read_curve(t)?)?)
    };
    let mut rows = Vec::new();
    for (i, (e, t)) in a.estimate.iter().zip(&a.truth).enumerate() {
        rows.push(MetricsRow {
            method: a.method.clone(),
            subject: stem(e),
            cohort: a.cohort.get(i).cloned().unwrap_or_else(|| "unlabeled".into()),
            metrics: score(e, t)?,
        });
    }
    let mut stats = EvaluateStats {
        wilcoxon: Vec::new(),
        cohorts: Vec::new(),
        maps: Vec::new(),
        skipped: Vec::new(),
    };
    if !a.baseline.is_empty() {
        let base: Vec<MetricsReport> = a
            .baseline
            .iter()
            .zip(&a.truth)
            .map(|(b, t)| score(b, t))
            .collect::<Result<_>>()?;
        let pick: [MetricPick; 4] = [
            ("r", |m| m.r),
            ("iou_early", |m| m.iou_early),
            ("iou_late", |m| m.iou_late),
            ("peak_bias", |m| m.peak_bias),
        ];
        for (name, f) in pick {
            let x: Vec<f64> = rows.iter().map(|r| f(&r.metrics)).collect();
            let y: Vec<f64> = base.iter().map(f).collect();
            let p = match wilcoxon_signed_rank(&x, &y) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("warning: wilcoxon on {name} skipped: {e}");
                    stats.skipped.push(format!("wilcoxon {name}: {e}"));
                    continue;
                }
            };
            stats.wilcoxon.push(analysis::CohortTest {
                quantity: name.into(),
                p,
                p_bonferroni: analysis::bonferroni(p, pick.len()),
            });
        }
    }
    if !a.cohort.is_empty() {
        match cohort_tests(&rows) {
            Ok(t) => stats.cohorts = t,
            Err(e) => {
                eprintln!("warning: cohort tests skipped: {e:#}");
                stats.skipped.push(format!("cohort tests: {e:#}"));
            }
        }
    }
    for (e, r) in a.map_estimate.iter().zip(&a.map_reference) {
        stats.maps.push(map_errors(&read_map(e)?.1, &read_map(r)?.1)?);
    }
    out_dir(&a.out)?;
    write_json(&a.out.join("metrics.json"), &rows)?;
    write_json(&a.out.join("stats.json"), &stats)?;
    let mut m = Manifest::new("evaluate", args, None, &serde_json::json!({ "method": a.method }))?;
    for p in a.estimate.iter().chain(&a.truth).chain(&a.baseline).chain(&a.map_estimate).chain(&a.map_reference) {
        m.add_input(p)?;
    }
    m.outputs = vec!["metrics.json".into(), "stats.json".into()];
    m.write(&a.out)?;
    for r in &rows {
        println!(
            "{} r={:.4} iou={:.4}/{:.4} rmse={:.4}/{:.4} peak_bias={:.4}",
            r.subject,
            r.metrics.r,
            r.metrics.iou_early,
            r.metrics.iou_late,
            r.metrics.rmse_early,
            r.metrics.rmse_late,
            r.metrics.peak_bias
        );
    }
    Ok(())
}

/// Mann-Whitney between the first two cohort labels (sorted), on the
/// per-subject metrics, Bonferroni-corrected.
/// A metric name and how to read it from a report.
type MetricPick = (&'static str, fn(&MetricsReport) -> f64);

fn cohort_tests(rows: &[MetricsRow]) -> Result<Vec<analysis::CohortTest>> {
    let mut labels: Vec<&str> = rows.iter().map(|r| r.cohort.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.len() != 2 {
        bail!("cohort comparison needs exactly two labels, found {}", labels.len());
    }
    let by = |lab: &str, f: fn(&MetricsReport) -> f64| -> Vec<f64> {
        rows.iter().filter(|r| r.cohort == lab).map(|r| f(&r.metrics)).collect()
    };
    let pick: [MetricPick; 4] = [
        ("r", |m| m.r),
        ("iou_early", |m| m.iou_early),
        ("iou_late", |m| m.iou_late),
        ("peak_bias", |m| m.peak_bias),
    ];
    let q: Vec<(&str, Vec<f64>, Vec<f64>)> = pick
        .iter()
        .map(|(n, f)| (*n, by(labels[0], *f), by(labels[1], *f)))
        .collect();
    Ok(compare_cohorts(&q)?)
}

#[derive(Serialize)]
struct GradcheckReport {
    primitives: Vec<dlif::tensor::PrimitiveCheck>,
    models: Vec<(String, f64)>,
    tol: f64,
    passed: bool,
}

fn gradcheck(a: GradcheckArgs, args: Vec<String>) -> Result<()> {
    let primitives = primitive_suite(a.cases, a.seed)?;
    let mut models = Vec::new();
    for (fam, peak, sparse) in [
        (Family::Direct, false, false),
        (Family::Gaussian, true, true),
        (Family::ExpSigmoid, true, true),
    ] {
        let cfg = toy_config(fam, peak, sparse);
        models.push((cfg.label(), model_grad_check(&cfg, a.seed, Some(16))?));
    }
    let worst = primitives
        .iter()
        .map(|p| p.max_err)
        .chain(models.iter().map(|m| m.1))
        .fold(0.0, f64::max);
    for p in &primitives {
        println!("{:<14} {:>4} cases  max rel err {:.3e}", p.name, p.cases, p.max_err);
    }
    for (name, e) in &models {
        println!("{:<26} full model  max rel err {:.3e}", name, e);
    }
    let rep = GradcheckReport {
        primitives,
        models,
        tol: a.tol,
        passed: worst < a.tol,
    };
    out_dir(&a.out)?;
    write_json(&a.out.join("gradcheck.json"), &rep)?;
    let mut m = Manifest::new(
        "gradcheck",
        args,
        Some(a.seed),
        &serde_json::json!({ "cases": a.cases, "tol": a.tol }),
    )?;
    m.outputs = vec!["gradcheck.json".into()];
    m.write(&a.out)?;
    ensure!(rep.passed, "gradient check failed: worst error {worst:.3e} >= {}", a.tol);
    Ok(())
}

fn report(a: ReportArgs, args: Vec<String>) -> Result<()> {
    let mut rows: Vec<MetricsRow> = Vec::new();
    for p in &a.metrics {
        // train rows carry extra fields; keep only the metric row
        let raw: Vec<serde_json::Value> = read_json(p)?;
        for v in raw {
            let r: MetricsRow = serde_json::from_value(v).with_context(|| format!("{}", p.display()))?;
            rows.push(r);
        }
    }
    ensure!(!rows.is_empty(), "no metric rows in the given files");
    let agg = aggregate(&rows);
    out_dir(&a.out)?;
    let mut mean = Vec::new();
    write_aggregate_csv(&mut mean, &agg, false)?;
    fs::write(a.out.join("report.csv"), mean)?;
    let mut sd = Vec::new();
    write_aggregate_csv(&mut sd, &agg, true)?;
    fs::write(a.out.join("report_std.csv"), sd)?;

    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort_unstable();
    methods.dedup();
    let mut tests = serde_json::Map::new();
    for meth in methods {
        let sub: Vec<MetricsRow> = rows.iter().filter(|r| r.method == meth).cloned().collect();
        if let Ok(t) = cohort_tests(&sub) {
            tests.insert(meth.to_string(), serde_json::to_value(t)?);
        }
    }
    write_json(&a.out.join("cohort_tests.json"), &tests)?;
    let mut m = Manifest::new("report", args, None, &serde_json::json!({}))?;
    for p in &a.metrics {
        m.add_input(p)?;
    }
    m.outputs = vec!["report.csv".into(), "report_std.csv".into(), "cohort_tests.json".into()];
    m.write(&a.out)?;
    print!("{}", fs::read_to_string(a.out.join("report.csv"))?);
    Ok(())
}
