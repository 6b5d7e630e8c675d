use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use cmdis::disambig::{
    load_model, save_model, siamese_samples, train_siamese, train_twin, twin_samples, Architecture,
    FusionConfig, NetConfig, PairModel, SiameseModel, TrainConfig, TwinModel,
};
use cmdis::geometry::SimilarityTransform;
use cmdis::imaging::{load_image, load_label_map, load_mask, save_label_map, save_mask};
use cmdis::pipeline::{
    disambiguate, evaluate_dataset, render_outputs, robustness_sweep, DisambigOptions, MaskInput, Scenario,
    Scorers, SweepAxis, TransformSource,
};
use cmdis::synthgen::{
    generate_records, read_dataset, read_json, read_manifest, read_record, record_id, write_json,
    write_manifest, write_record, BackgroundPool, BackgroundSource, GenConfig,
};

use crate::args::{
    ArchName, AxisName, Cli, Command, DisambiguateArgs, EvalArgs, GenArgs, ScenarioName, ScorerName,
    ScoringArgs, SweepArgs, TrainArgs,
};

pub const TWIN_CHECKPOINT: &str = "twin.json";
pub const SIAMESE_CHECKPOINT: &str = "siamese.json";
pub const RUN_MANIFEST: &str = "run.json";

/// Records generated or loaded per batch, to bound memory.
const CHUNK: usize = 32;

/// A fully validated command, ready to run.
pub enum Plan {
    Gen { cfg: GenConfig, start: u64, count: u64 },
    Disambiguate { image: PathBuf, regions: RegionsFile, transform: Option<SimilarityTransform>, scoring: ScoringPlan },
    Train { dataset: PathBuf, arch: Architecture, cfg: TrainConfig, perturb: bool },
    Eval { dataset: PathBuf, scenario: Scenario, scoring: ScoringPlan },
    Sweep { dataset: PathBuf, axis: SweepAxis, scenario: Scenario, scoring: ScoringPlan },
}

pub enum RegionsFile {
    Mask(PathBuf),
    Labels(PathBuf),
}

pub struct ScoringPlan {
    mse: bool,
    twin: Option<PathBuf>,
    siamese: Option<PathBuf>,
    fusion: FusionConfig,
}

struct Models {
    mse: bool,
    twin: Option<TwinModel>,
    siamese: Option<SiameseModel>,
    fusion: FusionConfig,
}

impl Models {
    fn scorers(&self) -> Scorers<'_> {
        Scorers { mse: self.mse, twin: self.twin.as_ref(), siamese: self.siamese.as_ref() }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    ensure!(path.is_file(), "{what} {} does not exist", path.display());
    Ok(())
}

fn require_dataset(path: &Path) -> Result<()> {
    require_file(&path.join(cmdis::synthgen::MANIFEST_FILE), "dataset manifest")
}

fn scenario(s: ScenarioName) -> Scenario {
    match s {
        ScenarioName::Known => Scenario::KnownTransform,
        ScenarioName::Estimated => Scenario::EstimatedTransform,
        ScenarioName::Detector => Scenario::DetectorMask,
    }
}

fn plan_scoring(a: &ScoringArgs) -> Result<ScoringPlan> {
    ensure!(!a.scorers.is_empty(), "no scorer selected");
    let fusion = FusionConfig { c: a.fusion_c, ..FusionConfig::default() };
    fusion.validate()?;
    let checkpoint = |name: ScorerName, file: &str| -> Result<Option<PathBuf>> {
        if !a.scorers.contains(&name) {
            return Ok(None);
        }
        let Some(dir) = &a.model_dir else { bail!("scorer `{}` needs --model-dir", file.trim_end_matches(".json")) };
        let path = dir.join(file);
        require_file(&path, "checkpoint")?;
        Ok(Some(path))
    };
    let twin = checkpoint(ScorerName::Twin, TWIN_CHECKPOINT)?;
    let siamese = checkpoint(ScorerName::Siamese, SIAMESE_CHECKPOINT)?;
    Ok(ScoringPlan { mse: a.scorers.contains(&ScorerName::Mse), twin, siamese, fusion })
}

fn load_arch(path: &Path, want: Architecture) -> Result<PairModel> {
    let (arch, model) = load_model(path)?;
    ensure!(arch == want, "{} holds a {} model, expected {}", path.display(), arch.name(), want.name());
    Ok(model)
}

fn load_models(p: &ScoringPlan) -> Result<Models> {
    Ok(Models {
        mse: p.mse,
        twin: p.twin.as_deref().map(|f| load_arch(f, Architecture::Twin).map(TwinModel)).transpose()?,
        siamese: p.siamese.as_deref().map(|f| load_arch(f, Architecture::Siamese).map(SiameseModel)).transpose()?,
        fusion: p.fusion,
    })
}

fn plan_gen(a: &GenArgs, seed: u64) -> Result<Plan> {
    ensure!(a.count > 0, "--count must be positive");
    let mut cfg = GenConfig::new(a.kind, seed);
    if let Some(s) = a.image_size {
        cfg.image_size = s;
    }
    if let Some(b) = a.source_box {
        cfg.source_box = b;
    }
    cfg.vertex_count = a.vertices;
    cfg.pp_probability = a.pp_probability;
    cfg.blend.enabled = !a.no_blend;
    if a.clean {
        cfg = cfg.clean();
    }
    cfg.background = match &a.backgrounds {
        Some(dir) => {
            ensure!(dir.is_dir(), "background directory {} does not exist", dir.display());
            BackgroundSource::Directory { path: dir.clone() }
        }
        None => BackgroundSource::Procedural { pool_size: a.pool_size },
    };
    cfg.validate()?;
    Ok(Plan::Gen { cfg, start: a.start, count: a.count })
}

fn plan_disambiguate(a: &DisambiguateArgs) -> Result<Plan> {
    require_file(&a.image, "image")?;
    let regions = match (&a.mask, &a.labels) {
        (Some(m), None) => RegionsFile::Mask(m.clone()),
        (None, Some(l)) => RegionsFile::Labels(l.clone()),
        _ => bail!("exactly one of --mask and --labels is required"),
    };
    match &regions {
        RegionsFile::Mask(p) => require_file(p, "mask")?,
        RegionsFile::Labels(p) => require_file(p, "label map")?,
    }
    let transform = match &a.transform {
        Some(p) => {
            require_file(p, "transform file")?;
            let t: SimilarityTransform = read_json(p)?;
            t.validate()?;
            Some(t)
        }
        None => None,
    };
    Ok(Plan::Disambiguate { image: a.image.clone(), regions, transform, scoring: plan_scoring(&a.scoring)? })
}

fn plan_train(a: &TrainArgs, seed: u64) -> Result<Plan> {
    require_dataset(&a.dataset)?;
    let net = NetConfig { channels: a.channels.clone(), feature_dim: a.feature_dim, ..NetConfig::default() };
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        validation_fraction: a.val_fraction,
        shuffle_pairs: !a.no_shuffle,
        seed,
        net,
    };
    cfg.validate()?;
    let arch = match a.arch {
        ArchName::Twin => Architecture::Twin,
        ArchName::Siamese => Architecture::Siamese,
    };
    Ok(Plan::Train { dataset: a.dataset.clone(), arch, cfg, perturb: !a.no_perturb })
}

fn plan_eval(a: &EvalArgs) -> Result<Plan> {
    require_dataset(&a.dataset)?;
    Ok(Plan::Eval { dataset: a.dataset.clone(), scenario: scenario(a.scenario), scoring: plan_scoring(&a.scoring)? })
}

fn integers<T: TryFrom<u64>>(values: &[f64], what: &str) -> Result<Vec<T>> {
    values
        .iter()
        .map(|&v| {
            ensure!(v >= 0.0 && v.fract() == 0.0, "{what} {v} is not a non-negative integer");
            T::try_from(v as u64).map_err(|_| anyhow::anyhow!("{what} {v} out of range"))
        })
        .collect()
}

fn plan_sweep(a: &SweepArgs) -> Result<Plan> {
    require_dataset(&a.dataset)?;
    let name = match a.axis {
        AxisName::Jpeg => "jpeg",
        AxisName::Noise => "noise",
        AxisName::Resize => "resize",
        AxisName::Dilate => "dilate",
        AxisName::Erode => "erode",
    };
    let axis = match &a.values {
        None => SweepAxis::default_for(name).expect("known axis"),
        Some(v) => match a.axis {
            AxisName::Jpeg => SweepAxis::Jpeg(integers(v, "jpeg quality")?),
            AxisName::Noise => SweepAxis::Noise(v.clone()),
            AxisName::Resize => SweepAxis::Resize(v.clone()),
            AxisName::Dilate => SweepAxis::Dilate(integers(v, "radius")?),
            AxisName::Erode => SweepAxis::Erode(integers(v, "radius")?),
        },
    };
    axis.validate()?;
    Ok(Plan::Sweep {
        dataset: a.dataset.clone(),
        axis,
        scenario: scenario(a.scenario),
        scoring: plan_scoring(&a.scoring)?,
    })
}

/// Validates every flag and input path; performs no writes.
pub fn plan(cli: &Cli) -> Result<Plan> {
    if let Some(w) = cli.workers {
        ensure!(w > 0, "--workers must be positive");
    }
    match &cli.command {
        Command::Gen(a) => plan_gen(a, cli.seed),
        Command::Disambiguate(a) => plan_disambiguate(a),
        Command::Train(a) => plan_train(a, cli.seed),
        Command::Eval(a) => plan_eval(a),
        Command::Sweep(a) => plan_sweep(a),
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    toolkit: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    workers: Option<usize>,
    args: &'a Command,
}

fn write_run_manifest(cli: &Cli) -> Result<()> {
    let m = RunManifest {
        toolkit: "cmdis",
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        seed: cli.seed,
        workers: cli.workers,
        args: &cli.command,
    };
    write_json(&m, &cli.out.join(RUN_MANIFEST))?;
    Ok(())
}

fn write_pretty<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.4}"))
}

pub fn execute(cli: &Cli, plan: Plan) -> Result<()> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_run_manifest(cli)?;
    match plan {
        Plan::Gen { cfg, start, count } => run_gen(&cfg, start, count, out),
        Plan::Disambiguate { image, regions, transform, scoring } => {
            run_disambiguate(&image, &regions, transform, &scoring, out)
        }
        Plan::Train { dataset, arch, cfg, perturb } => run_train(&dataset, arch, &cfg, perturb, cli.seed, out),
        Plan::Eval { dataset, scenario, scoring } => run_eval(&dataset, scenario, &scoring, out),
        Plan::Sweep { dataset, axis, scenario, scoring } => run_sweep(&dataset, &axis, scenario, &scoring, cli.seed, out),
    }
}

fn run_gen(cfg: &GenConfig, start: u64, count: u64, out: &Path) -> Result<()> {
    let pool = BackgroundPool::new(&cfg.background, cfg.image_size)?;
    let end = start + count;
    for s in (start..end).step_by(CHUNK) {
        let n = (end - s).min(CHUNK as u64);
        let records = generate_records(cfg, &pool, s, n)?;
        records.par_iter().try_for_each(|r| write_record(r, out).map(|_| ()))?;
    }
    write_manifest(out, Some(cfg), (start..end).map(record_id).collect())?;
    println!("generated {count} {} records in {}", cfg.kind, out.display());
    Ok(())
}

fn run_disambiguate(
    image: &Path,
    regions: &RegionsFile,
    transform: Option<SimilarityTransform>,
    scoring: &ScoringPlan,
    out: &Path,
) -> Result<()> {
    let models = load_models(scoring)?;
    let img = load_image(image)?;
    let (mask, labels);
    let input = match regions {
        RegionsFile::Mask(p) => {
            mask = load_mask(p)?;
            MaskInput::Detector(&mask)
        }
        RegionsFile::Labels(p) => {
            labels = load_label_map(p)?;
            MaskInput::GroundTruth(&labels)
        }
    };
    let opts = DisambigOptions {
        transform: transform.map_or(TransformSource::Estimate, TransformSource::Given),
        scorers: models.scorers(),
        fusion: models.fusion,
    };
    let result = disambiguate(&img, input, &opts)?;
    write_pretty(&result, &out.join("result.json"))?;
    match (&result.decision, &result.regions) {
        (Some(d), Some(regions)) => {
            let (w, h) = img.dimensions();
            let (map, tamper) = render_outputs(&result, regions, w, h)?;
            save_label_map(&map, &out.join("map.png"))?;
            save_mask(&tamper, &out.join("tamper.png"))?;
            let f = result.fused.map(|s| s.f_h0);
            let tie = if result.tie { " (tie)" } else { "" };
            println!("{} {d} f_h0={}{tie}", result.opt_status, fmt_opt(f));
        }
        _ => println!("{}", result.opt_status),
    }
    Ok(())
}

fn run_train(dataset: &Path, arch: Architecture, cfg: &TrainConfig, perturb: bool, seed: u64, out: &Path) -> Result<()> {
    let manifest = read_manifest(dataset)?;
    let load = |ids: &[String]| -> Result<Vec<_>> {
        Ok(ids.par_iter().map(|id| read_record(dataset, id)).collect::<Result<Vec<_>, _>>()?)
    };
    let (model, log, n) = match arch {
        Architecture::Twin => {
            let mut samples = Vec::new();
            for (k, ids) in manifest.ids.chunks(CHUNK).enumerate() {
                samples.extend(twin_samples(&load(ids)?, perturb, seed.wrapping_add(k as u64)));
            }
            let (m, log) = train_twin(&samples, cfg)?;
            (m.0, log, samples.len())
        }
        Architecture::Siamese => {
            let mut samples = Vec::new();
            for (k, ids) in manifest.ids.chunks(CHUNK).enumerate() {
                samples.extend(siamese_samples(&load(ids)?, seed.wrapping_add(k as u64)));
            }
            let (m, log) = train_siamese(&samples, cfg)?;
            (m.0, log, samples.len())
        }
    };
    let file = match arch {
        Architecture::Twin => TWIN_CHECKPOINT,
        Architecture::Siamese => SIAMESE_CHECKPOINT,
    };
    save_model(&out.join(file), arch, &model)?;
    log.write_csv(&out.join(format!("{}_log.csv", arch.name())))?;
    println!(
        "trained {} on {n} samples: final loss {}, validation accuracy {}",
        arch.name(),
        fmt_opt(log.final_loss()),
        fmt_opt(log.final_val_accuracy())
    );
    Ok(())
}

fn run_eval(dataset: &Path, scenario: Scenario, scoring: &ScoringPlan, out: &Path) -> Result<()> {
    let models = load_models(scoring)?;
    let report = evaluate_dataset(dataset, scenario, models.scorers(), models.fusion)?;
    report.write_csv(&out.join("metrics.csv"))?;
    let mut summary = serde_json::to_value(&report)?;
    if let Some(obj) = summary.as_object_mut() {
        obj.remove("records");
    }
    write_pretty(&summary, &out.join("report.json"))?;
    print!("{}", report.summary_table());
    Ok(())
}

fn run_sweep(
    dataset: &Path,
    axis: &SweepAxis,
    scenario: Scenario,
    scoring: &ScoringPlan,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let models = load_models(scoring)?;
    let records = read_dataset(dataset)?;
    let report = robustness_sweep(&records, axis, scenario, models.scorers(), models.fusion, seed)?;
    report.write_csv(&out.join(format!("sweep_{}.csv", report.axis)))?;
    write_pretty(&report, &out.join(format!("sweep_{}.json", report.axis)))?;
    println!("{:<8} {:>9} {:>7}", report.axis, "accuracy", "delta");
    println!("{:<8} {:>9} {:>7}", "clean", fmt_opt(report.clean.accuracy), "-");
    for (i, p) in report.points.iter().enumerate() {
        let v = p.value.map_or("-".into(), |v| v.to_string());
        let d = report.accuracy_delta(i).map_or("-".into(), |d| format!("{d:+.1}"));
        println!("{v:<8} {:>9} {d:>7}", fmt_opt(p.accuracy));
    }
    Ok(())
}
