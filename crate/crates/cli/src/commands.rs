use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dacat::data::{
    gen_stream, load_annotations, save_annotations, save_embeddings, EmbeddingMatrix,
    SyntheticConfig, Video,
};
use dacat::eval::{
    ablate_readout, bench_csv, bench_throughput, fitted_exponent, relaxed_metrics, reports_csv,
    strict_metrics, BenchOptions, MetricReport, READOUT_STRATEGIES,
};
use dacat::neural::{load_checkpoint, save_checkpoint, ParamSet};
use dacat::pipeline::{
    run_inference, train_cache_encoder, train_dacat, train_dacat_with_holdout, CacheModel,
    DacatModel, TrainOptions, TrainReport,
};
use dacat::neural::AdamWConfig;
use dacat::{ModelConfig, PhaseTimeline, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, read_json, video_paths, video_stem, write_json, DatasetManifest, MANIFEST};
use crate::{
    AblateArgs, BenchArgs, EvalArgs, GenDataArgs, InferArgs, Precision, ScheduleArgs, Stage,
    TrainArgs,
};

pub const CACHE_CKPT: &str = "cache_encoder.dcpt";
pub const DACAT_CKPT: &str = "dacat.dcpt";
pub const RUN_MANIFEST: &str = "run_manifest.json";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?)
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let config = SyntheticConfig {
        num_phases: args.phases,
        d_raw: args.d_raw,
        mean_dwell: args.len as f64 / args.phases.max(1) as f64,
        dwell_jitter: args.jitter,
        interference_rate: args.interference,
        noise_scale: args.noise,
        cluster_separation: args.separation,
        skip_rate: args.skip,
        n_videos: args.videos,
        video_len: args.len,
        seed: args.seed,
    };
    config.validate()?;
    create_dir(&args.out)?;
    let mut stems = Vec::with_capacity(args.videos);
    for i in 0..args.videos {
        let video = gen_stream(&config, i)?;
        let stem = video_stem(i);
        let (obs_path, ann_path) = video_paths(&args.out, &stem);
        let data = video.observations.iter().map(|&v| v as f32).collect();
        save_embeddings(&obs_path, &EmbeddingMatrix::new(args.d_raw, data)?)
            .with_context(|| format!("writing {}", obs_path.display()))?;
        save_annotations(&ann_path, &video.labels)
            .with_context(|| format!("writing {}", ann_path.display()))?;
        stems.push(stem);
    }
    write_json(
        &args.out.join(MANIFEST),
        &DatasetManifest {
            num_phases: args.phases,
            d_raw: args.d_raw,
            videos: stems,
            generator: Some(config),
        },
    )?;
    log::info!("wrote {} videos to {}", args.videos, args.out.display());
    Ok(())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageSummary {
    pub options: TrainOptions,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    pub selected_epoch: Option<usize>,
}

impl StageSummary {
    fn new(options: &TrainOptions, report: &TrainReport) -> Self {
        Self {
            options: options.clone(),
            epochs_run: report.epochs.len(),
            final_loss: report.final_loss(),
            final_accuracy: report.final_accuracy(),
            selected_epoch: report.selected_epoch,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub data: PathBuf,
    pub videos: usize,
    pub stage1: Option<StageSummary>,
    pub stage2: Option<StageSummary>,
}

fn schedule(s: &ScheduleArgs, seed: u64) -> (TrainOptions, TrainOptions) {
    let o1 = TrainOptions {
        epochs: s.epochs1,
        segment_len: s.segment1,
        optimizer: AdamWConfig::new(s.lr1, s.weight_decay),
        seed,
        shuffle: true,
        linear_decay: s.linear_decay,
    };
    let o2 = TrainOptions {
        epochs: s.epochs2,
        segment_len: s.segment2,
        optimizer: AdamWConfig::new(s.lr2, s.weight_decay),
        seed,
        shuffle: true,
        linear_decay: s.linear_decay,
    };
    (o1, o2)
}

fn load_stage1(path: &Path, config: &ModelConfig) -> Result<CacheModel> {
    let path = if path.is_dir() {
        path.join(CACHE_CKPT)
    } else {
        path.to_path_buf()
    };
    if !path.exists() {
        bail!("stage-1 checkpoint {} not found", path.display());
    }
    let set = load_checkpoint(&path).with_context(|| format!("loading {}", path.display()))?;
    let mut model = CacheModel::init(config);
    set.load_into(&mut model, "")
        .with_context(|| format!("{} does not match the model config", path.display()))?;
    Ok(model)
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.phases)?;
    let config = args
        .model
        .config(data.manifest.d_raw, data.manifest.num_phases, args.seed);
    config.validate()?;
    let (o1, o2) = schedule(&args.schedule, args.seed);
    if args.holdout >= data.videos.len() {
        bail!("--holdout {} leaves no training videos", args.holdout);
    }
    let (train_set, holdout) = data.videos.split_at(data.videos.len() - args.holdout);
    create_dir(&args.out)?;

    let mut manifest = RunManifest {
        config: config.clone(),
        seed: args.seed,
        data: args.data.clone(),
        videos: train_set.len(),
        stage1: None,
        stage2: None,
    };

    let stage1 = if args.stage == Stage::Two {
        let path = args.ckpt.clone().unwrap_or_else(|| args.out.join(CACHE_CKPT));
        load_stage1(&path, &config)?
    } else {
        let (model, report) = train_cache_encoder(train_set, &config, &o1)?;
        save_checkpoint(args.out.join(CACHE_CKPT), &ParamSet::from_params(&model, ""))?;
        manifest.stage1 = Some(StageSummary::new(&o1, &report));
        model
    };

    if args.stage != Stage::One {
        let (model, report) = if holdout.is_empty() {
            train_dacat(train_set, &stage1, &config, &o2)?
        } else {
            train_dacat_with_holdout(train_set, holdout, &stage1, &config, &o2)?
        };
        save_checkpoint(args.out.join(DACAT_CKPT), &model.to_param_set())?;
        manifest.stage2 = Some(StageSummary::new(&o2, &report));
    }
    write_json(&args.out.join(RUN_MANIFEST), &manifest)?;
    log::info!("checkpoints written to {}", args.out.display());
    Ok(())
}

fn load_model(ckpt_dir: &Path) -> Result<DacatModel> {
    let manifest_path = ckpt_dir.join(RUN_MANIFEST);
    if !manifest_path.exists() {
        bail!("run manifest {} not found", manifest_path.display());
    }
    let manifest: RunManifest = read_json(&manifest_path)?;
    let mut paths = [ckpt_dir.join(CACHE_CKPT), ckpt_dir.join(DACAT_CKPT)];
    for p in &paths {
        if !p.exists() {
            bail!("checkpoint {} not found", p.display());
        }
    }
    let [cache_path, dacat_path] = std::mem::take(&mut paths);
    let cache = load_checkpoint(&cache_path).with_context(|| format!("loading {}", cache_path.display()))?;
    let params = load_checkpoint(&dacat_path).with_context(|| format!("loading {}", dacat_path.display()))?;
    DacatModel::from_param_sets(manifest.config, &cache, &params)
        .context("checkpoints do not match the run manifest")
}

fn check_compatible(config: &ModelConfig, manifest: &DatasetManifest) -> Result<()> {
    if config.d_raw != manifest.d_raw || config.num_phases != manifest.num_phases {
        bail!(
            "model expects d_raw={} and {} phases, dataset has d_raw={} and {} phases",
            config.d_raw,
            config.num_phases,
            manifest.d_raw,
            manifest.num_phases
        );
    }
    Ok(())
}

fn predict<T: Real>(model: &DacatModel<T>, video: &Video) -> Result<PhaseTimeline> {
    let obs: Vec<T> = video.observations.iter().map(|&v| T::cast(v)).collect();
    Ok(run_inference(model, &obs)?.timeline)
}

pub fn infer(args: &InferArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.phases)?;
    let model = load_model(&args.ckpt)?;
    check_compatible(&model.config, &data.manifest)?;
    create_dir(&args.out)?;
    let single = model.cast::<f32>();
    let pool = thread_pool(args.jobs)?;
    let timelines: Vec<PhaseTimeline> = pool.install(|| {
        data.videos
            .par_iter()
            .map(|v| match args.precision {
                Precision::F64 => predict(&model, v),
                Precision::F32 => predict(&single, v),
            })
            .collect::<Result<_>>()
    })?;
    for (stem, timeline) in data.manifest.videos.iter().zip(&timelines) {
        let path = args.out.join(format!("{stem}.csv"));
        save_annotations(&path, timeline).with_context(|| format!("writing {}", path.display()))?;
    }
    log::info!("wrote {} prediction files to {}", timelines.len(), args.out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.phases)?;
    let k = data.manifest.num_phases;
    let pool = thread_pool(args.jobs)?;
    let rows: Vec<(MetricReport, MetricReport)> = pool.install(|| {
        data.manifest
            .videos
            .par_iter()
            .zip(&data.videos)
            .map(|(stem, video)| {
                let path = args.pred.join(format!("{stem}.csv"));
                if !path.exists() {
                    bail!("prediction file {} not found", path.display());
                }
                let pred = load_annotations(&path, k)?.with_fps(args.fps);
                let gt = video.labels.clone().with_fps(args.fps);
                let strict = strict_metrics(&pred, &gt, k)?;
                let relaxed = relaxed_metrics(&pred, &gt, k, args.window, args.fps)?;
                Ok((strict, relaxed))
            })
            .collect::<Result<_>>()
    })?;
    let named = |pick: fn(&(MetricReport, MetricReport)) -> &MetricReport| {
        data.manifest
            .videos
            .iter()
            .cloned()
            .zip(rows.iter().map(|r| pick(r).clone()))
            .collect::<Vec<_>>()
    };
    let strict = reports_csv(&named(|r| &r.0))?;
    let relaxed = reports_csv(&named(|r| &r.1))?;
    create_dir(&args.out)?;
    fs::write(args.out.join("metrics_strict.csv"), &strict)?;
    fs::write(args.out.join("metrics_relaxed.csv"), &relaxed)?;
    for (name, csv) in [("strict", &strict), ("relaxed", &relaxed)] {
        if let Some(mean) = csv.lines().find(|l| l.starts_with("mean,")) {
            println!("{name}: {mean}");
        }
    }
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<()> {
    let data = load_dataset(&args.data, args.phases)?;
    let n = data.videos.len();
    let n_test = args.test.unwrap_or(n / 3);
    if n_test == 0 || n_test >= n {
        bail!("cannot split {n} videos into train and {n_test} test videos");
    }
    let (train_set, test_set) = data.videos.split_at(n - n_test);
    let config = args
        .model
        .config(data.manifest.d_raw, data.manifest.num_phases, args.seed);
    config.validate()?;
    let (o1, o2) = schedule(&args.schedule, args.seed);
    let stage1 = match &args.ckpt {
        Some(path) => load_stage1(path, &config)?,
        None => train_cache_encoder(train_set, &config, &o1)?.0,
    };
    let table = ablate_readout(train_set, test_set, &stage1, &config, &o2, &READOUT_STRATEGIES)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(&args.out, table.to_csv()).with_context(|| format!("writing {}", args.out.display()))?;
    print!("{}", table.to_csv());
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    let config = ModelConfig {
        fusion: args.fusion,
        interaction: args.interaction,
        readout: args.readout,
        seed: args.seed,
        ..ModelConfig::new(args.d, args.d_raw.unwrap_or(args.d), args.phases, args.hidden)
    };
    let model = DacatModel::<f64>::init(config)?;
    let opts = BenchOptions {
        frames: args.frames,
        warmup: args.warmup,
        seed: args.seed,
    };
    let rows = match args.precision {
        Precision::F64 => bench_throughput(&model, &args.lengths, &opts)?,
        Precision::F32 => bench_throughput(&model.cast::<f32>(), &args.lengths, &opts)?,
    };
    let csv = bench_csv(&rows);
    match &args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            fs::write(path, &csv).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv}"),
    }
    if let Some(slope) = fitted_exponent(&rows) {
        log::info!("fitted cost exponent in cache length: {slope:.3}");
    }
    Ok(())
}
