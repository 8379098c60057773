//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line and the
//! test fails with it. Tests hold a shared lock so the timing criteria run
//! alone on the machine.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use dacat::cache::Clip;
use dacat::data::{gen_dataset, gen_stream, SyntheticConfig, Video};
use dacat::eval::{
    aggregate, bench_throughput, evaluate_videos, fitted_exponent, relax_boundaries, relaxed_metrics,
    strict_metrics, BenchOptions, MetricReport,
};
use dacat::maxr::{select_start, suffix_sum};
use dacat::neural::{
    cross_entropy, mean_pool_backward, mean_pool_temporal, CrossAttention, Linear, Lstm, LstmState,
    Parameters,
};
use dacat::pipeline::{run_inference, train_cache_encoder, train_dacat, CacheModel, DacatModel, TrainOptions};
use dacat::{Branches, FusionMode, Interaction, ModelConfig, PhaseTimeline, Readout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, name: &str, ok: bool, detail: String) {
    let tag = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "{tag} [{id:>2}] {name}: {detail}").unwrap();
    assert!(ok, "criterion {id} ({name}) failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Max-R read-out against direct summation

fn direct_suffix_sums(s: &[f64]) -> Vec<f64> {
    (0..s.len())
        .map(|j| s[j..].iter().rev().fold(0.0, |acc, v| acc + v))
        .collect()
}

#[test]
fn c01_maxr_matches_direct_summation() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut index_misses = 0;
    let mut worst_rel = 0.0f64;
    for n in 0..1000 {
        let t = rng.gen_range(1..=2048);
        let s: Vec<f64> = if n % 2 == 0 {
            (0..t).map(|_| rng.gen_range(-100.0..100.0)).collect()
        } else {
            (0..t).map(|_| f64::from(rng.gen_range(-50i32..=50))).collect()
        };
        let oracle = direct_suffix_sums(&s);
        let mut best = 0;
        for j in 1..t {
            if oracle[j] > oracle[best] {
                best = j;
            }
        }
        let p = suffix_sum(&s).unwrap();
        if select_start(&p).unwrap() != best + 1 {
            index_misses += 1;
        }
        for (a, b) in p.iter().zip(&oracle) {
            worst_rel = worst_rel.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "max-R selection matches direct summation",
        index_misses == 0 && worst_rel <= 1e-9 && secs < 10.0,
        format!("1000 vectors, index misses {index_misses}, worst rel {worst_rel:.1e}, {secs:.2} s"),
    );
}

// ---------------------------------------------------------------------------
// 2. Finite-difference gradient checks

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-4;
const FD_INSTANCES: u64 = 100;

fn uniform(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dotp(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn flat<P: Parameters<f64>>(p: &P) -> Vec<f64> {
    let mut out = Vec::new();
    p.visit("", &mut |_, t| out.extend_from_slice(t.data()));
    out
}

fn nudged<P: Parameters<f64> + Clone>(p: &P, index: usize, delta: f64) -> P {
    let mut q = p.clone();
    let mut offset = 0;
    q.visit_mut("", &mut |_, t| {
        if (offset..offset + t.len()).contains(&index) {
            t.data_mut()[index - offset] += delta;
        }
        offset += t.len();
    });
    q
}

fn fd_params<P: Parameters<f64> + Clone>(p: &P, loss: impl Fn(&P) -> f64) -> Vec<f64> {
    (0..p.num_params())
        .map(|i| (loss(&nudged(p, i, FD_H)) - loss(&nudged(p, i, -FD_H))) / (2.0 * FD_H))
        .collect()
}

fn fd_vec(x: &[f64], loss: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut plus = x.to_vec();
            plus[i] += FD_H;
            let mut minus = x.to_vec();
            minus[i] -= FD_H;
            (loss(&plus) - loss(&minus)) / (2.0 * FD_H)
        })
        .collect()
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-8)
}

fn clip_of(data: &[f64], d: usize) -> Clip<'_, f64> {
    Clip::from_flat(data, d).unwrap()
}

/// Worst relative error of `check` over the instances.
fn worst_over(seed0: u64, check: impl Fn(&mut ChaCha8Rng) -> f64) -> f64 {
    (0..FD_INSTANCES)
        .map(|i| check(&mut ChaCha8Rng::seed_from_u64(seed0 + i)))
        .fold(0.0, f64::max)
}

fn check_linear(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, n_out) = (rng.gen_range(1..8), rng.gen_range(1..8));
    let mut layer = Linear::<f64>::init(n_in, n_out, rng);
    layer.b.data_mut().copy_from_slice(&uniform(rng, n_out));
    let x = uniform(rng, n_in);
    let r = uniform(rng, n_out);
    let mut grads = Linear::zeros(n_in, n_out);
    let dx = layer.backward(&x, &r, &mut grads);
    let loss = |l: &Linear<f64>, x: &[f64]| dotp(&r, &l.forward(x).unwrap());
    rel_error(&dx, &fd_vec(&x, |x| loss(&layer, x)))
        .max(rel_error(&flat(&grads), &fd_params(&layer, |l| loss(l, &x))))
}

fn check_lstm(rng: &mut ChaCha8Rng) -> f64 {
    let (n_in, hidden) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let mut lstm = Lstm::<f64>::init(n_in, hidden, rng);
    lstm.b.data_mut().copy_from_slice(&uniform(rng, 4 * hidden));
    let x = uniform(rng, n_in);
    let h = uniform(rng, hidden);
    let c = uniform(rng, hidden);
    let (rh, rc) = (uniform(rng, hidden), uniform(rng, hidden));
    let loss = |l: &Lstm<f64>, x: &[f64], h: &[f64], c: &[f64]| {
        let state = LstmState {
            h: h.to_vec(),
            c: c.to_vec(),
        };
        let (next, _) = l.step(x, &state).unwrap();
        dotp(&rh, &next.h) + dotp(&rc, &next.c)
    };
    let state = LstmState {
        h: h.clone(),
        c: c.clone(),
    };
    let (_, trace) = lstm.step(&x, &state).unwrap();
    let mut grads = Lstm::zeros(n_in, hidden);
    let (dx, dh, dc) = lstm.backward(&trace, &rh, &rc, &mut grads);
    [
        rel_error(&dx, &fd_vec(&x, |v| loss(&lstm, v, &h, &c))),
        rel_error(&dh, &fd_vec(&h, |v| loss(&lstm, &x, v, &c))),
        rel_error(&dc, &fd_vec(&c, |v| loss(&lstm, &x, &h, v))),
        rel_error(&flat(&grads), &fd_params(&lstm, |l| loss(l, &x, &h, &c))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn check_attention(rng: &mut ChaCha8Rng) -> f64 {
    let d = rng.gen_range(1..6);
    let n = rng.gen_range(1..9);
    let ca = CrossAttention::<f64>::init(d, rng);
    let query = uniform(rng, d);
    let clip = uniform(rng, n * d);
    let r = uniform(rng, d);
    let loss = |a: &CrossAttention<f64>, q: &[f64], c: &[f64]| dotp(&r, &a.forward(q, clip_of(c, d)).unwrap().0);
    let (_, trace) = ca.forward(&query, clip_of(&clip, d)).unwrap();
    let mut grads = ca.clone();
    grads.zero_();
    let mut dclip = vec![0.0; n * d];
    let dq = ca.backward(&trace, &query, clip_of(&clip, d), &r, &mut grads, Some(&mut dclip));
    [
        rel_error(&dq, &fd_vec(&query, |q| loss(&ca, q, &clip))),
        rel_error(&dclip, &fd_vec(&clip, |c| loss(&ca, &query, c))),
        rel_error(&flat(&grads), &fd_params(&ca, |a| loss(a, &query, &clip))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn check_cross_entropy(rng: &mut ChaCha8Rng) -> f64 {
    let k = rng.gen_range(2..10);
    let logits: Vec<f64> = uniform(rng, k).iter().map(|v| 4.0 * v).collect();
    let target = rng.gen_range(0..k);
    let (_, grad) = cross_entropy(&logits, target).unwrap();
    rel_error(&grad, &fd_vec(&logits, |z| cross_entropy(z, target).unwrap().0))
}

fn check_mean_pool(rng: &mut ChaCha8Rng) -> f64 {
    let d = rng.gen_range(1..6);
    let n = rng.gen_range(1..12);
    let clip = uniform(rng, n * d);
    let r = uniform(rng, d);
    let numeric = fd_vec(&clip, |c| dotp(&r, &mean_pool_temporal(clip_of(c, d)).unwrap()));
    rel_error(&mean_pool_backward(&r, n), &numeric)
}

fn check_concat(rng: &mut ChaCha8Rng) -> f64 {
    let d = rng.gen_range(1..6);
    let n = rng.gen_range(1..9);
    let mut proj = Linear::<f64>::init(2 * d, d, rng);
    proj.b.data_mut().copy_from_slice(&uniform(rng, d));
    let x = uniform(rng, d);
    let clip = uniform(rng, n * d);
    let r = uniform(rng, d);
    let input_of = |x: &[f64], c: &[f64]| {
        let mut input = x.to_vec();
        input.extend(mean_pool_temporal(clip_of(c, d)).unwrap());
        input
    };
    let loss = |p: &Linear<f64>, x: &[f64], c: &[f64]| dotp(&r, &p.forward(&input_of(x, c)).unwrap());
    let mut grads = Linear::zeros(2 * d, d);
    let dinput = proj.backward(&input_of(&x, &clip), &r, &mut grads);
    let dclip = mean_pool_backward(&dinput[d..], n);
    [
        rel_error(&dinput[..d], &fd_vec(&x, |v| loss(&proj, v, &clip))),
        rel_error(&dclip, &fd_vec(&clip, |c| loss(&proj, &x, c))),
        rel_error(&flat(&grads), &fd_params(&proj, |p| loss(p, &x, &clip))),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

#[test]
fn c02_gradients_match_finite_differences() {
    let _g = serial();
    let start = Instant::now();
    let worst = [
        ("lstm_step", worst_over(1000, check_lstm)),
        ("cross_attention", worst_over(2000, check_attention)),
        ("linear", worst_over(3000, check_linear)),
        ("cross_entropy", worst_over(4000, check_cross_entropy)),
        ("mean_pool", worst_over(5000, check_mean_pool)),
        ("concat_projection", worst_over(6000, check_concat)),
    ];
    let secs = start.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(_, e)| *e <= FD_TOL) && secs < 60.0;
    let detail: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    verdict(
        2,
        "gradients match central differences",
        ok,
        format!("{FD_INSTANCES} instances each, worst {}; {secs:.1} s", detail.join(", ")),
    );
}

// ---------------------------------------------------------------------------
// 3. Carried state across segments

#[test]
fn c03_segmented_runs_are_bit_identical() {
    let _g = serial();
    let mut sc = SyntheticConfig::new(7, 16, 500);
    sc.interference_rate = 0.2;
    sc.seed = 3;
    let video = gen_stream(&sc, 0).unwrap();
    let mut failures = 0;
    let mut runs = 0;
    for (i, (fusion, interaction)) in [
        (FusionMode::After, Interaction::Ca),
        (FusionMode::Before, Interaction::Concat),
    ]
    .into_iter()
    .enumerate()
    {
        let mut config = ModelConfig::new(16, 16, 7, 16);
        config.fusion = fusion;
        config.interaction = interaction;
        config.seed = 10 + i as u64;
        let model = DacatModel::<f64>::init(config).unwrap();
        let whole = model
            .process(&video.observations, &mut model.new_state().unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(30 + i as u64);
        for _ in 0..50 {
            let mut state = model.new_state().unwrap();
            let mut out = Vec::with_capacity(video.len());
            let mut start = 0;
            while start < video.len() {
                let end = (start + rng.gen_range(1..=120)).min(video.len());
                out.extend(model.process(&video.observations[start * 16..end * 16], &mut state).unwrap());
                start = end;
            }
            runs += 1;
            failures += usize::from(out != whole);
        }
    }
    verdict(
        3,
        "segmented passes with carried state equal one pass",
        failures == 0,
        format!("{runs} random segmentations of a 500-frame stream, {failures} differ"),
    );
}

// ---------------------------------------------------------------------------
// 4. Causality

#[test]
fn c04_truncated_runs_reproduce_prefix() {
    let _g = serial();
    let model = DacatModel::<f64>::init(ModelConfig {
        seed: 4,
        ..ModelConfig::new(16, 16, 7, 16)
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut checks = 0;
    for v in 0..20 {
        let mut sc = SyntheticConfig::new(7, 16, rng.gen_range(50..400));
        sc.interference_rate = 0.2;
        sc.seed = 100 + v;
        let video = gen_stream(&sc, 0).unwrap();
        let full = run_inference(&model, &video.observations).unwrap().predictions;
        for _ in 0..3 {
            let t = rng.gen_range(1..=video.len());
            let part = run_inference(&model, &video.truncated(t).observations).unwrap().predictions;
            checks += 1;
            failures += usize::from(part[..] != full[..t]);
        }
    }
    verdict(
        4,
        "truncated runs reproduce the full-run prefix",
        failures == 0,
        format!("20 videos, {checks} truncations, {failures} differ"),
    );
}

// ---------------------------------------------------------------------------
// 5-7. Ablation structure on the synthetic benchmark

const BENCH_SEEDS: std::ops::Range<u64> = 0..5;
const BENCH_PHASES: usize = 7;
const BENCH_D_RAW: usize = 32;
const BENCH_LEN: usize = 1000;
const BENCH_NOISE: f64 = 4.0;

fn benchmark_data(seed: u64) -> Vec<Video> {
    let mut sc = SyntheticConfig::new(BENCH_PHASES, BENCH_D_RAW, BENCH_LEN);
    sc.interference_rate = 0.2;
    sc.noise_scale = BENCH_NOISE;
    sc.cluster_separation = 4.0;
    sc.dwell_jitter = 0.6;
    sc.skip_rate = 0.3;
    sc.n_videos = 15;
    sc.seed = seed;
    gen_dataset(&sc).unwrap()
}

fn benchmark_options(seed: u64) -> (TrainOptions, TrainOptions) {
    let stage1 = TrainOptions::stage1()
        .with_epochs(10)
        .with_lr(1e-3)
        .with_seed(seed)
        .with_linear_decay(true);
    let stage2 = TrainOptions::stage2()
        .with_epochs(10)
        .with_lr(3e-3)
        .with_seed(seed)
        .with_linear_decay(true);
    (stage1, stage2)
}

#[derive(Debug)]
struct SeedResult {
    full: (f64, f64),
    fwb_only: (f64, f64),
    fixed10: (f64, f64),
    untrained_cache: (f64, f64),
}

/// (mean Jaccard, mean accuracy) over the test videos, in percent.
fn score(reports: &[MetricReport]) -> (f64, f64) {
    let agg = aggregate(reports).unwrap();
    (agg.jaccard.mean * 100.0, agg.accuracy.mean * 100.0)
}

fn run_seed(seed: u64) -> SeedResult {
    let videos = benchmark_data(seed);
    let (train, test) = videos.split_at(10);
    let config = ModelConfig {
        seed,
        ..ModelConfig::new(16, BENCH_D_RAW, BENCH_PHASES, 16)
    };
    let (o1, o2) = benchmark_options(seed);
    let (stage1, _) = train_cache_encoder(train, &config, &o1).unwrap();
    let variant = |config: &ModelConfig, cache: &CacheModel| {
        let (model, _) = train_dacat(train, cache, config, &o2).unwrap();
        score(&evaluate_videos(&model, test).unwrap())
    };
    SeedResult {
        full: variant(&config, &stage1),
        fwb_only: variant(
            &ModelConfig {
                branches: Branches::FwbOnly,
                ..config.clone()
            },
            &stage1,
        ),
        fixed10: variant(
            &ModelConfig {
                readout: Readout::Fixed(10),
                ..config.clone()
            },
            &stage1,
        ),
        untrained_cache: variant(&config, &CacheModel::init(&config)),
    }
}

struct Benchmark {
    seeds: Vec<SeedResult>,
    secs: f64,
}

fn benchmark() -> &'static Benchmark {
    static RESULT: OnceLock<Benchmark> = OnceLock::new();
    RESULT.get_or_init(|| {
        let start = Instant::now();
        let seeds: Vec<SeedResult> = BENCH_SEEDS.map(run_seed).collect();
        let secs = start.elapsed().as_secs_f64();
        let mut out = std::io::stdout().lock();
        for (seed, r) in BENCH_SEEDS.zip(&seeds) {
            writeln!(
                out,
                "  seed {seed}: jaccard full {:.1} fwb-only {:.1} fixed:10 {:.1} | accuracy trained cache {:.1} untrained {:.1}",
                r.full.0, r.fwb_only.0, r.fixed10.0, r.full.1, r.untrained_cache.1
            )
            .unwrap();
        }
        Benchmark { seeds, secs }
    })
}

#[test]
fn c05_both_branches_beat_frame_branch_alone() {
    let _g = serial();
    let b = benchmark();
    let diffs: Vec<f64> = b.seeds.iter().map(|r| r.full.0 - r.fwb_only.0).collect();
    let wins = diffs.iter().filter(|&&d| d > 0.0).count();
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    verdict(
        5,
        "dual branch beats frame-wise branch only",
        wins >= 4 && mean >= 2.0 && b.secs < 1800.0,
        format!("wins {wins}/5, mean Jaccard gain {mean:+.2} points, benchmark {:.0} s", b.secs),
    );
}

#[test]
fn c06_adaptive_readout_at_least_fixed10() {
    let _g = serial();
    let b = benchmark();
    let wins = b.seeds.iter().filter(|r| r.full.0 >= r.fixed10.0).count();
    let mean = b.seeds.iter().map(|r| r.full.0 - r.fixed10.0).sum::<f64>() / b.seeds.len() as f64;
    verdict(
        6,
        "adaptive read-out at least fixed(10)",
        wins >= 4,
        format!("wins {wins}/5, mean Jaccard difference {mean:+.2} points"),
    );
}

#[test]
fn c07_pretrained_cache_at_least_untrained() {
    let _g = serial();
    let b = benchmark();
    let wins = b.seeds.iter().filter(|r| r.full.1 >= r.untrained_cache.1).count();
    let mean = b.seeds.iter().map(|r| r.full.1 - r.untrained_cache.1).sum::<f64>() / b.seeds.len() as f64;
    verdict(
        7,
        "pretrained frozen cache at least untrained frozen cache",
        wins >= 4,
        format!("wins {wins}/5, mean accuracy difference {mean:+.2} points"),
    );
}

// ---------------------------------------------------------------------------
// 8. Throughput

#[test]
fn c08_online_step_throughput() {
    let _g = serial();
    let mut config = ModelConfig::new(768, 768, 7, 128);
    config.seed = 8;
    let model = DacatModel::<f64>::init(config).unwrap();
    let opts = BenchOptions {
        frames: 20,
        warmup: 3,
        seed: 8,
    };
    let rows = bench_throughput(&model, &[100, 1_000, 10_000], &opts).unwrap();
    let at_10k = rows[2].mean_ms;
    let exponent = fitted_exponent(&rows).unwrap();
    let per_length: Vec<String> = rows.iter().map(|r| format!("t={} {:.2} ms", r.length, r.mean_ms)).collect();
    verdict(
        8,
        "online step throughput",
        at_10k <= 40.0 && exponent <= 1.15,
        format!(
            "d=768 {}, {:.1} fps at t=10000, log-log exponent {exponent:.3}",
            per_length.join(", "),
            1000.0 / at_10k
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Metrics

struct MetricCase {
    gt: Vec<usize>,
    pred: Vec<usize>,
    num_phases: usize,
    window_s: f64,
    fps: f64,
    /// (phase, tp, fp, fn) for every phase present in `gt`.
    strict: Vec<(usize, usize, usize, usize)>,
    relaxed_pred: Vec<usize>,
    relaxed: Vec<(usize, usize, usize, usize)>,
}

fn metric_cases() -> Vec<MetricCase> {
    let case = |gt: Vec<usize>, pred: Vec<usize>, k, window_s, fps, strict, relaxed_pred, relaxed| MetricCase {
        gt,
        pred,
        num_phases: k,
        window_s,
        fps,
        strict,
        relaxed_pred,
        relaxed,
    };
    let run = |parts: &[(usize, usize)]| -> Vec<usize> {
        parts.iter().flat_map(|&(label, n)| std::iter::repeat(label).take(n)).collect()
    };
    vec![
        // the worked example
        case(
            vec![0, 0, 1, 1],
            vec![0, 1, 1, 1],
            2,
            1.0,
            1.0,
            vec![(0, 1, 0, 1), (1, 2, 1, 0)],
            vec![0, 0, 1, 1],
            vec![(0, 2, 0, 0), (1, 2, 0, 0)],
        ),
        case(
            vec![0, 1, 2, 2],
            vec![0, 1, 2, 2],
            3,
            10.0,
            1.0,
            vec![(0, 1, 0, 0), (1, 1, 0, 0), (2, 2, 0, 0)],
            vec![0, 1, 2, 2],
            vec![(0, 1, 0, 0), (1, 1, 0, 0), (2, 2, 0, 0)],
        ),
        case(
            vec![0, 0, 1, 1],
            vec![2, 2, 2, 2],
            3,
            1.0,
            1.0,
            vec![(0, 0, 0, 2), (1, 0, 0, 2)],
            vec![2, 2, 2, 2],
            vec![(0, 0, 0, 2), (1, 0, 0, 2)],
        ),
        // late by two frames, window covers it
        case(
            run(&[(0, 5), (1, 5)]),
            run(&[(0, 7), (1, 3)]),
            2,
            2.0,
            1.0,
            vec![(0, 5, 2, 0), (1, 3, 0, 2)],
            run(&[(0, 5), (1, 5)]),
            vec![(0, 5, 0, 0), (1, 5, 0, 0)],
        ),
        // late by two frames, window covers one
        case(
            run(&[(0, 5), (1, 5)]),
            run(&[(0, 7), (1, 3)]),
            2,
            1.0,
            1.0,
            vec![(0, 5, 2, 0), (1, 3, 0, 2)],
            run(&[(0, 5), (1, 1), (0, 1), (1, 3)]),
            vec![(0, 5, 1, 0), (1, 4, 0, 1)],
        ),
        // early by two frames, window covers one
        case(
            vec![0, 0, 0, 0, 1, 1, 1, 1],
            vec![0, 0, 1, 1, 1, 1, 1, 1],
            2,
            1.0,
            1.0,
            vec![(0, 2, 0, 2), (1, 4, 2, 0)],
            vec![0, 0, 1, 0, 1, 1, 1, 1],
            vec![(0, 3, 0, 1), (1, 4, 1, 0)],
        ),
        // the window stops at the next transition
        case(
            vec![0, 0, 1, 2, 2, 2],
            vec![0, 0, 0, 0, 2, 2],
            3,
            5.0,
            1.0,
            vec![(0, 2, 2, 0), (1, 0, 0, 1), (2, 2, 0, 1)],
            vec![0, 0, 1, 0, 2, 2],
            vec![(0, 2, 1, 0), (1, 1, 0, 0), (2, 2, 0, 1)],
        ),
        // constant truth: nothing to relax, phases absent from the truth are skipped
        case(
            vec![1, 1, 1, 1, 1],
            vec![1, 0, 1, 2, 1],
            3,
            10.0,
            1.0,
            vec![(1, 3, 0, 2)],
            vec![1, 0, 1, 2, 1],
            vec![(1, 3, 0, 2)],
        ),
        // one second at two frames per second
        case(
            run(&[(0, 4), (1, 4)]),
            run(&[(0, 6), (1, 2)]),
            2,
            1.0,
            2.0,
            vec![(0, 4, 2, 0), (1, 2, 0, 2)],
            run(&[(0, 4), (1, 4)]),
            vec![(0, 4, 0, 0), (1, 4, 0, 0)],
        ),
        // skipped phase, errors away from the boundary stay
        case(
            run(&[(0, 6), (2, 6)]),
            vec![0, 1, 0, 0, 0, 2, 2, 2, 1, 2, 2, 2],
            3,
            2.0,
            1.0,
            vec![(0, 4, 0, 2), (2, 5, 1, 1)],
            vec![0, 1, 0, 0, 0, 0, 2, 2, 1, 2, 2, 2],
            vec![(0, 5, 0, 1), (2, 5, 0, 1)],
        ),
        // early on both sides of two transitions
        case(
            vec![0, 0, 1, 1, 2, 2],
            vec![1, 1, 1, 2, 2, 2],
            3,
            1.0,
            1.0,
            vec![(0, 0, 0, 2), (1, 1, 2, 1), (2, 2, 1, 0)],
            vec![1, 0, 1, 1, 2, 2],
            vec![(0, 1, 0, 1), (1, 2, 1, 0), (2, 2, 0, 0)],
        ),
    ]
}

fn counts_match(report: &MetricReport, gt: &[usize], expected: &[(usize, usize, usize, usize)]) -> bool {
    let present: Vec<usize> = (0..report.per_phase.len()).filter(|k| gt.contains(k)).collect();
    let listed: Vec<usize> = expected.iter().map(|e| e.0).collect();
    if present != listed {
        return false;
    }
    let n = gt.len() as f64;
    let mut correct = 0;
    let (mut p, mut r, mut j) = (0.0, 0.0, 0.0);
    for &(k, tp, fp, fn_) in expected {
        let Some(c) = report.per_phase[k] else { return false };
        if (c.tp, c.fp, c.fn_) != (tp, fp, fn_) {
            return false;
        }
        correct += tp;
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        p += ratio(tp, tp + fp);
        r += ratio(tp, tp + fn_);
        j += ratio(tp, tp + fp + fn_);
    }
    let m = expected.len() as f64;
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    close(report.accuracy, correct as f64 / n)
        && close(report.precision, p / m)
        && close(report.recall, r / m)
        && close(report.jaccard, j / m)
        && report.per_phase.iter().enumerate().all(|(k, c)| c.is_some() == gt.contains(&k))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (PhaseTimeline, PhaseTimeline, usize) {
    let k = rng.gen_range(1..8);
    let n = rng.gen_range(1..300);
    let mut gt = Vec::with_capacity(n);
    let mut phase = 0;
    while gt.len() < n {
        let run = rng.gen_range(1..60);
        gt.extend(std::iter::repeat(phase).take(run.min(n - gt.len())));
        phase = (phase + rng.gen_range(1..=2)).min(k - 1);
    }
    // truth shifted by a few frames plus scattered errors
    let shift = rng.gen_range(-12i64..=12);
    let pred: Vec<usize> = (0..n as i64)
        .map(|i| {
            if rng.gen_bool(0.1) {
                rng.gen_range(0..k)
            } else {
                gt[(i - shift).clamp(0, n as i64 - 1) as usize]
            }
        })
        .collect();
    (
        PhaseTimeline::new(pred, k).unwrap(),
        PhaseTimeline::new(gt, k).unwrap(),
        k,
    )
}

#[test]
fn c09_metrics_match_hand_counts() {
    let _g = serial();
    let cases = metric_cases();
    let mut case_failures = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        let gt = PhaseTimeline::new(c.gt.clone(), c.num_phases).unwrap();
        let pred = PhaseTimeline::new(c.pred.clone(), c.num_phases).unwrap();
        let strict = strict_metrics(&pred, &gt, c.num_phases).unwrap();
        let relaxed_pred = relax_boundaries(&pred, &gt, c.window_s, c.fps).unwrap();
        let relaxed = relaxed_metrics(&pred, &gt, c.num_phases, c.window_s, c.fps).unwrap();
        if !counts_match(&strict, &c.gt, &c.strict)
            || relaxed_pred.labels() != c.relaxed_pred.as_slice()
            || !counts_match(&relaxed, &c.gt, &c.relaxed)
        {
            case_failures.push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut order_violations = 0;
    let mut not_idempotent = 0;
    for _ in 0..1000 {
        let (pred, gt, k) = random_pair(&mut rng);
        let window = rng.gen_range(0.0..20.0);
        let strict = strict_metrics(&pred, &gt, k).unwrap();
        let once = relax_boundaries(&pred, &gt, window, 1.0).unwrap();
        let relaxed = strict_metrics(&once, &gt, k).unwrap();
        let ge = relaxed.accuracy >= strict.accuracy
            && relaxed.precision >= strict.precision
            && relaxed.recall >= strict.recall
            && relaxed.jaccard >= strict.jaccard;
        order_violations += usize::from(!ge);
        not_idempotent += usize::from(relax_boundaries(&once, &gt, window, 1.0).unwrap() != once);
    }
    verdict(
        9,
        "metric suite matches hand counts",
        case_failures.is_empty() && order_violations == 0 && not_idempotent == 0,
        format!(
            "{} constructed pairs (failing: {case_failures:?}); 1000 random pairs: relaxed < strict {order_violations}, not idempotent {not_idempotent}",
            cases.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism through the CLI

fn dacat_cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_dacat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "dacat {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Runs the full command chain under `root` and returns every CSV written, by relative path.
fn cli_chain(root: &Path) -> Vec<(String, Vec<u8>)> {
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let (data, run, pred, metrics) = (p("data"), p("run"), p("pred"), p("metrics"));
    dacat_cli(&[
        "gen-data", "--out", &data, "--videos", "3", "--len", "150", "--phases", "4", "--d-raw", "8",
        "--interference", "0.2", "--seed", "10",
    ]);
    dacat_cli(&[
        "train", "--data", &data, "--out", &run, "--d", "8", "--hidden", "8", "--epochs1", "3",
        "--epochs2", "3", "--lr1", "1e-2", "--lr2", "1e-3", "--seed", "10",
    ]);
    dacat_cli(&["infer", "--data", &data, "--ckpt", &run, "--out", &pred, "--precision", "f64"]);
    dacat_cli(&["eval", "--data", &data, "--pred", &pred, "--out", &metrics]);
    let mut files = Vec::new();
    for dir in ["data", "pred", "metrics"] {
        let mut names: Vec<_> = fs::read_dir(root.join(dir))
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        names.sort();
        for path in names {
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            files.push((rel, fs::read(&path).unwrap()));
        }
    }
    files
}

#[test]
fn c10_cli_chain_is_deterministic() {
    let _g = serial();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = cli_chain(a.path());
    let second = cli_chain(b.path());
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let ok = first.len() == second.len() && first.len() >= 8 && differing.is_empty();
    verdict(
        10,
        "gen-data, train, infer, eval reruns give identical CSVs",
        ok,
        format!("{} CSV files compared, differing: {differing:?}", first.len()),
    );
}
