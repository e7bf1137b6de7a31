//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion.
//!
//! A FAIL is reported, not hidden: the process still exits 0 so the rest of
//! the workspace tests stay usable. Set `ACCEPTANCE_STRICT=1` to turn any
//! FAIL into a non-zero exit.

#[path = "../common/flops_oracle.rs"]
mod flops_oracle;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use archsearch::complexity::{estimate_flops, InputShape};
use archsearch::engine::{
    read_trial_log, run_search_with, top_k, RunConfig, RunOptions, STATE_FILE, TRIALS_FILE,
};
use archsearch::metrics::{cross_entropy, PredictionBatch};
use archsearch::space::{
    distance, sample_uniform, sample_with, DimDomain, DimValue, FusionMode, Genotype, IntRange,
    LayerType, SearchSpaceDef,
};
use archsearch::strategies::{
    gp_posterior, tpe_models, ucb1_score, KernelParams, ReinforceConfig, RlState, StrategyConfig,
    TpeConfig, TrialRecord, TrialStatus, JITTER,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion(n: u32, name: &str, f: impl FnOnce() -> Outcome) -> (bool, Duration) {
    let t0 = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f));
    let elapsed = t0.elapsed();
    let Outcome { pass, detail } = result.unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let tag = if pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:>2} {tag} {name}: {detail} [{:.2}s]",
        elapsed.as_secs_f64()
    );
    (pass, elapsed)
}

fn shape() -> InputShape {
    InputShape {
        seq_len: 32,
        feature_dims: vec![6],
        num_classes: 3,
    }
}

// 1 ------------------------------------------------------------------------

fn gp_oracle(points: &[Vec<f64>], ys: &[f64], query: &[f64], k: KernelParams) -> (f64, f64) {
    let n = points.len();
    let cov = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        k.signal_variance * (-d2 / (2.0 * k.length_scale.powi(2))).exp()
    };
    let mut km = DMatrix::from_fn(n, n, |i, j| cov(&points[i], &points[j]));
    for i in 0..n {
        km[(i, i)] += k.noise + JITTER;
    }
    let mean0 = ys.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, ys.iter().map(|v| v - mean0));
    let ks = DVector::from_iterator(n, points.iter().map(|p| cov(p, query)));
    let inv = km.try_inverse().expect("positive definite");
    let mean = mean0 + (ks.transpose() * &inv * y)[(0, 0)];
    let var = k.signal_variance - (ks.transpose() * &inv * &ks)[(0, 0)];
    (mean, var.max(0.0))
}

fn c1_gp() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let euclid = |a: &Vec<f64>, b: &Vec<f64>| {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let dim = rng.random_range(2..6);
        let point =
            |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random::<f64>()).collect::<Vec<f64>>();
        let points: Vec<Vec<f64>> = (0..5).map(|_| point(&mut rng)).collect();
        let ys: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..2.0)).collect();
        let kernel = KernelParams {
            length_scale: rng.random_range(0.2..1.5),
            signal_variance: rng.random_range(0.1..2.0),
            noise: rng.random_range(0.0..1e-2),
        };
        let history: Vec<(Vec<f64>, f64)> =
            points.iter().cloned().zip(ys.iter().copied()).collect();
        for _ in 0..4 {
            let q = point(&mut rng);
            let (m, v) = gp_posterior(&history, &q, kernel, euclid).unwrap();
            let (om, ov) = gp_oracle(&points, &ys, &q, kernel);
            worst = worst.max((m - om).abs()).max((v - ov).abs());
        }
        // at a training point
        let (m, v) = gp_posterior(&history, &points[0], kernel, euclid).unwrap();
        let (om, ov) = gp_oracle(&points, &ys, &points[0], kernel);
        worst = worst.max((m - om).abs()).max((v - ov).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 1.0,
        format!("max |Δ| {worst:.2e} (≤ 1e-8), {secs:.3}s (< 1s)"),
    )
}

// 2 ------------------------------------------------------------------------

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

fn trunc_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let phi = (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp()
        / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    phi / (std_normal_cdf((1.0 - mu) / sigma) - std_normal_cdf(-mu / sigma))
}

/// Product over active dimensions of smoothed per-dimension Parzen densities.
fn parzen_oracle(space: &SearchSpaceDef, group: &[Genotype], x: &Genotype, cfg: &TpeConfig) -> f64 {
    let domains = space.domains();
    let xs = space.values(x);
    let gs: Vec<_> = group.iter().map(|g| space.values(g)).collect();
    let mut density = 1.0;
    for (i, (_, domain)) in domains.iter().enumerate() {
        let Some(xv) = xs[i] else { continue };
        let obs: Vec<DimValue> = gs.iter().filter_map(|v| v[i]).collect();
        match (domain, xv) {
            (DimDomain::Categorical(k), DimValue::Choice(c)) => {
                let hits = obs.iter().filter(|&&o| o == DimValue::Choice(c)).count();
                density *= (hits as f64 + 1.0) / (obs.len() + k) as f64;
            }
            (DimDomain::Integer(r), DimValue::Int(v)) if !obs.is_empty() => {
                let norm = |v: u32| {
                    if r.max == r.min {
                        0.0
                    } else {
                        f64::from(v - r.min) / f64::from(r.max - r.min)
                    }
                };
                let centers: Vec<f64> = obs
                    .iter()
                    .map(|o| {
                        if let DimValue::Int(u) = o {
                            norm(*u)
                        } else {
                            unreachable!()
                        }
                    })
                    .collect();
                let m = centers.len() as f64;
                let mean = centers.iter().sum::<f64>() / m;
                let sd = (centers.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / m).sqrt();
                let bw = (sd * m.powf(-0.2)).max(cfg.bandwidth_floor);
                let s: f64 = centers.iter().map(|&c| trunc_pdf(norm(v), c, bw)).sum();
                density *= (s + cfg.prior_weight) / (m + cfg.prior_weight);
            }
            _ => {}
        }
    }
    density
}

fn c2_tpe() -> Outcome {
    let t0 = Instant::now();
    let space = SearchSpaceDef::standard();
    let cfg = TpeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let target = sample_with(&space, &mut rng);
    let history: Vec<(Genotype, f64)> = (0..40)
        .map(|_| {
            let g = sample_with(&space, &mut rng);
            let y = distance(&g, &target, &space);
            (g, y)
        })
        .collect();
    let (l, g) = tpe_models(&space, &history, &cfg).expect("non-degenerate history");
    let mut order: Vec<usize> = (0..history.len()).collect();
    order.sort_by(|&a, &b| history[a].1.total_cmp(&history[b].1).then(a.cmp(&b)));
    let n_good = ((cfg.gamma * history.len() as f64).ceil() as usize).clamp(1, history.len() - 1);
    let good: Vec<Genotype> = order[..n_good]
        .iter()
        .map(|&i| history[i].0.clone())
        .collect();
    let bad: Vec<Genotype> = order[n_good..]
        .iter()
        .map(|&i| history[i].0.clone())
        .collect();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x = sample_with(&space, &mut rng);
        let (ol, og) = (
            parzen_oracle(&space, &good, &x, &cfg),
            parzen_oracle(&space, &bad, &x, &cfg),
        );
        let (dl, dg) = (l.density(&space, &x), g.density(&space, &x));
        worst = worst
            .max((l.log_density(&space, &x) - ol.ln()).abs())
            .max((g.log_density(&space, &x) - og.ln()).abs())
            .max(((dl / dg) - (ol / og)).abs() / (ol / og));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs < 1.0,
        format!(
            "20 points, max |Δ ln l|, |Δ ln g|, rel Δ(l/g) {worst:.2e} (≤ 1e-9), {secs:.3}s (< 1s)"
        ),
    )
}

// 3 ------------------------------------------------------------------------

fn c3_ucb() -> Outcome {
    let sqrt2 = std::f64::consts::SQRT_2;
    // (v, n, N, C, expected, tolerance)
    let cases = [
        (0.3, 4.0, 100.0, sqrt2, 1.8178, 1e-4),
        (0.5, 1.0, 1.0, 1.0, 0.5, 1e-12),
        (0.0, 10.0, 1000.0, 0.5, 0.415_564_6, 1e-6),
    ];
    let mut fails = Vec::new();
    let mut parts = Vec::new();
    for (v, n, total, c, want, tol) in cases {
        let got = ucb1_score(v, n, total, c);
        parts.push(format!("{got:.6} vs {want}"));
        if (got - want).abs() > tol {
            fails.push(format!(
                "v={v} n={n} N={total}: got {got:.7}, expected {want} ± {tol:e}"
            ));
        }
    }
    if fails.is_empty() {
        outcome(true, parts.join("; "))
    } else {
        outcome(
            false,
            format!(
                "{}; hand value 0.3 + √2·√(ln 100 / 4) = 1.817427",
                fails.join("; ")
            ),
        )
    }
}

// 4 ------------------------------------------------------------------------

fn small_space(layer_type: LayerType, fusion: FusionMode, modalities: u32) -> SearchSpaceDef {
    let tst = layer_type == LayerType::Tst;
    SearchSpaceDef {
        seq_layer_types: vec![layer_type],
        seq_num_layers: IntRange::new(1, 3),
        seq_num_units: IntRange::new(1, 8),
        tst_ff_dim: tst.then(|| IntRange::new(1, 6)),
        tst_attention_heads: tst.then(|| IntRange::new(1, 3)),
        head_num_layers: IntRange::new(1, 3),
        head_num_units: IntRange::new(1, 6),
        fusion_modes: vec![fusion],
        num_modalities: modalities,
    }
}

fn c4_flops() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for layer_type in LayerType::ALL {
        for fusion in FusionMode::ALL {
            let modalities = if fusion == FusionMode::None {
                1
            } else {
                rng.random_range(2..4)
            };
            let space = small_space(layer_type, fusion, modalities);
            for _ in 0..10 {
                let g = sample_with(&space, &mut rng);
                let shape = InputShape {
                    seq_len: rng.random_range(1..6),
                    feature_dims: (0..modalities).map(|_| rng.random_range(1..5)).collect(),
                    num_classes: rng.random_range(2..5),
                };
                let est = estimate_flops(&g, &shape).unwrap().total;
                let counted = flops_oracle::count_forward_flops(&g, &shape, 3);
                checked += 1;
                if est != counted {
                    mismatches.push(format!("{}: {est} vs {counted}", g.label()));
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        mismatches.is_empty() && secs < 10.0,
        format!(
            "{checked} genotypes (10 per layer type × fusion mode), {} mismatches{}, {secs:.2}s (< 10s)",
            mismatches.len(),
            mismatches.first().map(|m| format!(", first {m}")).unwrap_or_default()
        ),
    )
}

// 5 ------------------------------------------------------------------------

fn c5_reinforce() -> Outcome {
    let space = SearchSpaceDef::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for state in 0..50 {
        let mut rl = RlState::new(ReinforceConfig::default(), &space, state);
        for p in rl.policies_mut() {
            for l in &mut p.logits {
                *l = rng.random_range(-2.0..2.0);
            }
        }
        let g = sample_with(&space, &mut rng);
        let grad = rl.log_prob_gradient(&space, &g);
        for d in 0..grad.len() {
            for j in 0..grad[d].len() {
                let base = rl.policies()[d].logits[j];
                rl.policies_mut()[d].logits[j] = base + h;
                let up = rl.log_prob(&space, &g);
                rl.policies_mut()[d].logits[j] = base - h;
                let down = rl.log_prob(&space, &g);
                rl.policies_mut()[d].logits[j] = base;
                worst = worst.max(((up - down) / (2.0 * h) - grad[d][j]).abs());
            }
        }
    }
    outcome(
        worst <= 1e-5,
        format!("50 states, max |Δ| {worst:.2e} (≤ 1e-5)"),
    )
}

// 6-8 ----------------------------------------------------------------------

const SEEDS: std::ops::Range<u64> = 1..21;

fn best_of_run(
    root: &Path,
    strategy: &StrategyConfig,
    evaluator: &str,
    seed: u64,
    trials: u64,
) -> f64 {
    let dir =
        root.join(format!("{}-{evaluator}-{seed}-{trials}", strategy.name()).replace(':', "_"));
    let mut c = RunConfig::new(strategy.clone(), evaluator.parse().unwrap(), shape(), &dir);
    c.trials = trials;
    c.seed = seed;
    let record = run_search_with(
        &c,
        &RunOptions {
            stop_after: None,
            sync: false,
            snapshot_every: 0,
        },
    )
    .unwrap();
    record
        .best
        .and_then(|b| b.objective)
        .expect("at least one ok trial")
}

/// Best objective per seed, seeds run in parallel.
fn bests(root: &Path, strategy: &StrategyConfig, evaluator: &str, trials: u64) -> Vec<f64> {
    std::thread::scope(|s| {
        let handles: Vec<_> = SEEDS
            .map(|seed| s.spawn(move || best_of_run(root, strategy, evaluator, seed, trials)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn c6_reach(root: &Path) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["hill_climbing", "regularized_evolution"] {
        let b = bests(root, &name.parse().unwrap(), "surrogate:distance", 200);
        let hits = b.iter().filter(|&&y| y <= 0.02).count();
        ok &= hits >= 18;
        parts.push(format!("{name} {hits}/20"));
    }
    outcome(
        ok,
        format!(
            "objective ≤ 0.02 within 200 trials: {} (need ≥ 18/20 each)",
            parts.join(", ")
        ),
    )
}

fn c7_vs_random(root: &Path) -> Outcome {
    let random = median(&bests(
        root,
        &StrategyConfig::Random,
        "surrogate:distance",
        50,
    ));
    let threshold = random + 0.02;
    let mut ok = true;
    let mut parts = Vec::new();
    for s in StrategyConfig::all_defaults() {
        let m = median(&bests(root, &s, "surrogate:distance", 50));
        ok &= m <= threshold;
        parts.push(format!("{} {m:.4}", s.name()));
    }
    outcome(
        ok,
        format!(
            "median best after 50 vs random median {random:.4} + 0.02: {}",
            parts.join(", ")
        ),
    )
}

fn c8_deceptive(root: &Path) -> Outcome {
    let random = median(&bests(
        root,
        &StrategyConfig::Random,
        "surrogate:deceptive",
        50,
    ));
    let mut parts = Vec::new();
    let mut best_wins = 0;
    for s in StrategyConfig::all_defaults()
        .into_iter()
        .filter(|s| s.name() != "random")
    {
        let wins = bests(root, &s, "surrogate:deceptive", 50)
            .iter()
            .filter(|&&y| y < random)
            .count();
        best_wins = best_wins.max(wins);
        parts.push(format!("{} {wins}/20", s.name()));
    }
    outcome(
        best_wins >= 12,
        format!(
            "seeds beating random median {random:.4}: {} (need one ≥ 12/20)",
            parts.join(", ")
        ),
    )
}

// 9 ------------------------------------------------------------------------

fn c9_ce() -> Outcome {
    let ce = |p: &[f64], y: usize| {
        cross_entropy(&PredictionBatch::new(vec![p.to_vec()], vec![y]).unwrap())
    };
    let y1 = ce(&[0.1, 0.6, 0.3], 1);
    let third = 1.0 / 3.0;
    let uniform = ce(&[third, third, third], 0);
    let y2 = ce(&[0.2, 0.5, 0.3], 1);
    let ok = (y1 - 0.510_825_6).abs() <= 1e-6 && (uniform - 3f64.ln()).abs() <= 1e-6 && y1 < y2;
    outcome(
        ok,
        format!(
            "CE(0.6) {y1:.7}, uniform {uniform:.7} (ln 3 {:.7}), CE(ŷ1) {y1:.4} < CE(ŷ2) {y2:.4}",
            3f64.ln()
        ),
    )
}

// 10 -----------------------------------------------------------------------

fn c10_determinism(root: &Path) -> Outcome {
    let mut differing = Vec::new();
    for s in StrategyConfig::all_defaults() {
        let logs: Vec<Vec<u8>> = ["a", "b"]
            .iter()
            .map(|tag| {
                let dir = root.join(format!("det-{}-{tag}", s.name()));
                let mut c = RunConfig::new(
                    s.clone(),
                    "surrogate:distance".parse().unwrap(),
                    shape(),
                    &dir,
                );
                c.trials = 30;
                c.seed = 10;
                run_search_with(
                    &c,
                    &RunOptions {
                        stop_after: None,
                        sync: false,
                        ..RunOptions::default()
                    },
                )
                .unwrap();
                fs::read(dir.join(TRIALS_FILE)).unwrap()
            })
            .collect();
        if logs[0] != logs[1] || logs[0].is_empty() {
            differing.push(s.name());
        }
    }
    outcome(
        differing.is_empty(),
        format!("8 strategies × 30 trials, W=1; differing logs: {differing:?}"),
    )
}

// 11 -----------------------------------------------------------------------

fn c11_resume(root: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let strategies = StrategyConfig::all_defaults();
    let config = |dir: &Path, s: &StrategyConfig| {
        let mut c = RunConfig::new(
            s.clone(),
            "surrogate:distance".parse().unwrap(),
            shape(),
            dir,
        );
        c.trials = 50;
        c.seed = 3;
        c
    };
    let mut problems = Vec::new();
    let mut points = Vec::new();
    for i in 0..10 {
        let s = &strategies[i % strategies.len()];
        let k = rng.random_range(1..50);
        points.push(k);
        let reference_dir = root.join(format!("ref-{}", s.name()));
        if !reference_dir.exists() {
            run_search_with(
                &config(&reference_dir, s),
                &RunOptions {
                    stop_after: None,
                    sync: false,
                    ..RunOptions::default()
                },
            )
            .unwrap();
        }
        let reference = fs::read(reference_dir.join(TRIALS_FILE)).unwrap();
        let lines: Vec<&[u8]> = reference.split_inclusive(|&b| b == b'\n').collect();

        let dir = root.join(format!("crash-{i}"));
        let c = config(&dir, s);
        let stale = if i % 3 == 2 {
            run_search_with(
                &c,
                &RunOptions {
                    stop_after: Some(k / 2),
                    sync: true,
                    ..RunOptions::default()
                },
            )
            .unwrap();
            Some(fs::read(dir.join(STATE_FILE)).ok())
        } else {
            None
        };
        run_search_with(
            &c,
            &RunOptions {
                stop_after: Some(k),
                sync: true,
                ..RunOptions::default()
            },
        )
        .unwrap();

        // prefix validity at the interruption point
        let log = read_trial_log(&dir.join(TRIALS_FILE)).unwrap();
        let ids: Vec<u64> = log.trials.iter().map(|t| t.trial_id).collect();
        if ids != (1..=k).collect::<Vec<_>>()
            || log.torn_tail
            || fs::read(dir.join(TRIALS_FILE)).unwrap() != lines[..k as usize].concat()
        {
            problems.push(format!("{}: bad prefix at {k}", s.name()));
        }

        // damage: torn next record, then also a missing or stale snapshot
        let next = lines[k as usize];
        let mut damaged = fs::read(dir.join(TRIALS_FILE)).unwrap();
        damaged.extend_from_slice(&next[..next.len() / 2]);
        fs::write(dir.join(TRIALS_FILE), damaged).unwrap();
        match (i % 3, stale) {
            (1, _) => fs::remove_file(dir.join(STATE_FILE)).unwrap(),
            (2, Some(Some(old))) => fs::write(dir.join(STATE_FILE), old).unwrap(),
            _ => {}
        }

        let done = run_search_with(&c, &RunOptions::default()).unwrap();
        let ids: Vec<u64> = done.trials.iter().map(|t| t.trial_id).collect();
        if ids != (1..=50).collect::<Vec<_>>() {
            problems.push(format!("{}: resumed ids wrong after {k}", s.name()));
        }
        if fs::read(dir.join(TRIALS_FILE)).unwrap() != reference {
            problems.push(format!("{}: resumed log differs after {k}", s.name()));
        }
    }
    outcome(
        problems.is_empty(),
        format!("interruptions at {points:?} (torn tail, deleted or stale snapshot); problems: {problems:?}"),
    )
}

// 12 -----------------------------------------------------------------------

fn c12_top_k() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let space = SearchSpaceDef::standard();
    let g = sample_uniform(&space, 0).unwrap();
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..80);
        let mut ids: Vec<u64> = (1..=n).collect();
        // log order need not be id order
        for i in (1..ids.len()).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let trials: Vec<TrialRecord> = ids
            .iter()
            .map(|&id| {
                let ok = rng.random::<f64>() < 0.8;
                TrialRecord {
                    trial_id: id,
                    genotype: g.clone(),
                    status: if ok {
                        TrialStatus::Ok
                    } else {
                        TrialStatus::Failed
                    },
                    objective: ok.then(|| f64::from(rng.random_range(0..6u32)) / 10.0),
                    metrics: None,
                    flops: rng.random_range(0..4) * 100,
                    seed: id,
                    fallback: false,
                    message: None,
                    raw: None,
                }
            })
            .collect();
        let k = rng.random_range(1..12);
        let mut oracle: Vec<&TrialRecord> = trials
            .iter()
            .filter(|t| t.status == TrialStatus::Ok)
            .collect();
        oracle.sort_by(|a, b| {
            a.objective
                .unwrap()
                .partial_cmp(&b.objective.unwrap())
                .unwrap()
                .then(a.flops.cmp(&b.flops))
                .then(a.trial_id.cmp(&b.trial_id))
        });
        let want: Vec<u64> = oracle.iter().take(k).map(|t| t.trial_id).collect();
        let got: Vec<u64> = top_k(&trials, k).iter().map(|t| t.trial_id).collect();
        mismatches += usize::from(want != got);
    }
    outcome(
        mismatches == 0,
        format!("100 random runs, {mismatches} mismatches against a full sort"),
    )
}

fn main() {
    let root = tempfile::tempdir().expect("temp dir");
    let root = root.path();
    let mut results = vec![
        criterion(1, "GP posterior vs dense oracle", c1_gp),
        criterion(2, "TPE l/g vs brute-force Parzen", c2_tpe),
        criterion(3, "UCB1 hand arithmetic", c3_ucb),
        criterion(4, "FLOPs vs counting oracle", c4_flops),
        criterion(5, "REINFORCE gradient vs finite differences", c5_reinforce),
    ];
    let search: Vec<(bool, Duration)> = vec![
        criterion(6, "hill climbing and evolution reach the optimum", || {
            c6_reach(root)
        }),
        criterion(7, "every strategy near or better than random", || {
            c7_vs_random(root)
        }),
        criterion(8, "deceptive surrogate exploration", || c8_deceptive(root)),
    ];
    let search_time: Duration = search.iter().map(|r| r.1).sum();
    println!(
        "criteria 6-8 runtime {:.1}s (limit 120s)",
        search_time.as_secs_f64()
    );
    let search_in_time = search_time < Duration::from_secs(120);
    results.extend(search.into_iter().map(|(p, d)| (p && search_in_time, d)));
    results.push(criterion(9, "cross-entropy fixed values", c9_ce));
    results.push(criterion(10, "W=1 determinism", || c10_determinism(root)));
    results.push(criterion(11, "crash and resume", || c11_resume(root)));
    results.push(criterion(12, "top_k vs full sort", c12_top_k));

    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.0)
        .map(|(i, _)| i + 1)
        .collect();
    println!(
        "acceptance: {}/{} passed; failed: {failed:?}",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
