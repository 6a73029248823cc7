//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `MATLDC_ACCEPTANCE=1,4` runs a subset;
//! criterion 9 runs only when `MATLDC_SEED_CSV` names a real feature file.

use std::collections::HashMap;
use std::fmt::Display;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use matldc::dataio::{load_csv, synth_generate, CsvSchema, Dataset, Protocol, SynthConfig};
use matldc::decouple::{ArchConfig, Networks};
use matldc::infer::init_theta;
use matldc::linalg::Matrix;
use matldc::mmd_agg::{aggregate, median_heuristic, mmd2_unbiased, mmd_matrix, partition_objective, KernelConfig};
use matldc::proto::{
    alpha_at, compute_class_prototype, compute_domain_prototype, AlphaSchedule, FreshPrototypes, PrototypeBank,
};
use matldc::trainer::{
    objective, run_protocol, Ablation, LossParts, MiniBatch, Model, OpTrace, RunOptions, RunReport, TermMask,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn err<E: Display>(e: E) -> String {
    e.to_string()
}

fn check(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize, mean: &[f64]) -> Matrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|j| mean[j] + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

// ---------------------------------------------------------------------------
// 1. gradient integrity

const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-3;
const FD_ABS_FLOOR: f64 = 1e-6;
const C1_BUDGET: Duration = Duration::from_secs(10);

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let (f, hidden, k, m, nb) = (8, 8, 2, 2, 4);
    let arch = ArchConfig { hidden, ..Default::default() };
    let cfg = TrainConfig { k, arch, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let nets = Networks::new(f, 2, m, &arch, &mut rng).map_err(err)?;
    let theta = init_theta(hidden, &mut rng);
    let mut model = Model { nets, theta };

    let x = gaussian(&mut rng, nb, f, &[0.0; 8]);
    let subjects = [0, 1, 0, 1];
    let classes = [0, 0, 1, 1];
    let superdomain = [0, 1, 0, 1];
    let xd = gaussian(&mut rng, 8, hidden, &[0.0; 8]);
    let xc = gaussian(&mut rng, 8, hidden, &[0.0; 8]);
    let fresh = FreshPrototypes::compute(&xd, &xc, &[0, 1, 0, 1, 0, 1, 0, 1], &[0, 0, 1, 1, 1, 0, 0, 1], k, m)
        .map_err(err)?;
    let mut bank = PrototypeBank::new(k, m, hidden);
    bank.adaptive_update(&fresh, 0.8, 1).map_err(err)?;

    let batch = MiniBatch { x: &x, subjects: &subjects, classes: &classes, superdomain: &superdomain };
    let eval = |model: &Model<f64>, mask: TermMask| -> (LossParts, Vec<f64>) {
        let mut grads = model.grads();
        // a fixed dropout stream keeps the objective a deterministic function
        let mut drop = ChaCha8Rng::seed_from_u64(5);
        let parts = objective(model, &mut grads, batch, Some(&bank), &cfg, mask, &mut drop, &mut OpTrace::default())
            .expect("objective");
        (parts, grads.flat())
    };
    // Extractor parameters sit below the reversal layer, so their gradient is
    // that of the value with the reversed branch negated and scaled.
    let lambda = cfg.grl_lambda;
    let through_grl = move |p: &LossParts, v: f64| v - (1.0 + lambda) * p.reversed;
    type Pick = fn(&LossParts) -> f64;
    let terms: [(&str, TermMask, Pick, bool); 3] = [
        ("L_FD", TermMask::FD, |p| p.fd, true),
        // the affinity loss on theta is part of the prototype-space term
        ("L_pair", TermMask::PAIR, |p| p.pair + p.aux, false),
        ("total", TermMask::ALL, |p| p.total, true),
    ];
    let n = model.n_params();
    let n_extractor: usize = [&model.nets.f_g, &model.nets.f_d, &model.nets.f_c].iter().map(|n| n.n_params()).sum();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, mask, pick, has_fd) in terms {
        let (_, analytic) = eval(&model, mask);
        for i in 0..n {
            let orig = *model.param_mut(i);
            *model.param_mut(i) = orig + FD_STEP;
            let value = |p: LossParts| if has_fd && i < n_extractor { through_grl(&p, pick(&p)) } else { pick(&p) };
            let up = value(eval(&model, mask).0);
            *model.param_mut(i) = orig - FD_STEP;
            let down = value(eval(&model, mask).0);
            *model.param_mut(i) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let diff = (numeric - analytic[i]).abs();
            let scale = numeric.abs().max(analytic[i].abs());
            let ok = diff <= FD_ABS_FLOOR || diff <= FD_REL_TOL * scale;
            if diff > FD_ABS_FLOOR {
                worst = worst.max(diff / scale);
            }
            if !ok {
                failures.push(format!("{name}[{i}]: analytic {:.3e} numeric {numeric:.3e}", analytic[i]));
            }
        }
    }
    let elapsed = t0.elapsed();
    let detail = format!(
        "3 terms x {n} parameters (5 networks + theta; extractors against the reversal-consistent value), worst rel err {worst:.2e} (tol {FD_REL_TOL:e}, floor {FD_ABS_FLOOR:e}), {:.1}s (< {}s){}",
        elapsed.as_secs_f64(),
        C1_BUDGET.as_secs(),
        if failures.is_empty() { String::new() } else { format!("; {} mismatches, first {}", failures.len(), failures[0]) }
    );
    check(failures.is_empty() && elapsed < C1_BUDGET, detail)
}

// ---------------------------------------------------------------------------
// 2. MMD oracle

const MMD_ORACLE_TOL: f64 = 1e-12;
const MMD_NULL_BAND: f64 = 0.02;
const MMD_GAPS: [f64; 4] = [0.0, 1.0, 2.0, 4.0];

fn naive_mmd2(x: &Matrix<f64>, y: &Matrix<f64>, sigma: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        (-d2 / (2.0 * sigma * sigma)).exp()
    };
    let (n, m) = (x.rows(), y.rows());
    let mut kxx = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                kxx += k(x.row(i), x.row(j));
            }
        }
    }
    let mut kyy = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                kyy += k(y.row(i), y.row(j));
            }
        }
    }
    let mut kxy = 0.0;
    for i in 0..n {
        for j in 0..m {
            kxy += k(x.row(i), y.row(j));
        }
    }
    kxx / (n * (n - 1)) as f64 + kyy / (m * (m - 1)) as f64 - 2.0 * kxy / (n * m) as f64
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(2..=10);
        let d = rng.random_range(1..=8);
        let shift: f64 = rng.random_range(-1.0..1.0);
        let x = gaussian(&mut rng, n, d, &vec![0.0; d]);
        let y = gaussian(&mut rng, m, d, &vec![shift; d]);
        let sigma = rng.random_range(0.3..3.0);
        let got = mmd2_unbiased(&x, &y, sigma).map_err(err)?;
        worst = worst.max((got - naive_mmd2(&x, &y, sigma)).abs());
    }
    let oracle_ok = worst <= MMD_ORACLE_TOL;

    let d = 8;
    let mut null_values = Vec::new();
    let mut monotone = true;
    let mut curves = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = gaussian(&mut rng, 200, d, &vec![0.0; d]);
        let y0 = gaussian(&mut rng, 200, d, &vec![0.0; d]);
        let mut pooled = x.clone();
        pooled.append(&y0).map_err(err)?;
        let sigma = median_heuristic(&pooled, 400);
        null_values.push(mmd2_unbiased(&x, &y0, sigma).map_err(err)?);
        let curve: Vec<f64> = MMD_GAPS
            .iter()
            .map(|&g| {
                let mut mean = vec![0.0; d];
                mean[0] = g;
                let mut r = ChaCha8Rng::seed_from_u64(200 + seed);
                let y = gaussian(&mut r, 200, d, &mean);
                mmd2_unbiased(&x, &y, sigma).unwrap()
            })
            .collect();
        monotone &= curve.windows(2).all(|w| w[1] > w[0]);
        curves.push(curve);
    }
    let null_ok = null_values.iter().all(|v| v.abs() <= MMD_NULL_BAND);
    let mean_curve: Vec<String> = (0..MMD_GAPS.len())
        .map(|i| format!("{:.4}", curves.iter().map(|c| c[i]).sum::<f64>() / curves.len() as f64))
        .collect();
    check(
        oracle_ok && null_ok && monotone,
        format!(
            "50 cases max |diff| {worst:.1e} (tol {MMD_ORACLE_TOL:e}); null estimates {:?} within ±{MMD_NULL_BAND}; \
             gaps {MMD_GAPS:?} mean curve [{}], strictly increasing in every seed: {monotone}",
            null_values.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>(),
            mean_curve.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. aggregation oracle

const AGG_GROUPS: usize = 3;
const AGG_MIN_SEEDS: usize = 4;

fn partitions(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, used: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            if used == k {
                out.push(cur.clone());
            }
            return;
        }
        for b in 0..(used + 1).min(k) {
            cur.push(b);
            rec(n, k, cur, used.max(b + 1), out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), 0, &mut out);
    out
}

fn criterion_3() -> Outcome {
    let mut at_min = 0;
    let mut monotone = true;
    let mut notes = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n = 6 + (seed as usize % 3);
        let d = 6;
        let centers: Vec<Vec<f64>> =
            (0..AGG_GROUPS).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let domains: Vec<Matrix<f64>> = (0..n)
            .map(|i| {
                let mean: Vec<f64> = centers[i % AGG_GROUPS].iter().map(|c| c + rng.random_range(-0.2..0.2)).collect();
                gaussian(&mut rng, 60, d, &mean)
            })
            .collect();
        let m = mmd_matrix(&domains, &KernelConfig::default()).map_err(err)?;
        let a = aggregate(&m, AGG_GROUPS, &mut rng).map_err(err)?;
        let best = partitions(n, AGG_GROUPS)
            .iter()
            .map(|p| partition_objective(&m, p))
            .fold(f64::INFINITY, f64::min);
        let hit = (a.objective - best).abs() <= 1e-12 * best.abs().max(1.0);
        at_min += hit as usize;
        monotone &= a.history.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        notes.push(format!("N={n}:{}", if hit { "min" } else { "miss" }));
    }
    check(
        at_min >= AGG_MIN_SEEDS && monotone,
        format!(
            "exhaustive minimum reached in {at_min}/5 seeds (need {AGG_MIN_SEEDS}) [{}]; objective non-increasing in all runs: {monotone}",
            notes.join(" ")
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. prototype algebra

const PROTO_TOL: f64 = 1e-9;

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (rows, dim, k, m) = (40, 5, 3, 4);
    let mut worst = 0.0f64;
    let mut diff = |a: &[f64], b: &[f64]| {
        for (p, q) in a.iter().zip(b) {
            worst = worst.max((p - q).abs());
        }
    };

    // means
    let x = gaussian(&mut rng, rows, dim, &[1.0; 5]);
    let labels: Vec<usize> = (0..rows).map(|i| i % m).collect();
    let mut oracle = vec![0.0; dim];
    for r in 0..rows {
        for j in 0..dim {
            oracle[j] += x[(r, j)] / rows as f64;
        }
    }
    diff(&compute_domain_prototype(&x).map_err(err)?, &oracle);
    for c in 0..m {
        let mut acc = vec![0.0; dim];
        let mut cnt = 0.0;
        for r in (0..rows).filter(|&r| labels[r] == c) {
            cnt += 1.0;
            for j in 0..dim {
                acc[j] += x[(r, j)];
            }
        }
        let oracle: Vec<f64> = acc.iter().map(|v| v / cnt).collect();
        diff(&compute_class_prototype(&x, &labels, c).ok_or("missing class")?, &oracle);
    }

    // blended updates across epochs with the decaying weight
    let sched = AlphaSchedule { max_epoch: 6, ..Default::default() };
    let mut bank = PrototypeBank::new(k, m, dim);
    let mut od: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut oc: Vec<Vec<Option<Vec<f64>>>> = vec![vec![None; m]; k];
    for t in 1..=sched.max_epoch {
        let xd = gaussian(&mut rng, rows, dim, &[0.0; 5]);
        let xc = gaussian(&mut rng, rows, dim, &[0.0; 5]);
        let sd: Vec<usize> = (0..rows).map(|i| (i / 2) % k).collect();
        let fresh = FreshPrototypes::compute(&xd, &xc, &sd, &labels, k, m).map_err(err)?;
        let alpha = alpha_at(t, &sched).map_err(err)?;
        bank.adaptive_update(&fresh, alpha, t).map_err(err)?;
        let blend = |old: &Option<Vec<f64>>, new: &[f64]| -> Vec<f64> {
            match old {
                None => new.to_vec(),
                Some(o) => o.iter().zip(new).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect(),
            }
        };
        for s in 0..k {
            let idx: Vec<usize> = (0..rows).filter(|&i| sd[i] == s).collect();
            let mean = |mat: &Matrix<f64>, ids: &[usize]| -> Vec<f64> {
                (0..dim).map(|j| ids.iter().map(|&i| mat[(i, j)]).sum::<f64>() / ids.len() as f64).collect()
            };
            od[s] = Some(blend(&od[s], &mean(&xd, &idx)));
            for c in 0..m {
                let ids: Vec<usize> = idx.iter().copied().filter(|&i| labels[i] == c).collect();
                if !ids.is_empty() {
                    oc[s][c] = Some(blend(&oc[s][c], &mean(&xc, &ids)));
                }
            }
        }
    }
    for s in 0..k {
        diff(bank.mu_d[s].as_ref().ok_or("uninitialized")?, od[s].as_ref().unwrap());
        for c in 0..m {
            match (&bank.mu_c[s][c], &oc[s][c]) {
                (Some(a), Some(b)) => diff(a, b),
                (None, None) => {}
                _ => return Err(format!("class slot ({s}, {c}) initialization differs")),
            }
        }
    }

    let d = AlphaSchedule::default();
    let (a0, a_mid, a_max) = (
        alpha_at(0, &d).map_err(err)?,
        alpha_at(d.max_epoch / 2, &d).map_err(err)?,
        alpha_at(d.max_epoch, &d).map_err(err)?,
    );
    let alpha_ok = (a0 - 0.8).abs() < PROTO_TOL && (a_mid - 0.35).abs() < PROTO_TOL && (a_max - 0.2).abs() < PROTO_TOL;
    check(
        worst <= PROTO_TOL && alpha_ok,
        format!(
            "means and {}-epoch blended prototypes vs oracles max |diff| {worst:.1e} (tol {PROTO_TOL:e}); \
             alpha(0)={a0}, alpha({})={a_mid:.4}, alpha({})={a_max}",
            sched.max_epoch,
            d.max_epoch / 2,
            d.max_epoch
        ),
    )
}

// ---------------------------------------------------------------------------
// Synthetic benchmark shared by 5-8

const BENCH_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BENCH_EPOCHS: usize = 10;
const BENCH_K: usize = 3;

fn bench_data(seed: u64) -> Dataset<f32> {
    synth_generate(&SynthConfig {
        n_subjects: 6,
        n_groups: Some(3),
        n_classes: 3,
        n_features: 32,
        per_class_count: 200,
        group_class_variation: 1.0,
        seed,
        ..Default::default()
    })
    .expect("benchmark data")
}

fn bench_cfg(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig { k: BENCH_K, max_epoch: BENCH_EPOCHS, seed, ..Default::default() };
    cfg.kernel.max_rows_per_domain = Some(200);
    cfg.kernel.median_sample = 600;
    cfg
}

#[derive(Default)]
struct Ledger {
    cache: HashMap<String, RunReport>,
    folds: usize,
    target_reads: usize,
}

static RUNS: Mutex<Option<Ledger>> = Mutex::new(None);

/// Protocol run on benchmark seed `seed`, memoized by config.
fn bench_run(seed: u64, cfg: &TrainConfig) -> RunReport {
    let key = format!("{seed}:{}", serde_json::to_string(cfg).unwrap());
    if let Some(r) = RUNS.lock().unwrap().get_or_insert_with(Ledger::default).cache.get(&key) {
        return r.clone();
    }
    let report = run_protocol(&bench_data(seed), Protocol::SingleSession, cfg, RunOptions::default())
        .expect("benchmark protocol run");
    let mut guard = RUNS.lock().unwrap();
    let ledger = guard.get_or_insert_with(Ledger::default);
    ledger.folds += report.folds.len();
    ledger.target_reads += report.target_reads_before_eval();
    ledger.cache.insert(key, report.clone());
    report
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn seed_mean(f: impl Fn(u64) -> f64) -> f64 {
    mean(&BENCH_SEEDS.iter().map(|&s| f(s)).collect::<Vec<_>>())
}

// ---------------------------------------------------------------------------
// 5. end-to-end benchmark

const E2E_MIN_ACC: f64 = 0.90;
const E2E_MIN_GAP: f64 = 0.15;
const E2E_BUDGET: Duration = Duration::from_secs(300);

fn criterion_5() -> Outcome {
    let t0 = Instant::now();
    let full = seed_mean(|s| bench_run(s, &bench_cfg(s)).accuracy.mean);
    let ablated = seed_mean(|s| {
        bench_run(s, &bench_cfg(s).with_disabled([Ablation::Aggregation, Ablation::Pairwise])).accuracy.mean
    });
    let elapsed = t0.elapsed();
    let gap = full - ablated;
    check(
        full >= E2E_MIN_ACC && gap >= E2E_MIN_GAP && elapsed < E2E_BUDGET,
        format!(
            "5-seed mean accuracy {:.2}% (need >= {:.0}%), disable-aggregation+pointwise {:.2}%, gap {:.2} points (need >= {:.0}); {:.0}s (< {}s)",
            100.0 * full,
            100.0 * E2E_MIN_ACC,
            100.0 * ablated,
            100.0 * gap,
            100.0 * E2E_MIN_GAP,
            elapsed.as_secs_f64(),
            E2E_BUDGET.as_secs()
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. noise robustness direction

const NOISE_ETAS: [f64; 5] = [0.0, 0.05, 0.1, 0.2, 0.3];
const NOISE_MONOTONE_SLACK: f64 = 0.01;

fn criterion_6() -> Outcome {
    let mut point = Vec::new();
    let mut pair = Vec::new();
    for &eta in &NOISE_ETAS {
        let cfg = |s: u64| TrainConfig { label_noise: eta, ..bench_cfg(s) };
        pair.push(seed_mean(|s| bench_run(s, &cfg(s)).accuracy.mean));
        point.push(seed_mean(|s| bench_run(s, &cfg(s).with_disabled([Ablation::Pairwise])).accuracy.mean));
    }
    let last = NOISE_ETAS.len() - 1;
    let drop_point = point[0] - point[last];
    let drop_pair = pair[0] - pair[last];
    let half_ok = drop_pair <= 0.5 * drop_point;
    let monotone = pair.windows(2).all(|w| w[1] <= w[0] + NOISE_MONOTONE_SLACK);
    let fmt = |v: &[f64]| v.iter().map(|a| format!("{:.2}", 100.0 * a)).collect::<Vec<_>>().join("/");
    check(
        half_ok && monotone,
        format!(
            "etas {NOISE_ETAS:?}: pointwise {} pairwise {}; drop at 0.3 pairwise {:.2} vs pointwise {:.2} points (need <= half); \
             pairwise non-increasing within ±{:.0} point: {monotone}",
            fmt(&point),
            fmt(&pair),
            100.0 * drop_pair,
            100.0 * drop_point,
            100.0 * NOISE_MONOTONE_SLACK
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. K-sweep shape

const K_VALUES: [usize; 6] = [1, 2, 3, 4, 5, 6];
const K_PEAK: usize = 3;
const K_MARGIN: f64 = 0.01;

fn criterion_7() -> Outcome {
    let acc: Vec<f64> = K_VALUES
        .iter()
        .map(|&k| seed_mean(|s| bench_run(s, &TrainConfig { k, ..bench_cfg(s) }).accuracy.mean))
        .collect();
    let at = |k: usize| acc[K_VALUES.iter().position(|&v| v == k).unwrap()];
    let peak = at(K_PEAK);
    let is_peak = acc.iter().all(|&a| a <= peak);
    let ends_ok = peak - at(1) >= K_MARGIN && peak - at(6) >= K_MARGIN;
    check(
        is_peak && ends_ok,
        format!(
            "K {K_VALUES:?} -> [{}]; peak at K={K_PEAK}: {is_peak}; drop to K=1 {:.2} and K=6 {:.2} points (need >= {:.0}); \
             K=6 runs with 5 superdomains since each fold has 5 source subjects",
            acc.iter().map(|a| format!("{:.2}", 100.0 * a)).collect::<Vec<_>>().join(", "),
            100.0 * (peak - at(1)),
            100.0 * (peak - at(6)),
            100.0 * K_MARGIN
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. target-unseen audit

fn criterion_8() -> Outcome {
    let (folds, reads) = {
        let guard = RUNS.lock().unwrap();
        guard.as_ref().map_or((0, 0), |l| (l.folds, l.target_reads))
    };
    let (folds, reads) = if folds == 0 {
        let r = bench_run(0, &TrainConfig { max_epoch: 2, ..bench_cfg(0) });
        (r.folds.len(), r.target_reads_before_eval())
    } else {
        (folds, reads)
    };
    check(
        reads == 0 && folds > 0,
        format!("{folds} folds audited across every protocol run of this suite; target reads before evaluation: {reads}"),
    )
}

// ---------------------------------------------------------------------------
// 9. real-feature gate

const REAL_MIN_ACC: f64 = 0.78;

fn criterion_9() -> Option<Outcome> {
    let path = std::env::var("MATLDC_SEED_CSV").ok()?;
    let run = || -> Outcome {
        let ds: Dataset<f64> = load_csv(&path, &CsvSchema::default()).map_err(err)?;
        let r = run_protocol(&ds, Protocol::SingleSession, &TrainConfig::default(), RunOptions::default())
            .map_err(err)?;
        check(
            r.accuracy.mean >= REAL_MIN_ACC,
            format!("{} (need mean >= {:.0}%)", r.table_line("matldc"), 100.0 * REAL_MIN_ACC),
        )
    };
    Some(run())
}

// ---------------------------------------------------------------------------

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let only: Option<Vec<u32>> = std::env::var("MATLDC_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |id: u32| only.as_ref().is_none_or(|o| o.contains(&id));
    let criteria: [Criterion; 8] = [
        (1, "gradient integrity", criterion_1),
        (2, "MMD oracle", criterion_2),
        (3, "aggregation oracle", criterion_3),
        (4, "prototype algebra", criterion_4),
        (5, "end-to-end synthetic benchmark", criterion_5),
        (6, "noise robustness direction", criterion_6),
        (7, "K-sweep shape", criterion_7),
        (8, "target-unseen audit", criterion_8),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !wanted(id) {
            continue;
        }
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("[PASS] {id}. {name} ({secs:.1}s): {d}"),
            Err(d) => {
                println!("[FAIL] {id}. {name} ({secs:.1}s): {d}");
                failed.push(id);
            }
        }
    }
    if wanted(9) {
        match criterion_9() {
            None => println!("[SKIP] 9. real-feature gate: set MATLDC_SEED_CSV to a feature CSV to run it"),
            Some(Ok(d)) => println!("[PASS] 9. real-feature gate: {d}"),
            Some(Err(d)) => {
                println!("[FAIL] 9. real-feature gate: {d}");
                failed.push(9);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
