//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use dpmnl_core::accountant::{Charge, ZcdpBudget};
use dpmnl_core::mle::{nll_eval, record_eval, solve_perturbed_mle, InteractionLog, PerturbationParams, SolverOptions};
use dpmnl_core::mnl::{best_assortment, AssortmentSearch, ModelParameter};
use dpmnl_core::tree::{cov_noise_variance, gram_of, sensitivity_bound, AggregationTree, CovBudget};
use dpmnl_sim::config::{ArmKind, ArmSpec, ExperimentConfig};
use dpmnl_sim::results::{emit, pooled_se, RAW_FILE};
use dpmnl_sim::{run_experiment, ResultsTable, Stats};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, n: u32, pass: bool, detail: impl AsRef<str>) {
        println!("{} criterion {n}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        if !pass {
            self.failed.push(n);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn unit_ball(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let r = rng.random::<f64>().powf(1.0 / d as f64);
    v.into_iter().map(|a| a * r / n).collect()
}

fn zcdp_arm(rho: f64, f: f64, k: usize) -> ArmSpec {
    ArmSpec {
        label: format!("zcdp_rho{rho}_mle{f}_K{k}"),
        kind: ArmKind::Zcdp,
        rho_total: rho,
        mle_fraction: f,
        k,
    }
}

fn eps_arm(rho: f64) -> ArmSpec {
    ArmSpec {
        label: format!("eps-delta_rho{rho}_mle0.9_K10"),
        kind: ArmKind::EpsDelta,
        rho_total: rho,
        mle_fraction: 0.9,
        k: 10,
    }
}

const Z01: usize = 0;
const Z05: usize = 1;
const Z1: usize = 2;
const E05: usize = 3;
const E1: usize = 4;
const Z1_LOW: usize = 5;
const OFF: usize = 6;
const Z01_K5: usize = 7;
const Z01_K15: usize = 8;

fn main_arms() -> Vec<ArmSpec> {
    vec![
        zcdp_arm(0.1, 0.9, 10),
        zcdp_arm(0.5, 0.9, 10),
        zcdp_arm(1.0, 0.9, 10),
        eps_arm(0.5),
        eps_arm(1.0),
        zcdp_arm(1.0, 0.1, 10),
        ArmSpec {
            label: "noise-off_K10".into(),
            kind: ArmKind::NoiseOff,
            rho_total: 1.0,
            mle_fraction: 0.9,
            k: 10,
        },
        zcdp_arm(0.1, 0.9, 5),
        zcdp_arm(0.1, 0.9, 15),
    ]
}

fn describe(res: &ResultsTable, arm: usize) -> String {
    let s = res.final_stats(arm);
    format!("{} {:.2}±{:.2}", res.arms[arm].label, s.mean, s.se)
}

/// `a` beats `b` (lower regret) by more than one pooled standard error.
fn lower_by_se(res: &ResultsTable, a: usize, b: usize) -> (bool, String) {
    let sa = res.final_stats(a);
    let sb = res.final_stats(b);
    let se = pooled_se(&sa, &sb);
    (sb.mean - sa.mean > se, format!("gap {:.2} vs se {:.2}", sb.mean - sa.mean, se))
}

fn regret_criteria(gate: &mut Gate, res: &ResultsTable) {
    let (a, ga) = lower_by_se(res, Z05, Z01);
    let (b, gb) = lower_by_se(res, Z1, Z05);
    gate.report(
        1,
        a && b,
        format!(
            "{} > {} > {}; rho 0.1 vs 0.5 {ga}; 0.5 vs 1 {gb}",
            describe(res, Z01),
            describe(res, Z05),
            describe(res, Z1)
        ),
    );

    let (ok, g) = lower_by_se(res, Z1, Z1_LOW);
    gate.report(2, ok, format!("{} vs {}; {g}", describe(res, Z1), describe(res, Z1_LOW)));

    let (a, ga) = lower_by_se(res, Z05, E05);
    let (b, gb) = lower_by_se(res, Z1, E1);
    gate.report(
        3,
        a && b,
        format!(
            "{} vs {} ({ga}); {} vs {} ({gb})",
            describe(res, Z05),
            describe(res, E05),
            describe(res, Z1),
            describe(res, E1)
        ),
    );

    let half = res.horizon / 2;
    let first = res.mean_window(OFF, 0, half);
    let second = res.mean_window(OFF, half, res.horizon);
    gate.report(
        4,
        second <= 0.8 * first,
        format!("per-round regret first half {first:.5}, second half {second:.5}, ratio {:.3}", second / first),
    );

    let order = [Z01_K5, Z01, Z01_K15];
    let stats: Vec<Stats> = order.iter().map(|&a| res.final_stats(a)).collect();
    let mut inversions = 0;
    let mut within = true;
    for w in stats.windows(2) {
        if w[1].mean > w[0].mean {
            inversions += 1;
            within &= w[1].mean - w[0].mean <= pooled_se(&w[0], &w[1]);
        }
    }
    gate.report(
        5,
        inversions == 0 || (inversions == 1 && within),
        format!(
            "K=5 {:.2}±{:.2}, K=10 {:.2}±{:.2}, K=15 {:.2}±{:.2}; {inversions} inversion(s)",
            stats[0].mean, stats[0].se, stats[1].mean, stats[1].se, stats[2].mean, stats[2].se
        ),
    );
}

fn calibration_identities(gate: &mut Gate) {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for d in [1usize, 2, 3, 5, 8, 13] {
        for k in [1usize, 2, 3, 5, 10, 15, 30] {
            for rho in [1e-3, 1e-2, 0.1, 0.5, 1.0, 5.0, 50.0] {
                for q in [0.1, 0.25, 0.5, 0.75, 0.9] {
                    let p = PerturbationParams::calibrate_zcdp(rho, d, k, q).unwrap();
                    let r = d.min(k.saturating_sub(1)).max(1) as f64;
                    let df = d as f64;
                    let ridge = 4.0 / ((1.0 - q) * rho / r).exp_m1();
                    let sigma = 2.0 * ((df + 2.0 * q * rho).sqrt() + df.sqrt()) / (q * rho);
                    worst = worst.max(rel(p.ridge, ridge)).max(rel(p.sigma, sigma));
                    cases += 1;
                }
            }
        }
    }
    for k in [1usize, 5, 10, 15, 40] {
        for horizon in [1usize, 7, 1000, 1024, 20_000, 1 << 20] {
            for rho in [1e-3, 0.1, 1.0, 9.0] {
                let m = (usize::BITS - horizon.leading_zeros()) as f64;
                let var = cov_noise_variance(k, horizon, CovBudget::Zcdp(ZcdpBudget::new(rho).unwrap())).unwrap();
                worst = worst.max(rel(var, k as f64 * m / rho));
                cases += 1;
            }
        }
    }
    gate.report(6, worst <= 1e-10, format!("{cases} cases, worst relative error {worst:.2e}"));
}

fn outer_sum(d: usize, items: &[Vec<f64>]) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, d);
    for x in items {
        for i in 0..d {
            for j in 0..d {
                g[(i, j)] += x[i] * x[j];
            }
        }
    }
    g
}

fn brute_force(z: &[f64], k: usize) -> Vec<usize> {
    let n = z.len();
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > k {
            continue;
        }
        let w: f64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| z[i].exp()).sum();
        let rev = w / (1.0 + w);
        if rev > best.0 {
            best = (rev, (0..n).filter(|i| mask >> i & 1 == 1).collect());
        }
    }
    best.1
}

fn random_log(d: usize, records: usize, max_size: usize, rng: &mut ChaCha8Rng) -> InteractionLog {
    let mut log = InteractionLog::new(d);
    for _ in 0..records {
        let size = rng.random_range(1..=max_size);
        let items: Vec<Vec<f64>> = (0..size).map(|_| unit_ball(d, rng)).collect();
        let refs: Vec<&[f64]> = items.iter().map(|v| v.as_slice()).collect();
        log.push_items(&refs, rng.random_range(0..=size)).unwrap();
    }
    log
}

fn oracle_equivalences(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let mut notes = Vec::new();
    let mut ok = true;

    // (a) dyadic features keep every partial sum exact, so equality is bitwise.
    let d = 3;
    let mut exact = true;
    for _ in 0..50 {
        let mut tree = AggregationTree::noiseless(d, 64).unwrap();
        let mut prefix = DMatrix::zeros(d, d);
        for _ in 1..=64 {
            let n = rng.random_range(1..=10);
            let items: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..d).map(|_| rng.random_range(-16i32..=16) as f64 / 16.0).collect())
                .collect();
            let g = outer_sum(d, &items);
            prefix += &g;
            tree.update(&g, &mut rng).unwrap();
            exact &= tree.raw_sum().unwrap() == prefix;
        }
    }
    notes.push(format!("(a) tree exact {exact}"));
    ok &= exact;

    // (b)
    let mut mismatches = 0;
    let mut total = 0;
    for n in 1..=12 {
        for _ in 0..100 {
            let k = rng.random_range(1..=n);
            let z: Vec<f64> = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
            let fast = best_assortment(&z, &vec![1.0; n], k, AssortmentSearch::default()).unwrap();
            if fast.indices() != brute_force(&z, k).as_slice() {
                mismatches += 1;
            }
            total += 1;
        }
    }
    notes.push(format!("(b) top-K mismatches {mismatches}/{total}"));
    ok &= mismatches == 0;

    // (c)
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(1..=6);
        let log = random_log(d, rng.random_range(1..=20), 8, &mut rng);
        let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = nll_eval(&log, &ModelParameter::from_slice(&theta)).unwrap().gradient;
        let h = 1e-5;
        let fd = DVector::from_fn(d, |j, _| {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let f = |t: &[f64]| nll_eval(&log, &ModelParameter::from_slice(t)).unwrap().value;
            (f(&up) - f(&dn)) / (2.0 * h)
        });
        worst = worst.max((&g - fd).norm() / g.norm().max(1.0));
    }
    notes.push(format!("(c) gradient vs finite differences worst {worst:.2e}"));
    ok &= worst <= 1e-5;

    // (d)
    let options = SolverOptions::default();
    let mut worst: f64 = 0.0;
    let mut unsolved = 0;
    for case in 0..30 {
        let d = 5;
        let log = random_log(d, 300, 10, &mut rng);
        let rho = [0.0145, 0.1, 1.0][case % 3];
        let params = PerturbationParams::calibrate_zcdp(rho, d, 10, 0.5).unwrap();
        match solve_perturbed_mle(&log, &params, &mut rng, None, &options) {
            Ok(res) => {
                let eval = nll_eval(&log, &res.theta_hat).unwrap();
                let recovered = -(eval.gradient + &res.theta_hat.0 * params.ridge);
                worst = worst.max((recovered - &res.noise).norm());
            }
            Err(_) => unsolved += 1,
        }
    }
    notes.push(format!("(d) stationarity worst {worst:.2e}, non-converged {unsolved}"));
    ok &= unsolved == 0 && worst <= 10.0 * options.tolerance;

    // (e)
    let (mut grad_bad, mut eig_bad, mut rank_bad, mut cases) = (0, 0, 0, 0);
    let mut rank_bad_k_le_d = 0;
    for d in 1..=6 {
        for k in 1..=8 {
            for _ in 0..20 {
                let mut log = InteractionLog::new(d);
                let items: Vec<Vec<f64>> = (0..k).map(|_| unit_ball(d, &mut rng)).collect();
                let refs: Vec<&[f64]> = items.iter().map(|v| v.as_slice()).collect();
                log.push_items(&refs, rng.random_range(0..=k)).unwrap();
                let theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let e = record_eval(log.record(0), &ModelParameter::from_slice(&theta));
                let eig = SymmetricEigen::new(e.hessian).eigenvalues;
                let top = eig.max();
                let tol = top.max(0.0) * d as f64 * f64::EPSILON;
                let rank = eig.iter().filter(|&&v| v > tol).count();
                grad_bad += (e.gradient.norm() > 2.0 + 1e-12) as usize;
                eig_bad += (top > 4.0 + 1e-12) as usize;
                if rank > d.min(k - 1) {
                    rank_bad += 1;
                    rank_bad_k_le_d += (k <= d) as usize;
                }
                cases += 1;
            }
        }
    }
    notes.push(format!(
        "(e) {cases} cases: gradient > 2 in {grad_bad}, eigenvalue > 4 in {eig_bad}, \
         rank > min(d, K-1) in {rank_bad} ({rank_bad_k_le_d} with K <= d)"
    ));
    ok &= grad_bad == 0 && eig_bad == 0 && rank_bad == 0;

    gate.report(7, ok, notes.join("; "));
}

fn sensitivity(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(83);
    let mut worst_ratio: f64 = 0.0;
    let mut worst_at = (0, 0);
    let mut over = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=15);
        let d = rng.random_range(1..=10);
        let a: Vec<Vec<f64>> = (0..k).map(|_| unit_ball(d, &mut rng)).collect();
        let b: Vec<Vec<f64>> = (0..k).map(|_| unit_ball(d, &mut rng)).collect();
        let gap = (outer_sum(d, &a) - outer_sum(d, &b)).norm();
        let ratio = gap / sensitivity_bound(k);
        over += (ratio > 1.0) as usize;
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_at = (d, k);
        }
    }
    let mut tight: f64 = f64::INFINITY;
    for k in 1..=15 {
        let d = 2 * k;
        let e = |i: usize| (0..d).map(|j| (i == j) as u8 as f64).collect::<Vec<_>>();
        let a: Vec<Vec<f64>> = (0..k).map(e).collect();
        let b: Vec<Vec<f64>> = (k..2 * k).map(e).collect();
        let gap = (gram_of(d, a.iter().map(|v| v.as_slice())) - gram_of(d, b.iter().map(|v| v.as_slice()))).norm();
        tight = tight.min(gap / sensitivity_bound(k));
    }
    gate.report(
        8,
        worst_ratio <= 1.0 && tight >= 0.999,
        format!(
            "{over}/10000 random draws exceed sqrt(2K), worst {worst_ratio:.3}x at d = {}, K = {}; \
             orthonormal construction reaches {tight:.6}",
            worst_at.0, worst_at.1
        ),
    );
    let k = 10;
    let x = [1.0, 0.0];
    let y = [0.0, 1.0];
    let gap = (gram_of(2, std::iter::repeat_n(&x[..], k)) - gram_of(2, std::iter::repeat_n(&y[..], k))).norm();
    println!(
        "  info: {k} copies of e1 vs {k} copies of e2 differ by {gap:.3}, above sqrt(2K) = {:.3}",
        sensitivity_bound(k)
    );
}

fn accounting(gate: &mut Gate, cfg: &ExperimentConfig, res: &ResultsTable) {
    let mut bad = Vec::new();
    for r in &res.runs {
        let arm = &res.arms[r.arm];
        if r.mle_calls > r.mle_cap {
            bad.push(format!("{} rep {}: {} calls > cap {}", arm.label, r.replicate, r.mle_calls, r.mle_cap));
        }
        match arm.kind {
            ArmKind::Zcdp => {
                let rho1 = arm.rho_total * arm.mle_fraction;
                let rho2 = arm.rho_total - rho1;
                let expect = r.mle_calls as f64 * rho1 / r.mle_cap as f64 + rho2;
                let total = r.ledger.last().map_or(0.0, |e| e.cumulative);
                if rel(total, expect) > 1e-12 || !r.ledger.iter().all(|e| matches!(e.charge, Charge::Zcdp(_))) {
                    bad.push(format!("{} rep {}: ledger {total} vs {expect}", arm.label, r.replicate));
                }
            }
            ArmKind::EpsDelta => {
                if r.ledger.len() != r.mle_calls + 1 {
                    bad.push(format!("{} rep {}: {} ledger rows", arm.label, r.replicate, r.ledger.len()));
                }
            }
            _ => {
                if !r.ledger.is_empty() {
                    bad.push(format!("{} rep {}: noise-free arm charged", arm.label, r.replicate));
                }
            }
        }
    }

    let mut small = cfg.clone();
    small.horizon = 2000;
    small.replicates = 3;
    small.write_raw = true;
    let arms = vec![main_arms()[Z05].clone(), main_arms()[E1].clone(), main_arms()[OFF].clone()];
    let bytes = || {
        let dir = tempfile::tempdir().unwrap();
        let res = run_experiment(&small, arms.clone()).unwrap();
        emit(&res, &small, dir.path()).unwrap();
        std::fs::read(dir.path().join(RAW_FILE)).unwrap()
    };
    let identical = bytes() == bytes();
    let calls: Vec<usize> = res.runs.iter().map(|r| r.mle_calls).collect();
    gate.report(
        9,
        bad.is_empty() && identical,
        format!(
            "{} runs checked, {} violations, MLE calls {}..={}, raw.csv byte-identical on rerun: {identical}{}",
            res.runs.len(),
            bad.len(),
            calls.iter().min().unwrap(),
            calls.iter().max().unwrap(),
            bad.first().map(|b| format!("; first: {b}")).unwrap_or_default()
        ),
    );
}

fn main() -> ExitCode {
    let mut gate = Gate { failed: Vec::new() };
    let mut cfg = ExperimentConfig::default();
    cfg.write_raw = false;
    let started = Instant::now();
    let res = run_experiment(&cfg, main_arms()).expect("experiment runs");
    let elapsed = started.elapsed();
    println!(
        "  info: {} arms x {} replicates, T = {}, T0 = {}, {:.0} s",
        res.arms.len(),
        cfg.replicates,
        cfg.horizon,
        cfg.resolved_t0(),
        elapsed.as_secs_f64()
    );
    for r in res.failures() {
        println!("  info: {} replicate {} failed: {}", res.arms[r.arm].label, r.replicate, r.error.as_deref().unwrap_or(""));
    }
    let mle_failures: usize = res.runs.iter().map(|r| r.mle_failures).sum();
    let reshifts: usize = res.runs.iter().map(|r| r.reshifts).sum();
    println!("  info: {mle_failures} MLE non-convergence warnings, {reshifts} emergency re-shifts");

    regret_criteria(&mut gate, &res);
    calibration_identities(&mut gate);
    oracle_equivalences(&mut gate);
    sensitivity(&mut gate);
    accounting(&mut gate, &cfg, &res);

    if gate.failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {:?}", gate.failed);
        ExitCode::FAILURE
    }
}
