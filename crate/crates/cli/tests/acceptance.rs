//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

#[path = "../../core/tests/common/quadrature.rs"]
mod quadrature;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use parni_cli::config::RunConfig;
use parni_cli::runner;
use parni_core::hyper::{log_density_log_g, update_g, AdaptiveRwState};
use parni_core::marglik::{da_gibbs_sweep, log_marglik_ala, log_marglik_cpm, log_marglik_la, CpmAuxiliary};
use parni_core::model::{eta_derivatives, log_likelihood_eta, log_model_prior};
use parni_core::numerics::{newton_one_step, newton_one_step_irls};
use parni_core::polya_gamma::sample_pg1;
use parni_core::{
    chain_rng, enumerate_exact, run_chain, sim, AcceptanceEstimator, ChainConfig, Dataset, MarglikResult, Method,
    ModelIndicator, ModelKind, ModelPrior, PriorConfig, ProposalEstimator, SamplerKind, SimConfig,
};
use quadrature::{batch_mean_se, gauss_hermite, log_integral_1d, mean_se, trapezoid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const KINDS: [ModelKind; 3] = [ModelKind::Logistic, ModelKind::CoxPartial, ModelKind::Weibull];

type Check = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn shape_for(kind: ModelKind) -> Option<f64> {
    (kind == ModelKind::Weibull).then_some(1.3)
}

/// Small standardised data set of the given kind.
fn small_data(kind: ModelKind, n: usize, p: usize, seed: u64) -> Dataset {
    let cfg = SimConfig {
        n,
        p,
        kind,
        ..Default::default()
    };
    sim::simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(seed))
        .unwrap()
        .standardized()
        .unwrap()
}

fn random_model(p: usize, rng: &mut impl Rng) -> ModelIndicator {
    ModelIndicator::from_bits((0..p).map(|_| rng.random::<f64>() < 0.4).collect())
}

/// Logistic data with n = 150, p = 8 and three strong signals.
fn p8_fixture() -> Dataset {
    let cfg = SimConfig {
        n: 150,
        p: 8,
        beta: Some(vec![2.0, -3.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ..Default::default()
    };
    sim::gen_logistic(&cfg, &mut ChaCha8Rng::seed_from_u64(2024))
        .unwrap()
        .standardized()
        .unwrap()
}

fn long_chain(sampler: SamplerKind, proposal: ProposalEstimator, acceptance: AcceptanceEstimator) -> ChainConfig {
    ChainConfig {
        sampler,
        proposal,
        acceptance,
        iterations: 50_000,
        burn_in: 5_000,
        keep: Some(1_000),
        ..Default::default()
    }
}

fn exact_recovery() -> Outcome {
    let data = p8_fixture();
    let prior = PriorConfig::default();
    let exact = enumerate_exact(&data, &prior, None, 8).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, sampler) in [("PARNI", SamplerKind::Parni), ("ADS", SamplerKind::Ads)] {
        let cfg = long_chain(sampler, ProposalEstimator::La, AcceptanceEstimator::La);
        let out = run_chain(&data, &prior, &cfg, &mut chain_rng(1, 0)).unwrap();
        let err = max_abs_diff(&out.pip, &exact.pip);
        let secs = out.elapsed.as_secs_f64();
        pass &= err < 0.02 && secs <= 120.0;
        parts.push(format!("{name} max err {err:.4} in {secs:.1}s"));
    }
    outcome(pass, parts.join(", "))
}

fn ala_equals_la_at_mode() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (i, kind) in KINDS.into_iter().enumerate() {
        let data = small_data(kind, 100, 10, 20 + i as u64);
        let prior = PriorConfig::default();
        for _ in 0..20 {
            let gamma = random_model(10, &mut rng);
            let la = log_marglik_la(&data, &gamma, &prior, None, shape_for(kind)).unwrap();
            let mode = la.theta_hat.clone().unwrap();
            let ala = log_marglik_ala(&data, &gamma, &prior, &mode, shape_for(kind)).unwrap();
            worst = worst.max((ala.log_value - la.log_value).abs());
        }
    }
    outcome(worst < 1e-8, format!("max |ALA - LA| = {worst:.2e} over 60 models"))
}

fn derivative_check() -> Outcome {
    let n = 40;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (i, kind) in KINDS.into_iter().enumerate() {
        let data = small_data(kind, n, 3, 30 + i as u64);
        let shape = shape_for(kind);
        let ll = |eta: &DVector<f64>| log_likelihood_eta(&data, eta, shape).unwrap();
        let grad = |eta: &DVector<f64>| -eta_derivatives(&data, eta, shape).unwrap().y_tilde;
        for _ in 0..10 {
            let eta = DVector::from_fn(n, |_, _| 0.7 * rng.sample::<f64, _>(StandardNormal));
            let der = eta_derivatives(&data, &eta, shape).unwrap();
            let g = -der.y_tilde.clone();
            let hess = -der.w.to_dense();
            let mut g_fd = DVector::zeros(n);
            let mut h_fd = DMatrix::zeros(n, n);
            for l in 0..n {
                let mut up = eta.clone();
                let mut dn = eta.clone();
                up[l] += h;
                dn[l] -= h;
                g_fd[l] = (ll(&up) - ll(&dn)) / (2.0 * h);
                h_fd.set_column(l, &((grad(&up) - grad(&dn)) / (2.0 * h)));
            }
            worst = worst
                .max((&g_fd - &g).norm() / g.norm())
                .max((&h_fd - &hess).norm() / hess.norm());
        }
    }
    outcome(worst < 1e-5, format!("max relative error {worst:.2e} over 30 points"))
}

fn newton_vs_irls() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (i, kind) in KINDS.into_iter().enumerate() {
        for r in 0..20 {
            let data = small_data(kind, 60, 8, 100 * i as u64 + r);
            let gamma = random_model(8, &mut rng);
            let d = data.dim(&gamma);
            let theta0 = DVector::from_fn(d, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
            let prior = PriorConfig::default();
            let a = newton_one_step(&data, &gamma, &prior, &theta0, shape_for(kind)).unwrap();
            let b = newton_one_step_irls(&data, &gamma, &prior, &theta0, shape_for(kind)).unwrap();
            let scale = 1.0 + a.amax();
            worst = worst.max((a - b).amax() / scale);
        }
    }
    outcome(worst < 1e-10, format!("max scaled difference {worst:.2e} over 60 instances"))
}

fn polya_gamma_moments() -> Outcome {
    let draws = 100_000;
    let t = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_z: f64 = 0.0;
    let mut parts = Vec::new();
    for z in [0.0f64, 1.0, 2.0, 4.0] {
        let xs: Vec<f64> = (0..draws).map(|_| sample_pg1(z, &mut rng).value()).collect();
        let target = if z == 0.0 { 0.25 } else { (z / 2.0).tanh() / (2.0 * z) };
        let (m, se) = mean_se(&xs);
        let lt: Vec<f64> = xs.iter().map(|w| (-t * w).exp()).collect();
        let lt_target = (z / 2.0).cosh() / (z * z / 4.0 + t / 2.0).sqrt().cosh();
        let (ml, sel) = mean_se(&lt);
        let zm = (m - target).abs() / se;
        let zl = (ml - lt_target).abs() / sel;
        worst_z = worst_z.max(zm).max(zl);
        parts.push(format!("z={z}: {zm:.1}/{zl:.1} SE"));
    }
    outcome(worst_z < 4.0, format!("mean/Laplace deviations {}", parts.join(", ")))
}

fn da_correctness() -> Outcome {
    // Geweke: prior draws of theta versus a successive-conditional chain that
    // alternates Gibbs sweeps with fresh responses.
    let n = 30;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = DMatrix::from_fn(n, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let prior = PriorConfig::default();
    let gamma = ModelIndicator::full(3);
    let forward: Vec<DVector<f64>> = (0..20_000)
        .map(|_| DVector::from_fn(3, |_, _| prior.g.sqrt() * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let draw_y = |theta: &DVector<f64>, rng: &mut ChaCha8Rng| -> Vec<f64> {
        (&x * theta)
            .iter()
            .map(|&e| f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-e).exp())))
            .collect()
    };
    let mut theta = forward[0].clone();
    let mut y = draw_y(&theta, &mut rng);
    let mut omega = DVector::from_fn(n, |i, _| sample_pg1((&x * &theta)[i], &mut rng).value());
    let mut path = Vec::with_capacity(50_000);
    for _ in 0..50_000 {
        let data = Dataset::logistic(x.clone(), DMatrix::zeros(n, 0), y).unwrap();
        let (t, w) = da_gibbs_sweep(&data, &gamma, &prior, &omega, &mut rng).unwrap();
        theta = t;
        omega = w;
        y = draw_y(&theta, &mut rng);
        path.push(theta.clone());
    }
    let mut worst_z: f64 = 0.0;
    for j in 0..3 {
        for power in [1, 2] {
            let f: Vec<f64> = forward.iter().map(|t| t[j].powi(power)).collect();
            let g: Vec<f64> = path.iter().map(|t| t[j].powi(power)).collect();
            let (mf, sf) = mean_se(&f);
            let (mg, sg) = batch_mean_se(&g, 50);
            worst_z = worst_z.max((mf - mg).abs() / (sf * sf + sg * sg).sqrt());
        }
    }

    let data = p8_fixture();
    let prior = PriorConfig::default();
    let pips: Vec<Vec<f64>> = [AcceptanceEstimator::Da, AcceptanceEstimator::Cpm]
        .into_iter()
        .map(|a| {
            let cfg = long_chain(SamplerKind::Parni, ProposalEstimator::AdaptiveAla, a);
            run_chain(&data, &prior, &cfg, &mut chain_rng(1, 0)).unwrap().pip
        })
        .collect();
    let gap = max_abs_diff(&pips[0], &pips[1]);
    outcome(
        worst_z < 4.0 && gap < 0.03,
        format!("Geweke max deviation {worst_z:.2} SE, DA vs CPM max PIP gap {gap:.4}"),
    )
}

fn cpm_calibration() -> Outcome {
    let n = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let xv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = xv
        .iter()
        .map(|&xi| f64::from(rng.random::<f64>() < 1.0 / (1.0 + (-xi).exp())))
        .collect();
    let data = Dataset::logistic(DMatrix::from_column_slice(n, 1, &xv), DMatrix::zeros(n, 0), y.clone()).unwrap();
    let prior = PriorConfig::default();
    let gamma = ModelIndicator::full(1);
    let log_f = |t: f64| {
        let ll: f64 = xv
            .iter()
            .zip(&y)
            .map(|(&xi, &yi)| {
                let e = t * xi;
                yi * e - (e.max(0.0) + (-e.abs()).exp().ln_1p())
            })
            .sum();
        ll - 0.5 * (2.0 * PI * prior.g).ln() - 0.5 * t * t / prior.g
    };
    let exact = log_integral_1d(log_f, 64);
    let check = log_integral_1d(log_f, 40);
    let estimates: Vec<f64> = (0..100)
        .map(|_| {
            let aux = CpmAuxiliary::new(1 << 14, 1, 0.99, &mut rng).unwrap();
            log_marglik_cpm(&data, &gamma, &prior, &aux, None, None).unwrap().log_value
        })
        .collect();
    let m = estimates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_mean = m + (estimates.iter().map(|v| (v - m).exp()).sum::<f64>() / 100.0).ln();
    let err = (log_mean - exact).abs();
    outcome(
        err < 0.02 && (exact - check).abs() < 1e-8,
        format!("log mean estimate {log_mean:.5} vs quadrature {exact:.5} (|diff| {err:.2e})"),
    )
}

fn cost_ordering() -> Outcome {
    let cfg = SimConfig::default();
    let data = sim::gen_logistic(&cfg, &mut ChaCha8Rng::seed_from_u64(8))
        .unwrap()
        .standardized()
        .unwrap();
    let prior = cfg.benchmark_prior();
    let spi: Vec<f64> = [ProposalEstimator::AdaptiveAla, ProposalEstimator::La, ProposalEstimator::Ala]
        .into_iter()
        .map(|proposal| {
            let c = ChainConfig {
                proposal,
                acceptance: AcceptanceEstimator::Da,
                iterations: 2_000,
                burn_in: 200,
                keep: Some(100),
                ..Default::default()
            };
            run_chain(&data, &prior, &c, &mut chain_rng(1, 0)).unwrap().seconds_per_iteration()
        })
        .collect();
    let (aala, la, ala) = (spi[0], spi[1], spi[2]);
    outcome(
        aala < la && aala <= 1.5 * ala,
        format!(
            "ms/iteration: adaptive-ALA {:.3}, LA {:.3}, ALA {:.3} (ratio to ALA {:.2})",
            aala * 1e3,
            la * 1e3,
            ala * 1e3,
            aala / ala
        ),
    )
}

fn signal_recovery() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in KINDS {
        let cfg = SimConfig {
            n: 500,
            p: 200,
            kind,
            ..Default::default()
        };
        let data = sim::simulate(&cfg, &mut ChaCha8Rng::seed_from_u64(11))
            .unwrap()
            .standardized()
            .unwrap();
        let chain = ChainConfig {
            acceptance: AcceptanceEstimator::Cpm,
            iterations: 10_000,
            burn_in: 2_000,
            keep: Some(1_000),
            ..Default::default()
        };
        let out = run_chain(&data, &cfg.benchmark_prior(), &chain, &mut chain_rng(1, 0)).unwrap();
        let truth = cfg.true_model();
        let pip = &out.pip;
        let recovered = truth.included().iter().all(|&j| {
            let lo = j.saturating_sub(1);
            let hi = (j + 1).min(cfg.p - 1);
            (lo..=hi).any(|i| pip[i] > 0.5)
        });
        let nulls: Vec<f64> = truth.excluded().map(|j| pip[j]).collect();
        let null_mean = nulls.iter().sum::<f64>() / nulls.len() as f64;
        let min_true = truth.included().iter().map(|&j| pip[j]).fold(1.0, f64::min);
        pass &= recovered && null_mean < 0.05;
        parts.push(format!(
            "{}: min true PIP {min_true:.2}, null mean {null_mean:.4}, {:.0}s",
            kind.name(),
            out.elapsed.as_secs_f64()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn prior_normalisation() -> Outcome {
    let mut worst: f64 = 0.0;
    for (a, b) in [(1.0, 1.0), (2.0, 3.0), (0.5, 4.0)] {
        let prior = PriorConfig {
            model_prior: ModelPrior::BetaBinomial { a, b },
            ..Default::default()
        };
        for p in 1..=12usize {
            let total: f64 = (0..1u64 << p)
                .map(|c| log_model_prior(&ModelIndicator::from_code(p, c), &prior).exp())
                .sum();
            worst = worst.max((total - 1.0).abs());
        }
    }
    outcome(worst < 1e-10, format!("max |sum - 1| = {worst:.2e} for p <= 12"))
}

fn hyper_targets() -> Outcome {
    let flat = |_: f64| -> parni_core::Result<MarglikResult> {
        Ok(MarglikResult {
            log_value: 0.0,
            method: Method::La,
            theta_hat: None,
            eta_hat: None,
            log_det: None,
        })
    };
    let density = |v: f64| log_density_log_g(v).exp();
    let m1 = trapezoid(|v| v * density(v), -80.0, 80.0, 320_000);
    let m2 = trapezoid(|v| v * v * density(v), -80.0, 80.0, 320_000);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rw = AdaptiveRwState::default();
    let mut g = 1.0;
    let (burn, iters) = (10_000, 400_000);
    let mut nus = Vec::with_capacity(iters);
    let mut accepts = Vec::with_capacity(iters);
    for i in 0..burn + iters {
        let step = update_g(g, 0.0, &mut rw, flat, &mut rng);
        g = step.value;
        if i >= burn {
            nus.push(g.ln());
            accepts.push(step.accept_prob);
        }
    }
    let (c1, s1) = batch_mean_se(&nus, 100);
    let sq: Vec<f64> = nus.iter().map(|v| v * v).collect();
    let (c2, s2) = batch_mean_se(&sq, 100);
    let rate = accepts[iters / 2..].iter().sum::<f64>() / (iters - iters / 2) as f64;
    let z1 = (c1 - m1).abs() / s1;
    let z2 = (c2 - m2).abs() / s2;
    outcome(
        z1 < 4.0 && z2 < 4.0 && (rate - 0.234).abs() <= 0.05,
        format!("E[log g] {c1:.3} vs {m1:.3} ({z1:.1} SE), E[log^2 g] {c2:.3} vs {m2:.3} ({z2:.1} SE), acceptance {rate:.3}"),
    )
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut identical = true;
    let mut parts = Vec::new();
    for (name, text) in [
        ("logistic", "kind = logistic\nsim.n = 80\nsim.p = 12\niterations = 400\nchains = 2\nseed = 7\n"),
        ("weibull", "kind = weibull\nsim.n = 80\nsim.p = 12\niterations = 300\nchains = 2\nseed = 7\nsampler = ads\n"),
    ] {
        let path = dir.path().join(format!("{name}.conf"));
        std::fs::write(&path, text).unwrap();
        let run = |tag: &str| {
            let out = dir.path().join(format!("{name}-{tag}"));
            let ov = BTreeMap::from([("out".to_string(), out.display().to_string())]);
            runner::execute(&RunConfig::from_file(&path, &ov).unwrap()).unwrap();
            out
        };
        let (a, b) = (run("a"), run("b"));
        for file in ["pip.csv", "trace.csv"] {
            let same = std::fs::read(a.join(file)).unwrap() == std::fs::read(b.join(file)).unwrap();
            identical &= same;
            parts.push(format!("{name}/{file} {}", if same { "identical" } else { "differs" }));
        }
    }
    outcome(identical, parts.join(", "))
}

fn main() {
    // Touch the quadrature rule so a broken oracle shows up here, not as a silent pass.
    let (x, w) = gauss_hermite(20);
    let gauss_second_moment: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
    assert!((gauss_second_moment - PI.sqrt() / 2.0).abs() < 1e-12, "Gauss-Hermite rule is wrong");

    let criteria: [Check; 12] = [
        ("exact-posterior recovery", exact_recovery),
        ("ALA equals LA at the mode", ala_equals_la_at_mode),
        ("likelihood derivatives", derivative_check),
        ("Newton and IRLS steps agree", newton_vs_irls),
        ("Polya-gamma sampler", polya_gamma_moments),
        ("data-augmentation correctness", da_correctness),
        ("CPM calibration", cpm_calibration),
        ("estimator cost ordering", cost_ordering),
        ("signal recovery", signal_recovery),
        ("model prior normalisation", prior_normalisation),
        ("hyper-parameter update targets", hyper_targets),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
