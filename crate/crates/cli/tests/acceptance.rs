//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use sketchls::nalgebra::{DMatrix, DVector};
use sketchls::{
    bootstrap_cs, bootstrap_ihs_trace, classic_sketch, empirical_quantile, gen_synthetic, gen_synthetic_parts,
    hessian_sketch, ihs_run, ihs_run_with, make_sketch, rng, run_cs_experiment, run_ihs_experiment,
    solve_exact_ls, BootstrapParams, Conditioning, CsExperimentConfig, ErrorEstimate, IdentityEmbedding,
    IhsExperimentConfig, LSProblem, NormSpec, SketchKind, SketchOperator, SyntheticSpec,
};

type Outcome = Result<String, String>;
type Estimator =
    fn(&DMatrix<f64>, &DVector<f64>, &DVector<f64>, &BootstrapParams) -> sketchls::Result<ErrorEstimate>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_problem(n: usize, d: usize, seed: u64) -> LSProblem {
    let mut r = rng::stream(seed);
    let a = DMatrix::from_fn(n, d, |_, _| r.random_range(-1.0..1.0));
    let b = DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0));
    LSProblem::new(a, b).unwrap()
}

fn desk_problem() -> LSProblem {
    gen_synthetic(&SyntheticSpec::new(4096, 8, Conditioning::Well, 2018)).unwrap()
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, &(n, d)) in [(32, 2), (128, 4), (256, 8), (512, 16), (512, 3)].iter().enumerate() {
        let p = random_problem(n, d, 100 + i as u64);
        let x_opt = solve_exact_ls(&p).unwrap();
        let id = SketchOperator::identity(n).unwrap();
        let mut sols = vec![classic_sketch(&p, &id).unwrap().x_tilde, hessian_sketch(&p, &id).unwrap()];
        for t in 1..=3 {
            sols.push(ihs_run_with(&p, &IdentityEmbedding, n, t, DVector::zeros(d), 5).unwrap().last().clone());
        }
        for x in sols {
            worst = worst.max((x - &x_opt).norm() / x_opt.norm());
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max relative error {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn hs_ihs_equivalence() -> Outcome {
    let mut agree = 0;
    for pair in 0..50u64 {
        let kind = SketchKind::ALL[pair as usize % 4];
        let n = 64 + 16 * pair as usize;
        let d = 2 + pair as usize % 7;
        let p = random_problem(n, d, 1000 + pair);
        let seed = rng::substream(77, pair);
        let m = 4 * d;
        let trace = ihs_run(&p, kind, m, 1, DVector::zeros(d), seed).unwrap();
        let op = make_sketch(kind, m, n, rng::substream(seed, 1)).unwrap();
        let hs = hessian_sketch(&p, &op).unwrap();
        if hs.iter().zip(trace.iterates[1].iter()).all(|(a, b)| a.to_bits() == b.to_bits()) {
            agree += 1;
        }
    }
    check(agree == 50, format!("{agree}/50 pairs bit-identical"))
}

fn quantile_semantics() -> Outcome {
    let mut r = rng::stream(3);
    let mut agree = 0;
    for _ in 0..200 {
        let k = r.random_range(1..80);
        // coarse values so ties occur
        let values: Vec<f64> = (0..k).map(|_| (r.random_range(0..30) as f64) * 0.25).collect();
        let level: f64 = r.random_range(0.001..0.999);
        let brute = values
            .iter()
            .copied()
            .filter(|&c| values.iter().filter(|&&v| v <= c).count() as f64 / k as f64 >= level)
            .fold(f64::INFINITY, f64::min);
        if empirical_quantile(&values, level).unwrap() == brute {
            agree += 1;
        }
    }
    check(agree == 200, format!("{agree}/200 cases agree"))
}

fn cs_coverage() -> Outcome {
    let start = Instant::now();
    let p = desk_problem();
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in [SketchKind::Gaussian, SketchKind::Srht] {
        for norm in [NormSpec::L2, NormSpec::LInf] {
            let config = CsExperimentConfig {
                m_grid: vec![240],
                m0: 240,
                alpha: 0.1,
                replicates: 50,
                trials: 300,
                norm: norm.clone(),
                seed: 4,
            };
            let coverage = run_cs_experiment(&p, &kind, &config).unwrap().points[0].coverage;
            ok &= coverage >= 0.83;
            lines.push(format!("{kind}/{norm} {coverage:.3}"));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    check(ok, format!("coverage {}, {:.1} s", lines.join(", "), elapsed.as_secs_f64()))
}

fn ihs_coverage_for(p: &LSProblem, x_opt: &DVector<f64>, kind: SketchKind) -> f64 {
    let trials = 300;
    let covered = (0..trials)
        .filter(|&trial| {
            let seed = rng::substream(5, trial);
            let trace = ihs_run(p, kind, 240, 3, DVector::zeros(8), rng::substream(seed, 0)).unwrap();
            let params = BootstrapParams::new(50, 0.1, NormSpec::L2, rng::substream(seed, 1));
            let est = bootstrap_ihs_trace(&trace, &params).unwrap();
            (trace.last() - x_opt).norm() <= est.epsilon
        })
        .count();
    covered as f64 / trials as f64
}

fn ihs_coverage() -> Outcome {
    let p = desk_problem();
    let x_opt = solve_exact_ls(&p).unwrap();
    let gaussian = ihs_coverage_for(&p, &x_opt, SketchKind::Gaussian);
    let srht = ihs_coverage_for(&p, &x_opt, SketchKind::Srht);
    check(
        gaussian >= 0.83 && srht >= 0.83,
        format!("coverage at t=3: gaussian {gaussian:.3}, srht {srht:.3}"),
    )
}

fn m_extrapolation() -> Outcome {
    let p = desk_problem();
    let config = CsExperimentConfig {
        m_grid: (1..=6).map(|k| 5 * k * 8).collect(),
        m0: 40,
        alpha: 0.05,
        replicates: 20,
        trials: 300,
        norm: NormSpec::L2,
        seed: 6,
    };
    let report = run_cs_experiment(&p, &SketchKind::Srht, &config).unwrap();
    let ratios: Vec<f64> = report.points.iter().map(|pt| pt.estimate_mean / pt.benchmark_quantile).collect();
    check(
        ratios.iter().all(|r| (0.5..=2.0).contains(r)),
        format!("mean/benchmark per m: {}", fmt_list(&ratios)),
    )
}

fn t_extrapolation() -> Outcome {
    let p = desk_problem();
    let config = IhsExperimentConfig {
        m: 400,
        t_max: 8,
        alpha: 0.05,
        replicates: 20,
        trials: 200,
        norm: NormSpec::L2,
        seed: 7,
    };
    let report = run_ihs_experiment(&p, &SketchKind::Srht, &config).unwrap();
    let ratios: Vec<f64> = report.points[2..].iter().map(|pt| pt.estimate_mean / pt.benchmark_quantile).collect();
    let decay = report.points[0].benchmark_quantile / report.points[7].benchmark_quantile;
    check(
        ratios.iter().all(|r| (0.1..=10.0).contains(r)) && decay >= 100.0,
        format!("mean/benchmark for i=3..8: {}; decay i=1..8 {decay:.2e}", fmt_list(&ratios)),
    )
}

fn sketch_isotropy() -> Outcome {
    let a = DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0 + 0.5 * (i == j) as u8 as f64);
    let ata = a.transpose() * &a;
    let mut lines = Vec::new();
    let mut ok = true;
    for kind in SketchKind::ALL {
        let mut acc = DMatrix::zeros(3, 3);
        for seed in 0..2000 {
            let sa = make_sketch(kind, 6, 8, seed).unwrap().apply(&a).unwrap();
            acc += sa.transpose() * sa;
        }
        acc /= 2000.0;
        let rel = (&acc - &ata).norm() / ata.norm();
        ok &= rel < 0.05;
        lines.push(format!("{kind} {rel:.4}"));
    }
    check(ok, format!("relative deviation {}", lines.join(", ")))
}

fn synthetic_contract() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    for (cond, target) in [(Conditioning::Well, 1e2), (Conditioning::Ill, 1e12)] {
        let parts = gen_synthetic_parts(&SyntheticSpec::new(1000, 100, cond, 9)).unwrap();
        let sv = parts.problem.a().clone().svd(false, false).singular_values;
        let kappa = (sv.max() / sv.min()).powi(2);
        let eye = DMatrix::<f64>::identity(100, 100);
        let orth = (parts.u.transpose() * &parts.u - &eye)
            .amax()
            .max((parts.v.transpose() * &parts.v - &eye).amax());
        ok &= (kappa / target - 1.0).abs() < 0.01 && orth < 1e-10;
        lines.push(format!("{cond:?} cond(A'A) {kappa:.4e}, orthonormality {orth:.1e}"));
    }
    let parts = gen_synthetic_parts(&SyntheticSpec::new(1000, 20, Conditioning::Well, 9).with_tau(0.0)).unwrap();
    let rec = (solve_exact_ls(&parts.problem).unwrap() - &parts.x_star).norm() / parts.x_star.norm();
    ok &= rec <= 1e-6;
    lines.push(format!("tau=0 recovery {rec:.1e}"));
    check(ok, lines.join("; "))
}

fn pipeline_outputs(dir: &Path, threads: &str) -> Vec<Vec<u8>> {
    let data = dir.join("p.skls");
    let data = data.to_str().unwrap();
    let runs: [&[&str]; 6] = [
        &["solve", "cs", "--data", data, "--m", "10d", "--sketch", "gaussian", "--seed", "3"],
        &["solve", "ihs", "--data", data, "--m", "20d", "--t", "4", "--seed", "3"],
        &["estimate", "cs", "--data", data, "--m", "10d", "--B", "40", "--seed", "3"],
        &["estimate", "ihs", "--data", data, "--m", "20d", "--t", "3", "--norm", "linf", "--seed", "3"],
        &["experiment", "cs", "--data", data, "--grid", "5d:20d:5d", "--trials", "24", "--B", "10", "--seed", "3"],
        &["experiment", "ihs", "--data", data, "--m", "20d", "--t-max", "5", "--trials", "24", "--B", "10"],
    ];
    runs.iter()
        .map(|args| {
            let out = Command::new(env!("CARGO_BIN_EXE_sketchls"))
                .args(*args)
                .env("SKETCHLS_THREADS", threads)
                .output()
                .unwrap();
            assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
            out.stdout
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("p.skls");
    let out = Command::new(env!("CARGO_BIN_EXE_sketchls"))
        .args(["gen", "--n", "2048", "--d", "6", "--cond", "ill", "--seed", "11", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    if !out.status.success() {
        return Err("gen failed".into());
    }
    let one = pipeline_outputs(dir.path(), "1");
    let eight = pipeline_outputs(dir.path(), "8");
    let same = one.iter().zip(&eight).filter(|(a, b)| a == b).count();
    check(same == one.len(), format!("{same}/{} pipelines byte-identical", one.len()))
}

fn n_independence() -> Outcome {
    // the estimator only ever sees the m x d sketched system
    let estimator: Estimator = bootstrap_cs;
    let params = BootstrapParams::new(50, 0.05, NormSpec::L2, 1);
    let inputs: Vec<_> = [4096, 65_536]
        .iter()
        .map(|&n| {
            let p = gen_synthetic(&SyntheticSpec::new(n, 8, Conditioning::Well, 12)).unwrap();
            let op = make_sketch(SketchKind::Srht, 240, n, 13).unwrap();
            classic_sketch(&p, &op).unwrap()
        })
        .collect();
    if inputs.iter().any(|cs| cs.a_tilde.shape() != (240, 8)) {
        return Err("sketched system is not 240 x 8".into());
    }
    let time = |cs: &sketchls::CSResult| {
        let start = Instant::now();
        for _ in 0..10 {
            std::hint::black_box(estimator(&cs.a_tilde, &cs.b_tilde, &cs.x_tilde, &params).unwrap());
        }
        start.elapsed().as_secs_f64() / 10.0
    };
    let mut best = [f64::INFINITY; 2];
    for _ in 0..25 {
        for (slot, cs) in best.iter_mut().zip(&inputs) {
            *slot = slot.min(time(cs));
        }
    }
    let change = (best[1] / best[0] - 1.0).abs();
    check(
        change < 0.25,
        format!(
            "n=4096 {:.3} ms, n=65536 {:.3} ms, change {:.1}%",
            best[0] * 1e3,
            best[1] * 1e3,
            change * 100.0
        ),
    )
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ")
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("exactness with identity embedding", exactness),
        ("HS equals first IHS iterate", hs_ihs_equivalence),
        ("quantile semantics", quantile_semantics),
        ("CS coverage", cs_coverage),
        ("IHS coverage", ihs_coverage),
        ("sketch-size extrapolation fidelity", m_extrapolation),
        ("iteration extrapolation fidelity", t_extrapolation),
        ("sketch isotropy", sketch_isotropy),
        ("synthetic data contract", synthetic_contract),
        ("determinism across worker counts", determinism),
        ("estimation cost independent of n", n_independence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail}", i + 1);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
