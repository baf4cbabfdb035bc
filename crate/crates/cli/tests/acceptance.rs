//! Acceptance gate: one PASS/FAIL line per primary criterion.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use serde_json::json;
use statrs::distribution::{Binomial, DiscreteCDF};
use vcat_core::data::{draw_training_set, select_n_first, TrainingData, TrialDataset};
use vcat_core::estimators::{
    averaged, classify, mse, one_shot, ArmSummary, EffectEstimate, Procedure, Significance, Z_975,
};
use vcat_core::experiments::{
    run_n_first, run_sensitivity, simulate_trial, CategoricalCovariate, GeneratorConfig, SimSpec,
};
use vcat_core::fidelity::{
    contingency_similarity, general_score, ks_complement, pearson_similarity, tv_complement, ColumnScore,
    PairScore, QualityReport,
};
use vcat_core::generators::{fit, ExternalGenerator, GeneratorKind};
use vcat_core::seed::{derive_seed, rng_from_seed, stream};
use vcat_core::tuning::{fold_partition, grid_search_cv, HyperGrid};

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

fn sim(m: usize, p: f64, drift: f64, seed: u64) -> SimSpec {
    SimSpec {
        m0: m,
        m1: m,
        p_treated: p,
        p_control_start: p,
        drift,
        numeric_covariates: 2,
        categorical_covariates: vec![CategoricalCovariate {
            name: "region".into(),
            categories: vec!["eu".into(), "am".into(), "as".into()],
            probabilities: Some(vec![0.5, 0.3, 0.2]),
        }],
        seed,
    }
}

fn mock_generator() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mock_generator.py")
}

// Degenerate augmentation: n = m0 leaves nothing to generate.
fn degenerate_identity() -> Outcome {
    let kinds = [
        GeneratorKind::Bootstrap,
        GeneratorKind::Marginals,
        GeneratorKind::Copula,
        GeneratorKind::External(ExternalGenerator::new(mock_generator())),
    ];
    let same = |a: &EffectEstimate, b: &EffectEstimate| {
        [a.tau, a.delta, a.ci_low, a.ci_high, a.sigma2_control]
            .iter()
            .zip([b.tau, b.delta, b.ci_low, b.ci_high, b.sigma2_control])
            .all(|(x, y)| x.to_bits() == y.to_bits())
    };
    let mut checked = 0;
    for (i, (m, p)) in [(12, 0.3), (57, 0.5), (200, 0.1)].into_iter().enumerate() {
        let ds = simulate_trial(&sim(m, p, 0.02, i as u64)).unwrap();
        for kind in &kinds {
            if i > 0 && matches!(kind, GeneratorKind::External(_)) {
                continue;
            }
            let l = if matches!(kind, GeneratorKind::External(_)) { 2 } else { 25 };
            let r = run_n_first(&ds, ds.m0(), &GeneratorConfig::new(kind.clone()), l, 9).unwrap();
            if !(same(&r.one_shot, &r.rct) && same(&r.averaged, &r.rct)) {
                return outcome(false, format!("{} on m0 = {m}: estimates differ", kind.name()));
            }
            checked += 1;
        }
    }
    outcome(true, format!("{checked} dataset/generator pairs bitwise equal"))
}

fn direct_moments(y: &[u8]) -> (f64, f64) {
    let m = y.len() as f64;
    let mean = y.iter().map(|&v| f64::from(v)).sum::<f64>() / m;
    let var = y.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

fn interval_label(lo: f64, hi: f64, rlo: f64, rhi: f64) -> (Significance, bool) {
    let contains_zero = lo <= 0.0 && 0.0 <= hi;
    let sig = if contains_zero {
        Significance::NonSignificant
    } else if lo > 0.0 {
        Significance::SignificantPositive
    } else {
        Significance::SignificantNegative
    };
    (sig, lo.max(rlo) > hi.min(rhi))
}

fn estimator_oracles() -> Outcome {
    let mut rng = rng_from_seed(2024);
    let tol = 1e-12;
    let mut worst: f64 = 0.0;
    let bits = |rng: &mut vcat_core::seed::SimRng, len: usize| -> Vec<u8> {
        let p: f64 = rng.random();
        (0..len).map(|_| u8::from(rng.random_bool(p))).collect()
    };
    for case in 0..1000 {
        let m0 = rng.random_range(1..=20);
        let m1 = rng.random_range(1..=20);
        let n = rng.random_range(1..=m0);
        let l = rng.random_range(1..=5);
        let treated_y = bits(&mut rng, m1);
        let train = bits(&mut rng, n);
        let batches: Vec<Vec<u8>> = (0..l).map(|_| bits(&mut rng, m0 - n)).collect();
        let treated = ArmSummary::from_outcomes(&treated_y).unwrap();
        let (mu1, var1) = direct_moments(&treated_y);

        let os = one_shot(&train, &batches[0], m0, &treated).unwrap();
        let full: Vec<u8> = train.iter().chain(&batches[0]).copied().collect();
        let (mu, var) = direct_moments(&full);
        let delta = Z_975 * (var1 / m1 as f64 + var / m0 as f64).sqrt();
        worst = worst.max((os.tau - (mu1 - mu)).abs()).max((os.sigma2_control - var).abs()).max((os.delta - delta).abs());

        let av = averaged(&train, &batches, m0, &treated).unwrap();
        let per: Vec<(f64, f64)> = batches
            .iter()
            .map(|b| direct_moments(&train.iter().chain(b).copied().collect::<Vec<_>>()))
            .collect();
        let tau = per.iter().map(|(m, _)| mu1 - m).sum::<f64>() / l as f64;
        let s2 = per.iter().map(|(_, v)| v).sum::<f64>() / l as f64;
        let delta = Z_975 * (var1 / m1 as f64 + s2 / m0 as f64).sqrt();
        worst = worst
            .max((av.tau - tau).abs())
            .max((av.sigma2_control - s2).abs())
            .max((av.delta - delta).abs())
            .max((av.delta_uncorrected.unwrap() - Z_975 * s2.sqrt()).abs());
        if av.procedure != (Procedure::Averaged { l }) {
            return outcome(false, format!("case {case}: procedure {:?}", av.procedure));
        }

        let taus: Vec<f64> = (0..rng.random_range(1..=20)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bar: f64 = rng.random_range(-1.0..1.0);
        let (got, rmse) = mse(&taus, bar).unwrap();
        let two_pass = taus.iter().map(|t| (t - bar).powi(2)).sum::<f64>() / taus.len() as f64;
        if (got - two_pass).abs() > tol * two_pass.max(f64::MIN_POSITIVE) || (rmse - two_pass.sqrt()).abs() > tol {
            return outcome(false, format!("case {case}: mse {got} vs {two_pass}"));
        }
    }
    if worst > tol {
        return outcome(false, format!("max deviation {worst:e}"));
    }

    // Decision labels on a dyadic grid, so boundary ties are exact.
    let grid = |rng: &mut vcat_core::seed::SimRng| f64::from(rng.random_range(-8i32..=8)) / 16.0;
    let mut boundaries = 0;
    for _ in 0..1000 {
        let (t, d) = (grid(&mut rng), grid(&mut rng).abs());
        let (rt, rd) = (grid(&mut rng), grid(&mut rng).abs());
        let est = EffectEstimate::from_interval(t, d, Procedure::OneShot);
        let rct = EffectEstimate::from_interval(rt, rd, Procedure::Rct);
        let label = classify(&est, &rct);
        let (sig, inc) = interval_label(t - d, t + d, rt - rd, rt + rd);
        if label.significance != sig || label.incompatible_with_rct != inc {
            return outcome(false, format!("classify({t}±{d}, {rt}±{rd}) = {label:?}"));
        }
        boundaries += usize::from(t - d == 0.0 || t + d == 0.0 || t - d == rt + rd || t + d == rt - rd);
    }
    let fixed = [
        ((0.05, 0.01), Significance::SignificantPositive),
        ((0.01, 0.01), Significance::NonSignificant),
        ((-0.01, 0.01), Significance::NonSignificant),
        ((-0.05, 0.01), Significance::SignificantNegative),
    ];
    let rct = EffectEstimate::from_interval(0.0, 0.01, Procedure::Rct);
    for ((t, d), want) in fixed {
        if classify(&EffectEstimate::from_interval(t, d, Procedure::OneShot), &rct).significance != want {
            return outcome(false, format!("classify({t}±{d}) != {want:?}"));
        }
    }
    let touching = EffectEstimate::from_interval(0.02, 0.01, Procedure::OneShot);
    let disjoint = EffectEstimate::from_interval(0.03, 0.01, Procedure::OneShot);
    let rct = EffectEstimate::from_interval(0.0, 0.01, Procedure::Rct);
    if classify(&touching, &rct).incompatible_with_rct || !classify(&disjoint, &rct).incompatible_with_rct {
        return outcome(false, "touching/disjoint intervals misclassified");
    }
    outcome(
        true,
        format!("1000 instances, max deviation {worst:.1e}; 1000 labels incl. {boundaries} boundary ties"),
    )
}

fn distribution_mirroring() -> Outcome {
    let ds = simulate_trial(&sim(2000, 0.3, 0.0, 31)).unwrap();
    let r = run_n_first(&ds, 200, &GeneratorConfig::new(GeneratorKind::Bootstrap), 999, 5).unwrap();
    let train = ds.resolve(&select_n_first(&ds, 200).unwrap()).unwrap();
    let (mean, var) = direct_moments(&train.outcomes().unwrap());
    let treated = direct_moments(&ds.arm_outcomes(1).unwrap()).0;
    let gap = (r.averaged.tau - (treated - mean)).abs();
    let bound = 3.0 * (var / (r.s * r.l) as f64).sqrt();
    outcome(gap <= bound, format!("|tau_av - training effect| = {gap:.2e} <= {bound:.2e}"))
}

fn training_effect_correlation() -> Outcome {
    let ds = simulate_trial(&sim(2000, 0.3, 0.0, 31)).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for kind in [GeneratorKind::Bootstrap, GeneratorKind::Copula] {
        let r = run_sensitivity(&ds, 200, 200, &GeneratorConfig::new(kind.clone()), 999, 6).unwrap();
        let rho = r.correlation.unwrap_or(f64::NAN);
        // Independent recomputation from the per-set rows.
        let x: Vec<f64> = r.sets.iter().map(|s| s.training_effect).collect();
        let y: Vec<f64> = r.sets.iter().map(|s| s.tau).collect();
        let (mx, my) = (x.iter().sum::<f64>() / 200.0, y.iter().sum::<f64>() / 200.0);
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let direct = sxy / (sxx * syy).sqrt();
        pass &= rho >= 0.9 && (rho - direct).abs() < 1e-12;
        details.push(format!("{} r = {rho:.4}", kind.name()));
    }
    outcome(pass, details.join(", "))
}

fn drift_inflation() -> Outcome {
    let k = 200;
    let run = |drift: f64| {
        let ds = simulate_trial(&SimSpec {
            numeric_covariates: 0,
            categorical_covariates: vec![],
            ..sim(5000, 0.3, drift, 41)
        })
        .unwrap();
        run_sensitivity(&ds, 500, k, &GeneratorConfig::new(GeneratorKind::Bootstrap), 999, 8)
            .unwrap()
            .counts
            .significant()
    };
    let (base, drifted) = (run(0.0), run(0.05));
    let p0 = base as f64 / k as f64;
    // One-sided exact binomial test of the drifted count against the drift-free rate.
    let p_value = if drifted == 0 {
        1.0
    } else {
        Binomial::new(p0, k as u64).unwrap().sf(drifted as u64 - 1)
    };
    outcome(
        drifted > base && p_value < 0.01,
        format!("significant {drifted}/{k} with drift vs {base}/{k} without, p = {p_value:.2e}"),
    )
}

fn fidelity_metrics() -> Outcome {
    let tol = 1e-12;
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y8 = [2.0, 1.0, 4.0, 3.0, 5.0];
    let y4 = [1.0, 5.0, 2.0, 3.0, 4.0];
    checks.push(("ks identity", ks_complement(&x, &x).unwrap(), 1.0));
    checks.push(("tv identity", tv_complement(&[1, 2, 2], &[1, 2, 2]).unwrap(), 1.0));
    checks.push(("pearson identity", pearson_similarity((&x, &y8), (&x, &y8)).unwrap().unwrap(), 1.0));
    let (ca, cb) = ([1, 2, 2, 3, 1], ["u", "v", "u", "v", "v"]);
    checks.push(("contingency identity", contingency_similarity((&ca[..], &cb[..]), (&ca[..], &cb[..])).unwrap(), 1.0));
    checks.push(("ks [0,1] vs [0,2]", ks_complement(&[0.0, 1.0], &[0.0, 2.0]).unwrap(), 0.5));
    checks.push(("ks disjoint", ks_complement(&[0.0; 4], &[1.0; 4]).unwrap(), 0.0));
    checks.push(("tv [.5,.5] vs [1,0]", tv_complement(&["a", "b"], &["a", "a"]).unwrap(), 0.5));
    checks.push(("tv disjoint", tv_complement(&["a"], &["b"]).unwrap(), 0.0));
    checks.push(("pearson 0.8 vs 0.4", pearson_similarity((&x, &y8), (&x, &y4)).unwrap().unwrap(), 0.8));
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    checks.push(("pearson 1 vs -1", pearson_similarity((&x, &x), (&x, &neg)).unwrap().unwrap(), 0.0));
    checks.push((
        "contingency half",
        contingency_similarity((&["a", "a"][..], &["x", "y"][..]), (&["a", "a"][..], &["x", "x"][..])).unwrap(),
        0.5,
    ));
    checks.push((
        "contingency disjoint",
        contingency_similarity((&["a"][..], &["x"][..]), (&["b"][..], &["y"][..])).unwrap(),
        0.0,
    ));
    let report = QualityReport::from_scores(
        vec![
            ColumnScore { column: "a".into(), metric: "ks_complement".into(), score: 0.8 },
            ColumnScore { column: "b".into(), metric: "tv_complement".into(), score: 0.6 },
        ],
        vec![PairScore { left: "a".into(), right: "b".into(), metric: "contingency".into(), score: 0.7 }],
        vec![],
    )
    .unwrap();
    checks.push(("mean of {0.8, 0.6, 0.7}", report.overall, 0.7));

    let ds = simulate_trial(&sim(300, 0.3, 0.0, 3)).unwrap();
    let self_score = general_score(ds.schema(), ds.records(), ds.schema(), ds.records()).unwrap();
    checks.push(("general score identity", self_score.overall, 1.0));
    let train = ds.resolve(&select_n_first(&ds, 100).unwrap()).unwrap();
    let model = fit(&GeneratorKind::Copula, &train, &Default::default(), 1).unwrap();
    let batch = model.sample(150, 2).unwrap();
    let r = general_score(&train.schema, &train.records, &batch.schema, &batch.records).unwrap();
    let scores: Vec<f64> = r.column_scores.iter().map(|c| c.score).chain(r.pair_scores.iter().map(|p| p.score)).collect();
    checks.push(("general score = mean", r.overall, scores.iter().sum::<f64>() / scores.len() as f64));

    let exact = ["ks identity", "tv identity", "pearson identity", "contingency identity", "general score identity"];
    for (name, got, want) in &checks {
        let ok = if exact.contains(name) { got == want } else { (got - want).abs() <= tol };
        if !ok {
            return outcome(false, format!("{name}: {got} != {want}"));
        }
    }
    outcome(true, format!("{} metric cases", checks.len()))
}

fn tuning_oracle() -> Outcome {
    let ds: TrialDataset = simulate_trial(&sim(400, 0.3, 0.0, 13)).unwrap();
    let train = ds.resolve(&draw_training_set(&ds, 150, 3).unwrap()).unwrap();
    let grid: HyperGrid = serde_json::from_value(json!({"shrinkage": [1e-6, 1e-3, 0.05, 0.2, 0.5, 1.0]})).unwrap();
    let (folds, seed) = (5, 99);
    let result = grid_search_cv(&GeneratorKind::Copula, &train, &grid, folds, seed).unwrap();

    let parts = fold_partition(train.n(), folds, derive_seed(seed, &[stream::FOLDS])).unwrap();
    let mut means = Vec::new();
    for (c, params) in grid.candidates().iter().enumerate() {
        let mut scores = Vec::new();
        for f in 0..folds {
            let rest = parts
                .iter()
                .enumerate()
                .filter(|(g, _)| *g != f)
                .flat_map(|(_, p)| p.iter().map(|&i| train.records[i].clone()))
                .collect();
            let held: Vec<_> = parts[f].iter().map(|&i| train.records[i].clone()).collect();
            let fold_train = TrainingData::new(train.schema.clone(), rest, train.rank_offset);
            let model = fit(&GeneratorKind::Copula, &fold_train, params, derive_seed(seed, &[stream::FIT, f as u64])).unwrap();
            let batch = model.sample(held.len(), derive_seed(seed, &[stream::SAMPLE, f as u64])).unwrap();
            scores.push(general_score(&train.schema, &held, &batch.schema, &batch.records).unwrap().overall);
        }
        if result.candidates[c].fold_scores[0] != scores {
            return outcome(false, format!("candidate {c}: fold scores differ"));
        }
        means.push(scores.iter().sum::<f64>() / folds as f64);
    }
    let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let oracle = means.iter().position(|&m| m == best).unwrap();
    outcome(
        result.best_index == oracle && result.best_params == grid.candidates()[oracle],
        format!("best candidate {} (oracle {oracle}), score {:.6}", result.best_index, result.best_score),
    )
}

fn run_cli(config: &Path, out: &Path, jobs: usize) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vcat-sim"))
        .args(["sensitivity", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--jobs", &jobs.to_string()])
        .output()
        .unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    let cfg = json!({
        "simulation": sim(300, 0.3, 0.05, 17),
        "generator": {"kind": "copula", "tuning": {"grid": {"shrinkage": [1e-6, 0.01, 0.1]}, "folds": 5, "num_sets": 3}},
        "n": 60,
        "seed": 12345
    });
    std::fs::write(&config, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    let (a, b) = (dir.path().join("jobs1"), dir.path().join("jobs8"));
    for (out, jobs) in [(&a, 1), (&b, 8)] {
        let o = run_cli(&config, out, jobs);
        if !o.status.success() {
            return outcome(false, format!("--jobs {jobs} failed: {}", String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut files: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    for f in &files {
        if std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap_or_default() {
            return outcome(false, format!("{f} differs between --jobs 1 and --jobs 8"));
        }
    }
    outcome(true, format!("k = 1000, l = 999; {} files byte-identical", files.len()))
}

fn main() {
    type Check = fn() -> Outcome;
    let criteria: [(&str, Check, Option<Duration>); 8] = [
        ("degenerate-augmentation identity", degenerate_identity, Some(Duration::from_secs(1))),
        ("estimator oracle suite", estimator_oracles, Some(Duration::from_secs(10))),
        ("distribution mirroring", distribution_mirroring, Some(Duration::from_secs(30))),
        ("training-effect correlation", training_effect_correlation, Some(Duration::from_secs(300))),
        ("drift inflation", drift_inflation, Some(Duration::from_secs(300))),
        ("fidelity metrics", fidelity_metrics, Some(Duration::from_secs(1))),
        ("tuning argmax oracle", tuning_oracle, Some(Duration::from_secs(60))),
        ("determinism across --jobs", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, limit) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = result.pass && in_time;
        failed += usize::from(!pass);
        let budget = limit.map_or(String::new(), |l| format!(" / {:.0} s", l.as_secs_f64()));
        let late = if in_time { "" } else { " [over time budget]" };
        println!(
            "{} {name}: {} ({:.2} s{budget}){late}",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
