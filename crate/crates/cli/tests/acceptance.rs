//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use riskseg::io::{
    decode_mask, decode_probability_map, read_mask, read_probability_map, render_report, write_dataset, write_mask,
    write_probability_map, ReportFormat, RunParameters, RunReport,
};
use riskseg::{
    ablate_splits, build_prediction_set, calibrate, calibrate_oracle, crc_bound, generate_dataset, monotonize, pearson,
    sweep, validate_guarantee_alphas, CalibrationRecord, ControlStatus, DefectMask, FormatError, GeneratorParams,
    GuaranteeConfig, GuaranteeReport, LambdaGrid, LossCurve, LossKind, Monotonicity, ProbabilityMap, RiskLevel,
    RowStatus, ScoredRecord, SearchMode, SweepConfig,
};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Reports produced by earlier criteria, re-checked for the precondition.
#[derive(Default)]
struct Emitted {
    reports: Vec<RunReport>,
    thresholds: usize,
}

impl Emitted {
    fn push(&mut self, report: RunReport) {
        self.thresholds += report.profile.is_some() as usize
            + report.sweep.iter().filter(|r| r.status == RowStatus::Ok).count()
            + report.guarantee.as_ref().map_or(0, |g| g.per_trial_lambda_hats.len());
        self.reports.push(report);
    }
}

fn levels(values: &[f64]) -> Vec<RiskLevel> {
    values.iter().map(|&a| RiskLevel::new(a).unwrap()).collect()
}

fn tenths() -> Vec<RiskLevel> {
    levels(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
}

fn guarantee_run(kind: LossKind, emitted: &mut Emitted) -> Result<Vec<GuaranteeReport>, String> {
    let config = GuaranteeConfig {
        generator: GeneratorParams::default(),
        kind,
        n_calibration: 200,
        n_test: 200,
        trials: 300,
        seed: 20_240_601,
        grid: LambdaGrid::uniform(1000).unwrap(),
    };
    let reports = validate_guarantee_alphas(&config, &tenths()).map_err(|e| e.to_string())?;
    let reports: Vec<GuaranteeReport> = reports
        .into_iter()
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for g in &reports {
        let mut r = RunReport::new("validate-guarantee", RunParameters::default());
        r.guarantee = Some(g.clone());
        emitted.push(r);
    }
    Ok(reports)
}

fn guarantee_outcome(reports: &[GuaranteeReport]) -> (bool, Vec<String>) {
    let mut ok = true;
    let mut lines = Vec::new();
    for g in reports {
        let within = g.mean_test_risk <= g.alpha + 3.0 * g.std_error && g.mean_test_risk <= g.alpha + 0.01;
        ok &= within;
        lines.push(format!(
            "      alpha {:.1}: mean {:.4} se {:.5} lambda {:.4} {}",
            g.alpha,
            g.mean_test_risk,
            g.std_error,
            g.mean_lambda_hat,
            if within { "ok" } else { "VIOLATION" }
        ));
    }
    (ok, lines)
}

fn criterion_1(emitted: &mut Emitted) -> Outcome {
    let started = Instant::now();
    match guarantee_run(LossKind::Fnr, emitted) {
        Ok(reports) => {
            let (ok, lines) = guarantee_outcome(&reports);
            let elapsed = started.elapsed();
            let fast = elapsed < Duration::from_secs(300);
            Outcome::new(
                ok && fast,
                format!(
                    "FNR, 9 alphas x 300 trials in {:.1}s\n{}",
                    elapsed.as_secs_f64(),
                    lines.join("\n")
                ),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn criterion_2(emitted: &mut Emitted) -> Outcome {
    match guarantee_run(LossKind::FdrMonotonized, emitted) {
        Ok(reports) => {
            let (ok, mut lines) = guarantee_outcome(&reports);
            let slack = 2.0 / 201.0 + 0.02;
            let loose: Vec<String> = reports
                .iter()
                .filter(|g| (0.2..=0.8 + 1e-9).contains(&g.alpha) && g.mean_test_risk < g.alpha - slack)
                .map(|g| format!("{:.1}", g.alpha))
                .collect();
            lines.push(if loose.is_empty() {
                "      tightness (informational): within alpha - 2/(n+1) - 0.02 for alpha in [0.2, 0.8]".to_string()
            } else {
                format!(
                    "      tightness (informational): conservative at alpha {}",
                    loose.join(", ")
                )
            });
            Outcome::new(
                ok,
                format!("monotonized FDR, 9 alphas x 300 trials\n{}", lines.join("\n")),
            )
        }
        Err(e) => Outcome::new(false, e),
    }
}

fn criterion_3(emitted: &mut Emitted) -> Outcome {
    let params = GeneratorParams {
        height: 32,
        width: 32,
        ..Default::default()
    };
    let grid = LambdaGrid::uniform(1000).unwrap();
    let alphas = levels(&[0.1, 0.3, 0.5]);
    let mut agree = [0usize; 3];
    for instance in 0..50u64 {
        let records = generate_dataset(&params, 50, 7_000 + instance).unwrap();
        for (k, &alpha) in alphas.iter().enumerate() {
            let fast = calibrate(&records, LossKind::Fnr, alpha, &grid, SearchMode::BinarySearch);
            let slow = calibrate_oracle(&records, LossKind::Fnr, alpha, &grid);
            if let (Ok(f), Ok(s)) = (&fast, &slow) {
                agree[k] += (f.lambda_index == s.lambda_index) as usize;
                let mut r = RunReport::new("calibrate", RunParameters::default());
                r.profile = Some(f.clone());
                emitted.push(r);
            }
        }
    }
    Outcome::new(
        agree.iter().all(|&a| a == 50),
        format!(
            "binary search = oracle index in {}/50, {}/50, {}/50 instances (alpha 0.1, 0.3, 0.5)",
            agree[0], agree[1], agree[2]
        ),
    )
}

fn criterion_4(emitted: &Emitted) -> Outcome {
    let failures = emitted
        .reports
        .iter()
        .filter(|r| render_report(r, ReportFormat::Json).is_err())
        .count();
    Outcome::new(
        failures == 0 && emitted.thresholds > 0,
        format!(
            "{} thresholds in {} reports re-checked at serialization, {} violations",
            emitted.thresholds,
            emitted.reports.len(),
            failures
        ),
    )
}

fn random_record(rng: &mut ChaCha8Rng) -> CalibrationRecord {
    let (h, w) = (rng.random_range(1..=32), rng.random_range(1..=32));
    let density: f64 = rng.random();
    let values: Vec<f32> = (0..h * w)
        .map(|_| match rng.random_range(0..8) {
            0 => 0.0,
            1 => 1.0,
            2 => rng.random_range(0..=20) as f32 / 20.0,
            _ => rng.random::<f32>(),
        })
        .collect();
    let bits: Vec<bool> = (0..h * w).map(|_| rng.random_bool(density)).collect();
    CalibrationRecord::new(
        "r",
        ProbabilityMap::new(h, w, values).unwrap(),
        DefectMask::new(h, w, &bits).unwrap(),
    )
    .unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = LambdaGrid::uniform(1000).unwrap();
    let (mut pairs, mut counterexamples) = (0, 0);
    for _ in 0..200 {
        let rec = random_record(&mut rng);
        let scored = ScoredRecord::new(&rec);
        for _ in 0..50 {
            let (i, j) = (rng.random_range(0..grid.len()), rng.random_range(0..grid.len()));
            let (a, b) = (grid.get(i.min(j)), grid.get(i.max(j)));
            let small = build_prediction_set(rec.map(), a).unwrap();
            let large = build_prediction_set(rec.map(), b).unwrap();
            let nested = small.is_subset_of(&large);
            let fnr_ok = scored.loss_at(LossKind::Fnr, a) >= scored.loss_at(LossKind::Fnr, b);
            counterexamples += (!nested || !fnr_ok) as usize;
            pairs += 1;
        }
    }
    let mut curve_failures = 0;
    for c in 0..200 {
        let n = rng.random_range(1..=200);
        let lambdas: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let losses: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let curve = LossCurve::new(lambdas, losses).unwrap();
        let dir = if c % 2 == 0 {
            Monotonicity::NonIncreasing
        } else {
            Monotonicity::NonDecreasing
        };
        let once = monotonize(&curve, dir);
        let twice = monotonize(&once, dir);
        let dominates = once.losses().iter().zip(curve.losses()).all(|(m, l)| m >= l);
        curve_failures += (once.losses() != twice.losses() || !dominates) as usize;
    }
    Outcome::new(
        counterexamples == 0 && curve_failures == 0,
        format!(
            "{pairs} record/lambda pairs: {counterexamples} counterexamples; 200 curves: {curve_failures} monotonize failures"
        ),
    )
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let records = generate_dataset(&GeneratorParams::default(), 400, 606).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let grid = LambdaGrid::uniform(1000).unwrap();
    let rows = match ablate_splits(
        &records,
        &[0.3, 0.5, 0.7],
        &levels(&[0.1, 0.2, 0.3]),
        &seeds,
        LossKind::Fnr,
        &grid,
    ) {
        Ok(rows) => rows,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    let elapsed = started.elapsed();
    let passed = rows.iter().filter(|r| r.status == ControlStatus::Pass).count();
    let table: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "      ratio {:.1} alpha {:.1}: mean FNR {:.4} ({:?})",
                r.split_ratio,
                r.alpha,
                r.mean_test_risk.unwrap_or(f64::NAN),
                r.status
            )
        })
        .collect();
    Outcome::new(
        passed == rows.len() && rows.len() == 9 && elapsed < Duration::from_secs(120),
        format!(
            "{passed}/{} rows pass over 20 seeds in {:.1}s\n{}",
            rows.len(),
            elapsed.as_secs_f64(),
            table.join("\n")
        ),
    )
}

fn criterion_7(emitted: &mut Emitted) -> Outcome {
    let records = generate_dataset(&GeneratorParams::default(), 400, 707).unwrap();
    let alphas = tenths();
    let config = SweepConfig {
        kind: LossKind::FdrMonotonized,
        split_ratio: 0.5,
        seed: 77,
        grid: LambdaGrid::uniform(1000).unwrap(),
        search_mode: SearchMode::GridScan,
    };
    let rows = match sweep(&records, &alphas, &config) {
        Ok(rows) => rows,
        Err(e) => return Outcome::new(false, e.to_string()),
    };
    if rows.iter().any(|r| r.status != RowStatus::Ok) {
        return Outcome::new(false, "infeasible rows in FDR sweep");
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.alpha).collect();
    let sizes: Vec<f64> = rows.iter().map(|r| r.mean_predset_size.unwrap()).collect();
    let monotone = sizes.windows(2).all(|w| w[0] <= w[1]);
    let r = pearson(&xs, &sizes).unwrap_or(f64::NAN);
    let mut report = RunReport::new("sweep", RunParameters::default());
    report.sweep = rows;
    emitted.push(report);
    Outcome::new(
        monotone && r > 0.0,
        format!(
            "sizes non-decreasing: {monotone}; pearson(alpha, size) = {r:.4} ({} the 0.9 soft target)",
            if r > 0.9 { "above" } else { "below" }
        ),
    )
}

fn criterion_8() -> Outcome {
    let lvl = |a| RiskLevel::new(a).unwrap();
    let checks = [
        (crc_bound(lvl(0.1), 9), 0.0),
        (crc_bound(lvl(0.2), 99), 19.0 / 99.0),
        (crc_bound(lvl(1.0), 1), 1.0),
        (crc_bound(lvl(1.0), 10), 1.0),
        (crc_bound(lvl(1.0), 1000), 1.0),
    ];
    let exact = checks.iter().filter(|(got, want)| got == want).count();
    Outcome::new(exact == checks.len(), format!("{exact}/{} exact", checks.len()))
}

fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_riskseg"))
}

fn corrupted_header_checks(dir: &Path) -> Vec<(String, bool)> {
    let map = ProbabilityMap::new(2, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    let mut pmap = riskseg::io::encode_probability_map(&map);
    let mut checks = Vec::new();
    let mut bad_magic = pmap.clone();
    bad_magic[..4].copy_from_slice(b"PMAQ");
    checks.push((
        "pmap bad magic".into(),
        matches!(decode_probability_map(&bad_magic), Err(FormatError::BadMagic { .. })),
    ));
    checks.push((
        "pmap truncated header".into(),
        matches!(decode_probability_map(&pmap[..7]), Err(FormatError::Truncated { .. })),
    ));
    pmap.pop();
    checks.push((
        "pmap truncated payload".into(),
        matches!(decode_probability_map(&pmap), Err(FormatError::Truncated { .. })),
    ));
    checks.push((
        "pgm ascii P2".into(),
        matches!(decode_mask(b"P2 2 2 255\n0 0 0 0"), Err(FormatError::NotP5)),
    ));
    checks.push((
        "pgm maxval".into(),
        matches!(
            decode_mask(b"P5 2 2 65535\n\0\0\0\0\0\0\0\0"),
            Err(FormatError::BadHeader(_))
        ),
    ));
    checks.push((
        "pgm short raster".into(),
        matches!(
            decode_mask(b"P5 2 2 255\n\0\0\0"),
            Err(FormatError::TruncatedRaster { .. })
        ),
    ));

    // same corruption through the CLI must exit with the format-error code
    let records = generate_dataset(
        &GeneratorParams {
            height: 8,
            width: 8,
            ..Default::default()
        },
        4,
        1,
    )
    .unwrap();
    let manifest = write_dataset(&records, dir.join("corrupt")).unwrap();
    let victim = dir.join("corrupt/maps/sample-000002.pmap");
    let mut bytes = std::fs::read(&victim).unwrap();
    bytes[0] = b'Q';
    std::fs::write(&victim, bytes).unwrap();
    let status = cli()
        .args(["calibrate", "--loss", "fnr", "--alpha", "0.5", "--manifest"])
        .arg(&manifest)
        .arg("--out")
        .arg(dir.join("never.json"))
        .output()
        .unwrap()
        .status;
    checks.push((format!("cli exit {:?}", status.code()), status.code() == Some(3)));
    checks
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut identical = 0;
    for i in 0..100 {
        let rec = random_record(&mut rng);
        let (pm, pg) = (
            dir.path().join(format!("{i}.pmap")),
            dir.path().join(format!("{i}.pgm")),
        );
        write_probability_map(rec.map(), &pm).unwrap();
        write_mask(rec.mask(), &pg).unwrap();
        let map = read_probability_map(&pm).unwrap();
        let mask = read_mask(&pg).unwrap();
        let same_map = map.dims() == rec.map().dims()
            && map
                .values()
                .iter()
                .zip(rec.map().values())
                .all(|(a, b)| a.to_bits() == b.to_bits());
        identical += (same_map && &mask == rec.mask()) as usize;
    }
    let checks = corrupted_header_checks(dir.path());
    let bad: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| n.as_str()).collect();
    Outcome::new(
        identical == 100 && bad.is_empty(),
        format!(
            "{identical}/100 bit-identical round-trips; {}/{} corruption checks{}",
            checks.len() - bad.len(),
            checks.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!(" (failed: {})", bad.join(", "))
            }
        ),
    )
}

fn run_to(args: &[&str], threads: Option<usize>, out: &Path) -> Result<Vec<u8>, String> {
    let mut cmd = cli();
    if let Some(t) = threads {
        cmd.args(["--threads", &t.to_string()]);
    }
    let output = cmd
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !output.status.success() {
        return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&output.stderr)));
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let status = cli()
        .args(["simulate", "--n", "120", "--seed", "10", "--out-dir"])
        .arg(&data)
        .output()
        .unwrap()
        .status;
    if !status.success() {
        return Outcome::new(false, "simulate failed");
    }
    let manifest: PathBuf = data.join("manifest.json");
    let manifest = manifest.to_str().unwrap().to_string();
    let sweep_args = [
        "sweep",
        "--manifest",
        &manifest,
        "--loss",
        "fdr",
        "--alphas",
        "0.1,0.3,0.5,0.7,0.9",
        "--seed",
        "3",
    ];
    let guarantee_args = [
        "validate-guarantee",
        "--alpha",
        "0.2",
        "--loss",
        "fnr",
        "--n-cal",
        "50",
        "--n-test",
        "50",
        "--trials",
        "40",
        "--height",
        "32",
        "--width",
        "32",
        "--seed",
        "4",
    ];
    let many = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut summary = Vec::new();
    let mut ok = true;
    for (name, args) in [("sweep", &sweep_args[..]), ("validate-guarantee", &guarantee_args[..])] {
        for ext in ["json", "csv"] {
            let runs: Result<Vec<Vec<u8>>, String> = [None, None, Some(1), Some(many)]
                .iter()
                .enumerate()
                .map(|(i, &t)| run_to(args, t, &dir.path().join(format!("{name}-{i}.{ext}"))))
                .collect();
            match runs {
                Ok(runs) => {
                    let same = runs.windows(2).all(|w| w[0] == w[1]);
                    ok &= same;
                    summary.push(format!("{name}.{ext} {}", if same { "identical" } else { "DIFFERS" }));
                }
                Err(e) => {
                    ok = false;
                    summary.push(e);
                }
            }
        }
    }
    Outcome::new(
        ok,
        format!("two runs plus --threads 1 vs {many}: {}", summary.join(", ")),
    )
}

fn main() {
    let mut emitted = Emitted::default();
    let results = [
        ("1 FNR guarantee", criterion_1(&mut emitted)),
        ("2 monotonized FDR guarantee", criterion_2(&mut emitted)),
        ("3 oracle equivalence", criterion_3(&mut emitted)),
        ("5 monotonicity suite", criterion_5()),
        ("6 split-ratio ablation", criterion_6()),
        ("7 set size vs alpha", criterion_7(&mut emitted)),
        ("8 bound spot checks", criterion_8()),
        ("9 format round-trips", criterion_9()),
        ("10 determinism", criterion_10()),
    ];
    let c4 = ("4 precondition", criterion_4(&emitted));
    let mut all: Vec<_> = results.into_iter().collect();
    all.insert(3, c4);

    println!();
    let mut failed = 0;
    for (name, outcome) in &all {
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        failed += !outcome.pass as usize;
        println!("criterion {name}: {verdict} | {}", outcome.detail);
    }
    println!("\nacceptance: {} passed, {failed} failed", all.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
