//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use laplace_gmrf::cli::{self, load_model, read_summary_csv, RunConfig, SummaryRow};
use laplace_gmrf::engine::{run_inla, EngineSettings, InlaResult, Model, Strategy};
use laplace_gmrf::latent::{
    assemble_prior, ComponentSpec, Graph, HyperParam, HyperTransform, LatentModelSpec,
    DEFAULT_FIXED_PRIOR_PRECISION, INTRINSIC_JITTER,
};
use laplace_gmrf::likelihood::{loglik_binomial_logit, loglik_gaussian, loglik_poisson, Family, ObservationModel, PointEval};
use laplace_gmrf::oracle::{
    brute_posterior, dense_reference, frailty_correction_weight, lognormal_match, AxisMarginal, AxisRange,
    DenseOp, DenseOutput, OraclePosterior, QuadratureSpec,
};
use laplace_gmrf::par::Execution;
use laplace_gmrf::sparse::{constrain_sum_to_zero, factorize, CholeskyFactor, Ordering, SparseMatrix, SparsePrecision};

type Check = Result<String, String>;

type Criterion = (u32, &'static str, fn() -> Check);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "conjugate exactness", conjugate_exactness),
        (2, "oracle agreement", oracle_agreement),
        (3, "laplace strategy improvement", laplace_improvement),
        (4, "failure demo", failure_demo),
        (5, "kronecker correctness", kronecker_correctness),
        (6, "derivative checks", derivative_checks),
        (7, "linear algebra suite", linear_algebra_suite),
        (8, "multi-likelihood equivalence", multi_likelihood_equivalence),
        (9, "determinism", determinism),
        (10, "frailty weight identity", frailty_weight_identity),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {id:>2} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn fixture_config(name: &str, out: &Path) -> RunConfig {
    let dir = fixture(name);
    RunConfig::new(dir.join("model.json"), dir.join("data.csv"), out)
}

/// Grid used wherever the engine is compared with quadrature.
fn fine_settings(strategy: Strategy) -> EngineSettings {
    EngineSettings {
        strategy,
        grid_step: 0.5,
        grid_threshold: 5.0,
        ..EngineSettings::default()
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

// ---------------------------------------------------------------- 1

fn conjugate_exactness() -> Check {
    let (n, rows) = (100, 150);
    let (tau_x, tau_y) = (0.5f64, 2.0f64);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut triplets = Vec::new();
    for r in 0..rows {
        let mut cols: Vec<usize> = Vec::new();
        while cols.len() < 3 {
            let c = rng.random_range(0..n);
            if !cols.contains(&c) {
                cols.push(c);
            }
        }
        for c in cols {
            triplets.push((r, c, rng.random_range(0.2..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }));
        }
    }
    let y: Vec<f64> = (0..rows).map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let a = SparseMatrix::from_triplets(rows, n, &triplets).map_err(|e| e.to_string())?;
    let latent = LatentModelSpec::new(
        vec![ComponentSpec::iid("x", n, 0)],
        vec![
            HyperParam::log_precision("tau_x").fixed_at(tau_x.ln()),
            HyperParam::log_precision("tau_y").fixed_at(tau_y.ln()),
        ],
        DEFAULT_FIXED_PRIOR_PRECISION,
    )
    .map_err(|e| e.to_string())?;
    let obs = ObservationModel::single(Family::Gaussian { precision: 1 }, &y, a.clone()).map_err(|e| e.to_string())?;
    let model = Model::new(latent, obs).map_err(|e| e.to_string())?;

    let start = Instant::now();
    let res = run_inla(&model, &EngineSettings::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();

    let ad = a.to_dense();
    let q = DMatrix::identity(n, n) * tau_x + ad.transpose() * &ad * tau_y;
    let cov = q.clone().cholesky().ok_or("posterior precision not SPD")?.inverse();
    let mean = &cov * (ad.transpose() * DVector::from_vec(y) * tau_y);
    let mut err_mean = 0f64;
    let mut err_sd = 0f64;
    for i in 0..n {
        err_mean = err_mean.max((res.latent[i].summary.mean - mean[i]).abs());
        err_sd = err_sd.max((res.latent[i].summary.sd - cov[(i, i)].sqrt()).abs());
    }
    ensure(err_mean <= 1e-8 && err_sd <= 1e-8, || format!("max error mean {err_mean:e}, sd {err_sd:e} (limit 1e-8)"))?;
    ensure(elapsed < 1.0, || format!("runtime {elapsed:.3} s (limit 1 s)"))?;
    Ok(format!("max |Δmean| {err_mean:.1e}, max |Δsd| {err_sd:.1e}, {elapsed:.3} s"))
}

// ---------------------------------------------------------------- 2, 3

const ORACLE_POINTS: usize = 121;
const ORACLE_HALF_WIDTH: f64 = 8.0;

fn oracle_for(model: &Model, centre: &InlaResult) -> Result<OraclePosterior, String> {
    let spec = QuadratureSpec {
        latent_ranges: centre
            .latent
            .iter()
            .map(|m| AxisRange::around(m.summary.mean, ORACLE_HALF_WIDTH * m.summary.sd, ORACLE_POINTS))
            .collect(),
        theta_ranges: centre
            .hyper
            .iter()
            .map(|h| AxisRange::around(h.internal.summary.mean, ORACLE_HALF_WIDTH * h.internal.summary.sd, ORACLE_POINTS))
            .collect(),
    };
    brute_posterior(&model.latent, &model.obs, &spec, Execution::Parallel).map_err(|e| e.to_string())
}

/// Mean of `g(θ)` under a quadrature marginal on the internal scale.
fn natural_mean(m: &AxisMarginal, g: impl Fn(f64) -> f64) -> f64 {
    let s = &m.support;
    (1..s.len())
        .map(|k| 0.5 * (s[k] - s[k - 1]) * (m.density[k] * g(s[k]) + m.density[k - 1] * g(s[k - 1])))
        .sum()
}

fn oracle_agreement() -> Check {
    let start = Instant::now();
    let mut worst = (0f64, 0f64, 0f64);
    for name in ["tiny_poisson", "tiny_binomial", "tiny_gaussian"] {
        let (model, _, _) = load_model(&fixture_config(name, Path::new("unused"))).map_err(|e| e.to_string())?;
        let res = run_inla(&model, &fine_settings(Strategy::Laplace)).map_err(|e| e.to_string())?;
        let oracle = oracle_for(&model, &res)?;
        for (i, (e, o)) in res.latent.iter().zip(&oracle.latent).enumerate() {
            let (dm, ds) = (rel(e.summary.mean, o.mean), rel(e.summary.sd, o.sd));
            worst.0 = worst.0.max(dm);
            worst.1 = worst.1.max(ds);
            ensure(dm <= 0.02 && ds <= 0.02, || {
                format!(
                    "{name} x{i}: engine {:.5}/{:.5} vs oracle {:.5}/{:.5}",
                    e.summary.mean, e.summary.sd, o.mean, o.sd
                )
            })?;
        }
        let hypers = model.latent.hypers();
        for ((h, o), &slot) in res.hyper.iter().zip(&oracle.hyper).zip(&model.latent.free_slots()) {
            let tr = hypers[slot].transform;
            let om = natural_mean(o, |t| tr.to_natural(t));
            let dh = rel(h.natural.summary.mean, om);
            worst.2 = worst.2.max(dh);
            ensure(dh <= 0.05, || format!("{name} {}: engine mean {:.5} vs oracle {om:.5}", h.name, h.natural.summary.mean))?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 10.0, || format!("runtime {elapsed:.2} s (limit 10 s)"))?;
    Ok(format!(
        "worst relative error: latent mean {:.2}%, latent sd {:.2}%, hyper mean {:.2}%; {elapsed:.2} s",
        100.0 * worst.0,
        100.0 * worst.1,
        100.0 * worst.2
    ))
}

fn laplace_improvement() -> Check {
    let (model, _, _) = load_model(&fixture_config("poisson_pair", Path::new("unused"))).map_err(|e| e.to_string())?;
    let gauss = run_inla(&model, &fine_settings(Strategy::Gaussian)).map_err(|e| e.to_string())?;
    let lap = run_inla(&model, &fine_settings(Strategy::Laplace)).map_err(|e| e.to_string())?;
    let oracle = oracle_for(&model, &lap)?;
    let mut detail = Vec::new();
    for (i, o) in oracle.latent.iter().enumerate() {
        let eg = (gauss.latent[i].summary.mean - o.mean).abs();
        let el = (lap.latent[i].summary.mean - o.mean).abs();
        ensure(el <= eg, || format!("x{i}: laplace error {el:.2e} > gaussian error {eg:.2e}"))?;
        detail.push(format!("x{i} {el:.1e} vs {eg:.1e}"));
    }
    Ok(format!("|laplace − oracle| vs |gaussian − oracle|: {}", detail.join(", ")))
}

// ---------------------------------------------------------------- 4

const FAILURE_DEMO_SEED: u64 = 4;

fn failure_demo() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(FAILURE_DEMO_SEED);
    let mut csv = String::from("num,y\n");
    for i in 1..=100 {
        let u: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
        let p = 1.0 / (1.0 + (-u).exp());
        csv.push_str(&format!("{i},{}\n", u8::from(rng.random_bool(p))));
    }
    let data = dir.path().join("data.csv");
    std::fs::write(&data, csv).map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(fixture("failure_demo").join("model.json"), &data, dir.path().join("out"));
    config.seed = FAILURE_DEMO_SEED;

    let start = Instant::now();
    cli::run(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(dir.path().join("out").join(cli::SUMMARY_FILE)).map_err(|e| e.to_string())?;
    let rows = read_summary_csv(&text).map_err(|e| e.to_string())?;
    let tau = rows
        .iter()
        .find(|r| r.block == "hyper" && r.name == "precision_u")
        .ok_or("no precision row in summary.csv")?;
    let median = tau.values[3];
    ensure(median > 5.0, || format!("posterior median of the iid precision {median:.3} (needs > 5)"))?;
    ensure(elapsed < 30.0, || format!("runtime {elapsed:.2} s (limit 30 s)"))?;
    Ok(format!("posterior median precision {median:.2} (true value 1), {elapsed:.2} s"))
}

// ---------------------------------------------------------------- 5

fn kronecker_correctness() -> Check {
    let (na, nb, phi) = (4usize, 5usize, 0.6f64);
    let graph = Graph::from_edges(nb, &[(0, 1), (1, 2), (2, 3), (3, 4)]).map_err(|e| e.to_string())?;
    let latent = LatentModelSpec::new(
        vec![ComponentSpec::besag("s", graph, 0).with_group(na, 1)],
        vec![HyperParam::log_precision("tau"), HyperParam::correlation("rho")],
        DEFAULT_FIXED_PRIOR_PRECISION,
    )
    .map_err(|e| e.to_string())?;
    let theta = [0.0, HyperTransform::LogitCorrelation.to_internal(phi)];
    let assembly = assemble_prior(&latent, &theta).map_err(|e| e.to_string())?;

    // AR(1) precision as the inverse of its covariance φ^|i−j|
    let a = DMatrix::from_fn(na, na, |i, j| phi.powi((i as i32 - j as i32).abs()))
        .try_inverse()
        .ok_or("singular AR(1) covariance")?;
    let b = DMatrix::from_fn(nb, nb, |i, j| {
        let deg = if i == 0 || i == nb - 1 { 1.0 } else { 2.0 };
        match (i as i64 - j as i64).abs() {
            0 => deg + INTRINSIC_JITTER,
            1 => -1.0,
            _ => 0.0,
        }
    });
    let kron = match dense_reference(DenseOp::Kronecker(&a, &b)).map_err(|e| e.to_string())? {
        DenseOutput::Matrix(m) => m,
        other => return Err(format!("unexpected dense output {other:?}")),
    };
    let err = (assembly.q.to_dense() - &kron).amax();
    ensure(err <= 1e-12, || format!("max entry error {err:e} (limit 1e-12)"))?;

    let eig_logdet = |m: &DMatrix<f64>| m.clone().symmetric_eigen().eigenvalues.iter().map(|v| v.ln()).sum::<f64>();
    let expected = nb as f64 * eig_logdet(&a) + na as f64 * eig_logdet(&b);
    let logdet = factorize(&assembly.q).map_err(|e| e.to_string())?.logdet();
    let lerr = (logdet - expected).abs();
    ensure(lerr <= 1e-8, || format!("logdet {logdet} vs {expected} (error {lerr:e}, limit 1e-8)"))?;
    Ok(format!("max entry error {err:.1e}, logdet error {lerr:.1e}"))
}

// ---------------------------------------------------------------- 6

fn derivative_checks() -> Check {
    const H: f64 = 1e-5;
    // relative error with a unit floor on the reference magnitude
    let err = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let check = |name: &str, f: &dyn Fn(f64) -> PointEval| -> Result<f64, String> {
        let mut worst = 0f64;
        for k in 0..100 {
            let eta = -4.0 + 8.0 * k as f64 / 99.0;
            let p = f(eta);
            let (up, down) = (f(eta + H), f(eta - H));
            let d1 = (up.loglik - down.loglik) / (2.0 * H);
            let d2 = -(up.d1 - down.d1) / (2.0 * H);
            let e = err(p.d1, d1).max(err(p.d2neg, d2));
            worst = worst.max(e);
            ensure(e <= 1e-6, || format!("{name} at eta = {eta}: error {e:e}"))?;
        }
        Ok(worst)
    };
    let mut worst = 0f64;
    for k in 0..100 {
        let y = 3.0 * (k as f64).sin();
        let log_prec = -1.0 + 0.5 * (k % 5) as f64;
        worst = worst.max(check("gaussian", &|eta| loglik_gaussian(y, eta, log_prec))?);
        let count = (k % 7) as f64;
        let offset = 0.25 * (k % 3) as f64 - 0.25;
        worst = worst.max(check("poisson", &|eta| loglik_poisson(count, eta, offset).unwrap())?);
        let n = (1 + k % 10) as f64;
        let yb = (k % (1 + k % 10 + 1)) as f64;
        worst = worst.max(check("binomial", &|eta| loglik_binomial_logit(yb, n, eta).unwrap())?);
    }
    Ok(format!("worst relative error {worst:.1e} over 100 × 100 (y, η) points per family"))
}

// ---------------------------------------------------------------- 7

fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> (SparsePrecision, DMatrix<f64>) {
    let mut dense = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            if rng.random_bool(0.15) {
                let v = rng.random_range(-1.0..1.0);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| f64::abs(dense[(i, j)])).sum();
        dense[(i, i)] = off + rng.random_range(0.5..1.5);
    }
    let triplets: Vec<_> = (0..n)
        .flat_map(|j| (j..n).map(move |i| (i, j)))
        .filter(|&(i, j)| i == j || dense[(i, j)] != 0.0)
        .map(|(i, j)| (i, j, dense[(i, j)]))
        .collect();
    (SparsePrecision::from_triplets(n, &triplets).expect("valid triplets"), dense)
}

fn vector(out: DenseOutput) -> Result<DVector<f64>, String> {
    match out {
        DenseOutput::Vector(v) => Ok(v),
        other => Err(format!("unexpected dense output {other:?}")),
    }
}

fn linear_algebra_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scaled = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
    let mut worst = 0f64;
    let mut worst_sum = 0f64;
    for case in 0..30 {
        let n = rng.random_range(2..=50);
        let (q, dense) = random_spd(&mut rng, n);
        let fail = |what: &str, e: f64| format!("instance {case} (n = {n}): {what} error {e:e} (limit 1e-10)");

        let (l_ref, logdet_ref) = match dense_reference(DenseOp::Factorize(&dense)).map_err(|e| e.to_string())? {
            DenseOutput::Factor { l, logdet } => (l, logdet),
            other => return Err(format!("unexpected dense output {other:?}")),
        };
        let natural = CholeskyFactor::new(&q, Ordering::Natural).map_err(|e| e.to_string())?;
        let e = (natural.l_dense() - &l_ref).amax();
        worst = worst.max(e);
        ensure(e <= 1e-10, || fail("factor", e))?;

        let factor = factorize(&q).map_err(|e| e.to_string())?;
        let e = scaled(factor.logdet(), logdet_ref);
        worst = worst.max(e);
        ensure(e <= 1e-10, || fail("logdet", e))?;

        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x_ref = vector(dense_reference(DenseOp::Solve(&dense, &DVector::from_vec(b.clone()))).map_err(|e| e.to_string())?)?;
        let x = factor.solve(&b).map_err(|e| e.to_string())?;
        let e = x.iter().zip(x_ref.iter()).map(|(a, b)| scaled(*a, *b)).fold(0.0, f64::max);
        worst = worst.max(e);
        ensure(e <= 1e-10, || fail("solve", e))?;

        let v_ref = vector(dense_reference(DenseOp::MarginalVariances(&dense)).map_err(|e| e.to_string())?)?;
        for (what, v) in [
            ("marginal variance", factor.marginal_variances()),
            ("selected inverse", factor.marginal_variances_partial()),
        ] {
            let e = v.iter().zip(v_ref.iter()).map(|(a, b)| scaled(*a, *b)).fold(0.0, f64::max);
            worst = worst.max(e);
            ensure(e <= 1e-10, || fail(what, e))?;
        }

        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let ones = DMatrix::from_element(1, n, 1.0);
        let (constrained, _) = constrain_sum_to_zero(&mean, &factor, &ones).map_err(|e| e.to_string())?;
        let s = constrained.iter().sum::<f64>().abs();
        worst_sum = worst_sum.max(s);
        ensure(s <= 1e-10, || fail("constrained sum", s))?;
    }
    Ok(format!("30 instances, worst error {worst:.1e}, worst constrained sum {worst_sum:.1e}"))
}

// ---------------------------------------------------------------- 8

fn summary_rows(config: &RunConfig) -> Result<Vec<SummaryRow>, String> {
    let out = cli::execute(config).map_err(|e| e.to_string())?;
    read_summary_csv(&out.summary_csv).map_err(|e| e.to_string())
}

/// Write a two-column copy of a single-response model: odd rows keep their
/// response in the first column, even rows move it to the second.
fn split_fixture(name: &str, dir: &Path, second: &str) -> Result<RunConfig, String> {
    let src = fixture(name);
    let model = std::fs::read_to_string(src.join("model.json")).map_err(|e| e.to_string())?;
    let mut doc: serde_json::Value = serde_json::from_str(&model).map_err(|e| e.to_string())?;
    let mut lik = doc["likelihoods"][0].clone();
    doc["likelihoods"][0]["response"] = "y1".into();
    lik["response"] = "y2".into();
    if let Some(p) = lik.get_mut("precision") {
        *p = second.into();
    }
    doc["likelihoods"].as_array_mut().expect("likelihood list").push(lik);
    std::fs::write(dir.join("model.json"), doc.to_string()).map_err(|e| e.to_string())?;

    let data = std::fs::read_to_string(src.join("data.csv")).map_err(|e| e.to_string())?;
    let mut lines = data.lines();
    let header: Vec<&str> = lines.next().ok_or("empty data")?.split(',').collect();
    let y = header.iter().position(|h| *h == "y").ok_or("no y column")?;
    let mut out = header.iter().map(|h| if *h == "y" { "y1,y2" } else { h }).collect::<Vec<_>>().join(",");
    out.push('\n');
    for (r, line) in lines.enumerate() {
        let cells: Vec<String> = line
            .split(',')
            .enumerate()
            .map(|(j, c)| match (j == y, r % 2) {
                (true, 0) => format!("{c},NA"),
                (true, _) => format!("NA,{c}"),
                _ => c.to_string(),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(dir.join("data.csv"), out).map_err(|e| e.to_string())?;
    Ok(RunConfig::new(dir.join("model.json"), dir.join("data.csv"), dir.join("out")))
}

fn multi_likelihood_equivalence() -> Check {
    let mut worst = 0f64;
    for (name, shared) in [("poisson_pair", ""), ("tiny_gaussian", "tau")] {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let single = summary_rows(&fixture_config(name, &dir.path().join("single")))?;
        let double = summary_rows(&split_fixture(name, dir.path(), shared)?)?;
        ensure(single.len() == double.len(), || format!("{name}: row counts differ"))?;
        for (a, b) in single.iter().zip(&double) {
            ensure((&a.block, &a.name, a.index) == (&b.block, &b.name, b.index), || {
                format!("{name}: row labels differ: {a:?} vs {b:?}")
            })?;
            for (x, y) in a.values.iter().zip(&b.values) {
                let e = (x - y).abs();
                worst = worst.max(e);
                ensure(e <= 1e-10, || format!("{name} {} {}: {x} vs {y}", a.block, a.name))?;
            }
        }
    }
    Ok(format!("two-column layouts (poisson; gaussian with shared precision) match, max |Δ| {worst:.1e}"))
}

// ---------------------------------------------------------------- 9

fn determinism() -> Check {
    let exe = env!("CARGO_BIN_EXE_laplace-gmrf");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let src = fixture("tiny_binomial");
    let run = |tag: &str, extra: &[&str], threads: Option<&str>| -> Result<Vec<Vec<u8>>, String> {
        let out = dir.path().join(tag);
        let mut cmd = Command::new(exe);
        cmd.arg("run")
            .arg("--model")
            .arg(src.join("model.json"))
            .arg("--data")
            .arg(src.join("data.csv"))
            .arg("--out")
            .arg(&out)
            .args(["--strategy", "laplace", "--grid-step", "0.5", "--seed", "17"])
            .args(extra);
        if let Some(t) = threads {
            cmd.env("RAYON_NUM_THREADS", t);
        }
        let status = cmd.output().map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("{tag}: exit {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
        })?;
        [cli::SUMMARY_FILE, cli::MARGINALS_FILE, cli::DIAGNOSTICS_FILE]
            .iter()
            .map(|f| std::fs::read(out.join(f)).map_err(|e| e.to_string()))
            .collect()
    };
    let reference = run("first", &[], None)?;
    let variants = [
        ("second", run("second", &[], None)?),
        ("serial", run("serial", &["--serial"], None)?),
        ("one-thread", run("one-thread", &[], Some("1"))?),
        ("three-threads", run("three-threads", &[], Some("3"))?),
    ];
    for (tag, files) in &variants {
        for (k, (a, b)) in reference.iter().zip(files).enumerate() {
            ensure(a == b, || format!("{tag}: file {k} differs from the first run"))?;
        }
    }
    Ok(format!(
        "summary.csv, marginals.json and diagnostics.json byte-identical across {} runs (repeat, serial, 1 and 3 threads)",
        variants.len() + 1
    ))
}

// ---------------------------------------------------------------- 10

const FRAILTY_SEED: u64 = 10;
const FRAILTY_DRAWS: usize = 1_000_000;

fn frailty_weight_identity() -> Check {
    let mut detail = Vec::new();
    for (shape, rate) in [(1.0, 1.0), (4.0, 4.0), (10.0, 2.0)] {
        let (mu, var) = lognormal_match(shape, rate);
        let sigma = var.sqrt();
        let dist = LogNormal::new(mu, sigma).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(FRAILTY_SEED);
        let mut total = 0.0;
        for _ in 0..FRAILTY_DRAWS {
            total += frailty_correction_weight(dist.sample(&mut rng), shape, rate).map_err(|e| e.to_string())?;
        }
        let mc = total / FRAILTY_DRAWS as f64;
        ensure((mc - 1.0).abs() <= 0.01, || format!("({shape}, {rate}): Monte Carlo mean {mc}"))?;

        // ∫ w(v) LN(v) dv with v = eˢ
        let points = 40_001;
        let (lo, hi) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
        let h = (hi - lo) / (points - 1) as f64;
        let mut quad = 0.0;
        for k in 0..points {
            let s: f64 = lo + h * k as f64;
            let v = s.exp();
            let ln_pdf = -0.5 * ((s - mu) / sigma).powi(2) - (sigma * (2.0 * std::f64::consts::PI).sqrt()).ln();
            let f = frailty_correction_weight(v, shape, rate).map_err(|e| e.to_string())? * ln_pdf.exp();
            quad += if k == 0 || k == points - 1 { 0.5 * f } else { f };
        }
        quad *= h;
        ensure((quad - 1.0).abs() <= 1e-3, || format!("({shape}, {rate}): quadrature {quad}"))?;
        detail.push(format!("({shape}, {rate}) MC {mc:.4} quad {quad:.6}"));
    }
    Ok(detail.join("; "))
}
