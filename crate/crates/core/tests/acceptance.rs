//! Acceptance suite. Each test prints one `CRITERION n [PASS|FAIL]` line.
//!
//! Criteria 1-5 run with the normal test suite. Criteria 6-10 train desk-scale
//! models and are ignored by default:
//!
//! ```text
//! cargo test --release -p g2node-core --test acceptance -- --ignored --test-threads=1 --nocapture
//! ```
//!
//! Their datasets and runs are cached under `G2NODE_ACCEPTANCE_DIR` (default
//! `target/acceptance`), and interrupted runs resume from their saved state.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use g2node::dataset::{build_dataset, sample_params, DatasetConfig, Dataset, GridSpec, ParamRanges, Split};
use g2node::diffcalc::{gradcheck, ode_trajectory, Tensor};
use g2node::models::{load_checkpoint, LstmOdeConfig, Model, ModelConfig, ResNet1dConfig};
use g2node::noise::{add_shot_noise, NoiseSpec};
use g2node::physics::{count_turning_points, simulate, DelayGrid, G2Map, TauGrid};
use g2node::recover::spectral_recover;
use g2node::training::{
    evaluate, fourier_loss, load_split, predict_g2, read_metrics, train_dataset, validation_loss, EvalReport,
    FourierRows, Persistence, RunDir, TrainConfig, TrainData, BEST_CHECKPOINT, METRICS_FILE,
};

/// Written straight to stdout so the line shows up without `--nocapture`.
fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("CRITERION {n} [{}] {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn unit_sum(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[test]
fn criterion_1_physics_round_trip() {
    let clock = Instant::now();
    let grid = GridSpec::full_nyquist(512, 10.0, 16);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let params = sample_params(seed, &ParamRanges::default(), &grid, 1e7).unwrap();
        let sim = simulate(&params).unwrap();
        let p_hat = spectral_recover(&sim.clean, params.contrast).unwrap();
        for i in 0..grid.n_tau {
            let truth = unit_sum(sim.correlation.values.row(i).as_slice().unwrap());
            let got = unit_sum(p_hat.values.row(i).as_slice().unwrap());
            worst = worst.max(rel_l2(&got, &truth));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = worst < 1e-6 && secs < 60.0;
    report(1, pass, &format!("50 random parameter sets, worst row rel L2 {worst:.2e} (< 1e-6), {secs:.1} s (< 60 s)"));
    assert!(pass);
}

fn direct_autocorrelation(s: &[f64], dw: f64) -> Vec<f64> {
    let n = s.len();
    let c = n / 2;
    (0..n)
        .map(|k| (0..n).map(|i| s[i] * s[(i + (k + n - c) % n) % n]).sum::<f64>() * dw)
        .collect()
}

fn brute_fourier(a: &Tensor, b: &Tensor, rows: &[usize]) -> f64 {
    let s = a.shape();
    let (n_b, n_t, n_tau) = (s[0], s[1], s[2]);
    let (a, b) = (a.data(), b.data());
    let mut acc = 0.0;
    for e in 0..n_b {
        for &r in rows {
            for k in 0..n_t {
                let mut d = 0.0;
                for n in 0..n_t {
                    let i = (e * n_t + n) * n_tau + r;
                    d += (a[i] - b[i]) * (std::f64::consts::TAU * (k * n) as f64 / n_t as f64).cos();
                }
                acc += d * d;
            }
        }
    }
    acc / (n_b * rows.len() * n_t) as f64
}

#[test]
fn criterion_2_oracle_equivalence() {
    use g2node::physics::{autocorrelate, EnergyGrid, Spectrum};
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_acf: f64 = 0.0;
    for n in [256usize, 512, 1024] {
        let grid = EnergyGrid::for_simulation(n, 1.5).unwrap();
        let s: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let fast = autocorrelate(&Spectrum {
            grid,
            intensity: s.clone(),
            components: vec![],
        });
        let slow = direct_autocorrelation(&s, 1.5);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = slow.iter().cloned().fold(0.0, f64::max);
        worst_acf = worst_acf.max(err / scale);
    }
    let mut worst_fl: f64 = 0.0;
    for _ in 0..100 {
        let (n_t, n_tau) = (rng.gen_range(4..40), rng.gen_range(3..20));
        let shape = [2, n_t, n_tau];
        let make = |rng: &mut ChaCha8Rng| Tensor::new((0..2 * n_t * n_tau).map(|_| rng.gen_range(0.0..1.0)).collect(), &shape).unwrap();
        let (a, b) = (make(&mut rng), make(&mut rng));
        let rows = FourierRows::Default;
        let got = fourier_loss(&a, &b, &rows).unwrap().item();
        let want = brute_fourier(&a, &b, &rows.resolve(n_tau).unwrap());
        worst_fl = worst_fl.max((got - want).abs() / want);
    }
    let pass = worst_acf < 1e-10 && worst_fl < 1e-10;
    report(
        2,
        pass,
        &format!("FFT autocorrelation rel err {worst_acf:.1e}, Fourier loss rel err {worst_fl:.1e} over 100 pairs (< 1e-10)"),
    );
    assert!(pass);
}

type OpFn = fn(&[Tensor]) -> g2node::Result<Tensor>;

fn core_ops() -> Vec<(&'static str, usize, OpFn)> {
    vec![
        ("add", 2, |t| t[0].add(&t[1])),
        ("sub", 2, |t| t[0].sub(&t[1])),
        ("mul", 2, |t| t[0].mul(&t[1])),
        ("div", 2, |t| t[0].div(&t[1].square().add_scalar(1.0))),
        ("scale", 1, |t| Ok(t[0].scale(-1.7))),
        ("add_scalar", 1, |t| Ok(t[0].add_scalar(0.3))),
        ("neg", 1, |t| Ok(t[0].neg())),
        ("square", 1, |t| Ok(t[0].square())),
        ("exp", 1, |t| Ok(t[0].exp())),
        ("sigmoid", 1, |t| Ok(t[0].sigmoid())),
        ("tanh", 1, |t| Ok(t[0].tanh())),
        ("relu", 1, |t| Ok(t[0].relu())),
        ("lincomb", 2, |t| Tensor::lincomb(&[(&t[0], 0.5), (&t[1], -2.0)])),
        ("sum", 1, |t| Ok(t[0].sum())),
        ("mean", 1, |t| Ok(t[0].mean())),
        ("mse", 2, |t| t[0].mse(&t[1])),
        ("sum_axis", 1, |t| t[0].sum_axis(1)),
        ("softmax", 1, |t| t[0].softmax(1)),
        ("slice", 1, |t| t[0].slice(1, 1, 3)),
        ("select", 1, |t| t[0].select(1, 2)),
        ("concat", 2, |t| Tensor::concat(&[t[0].clone(), t[1].clone()], 1)),
        ("stack", 2, |t| Tensor::stack(&[t[0].clone(), t[1].clone()], 0)),
        ("reshape", 1, |t| {
            let n = t[0].len();
            t[0].reshape(&[n])
        }),
        ("transpose", 1, |t| {
            let s = t[0].shape().to_vec();
            t[0].reshape(&[s[0], s[1..].iter().product()])?.transpose()
        }),
        ("matmul", 2, |t| {
            let s = t[0].shape().to_vec();
            let a = t[0].reshape(&[s[0], s[1..].iter().product()])?;
            let b = t[1].reshape(&[s[0], s[1..].iter().product()])?;
            a.matmul(&b.transpose()?)
        }),
    ]
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), shape).unwrap()
}

#[test]
fn criterion_3_differentiation_correctness() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shapes: [&[usize]; 3] = [&[2, 3], &[3, 4, 2], &[1, 5, 3]];
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (name, arity, f) in core_ops() {
        for shape in shapes {
            let inputs: Vec<Tensor> = (0..arity).map(|_| random(&mut rng, shape)).collect();
            let r = gradcheck(f, &inputs, 1e-6, 1e-4).unwrap();
            worst = worst.max(r.max_rel_error());
            count += 1;
            if !r.passed() {
                failures.push(format!("{name}{shape:?}"));
            }
        }
    }
    // Structured ops with their own shape rules.
    for (b, c_in, c_out, l) in [(1, 2, 3, 5), (2, 3, 2, 7), (3, 1, 4, 4)] {
        let inputs = vec![random(&mut rng, &[b, c_in, l]), random(&mut rng, &[c_out, c_in, 3]), random(&mut rng, &[c_out])];
        let r = gradcheck(|t| t[0].conv1d(&t[1], Some(&t[2])), &inputs, 1e-6, 1e-4).unwrap();
        worst = worst.max(r.max_rel_error());
        count += 1;
        if !r.passed() {
            failures.push(format!("conv1d[{b},{c_in},{l}]"));
        }
    }
    for (b, d, h) in [(1, 2, 2), (2, 3, 4), (3, 4, 1)] {
        let inputs = vec![random(&mut rng, &[b, d]), random(&mut rng, &[d, h]), random(&mut rng, &[h])];
        let r = gradcheck(|t| t[0].affine(&t[1], &t[2]), &inputs, 1e-6, 1e-4).unwrap();
        worst = worst.max(r.max_rel_error());
        let cell = vec![random(&mut rng, &[b, 4 * h]), random(&mut rng, &[b, h])];
        let r2 = gradcheck(|t| t[0].lstm_cell(&t[1]), &cell, 1e-6, 1e-4).unwrap();
        worst = worst.max(r2.max_rel_error());
        count += 2;
        if !r.passed() {
            failures.push(format!("affine[{b},{d},{h}]"));
        }
        if !r2.passed() {
            failures.push(format!("lstm_cell[{b},{h}]"));
        }
        let h0 = vec![random(&mut rng, &[b, h]), random(&mut rng, &[h, h])];
        let grid: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let r3 = gradcheck(
            |t| {
                let traj = ode_trajectory(|z, _| z.matmul(&t[1]).map(|v| v.tanh()), &t[0], &grid, 1)?;
                Tensor::stack(&traj, 1)
            },
            &h0,
            1e-6,
            1e-4,
        )
        .unwrap();
        worst = worst.max(r3.max_rel_error());
        count += 1;
        if !r3.passed() {
            failures.push(format!("ode[{b},{h}]"));
        }
    }

    let model = Model::new(&ModelConfig::LstmOde(LstmOdeConfig::tiny()), 1).unwrap();
    let x = {
        let t = random(&mut rng, &[2, 10, 16]);
        Tensor::new(t.to_vec(), &[2, 10, 16]).unwrap()
    };
    let t_norm: Vec<f64> = (0..10).map(|i| i as f64 / 65.0).collect();
    let params: Vec<Tensor> = model.params().iter().map(|p| p.tensor.clone()).collect();
    let e2e = gradcheck(|_| model.forward(&x, &t_norm), &params, 1e-5, 1e-3).unwrap();
    let secs = clock.elapsed().as_secs_f64();
    let pass = failures.is_empty() && e2e.passed() && secs < 300.0;
    report(
        3,
        pass,
        &format!(
            "{count} op checks, worst rel err {worst:.1e} (< 1e-4), failures {failures:?}; tiny LSTM-ODE rel err {:.1e} (< 1e-3); {secs:.0} s",
            e2e.max_rel_error()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_solver_order() {
    let grid = |n: usize| (0..=n).map(|i| i as f64 / n as f64).collect::<Vec<_>>();
    let err = |n: usize| {
        let h0 = Tensor::new(vec![1.0], &[1, 1]).unwrap();
        let traj = ode_trajectory(|h, _| Ok(h.neg()), &h0, &grid(n), 1).unwrap();
        (traj.last().unwrap().item() - (-1.0f64).exp()).abs()
    };
    let orders: Vec<f64> = [5, 10, 20].iter().map(|&n| (err(n) / err(2 * n)).log2()).collect();
    let e200 = err(200);
    let pass = orders.iter().all(|o| (3.7..=4.3).contains(o)) && e200 < 1e-9;
    report(4, pass, &format!("measured orders {orders:.3?} (in [3.7, 4.3]), h(1) error at 200 steps {e200:.1e} (< 1e-9)"));
    assert!(pass);
}

#[test]
fn criterion_5_noise_statistics() {
    let tau = TauGrid::standard(128).unwrap();
    let bins = [0, 32, 64, 96, 127];
    // A clean column from a simulated map, on two delays.
    let mut params = g2node::dataset::SimParams::example();
    params.grid.n_t = 2;
    let sim = simulate(&params).unwrap();
    let clean = G2Map {
        values: sim.clean.values.clone(),
        tau: tau.clone(),
        t: DelayGrid::uniform(2, params.grid.t_max).unwrap(),
        is_noisy: false,
        contrast: params.contrast,
    };
    let scale = NoiseSpec::calibrated_scale(&tau, 20.0);
    let widths = g2node::noise::bin_widths(&tau);
    let w_max = widths.iter().cloned().fold(0.0, f64::max);
    let draws = 10_000;
    let mut samples = vec![Vec::with_capacity(draws); bins.len()];
    for seed in 0..draws as u64 {
        let noisy = add_shot_noise(&clean, &NoiseSpec { intensity_scale: scale, seed }).unwrap();
        for (s, &i) in samples.iter_mut().zip(&bins) {
            s.push(noisy.values[[i, 1]]);
        }
    }
    let mut ok = true;
    let mut lines = Vec::new();
    let mut prev_std = f64::INFINITY;
    for (s, &i) in samples.iter().zip(&bins) {
        let truth = clean.values[[i, 1]];
        let amp = scale * widths[i] / w_max;
        let predicted_var = truth / amp;
        let mean = s.iter().sum::<f64>() / draws as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let sigma = (predicted_var / draws as f64).sqrt();
        let mean_ok = (mean - truth).abs() <= 3.0 * sigma;
        let var_ok = (var / predicted_var - 1.0).abs() <= 0.10;
        let std = var.sqrt();
        let mono = std <= prev_std;
        prev_std = std;
        ok &= mean_ok && var_ok && mono;
        lines.push(format!("bin {i}: |dmean|/sigma {:.2}, var ratio {:.3}, std {std:.2e}", (mean - truth).abs() / sigma, var / predicted_var));
    }
    report(5, ok, &format!("10^4 draws per bin; {}", lines.join("; ")));
    assert!(ok);
}

// ---------------------------------------------------------------------------------
// Desk-scale criteria.

fn root() -> PathBuf {
    std::env::var_os("G2NODE_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance"))
}

fn env_usize(name: &str, default: usize) -> usize {
    std::env::var(name).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn desk_config(t_max: f64, n_t: usize) -> DatasetConfig {
    DatasetConfig {
        grid: GridSpec {
            t_max,
            n_t,
            ..GridSpec::desk()
        },
        seed: 2024,
        created: "acceptance".into(),
        ..DatasetConfig::default()
    }
}

/// Builds the dataset once; later calls reopen it.
fn dataset(name: &str, config: &DatasetConfig) -> Dataset {
    let dir = root().join(name);
    if !dir.join(g2node::dataset::MANIFEST_FILE).exists() {
        let clock = Instant::now();
        build_dataset(config, &dir).unwrap();
        println!("built {name} in {:.0} s", clock.elapsed().as_secs_f64());
    }
    Dataset::open(&dir).unwrap()
}

fn train_config(fourier_weight: f64) -> TrainConfig {
    TrainConfig {
        max_epochs: env_usize("G2NODE_DESK_EPOCHS", 60),
        fourier_weight,
        seed: 7,
        ..TrainConfig::default()
    }
}

struct Run {
    model: Model,
    wall_seconds: f64,
    epochs: usize,
}

/// Trains (or resumes, or reloads) a run; finished runs leave a `done` marker.
fn run(name: &str, data: &Dataset, model_config: &ModelConfig, config: &TrainConfig) -> Run {
    let dir = root().join("runs").join(name);
    let done = dir.join("done");
    if !done.exists() {
        let model = Model::new(model_config, config.seed).unwrap();
        train_dataset(
            &model,
            data,
            config,
            RunDir {
                path: Some(&dir),
                resume: true,
                stop_at: None,
            },
        )
        .unwrap();
        fs::write(&done, "").unwrap();
    }
    let (model, _) = load_checkpoint(&dir.join(BEST_CHECKPOINT)).unwrap();
    let metrics = read_metrics(&dir.join(METRICS_FILE)).unwrap();
    Run {
        model,
        wall_seconds: metrics.last().map_or(0.0, |m| m.wall_seconds),
        epochs: metrics.len(),
    }
}

fn lstm_ode(data: &Dataset) -> ModelConfig {
    let g = &data.manifest.grid;
    ModelConfig::LstmOde(LstmOdeConfig::new(g.n_tau, g.n_t))
}

fn scores(model: &Model, test: &TrainData) -> (EvalReport, EvalReport) {
    let rows = FourierRows::Default;
    (evaluate(model, test, &rows, 32).unwrap(), evaluate(&Persistence { n_t: test.n_t }, test, &rows, 32).unwrap())
}

fn desk() -> Dataset {
    dataset("desk", &desk_config(65.0, 100))
}

#[test]
#[ignore = "desk-scale training run"]
fn criterion_6_desk_scale_training() {
    let data = desk();
    let r = run("lstm_ode_wf1", &data, &lstm_ode(&data), &train_config(1.0));
    let test = load_split(&data, Split::Test).unwrap();
    let (model, baseline) = scores(&r.model, &test);
    let ratio = model.mean / baseline.mean;
    let hours = r.wall_seconds / 3600.0;
    let pass = model.mean <= 5e-4 && ratio <= 0.2 && hours <= 2.0;
    report(
        6,
        pass,
        &format!(
            "test MSE {:.3e} (<= 5e-4; median {:.3e}, p95 {:.3e}), persistence {:.3e}, ratio {ratio:.3} (<= 0.2), {} epochs in {hours:.2} h on {} core(s) (<= 2 h)",
            model.mean,
            model.median,
            model.p95,
            baseline.mean,
            r.epochs,
            std::thread::available_parallelism().map_or(1, |n| n.get())
        ),
    );
    assert!(pass);
}

/// Turning points along t of the first τ row, ignoring wiggles below 1e-3.
fn oscillations(map: &ndarray::Array2<f64>) -> usize {
    count_turning_points(map.row(0).as_slice().unwrap(), 1e-3)
}

#[test]
#[ignore = "desk-scale training runs"]
fn criterion_7_fourier_loss_ablation() {
    let data = desk();
    let with = run("lstm_ode_wf1", &data, &lstm_ode(&data), &train_config(1.0));
    let without = run("lstm_ode_wf0", &data, &lstm_ode(&data), &train_config(0.0));
    let val = load_split(&data, Split::Val).unwrap();
    let probe = train_config(1.0);
    let f_with = validation_loss(&with.model, &val, &probe).unwrap().fourier;
    let f_without = validation_loss(&without.model, &val, &probe).unwrap().fourier;

    let test = load_split(&data, Split::Test).unwrap();
    let two_peak: Vec<usize> = data
        .summaries(Split::Test)
        .unwrap()
        .iter()
        .filter(|s| s.is_two_peak())
        .map(|s| s.index)
        .collect();
    let pred_with = predict_g2(&with.model, &test, &two_peak).unwrap();
    let pred_without = predict_g2(&without.model, &test, &two_peak).unwrap();
    let (mut truth_total, mut with_total, mut without_total, mut within) = (0, 0, 0, 0);
    for (k, &i) in two_peak.iter().enumerate() {
        let truth = oscillations(&test.target_g2(i));
        let with_count = oscillations(&pred_with[k]);
        truth_total += truth;
        with_total += with_count;
        without_total += oscillations(&pred_without[k]);
        if with_count.abs_diff(truth) <= 2 {
            within += 1;
        }
    }
    let n = two_peak.len().max(1);
    let frac = within as f64 / n as f64;
    let ratio = f_without / f_with;
    let pass = ratio >= 2.0 && without_total < truth_total && frac >= 0.8 && !two_peak.is_empty();
    report(
        7,
        pass,
        &format!(
            "val Fourier component w_F=0 {f_without:.3e} vs w_F=1 {f_with:.3e}, ratio {ratio:.2} (>= 2); on {} two-peak test maps: mean turning points truth {:.2}, w_F=0 {:.2} (fewer than truth), w_F=1 {:.2}; w_F=1 within +-2 of truth on {:.0}% (>= 80%)",
            two_peak.len(),
            truth_total as f64 / n as f64,
            without_total as f64 / n as f64,
            with_total as f64 / n as f64,
            100.0 * frac
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "desk-scale training runs"]
fn criterion_8_baseline_ordering() {
    let data = desk();
    let ode = run("lstm_ode_wf1", &data, &lstm_ode(&data), &train_config(1.0));
    let g = &data.manifest.grid;
    let resnet_config = ResNet1dConfig::new(10, g.n_t, g.n_tau).matched(ode.model.n_params());
    let resnet = run("resnet1d", &data, &ModelConfig::ResNet1d(resnet_config), &train_config(1.0));
    let test = load_split(&data, Split::Test).unwrap();
    let (ode_score, _) = scores(&ode.model, &test);
    let (res_score, _) = scores(&resnet.model, &test);
    let pass = res_score.mean > ode_score.mean;
    report(
        8,
        pass,
        &format!(
            "test MSE ResNet1d {:.3e} ({} params) vs LSTM-ODE {:.3e} ({} params); ResNet must be higher",
            res_score.mean,
            resnet.model.n_params(),
            ode_score.mean,
            ode.model.n_params()
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "desk-scale training run"]
fn criterion_9_extended_window() {
    // n_t 200 keeps the delay step close to the 65 ps grid (0.60 vs 0.66 ps).
    let data = dataset("desk_120ps", &desk_config(120.0, 200));
    let r = run("lstm_ode_120ps", &data, &lstm_ode(&data), &train_config(1.0));
    let test = load_split(&data, Split::Test).unwrap();
    let (model, baseline) = scores(&r.model, &test);
    let ratio = model.mean / baseline.mean;
    let pass = model.mean <= 1e-3 && ratio <= 0.4;
    report(
        9,
        pass,
        &format!(
            "t_max 120 ps (n_t 200): test MSE {:.3e} (<= 1e-3), persistence {:.3e}, ratio {ratio:.3} (<= 0.4), {} epochs",
            model.mean, baseline.mean, r.epochs
        ),
    );
    assert!(pass);
}

fn without_wall_clock(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head).to_string())
        .collect()
}

#[test]
#[ignore = "repeats the desk-scale pipeline"]
fn criterion_10_determinism() {
    let first = desk();
    run("lstm_ode_wf1", &first, &lstm_ode(&first), &train_config(1.0));
    let again = dataset("desk_rerun", &desk_config(65.0, 100));
    let same_data = again.manifest_hash == first.manifest_hash
        && (0..first.manifest.counts.train).step_by(97).all(|i| {
            fs::read(Split::Train.record_path(&first.root, i)).unwrap() == fs::read(Split::Train.record_path(&again.root, i)).unwrap()
        });
    run("lstm_ode_wf1_rerun", &again, &lstm_ode(&again), &train_config(1.0));
    let a = without_wall_clock(&root().join("runs/lstm_ode_wf1").join(METRICS_FILE));
    let b = without_wall_clock(&root().join("runs/lstm_ode_wf1_rerun").join(METRICS_FILE));
    let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
    let pass = same_data && a == b;
    report(
        10,
        pass,
        &format!(
            "dataset rebuilt byte-identical: {same_data}; metrics logs ({} lines) identical apart from wall_seconds: {} (first difference at line {first_diff:?})",
            a.len(),
            a == b
        ),
    );
    assert!(pass);
}
