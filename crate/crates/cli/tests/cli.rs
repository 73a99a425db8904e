use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use g2node::dataset::{Dataset, Split};
use g2node::physics::HBAR_UEV_PS;
use g2node::training::read_metrics;
use g2node_cli::config::Config;
use g2node_cli::curves::CurveFile;
use g2node_cli::matrix::Matrix;
use tempfile::TempDir;

fn g2node(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_g2node")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Direction reversals of a curve, ignoring steps below `eps`. Written
/// independently of the library's counter.
fn reversals(xs: &[f32], eps: f32) -> usize {
    let mut last = 0i8;
    let mut count = 0;
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        if d.abs() < eps {
            continue;
        }
        let sign = if d > 0.0 { 1 } else { -1 };
        if last != 0 && sign != last {
            count += 1;
        }
        last = sign;
    }
    count
}

#[test]
fn simulate_default_writes_four_matrices() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    ok(&g2node(&["simulate", "--out", s(&out)]));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    let expected = [
        ("clean", 128, 200),
        ("noisy", 128, 200),
        ("correlation", 128, 512),
        ("interferogram", 128, 200),
    ];
    for (name, rows, cols) in expected {
        assert!(manifest.contains(&format!("{name}.g2mat {rows} {cols}")), "{manifest}");
        let m = Matrix::read(&out.join(format!("{name}.g2mat"))).unwrap();
        assert_eq!(m.values.dim(), (rows, cols), "{name}");
        assert!(m.values.iter().all(|v| v.is_finite()));
    }
    let corr = Matrix::read(&out.join("correlation.g2mat")).unwrap();
    assert!(corr.note.contains("unit peak"));
    for row in corr.values.rows() {
        assert_eq!(row.iter().cloned().fold(f32::MIN, f32::max), 1.0);
    }
    assert!(!out.join("clean.pgm").exists());
}

#[test]
fn matrix_files_reparse_bit_identically() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("sim");
    ok(&g2node(&["simulate", "--out", s(&out)]));
    let params = Config::defaults().simulate.params().unwrap();
    let sim = g2node::physics::simulate(&params).unwrap();
    let clean = Matrix::read(&out.join("clean.g2mat")).unwrap();
    let expect = sim.clean.values.mapv(|v| v as f32);
    assert!(clean.values.iter().zip(expect.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    for name in ["clean", "noisy", "correlation", "interferogram"] {
        let bytes = fs::read(out.join(format!("{name}.g2mat"))).unwrap();
        assert_eq!(Matrix::decode(&bytes).unwrap().encode(), bytes, "{name}");
    }
}

#[test]
fn simulate_is_deterministic_and_seeded() {
    let dir = TempDir::new().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    ok(&g2node(&["simulate", "--out", s(&a), "--seed", "5"]));
    ok(&g2node(&["simulate", "--out", s(&b), "--seed", "5"]));
    ok(&g2node(&["simulate", "--out", s(&c), "--seed", "6"]));
    let noisy = |d: &Path| fs::read(d.join("noisy.g2mat")).unwrap();
    assert_eq!(noisy(&a), noisy(&b));
    assert_ne!(noisy(&a), noisy(&c));
    assert_eq!(fs::read(a.join("clean.g2mat")).unwrap(), fs::read(c.join("clean.g2mat")).unwrap());
}

#[test]
fn zero_contrast_gives_flat_map() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "flat.toml", "[simulate]\ncontrast = 0.0\nout = \"flat\"\npgm = true\n");
    ok(&g2node(&["simulate", "--config", s(&cfg)]));
    // relative `out` resolves against the config directory
    let m = Matrix::read(&dir.path().join("flat/clean.g2mat")).unwrap();
    assert!(m.values.iter().all(|&v| v == 1.0));
    let pgm = fs::read(dir.path().join("flat/clean.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n200 128\n255\n"));
    assert_eq!(pgm.len(), "P5\n200 128\n255\n".len() + 128 * 200);
}

#[test]
fn two_peak_map_oscillates_along_t() {
    let dir = TempDir::new().unwrap();
    let splitting = 200.0;
    let cfg = write(
        dir.path(),
        "two.toml",
        &format!(
            "[simulate]\nout = \"two\"\n[simulate.diffusion]\nkind = \"wiener\"\ndiffusivity = 10.0\n\
             [[simulate.peaks]]\ncenter = {}\nfwhm = 2.0\n[[simulate.peaks]]\ncenter = {}\nfwhm = 2.0\n",
            -splitting / 2.0,
            splitting / 2.0
        ),
    );
    ok(&g2node(&["simulate", "--config", s(&cfg)]));
    let one = dir.path().join("one");
    ok(&g2node(&["simulate", "--out", s(&one)]));

    let two = Matrix::read(&dir.path().join("two/clean.g2mat")).unwrap();
    let row: Vec<f32> = two.values.row(0).to_vec();
    // Beat cos(Δ t / ħ): one extremum every πħ/Δ of delay.
    let t_max = two.col_axis.last;
    let expected = (t_max * splitting / (std::f64::consts::PI * HBAR_UEV_PS)).floor() as usize;
    let found = reversals(&row, 1e-6);
    assert!(expected >= 4);
    assert!(found.abs_diff(expected) <= 1, "found {found}, expected {expected}");

    let single = Matrix::read(&one.join("clean.g2mat")).unwrap();
    assert_eq!(reversals(&single.values.row(0).to_vec(), 1e-6), 0);
}

#[test]
fn config_errors_exit_2_with_location() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[simulate]\ncontrast = 0.5\nbogus = 1\n");
    let out = g2node(&["simulate", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let cfg = write(dir.path(), "range.toml", "[simulate]\ncontrast = 1.5\n");
    let out = g2node(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("contrast"), "{}", stderr(&out));

    let out = g2node(&["simulate", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(out.status.code(), Some(2));
}

const SMOKE: &str = r#"
[dataset]
n_examples = 10
n_test = 4
seed = 3
created = "test"
out = "data"
[dataset.grid]
n_tau = 16

[train]
dataset = "data"
max_epochs = 3
batch_size = 4
lr = 1e-3
schedule = "constant"
out = "run"
[train.lstm_ode]
preset = "tiny"

[forecast]
checkpoint = "run/best.ckpt"
input = "curves.txt"
out = "forecast"

[eval]
checkpoint = "run/best.ckpt"
dataset = "data"
"#;

fn smoke_dir(extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "smoke.toml", &format!("{SMOKE}{extra}"));
    (dir, cfg)
}

/// Every file below `dir` with its path relative to `dir`, sorted.
fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

#[test]
fn dataset_smoke_and_repeatability() {
    let (dir, cfg) = smoke_dir("");
    let out = g2node(&["dataset", "--config", s(&cfg)]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("9 train, 1 val, 4 test"));
    let ds = Dataset::open(dir.path().join("data")).unwrap();
    assert_eq!((ds.manifest.counts.train, ds.manifest.counts.val), (9, 1));

    let again = dir.path().join("again");
    ok(&g2node(&["dataset", "--config", s(&cfg), "--out", s(&again)]));
    let first = files(&dir.path().join("data"));
    assert!(first.iter().any(|(p, _)| p.starts_with("records")));
    assert_eq!(first, files(&again));

    let other = dir.path().join("other");
    ok(&g2node(&["dataset", "--config", s(&cfg), "--out", s(&other), "--seed", "4"]));
    assert_ne!(files(&dir.path().join("data")), files(&other));
}

#[test]
fn dataset_invalid_range_names_the_field() {
    let (dir, cfg) = smoke_dir("[dataset.ranges]\nfwhm = [50.0, 1.0]\n");
    let out = g2node(&["dataset", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("fwhm"), "{}", stderr(&out));
    assert!(!dir.path().join("data").exists());
}

fn trained(extra: &str) -> (TempDir, PathBuf) {
    let (dir, cfg) = smoke_dir(extra);
    ok(&g2node(&["dataset", "--config", s(&cfg)]));
    ok(&g2node(&["train", "--config", s(&cfg)]));
    (dir, cfg)
}

#[test]
fn train_smoke_writes_checkpoint_and_three_epochs() {
    let (dir, _) = trained("");
    let run = dir.path().join("run");
    assert!(run.join("best.ckpt").exists());
    let metrics = read_metrics(&run.join("metrics.tsv")).unwrap();
    assert_eq!(metrics.len(), 3);
    assert!(metrics.iter().all(|m| m.train.total.is_finite() && m.val.total.is_finite()));
    let text = fs::read_to_string(run.join("metrics.tsv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn no_fourier_loss_still_logs_the_component() {
    let (dir, cfg) = smoke_dir("");
    ok(&g2node(&["dataset", "--config", s(&cfg)]));
    ok(&g2node(&["train", "--config", s(&cfg), "--no-fourier-loss"]));
    let metrics = read_metrics(&dir.path().join("run/metrics.tsv")).unwrap();
    for m in &metrics {
        assert_eq!(m.train.total, m.train.time);
        assert_eq!(m.val.total, m.val.time);
        assert!(m.train.fourier > 0.0 && m.val.fourier > 0.0);
    }
}

#[test]
fn resumed_training_continues_the_loss_curve() {
    let (dir, cfg) = smoke_dir("");
    ok(&g2node(&["dataset", "--config", s(&cfg)]));
    let (full, split) = (dir.path().join("full"), dir.path().join("split"));
    ok(&g2node(&["train", "--config", s(&cfg), "--out", s(&full), "--max-epochs", "4"]));
    ok(&g2node(&["train", "--config", s(&cfg), "--out", s(&split), "--max-epochs", "2"]));
    ok(&g2node(&["train", "--config", s(&cfg), "--out", s(&split), "--max-epochs", "4", "--resume"]));
    let a = read_metrics(&full.join("metrics.tsv")).unwrap();
    let b = read_metrics(&split.join("metrics.tsv")).unwrap();
    assert_eq!(b.len(), 4);
    for (x, y) in a.iter().zip(&b) {
        let rel = (x.train.total - y.train.total).abs() / x.train.total;
        assert!(rel <= 0.05, "epoch {}: {} vs {}", x.epoch, x.train.total, y.train.total);
    }
    // the first resumed epoch picks up where the interrupted run stopped
    let rel = (b[2].train.total - b[1].train.total).abs() / b[1].train.total;
    assert!(rel <= 0.05, "{} -> {}", b[1].train.total, b[2].train.total);
}

#[test]
fn resnet_model_trains_at_matched_size() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "smoke.toml", &SMOKE.replace("preset = \"tiny\"", "preset = \"default\""));
    ok(&g2node(&["dataset", "--config", s(&cfg)]));
    ok(&g2node(&["train", "--config", s(&cfg), "--model", "resnet1d", "--max-epochs", "1"]));
    let (model, _) = g2node::models::load_checkpoint(&dir.path().join("run/best.ckpt")).unwrap();
    assert_eq!(model.config().kind(), "resnet1d");
    let lstm = g2node::models::LstmOdeConfig::new(16, 100);
    let target = g2node::models::Model::new(&g2node::models::ModelConfig::LstmOde(lstm), 0)
        .unwrap()
        .n_params();
    let rel = model.n_params().abs_diff(target) as f64 / target as f64;
    assert!(rel < 0.01, "{} vs {target}", model.n_params());

    let out = g2node(&["train", "--config", s(&cfg), "--model", "mlp"]);
    assert_eq!(out.status.code(), Some(2));
}

/// Input curves of test example `index`, in the forecast file format.
fn curves_from_dataset(data: &Path, index: usize) -> (CurveFile, ndarray::Array2<f64>) {
    let ds = Dataset::open(data).unwrap();
    let rec = ds.load_split(Split::Test).unwrap().remove(index);
    let tau = g2node::physics::TauGrid::log(rec.n_tau, ds.manifest.grid.tau_min, ds.manifest.grid.tau_max).unwrap();
    let curves = CurveFile {
        t: rec.t_values.iter().map(|&t| t as f64).collect(),
        tau: tau.values().to_vec(),
        values: (0..rec.n_inputs()).map(|k| rec.input(k).iter().map(|&v| v as f64).collect()).collect(),
    };
    let truth = ndarray::Array2::from_shape_fn((rec.n_tau, rec.n_t), |(i, j)| rec.target_at(i, j) as f64);
    (curves, truth)
}

#[test]
fn forecast_writes_prediction_and_correlation() {
    let (dir, cfg) = trained("");
    let (curves, _) = curves_from_dataset(&dir.path().join("data"), 0);
    write(dir.path(), "curves.txt", &curves.to_text());
    ok(&g2node(&["forecast", "--config", s(&cfg)]));
    let pred = Matrix::read(&dir.path().join("forecast/predicted.g2mat")).unwrap();
    assert_eq!(pred.values.dim(), (16, 100));
    assert!(pred.values.iter().all(|v| v.is_finite()));
    let corr = Matrix::read(&dir.path().join("forecast/correlation.g2mat")).unwrap();
    assert_eq!(corr.values.dim(), (16, 100));
    assert!(corr.note.contains("contrast 0.5"));

    ok(&g2node(&["forecast", "--config", s(&cfg), "--contrast", "0.4", "--out", s(&dir.path().join("k"))]));
    let k = Matrix::read(&dir.path().join("k/correlation.g2mat")).unwrap();
    assert!(k.note.contains("contrast 0.4"));
}

#[test]
fn forecast_rejects_bad_inputs() {
    let (dir, cfg) = trained("");
    let (curves, _) = curves_from_dataset(&dir.path().join("data"), 0);

    let mut text = curves.to_text();
    // break the second tau row (file row 4: comment, header, first row)
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    lines[3] = lines[3].replacen(' ', " abc ", 1);
    write(dir.path(), "curves.txt", &lines.join("\n"));
    let out = g2node(&["forecast", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("row 4"), "{}", stderr(&out));

    let nine = CurveFile {
        t: curves.t[..9].to_vec(),
        values: curves.values[..9].to_vec(),
        ..curves.clone()
    };
    write(dir.path(), "curves.txt", &nine.to_text());
    let out = g2node(&["forecast", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("expects 10 input curves"), "{}", stderr(&out));

    let mut late = curves.clone();
    late.t[9] = 30.0;
    text = late.to_text();
    write(dir.path(), "curves.txt", &text);
    let out = g2node(&["forecast", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("--allow-outside-window"), "{}", stderr(&out));
    let out = g2node(&["forecast", "--config", s(&cfg), "--allow-outside-window"]);
    ok(&out);
    assert!(stderr(&out).contains("outside the training window"));
}

#[test]
fn eval_reports_model_against_persistence() {
    let (dir, cfg) = trained("");
    let out = g2node(&["eval", "--config", s(&cfg), "--out", s(&dir.path().join("report.txt"))]);
    ok(&out);
    let report = fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert_eq!(report, String::from_utf8_lossy(&out.stdout));
    assert!(report.contains("persistence") && report.contains("ratio") && report.contains("examples 4"));
    let grab = |key: &str| -> f64 {
        let line = report.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    let ratio: f64 = report.lines().find(|l| l.starts_with("ratio")).unwrap()[6..].parse().unwrap();
    assert!((ratio - grab("model") / grab("persistence")).abs() < 1e-3 * ratio);
}

#[test]
fn eval_on_empty_test_set_fails() {
    let (dir, cfg) = trained("");
    let cfg2 = write(dir.path(), "empty.toml", &SMOKE.replace("n_test = 4", "n_test = 0").replace("out = \"data\"", "out = \"empty\""));
    ok(&g2node(&["dataset", "--config", s(&cfg2)]));
    let out = g2node(&["eval", "--config", s(&cfg), "--dataset", s(&dir.path().join("empty"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
    // different dataset: warning only
    let out = g2node(&["eval", "--config", s(&cfg), "--dataset", s(&dir.path().join("empty")), "--split", "val"]);
    ok(&out);
    assert!(stderr(&out).contains("checkpoint was trained on dataset"));
}

/// Uses the desk-scale dataset and LSTM-ODE checkpoint produced by the core
/// acceptance run.
#[test]
#[ignore]
fn reference_checkpoint_end_to_end() {
    let root = std::env::var_os("G2NODE_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance"));
    let data = root.join("desk");
    let ckpt = root.join("runs/lstm_ode_wf1/best.ckpt");
    let dir = TempDir::new().unwrap();
    let out = g2node(&["eval", "--checkpoint", s(&ckpt), "--dataset", s(&data)]);
    ok(&out);
    let report = String::from_utf8_lossy(&out.stdout).into_owned();
    println!("{report}");
    let ratio: f64 = report.lines().find(|l| l.starts_with("ratio")).unwrap()[6..].parse().unwrap();
    assert!(ratio <= 0.2, "ratio {ratio}");

    let (curves, truth) = curves_from_dataset(&data, 0);
    let input = write(dir.path(), "curves.txt", &curves.to_text());
    let out_dir = dir.path().join("f");
    ok(&g2node(&["forecast", "--checkpoint", s(&ckpt), "--input", s(&input), "--out", s(&out_dir)]));
    let pred = Matrix::read(&out_dir.join("predicted.g2mat")).unwrap();
    let mse = pred.values.iter().zip(truth.iter()).map(|(&p, &t)| (p as f64 - t).powi(2)).sum::<f64>() / truth.len() as f64;
    println!("forecast mse {mse:.3e}");
    assert!(mse <= 5e-4, "mse {mse}");
}
