use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn reinsure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_reinsure"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, text: &str) -> String {
        let path = self.path(name);
        std::fs::write(&path, text).unwrap();
        path.display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }
}

/// Rows of a CSV file as string fields, header excluded.
fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn f(s: &str) -> f64 {
    s.parse().unwrap()
}

#[test]
fn solve_writes_retention_curve() {
    let ws = Workspace::new();
    let out = ws.out("solve");
    let run = reinsure(&["solve", "--out", &out, "--query", "0,1,0.0225"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let strategy = rows(&ws.path("solve/strategy.csv"));
    assert_eq!(strategy.len(), 10_001);
    for row in &strategy {
        let t = f(&row[0]);
        let want = (-0.05 * (10.0 - t)).exp() / 9.0;
        assert!((f(&row[1]) - want).abs() <= 1e-12 * want, "t={t}");
        assert_eq!(row[3], "reinsurance");
    }
    for name in ["g.csv", "regime.csv", "query.csv", "manifest.json"] {
        assert!(ws.path("solve").join(name).exists(), "{name}");
    }
    let text = std::fs::read_to_string(ws.path("solve/strategy.csv")).unwrap();
    assert!(text.starts_with("t,q_hat,pi_hat,regime\n"));
}

#[test]
fn one_step_grid_is_accepted() {
    let ws = Workspace::new();
    let cfg = ws.config("one.cfg", "M = 1\n");
    let run = reinsure(&["--config", &cfg, "--out", &ws.out("one"), "solve"]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(rows(&ws.path("one/strategy.csv")).len(), 2);
}

#[test]
fn configuration_errors_exit_one() {
    let ws = Workspace::new();
    let cases = [
        ("r = 0.05\nkappa 5\n", "line 2"),
        ("# header\ngamma = 2\n", "line 2"),
        ("sigma = 1\nkappa = 0.1\ntheta = 0.01\n", "Feller"),
        ("probs = 0.6, 0.5\n", "sum"),
    ];
    for (i, (text, needle)) in cases.iter().enumerate() {
        let cfg = ws.config(&format!("bad{i}.cfg"), text);
        let run = reinsure(&["--config", &cfg, "--out", &ws.out("bad"), "solve"]);
        assert_eq!(code(&run), 1, "{text:?}");
        assert!(stderr(&run).contains(needle), "{text:?}: {}", stderr(&run));
    }
    let run = reinsure(&["--config", &ws.out("missing.cfg"), "solve"]);
    assert_eq!(code(&run), 1);
    assert_eq!(code(&reinsure(&[])), 1);
    assert_eq!(code(&reinsure(&["frobnicate"])), 1);
    assert_eq!(code(&reinsure(&["--help"])), 0);
}

#[test]
fn blow_up_exits_two() {
    let ws = Workspace::new();
    let cfg = ws.config("coarse.cfg", "T = 10\nM = 4\n");
    let run = reinsure(&["--config", &cfg, "--out", &ws.out("coarse"), "solve"]);
    assert_eq!(code(&run), 2);
    assert!(stderr(&run).contains("blew up"), "{}", stderr(&run));
}

#[test]
fn check_passes_for_first_case() {
    let ws = Workspace::new();
    let run = reinsure(&["check", "--out", &ws.out("check")]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let detail = rows(&ws.path("check/admissibility.csv"));
    assert_eq!(detail.len(), 2 * 10_001);
    assert!(detail.iter().all(|r| f(&r[4]) >= 0.0));
}

#[test]
fn failing_inequality_exits_three_and_still_writes() {
    let ws = Workspace::new();
    // Slow mean reversion shrinks κ²/(2σ²) below the left-hand side.
    let cfg = ws.config("slow.cfg", "kappa = 1\ntheta = 0.1\nT = 1\n");
    let run = reinsure(&["--config", &cfg, "--out", &ws.out("slow"), "check"]);
    assert_eq!(code(&run), 3, "{}", stderr(&run));
    assert!(
        stderr(&run).contains("inequality fails"),
        "{}",
        stderr(&run)
    );
    let summary = rows(&ws.path("slow/admissibility_summary.csv"));
    assert_eq!(summary[1][4], "false");
    assert!(ws.path("slow/admissibility.csv").exists());
    assert!(ws.path("slow/manifest.json").exists());
}

#[test]
fn sweep_retention_over_rate_and_intensity() {
    let ws = Workspace::new();
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("r"),
        "--param",
        "r",
        "--values",
        "0.03,0.05,0.07",
        "--observable",
        "q_hat",
        "--every",
        "100",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let r = rows(&ws.path("r/sweep.csv"));
    let n = r.len() / 3;
    for m in 0..n - 1 {
        // Before maturity a higher rate lowers retention.
        assert!(f(&r[m][5]) > f(&r[n + m][5]) && f(&r[n + m][5]) > f(&r[2 * n + m][5]));
    }
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("l"),
        "--param",
        "lambda1",
        "--values",
        "0.5,1,2",
        "--observable",
        "q_hat",
    ]);
    assert_eq!(code(&run), 0);
    let l = rows(&ws.path("l/sweep.csv"));
    let n = l.len() / 3;
    for m in 0..n {
        assert_eq!(l[m][5], l[n + m][5]);
        assert_eq!(l[m][5], l[2 * n + m][5]);
    }
}

#[test]
fn sweep_investment_over_premium() {
    let ws = Workspace::new();
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("xi"),
        "--param",
        "xi",
        "--values",
        "0.3,7/15,0.6",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let rows = rows(&ws.path("xi/sweep.csv"));
    let n = rows.len() / 3;
    assert!(f(&rows[0][5]) < f(&rows[n][5]) && f(&rows[n][5]) < f(&rows[2 * n][5]));
    assert_eq!(rows[n][1], format!("{:.16e}", 7.0 / 15.0));
}

#[test]
fn sweep_rejects_unknown_names() {
    let ws = Workspace::new();
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("x"),
        "--param",
        "gamma",
        "--values",
        "1,2",
    ]);
    assert_eq!(code(&run), 1);
    assert!(stderr(&run).contains("unknown parameter"));
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("x"),
        "--param",
        "r",
        "--values",
        "1,2",
        "--observable",
        "V",
    ]);
    assert_eq!(code(&run), 1);
}

#[test]
fn sweep_accepts_negative_values() {
    let ws = Workspace::new();
    let run = reinsure(&[
        "sweep",
        "--out",
        &ws.out("rho"),
        "--param",
        "rho",
        "--values",
        "-0.5,0,0.5",
        "--observable",
        "pi_diff",
        "--every",
        "1000",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    assert_eq!(rows(&ws.path("rho/sweep.csv")).len(), 2 * 11);
}

#[test]
fn reproduce_unknown_id_lists_valid_ids() {
    let run = reinsure(&["reproduce", "fig6/T10/caseI", "--out", "/nonexistent/never"]);
    assert_eq!(code(&run), 1);
    let err = stderr(&run);
    assert!(err.contains("fig31") && err.contains("caseII"), "{err}");
}

#[test]
fn reproduce_writes_bundle() {
    let ws = Workspace::new();
    let run = reinsure(&["reproduce", "fig7/T10/caseI", "--out", &ws.out("fig")]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    let rows = rows(&ws.path("fig/fig7_T10_caseI/sweep.csv"));
    assert_eq!(rows.len(), 3 * 1_001);
    assert!(rows
        .iter()
        .all(|r| (0.0..1.0).contains(&f(&r[5])) && f(&r[5]) > 0.0));
    let manifest = std::fs::read_to_string(ws.path("fig/manifest.json")).unwrap();
    assert!(manifest.contains("\"steps\": 10000"));
}

fn data_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn replay_reproduces_data_files() {
    let ws = Workspace::new();
    let cfg = ws.config(
        "c.cfg",
        "gammas = 1/2, 4\nprobs = 4/5, 1/5\nT = 2\nseed = 17\n",
    );
    let runs: [&[&str]; 3] = [
        &["solve", "--query", "0.5,1,0.02"],
        &["simulate", "--paths", "300", "--strategy", "const:0.5,-1"],
        &[
            "sweep",
            "--param",
            "kappa",
            "--values",
            "3,5,7",
            "--observable",
            "pi_diff",
        ],
    ];
    for (i, args) in runs.iter().enumerate() {
        let first = ws.out(&format!("first{i}"));
        let second = ws.out(&format!("second{i}"));
        let mut full = vec!["--config", &cfg, "--out", &first];
        full.extend_from_slice(args);
        assert_eq!(code(&reinsure(&full)), 0);
        let manifest = format!("{first}/manifest.json");
        let replay = reinsure(&["replay", "--manifest", &manifest, "--out", &second]);
        assert_eq!(code(&replay), 0, "{}", stderr(&replay));
        let a = data_files(Path::new(&first));
        let b = data_files(Path::new(&second));
        assert!(!a.is_empty());
        assert_eq!(a, b, "{args:?}");
    }
}

#[test]
fn simulation_is_independent_of_thread_count() {
    let ws = Workspace::new();
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let out = ws.out(&format!("t{threads}"));
        let run = reinsure(&[
            "simulate",
            "--out",
            &out,
            "--threads",
            threads,
            "--paths",
            "2000",
            "--horizon",
            "1",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&run), 0, "{}", stderr(&run));
        outputs.push(std::fs::read(format!("{out}/simulate.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("atom_index,gamma,utility_mean,utility_se,cert_equiv,reward_J\n"));
}

#[test]
fn zero_strategy_has_no_sampling_error() {
    let ws = Workspace::new();
    let run = reinsure(&[
        "simulate",
        "--out",
        &ws.out("z"),
        "--paths",
        "50",
        "--horizon",
        "1",
        "--strategy",
        "zero",
    ]);
    assert_eq!(code(&run), 0, "{}", stderr(&run));
    for row in rows(&ws.path("z/simulate.csv")) {
        assert_eq!(f(&row[3]), 0.0);
        assert!(f(&row[2]) < 0.0);
    }
}
