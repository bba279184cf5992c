use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn jz(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jacobi-zero")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &[&str] = &["--iterations", "2", "--episodes", "4", "--epochs", "2", "--playouts", "20"];

const DESK: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");

#[test]
fn gen_is_deterministic_and_needs_out() {
    let d = tempfile::tempdir().unwrap();
    let args = ["gen", "--n", "5", "--count", "12", "--eps", "0.05", "--seed", "1", "--out"];
    let a = jz(d.path(), &[&args[..], &["data/a.csv"]].concat());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&jz(d.path(), &[&args[..], &["data/b.csv"]].concat())), 0);
    let a = fs::read(d.path().join("data/a.csv")).unwrap();
    assert_eq!(a, fs::read(d.path().join("data/b.csv")).unwrap());
    let rows = String::from_utf8(a).unwrap().lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(rows, 13);

    assert_eq!(code(&jz(d.path(), &["gen", "--n", "5"])), 1);
    assert_eq!(code(&jz(d.path(), &["gen", "--bogus"])), 1);
    assert_eq!(code(&jz(d.path(), &["--help"])), 0);
}

#[test]
fn solve_small_inputs() {
    let d = tempfile::tempdir().unwrap();
    let o = jz(d.path(), &["solve", "--values", "1,0,0;0,2,0;0,0,3"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("steps: 0"));
    assert!(stdout(&o).contains("eigenvalues: 1.0000000000e0 2.0000000000e0 3.0000000000e0"));

    let o = jz(d.path(), &["solve", "--values", "2,1;1,3", "--verify"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("steps: 1") && out.contains("(ok)"), "{out}");

    let o = jz(d.path(), &["solve", "--strategy", "cyclic", "--max-steps", "1", "--values", "4,1,1;1,3,1;1,1,2"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("status: budget exhausted"));
}

#[test]
fn solve_errors_map_to_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&jz(d.path(), &["solve", "--values", "1,2;3,4"])), 2);
    assert_eq!(code(&jz(d.path(), &["solve", "--values", "1,x;x,1"])), 2);
    assert_eq!(code(&jz(d.path(), &["solve", "--strategy", "learned", "--values", "1,0;0,1"])), 1);
    assert_eq!(code(&jz(d.path(), &["solve"])), 1);
    assert_eq!(code(&jz(d.path(), &["solve", "--matrix", "missing.csv"])), 2);
    fs::write(d.path().join("bad.ckpt"), b"garbage").unwrap();
    let o = jz(d.path(), &["solve", "--strategy", "learned", "--checkpoint", "bad.ckpt", "--values", "1,0;0,1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_bench_stats_pipeline() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let cfg = DESK;
    assert_eq!(code(&jz(p, &["gen", "--config", cfg, "--count", "16", "--out", "t.csv"])), 0);

    let train = [&["train", "--data", "t.csv", "--split", "0.75", "--seed", "2", "--out", "runs/r1", "--config", cfg][..], TINY]
        .concat();
    let o = jz(p, &train);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("c_puct 4 playouts 20"));
    for f in ["latest.ckpt", "iter_0001.ckpt", "log.csv", "test.csv", "experiment.toml"] {
        assert!(p.join("runs/r1").join(f).exists(), "{f}");
    }
    // a second start without --resume is refused; --resume with more iterations extends
    assert_eq!(code(&jz(p, &train)), 1);
    let mut more = train.clone();
    more.push("--resume");
    let at = more.iter().position(|a| *a == "--iterations").unwrap() + 1;
    more[at] = "3";
    assert_eq!(code(&jz(p, &more)), 0);
    let log = fs::read_to_string(p.join("runs/r1/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 4);

    let bench = |out: &str| {
        let o = jz(
            p,
            &["bench", "--data", "runs/r1/test.csv", "--checkpoint", "runs/r1/latest.ckpt", "--playouts", "20", "--out", out],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read(p.join(out).join("records.csv")).unwrap()
    };
    assert_eq!(bench("b1"), bench("b2"));
    let records = String::from_utf8(bench("b1")).unwrap();
    assert!(records.starts_with(
        "id,kappa,steps_maxelem,steps_cyclic,steps_learned,savings_pct,converged_me,converged_cy,converged_le\n"
    ));
    assert_eq!(records.lines().count(), 5);
    assert!(p.join("b1/summary.json").exists() && p.join("b1/histograms.csv").exists());

    // the held-out file and a re-split of the dataset hold the same matrices
    let o = jz(p, &["bench", "--data", "t.csv", "--split", "0.75", "--seed", "2", "--out", "b3"]);
    assert_eq!(code(&o), 0);
    let o = jz(p, &["stats", "--run", "a:x:b1/records.csv", "--run", "b:x:b2/records.csv", "--run", "c:x:b3/records.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("spread"));

    assert_eq!(code(&jz(p, &["stats", "--run", "a:x:b1/records.csv"])), 1);
    assert_eq!(code(&jz(p, &["stats", "--run", "a:x:b1/records.csv", "--run", "nolabel"])), 1);
}

#[test]
fn stats_flags_different_datasets() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    for (seed, out) in [("1", "a.csv"), ("2", "b.csv")] {
        assert_eq!(code(&jz(p, &["gen", "--count", "6", "--seed", seed, "--out", out])), 0);
    }
    for (data, out) in [("a.csv", "ba"), ("b.csv", "bb")] {
        assert_eq!(code(&jz(p, &["bench", "--data", data, "--out", out])), 0);
    }
    let o = jz(p, &["stats", "--run", "t:x:ba/records.csv", "--run", "u:x:bb/records.csv"]);
    assert_eq!(code(&o), 2);
}
