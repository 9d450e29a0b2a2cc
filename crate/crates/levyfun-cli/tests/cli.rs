use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const POISSON: &str = r#"
[process]
kind = "poisson"
lambda = 1.0

[functional]
kind = "exp"
q = 0.36787944117144233

[mc]
samples = 20000
"#;

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn levyfun(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyfun")).args(args).env_remove("LEVYFUN_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Data rows split into cells, skipping metadata and the header.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn column(csv: &str, i: usize) -> Vec<f64> {
    rows(csv).iter().map(|r| r[i].parse().unwrap()).collect()
}

fn header(csv: &str) -> &str {
    csv.lines().find(|l| !l.starts_with('#')).unwrap()
}

#[test]
fn out_of_range_q_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let o = levyfun(&["density", cfg.to_str().unwrap(), "--set", "functional.q=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("functional.q"), "{err}");
}

#[test]
fn unknown_fields_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", &format!("{POISSON}\n[output]\nstep = 3\n"));
    assert_eq!(levyfun(&["density", cfg.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("absent.toml");
    assert_eq!(levyfun(&["density", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bad_thread_override_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let o = Command::new(env!("CARGO_BIN_EXE_levyfun"))
        .args(["moments", cfg.to_str().unwrap()])
        .env("LEVYFUN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cdf_reaches_one_and_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let csv = stdout(&levyfun(&["cdf", cfg.to_str().unwrap(), "--set", "output.max=10.0"]));
    assert_eq!(header(&csv), "x,cdf");
    let f = column(&csv, 1);
    assert_eq!(f.len(), 200);
    assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(*f.last().unwrap() > 1.0 - 1e-3);
    assert!(!csv.contains('\r'));
}

#[test]
fn laplace_at_zero_and_moment_zero_are_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let path = cfg.to_str().unwrap();
    let lap = stdout(&levyfun(&[
        "laplace",
        path,
        "--set",
        "output.min=0.0",
        "--set",
        "output.max=1.0",
        "--set",
        "output.points=5",
    ]));
    assert!((column(&lap, 1)[0] - 1.0).abs() < 1e-12);
    let mom = stdout(&levyfun(&["moments", path]));
    assert_eq!(header(&mom), "m,moment");
    let r = rows(&mom);
    assert_eq!(r[0][0], "0");
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 1.0);
    // E I_q for the Poisson case is 1 / (λ(1 − q))
    let q = 0.36787944117144233f64;
    assert!((r[1][1].parse::<f64>().unwrap() - 1.0 / (1.0 - q)).abs() < 1e-12);
}

#[test]
fn drifted_density_vanishes_past_the_support() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", &POISSON.replace("\"exp\"", "\"exp_drifted\"\nmu = 2.0"));
    let csv = stdout(&levyfun(&["density", cfg.to_str().unwrap(), "--set", "output.max=1.0"]));
    for r in rows(&csv) {
        let (x, d): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        if x > 0.5 {
            assert_eq!(d, 0.0, "x = {x}");
        }
    }
}

#[test]
fn validate_passes_for_poisson_and_fails_when_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let path = cfg.to_str().unwrap();
    let ok = levyfun(&["validate", path]);
    let report = stdout(&ok);
    assert_eq!(header(&report), "check,value,limit,status");
    assert!(rows(&report).iter().all(|r| r[3] == "pass"), "{report}");
    let bad = levyfun(&["validate", path, "--set", "tolerances.k_max=2"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("criterion"));
}

#[test]
fn samples_repeat_under_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let path = cfg.to_str().unwrap();
    let a = levyfun(&["sample", path, "--set", "mc.samples=500", "--set", "mc.seed=9"]);
    let b = levyfun(&["sample", path, "--set", "mc.samples=500", "--set", "mc.seed=9"]);
    let c = levyfun(&["sample", path, "--set", "mc.samples=500", "--set", "mc.seed=10"]);
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
    assert_eq!(rows(&stdout(&a)).len(), 500);
}

#[test]
fn out_flag_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "p.toml", POISSON);
    let path = cfg.to_str().unwrap();
    let target = dir.path().join("d.csv");
    let o = levyfun(&["density", path, "--out", target.to_str().unwrap()]);
    assert!(o.status.success() && o.stdout.is_empty());
    assert_eq!(std::fs::read_to_string(&target).unwrap(), stdout(&levyfun(&["density", path])));
}

#[test]
fn sweep_emits_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        format!("{POISSON}\n[output]\npoints = 10\n\n[output.sweep]\nkey = \"functional.q\"\nvalues = [0.2, 0.5]\n");
    let cfg = write(dir.path(), "p.toml", &text);
    let csv = stdout(&levyfun(&["density", cfg.to_str().unwrap()]));
    assert_eq!(header(&csv), "q,x,density");
    let q = column(&csv, 0);
    assert_eq!(q.len(), 20);
    assert!(q[..10].iter().all(|&v| v == 0.2) && q[10..].iter().all(|&v| v == 0.5));
}

#[test]
fn general_laplace_reports_standard_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = POISSON.replace("kind = \"exp\"", "kind = \"general_laplace\"\ng = \"exponential\"")
        + "\n[output]\nmin = 0.5\nmax = 1.0\npoints = 2\n";
    let cfg = write(dir.path(), "g.toml", &text);
    let csv = stdout(&levyfun(&["laplace", cfg.to_str().unwrap(), "--set", "mc.samples=2000"]));
    assert_eq!(header(&csv), "u,laplace,std_error");
    let exact = write(dir.path(), "e.toml", &(POISSON.to_string() + "\n[output]\nmin = 0.5\nmax = 1.0\npoints = 2\n"));
    let reference = column(&stdout(&levyfun(&["laplace", exact.to_str().unwrap()])), 1);
    for (r, want) in rows(&csv).iter().zip(reference) {
        let (v, se): (f64, f64) = (r[1].parse().unwrap(), r[2].parse().unwrap());
        assert!((v - want).abs() < 5.0 * se + 1e-9, "{v} vs {want} (se {se})");
    }
}

#[test]
fn approx_reads_a_tabulated_tail() {
    let dir = tempfile::tempdir().unwrap();
    // tail of the compound Poisson-exponential measure with a = b = 1
    let mut table = String::from("z,tail\n");
    for i in 0..=1700 {
        let z = 1e-3 * 1.005f64.powi(i);
        table.push_str(&format!("{z},{}\n", (-z).exp()));
    }
    write(dir.path(), "tail.csv", &table);
    let text =
        "[levy]\nkind = \"custom\"\ntail_csv = \"tail.csv\"\n\n[functional]\nkind = \"levy_approx\"\nepsilon = 0.05\n";
    let cfg = write(dir.path(), "l.toml", text);
    let csv = stdout(&levyfun(&["approx", cfg.to_str().unwrap()]));
    assert_eq!(header(&csv), "k,z,mass");
    let cpe = write(
        dir.path(),
        "c.toml",
        &text.replace("kind = \"custom\"\ntail_csv = \"tail.csv\"", "kind = \"cpe\"\na = 1.0\nb = 1.0"),
    );
    let want = column(&stdout(&levyfun(&["approx", cpe.to_str().unwrap()])), 2);
    let got = column(&csv, 2);
    for k in 0..20 {
        assert!((got[k] - want[k]).abs() < 1e-4 * want[k], "cell {k}: {} vs {}", got[k], want[k]);
    }
}

#[test]
fn every_fixture_builds() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let mut n = 0;
    for entry in std::fs::read_dir(&fixtures).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let csv = stdout(&levyfun(&["moments", path.to_str().unwrap(), "--set", "output.moments=1"]));
            assert!(column(&csv, if header(&csv).starts_with("m,") { 1 } else { 2 }).iter().all(|m| m.is_finite()));
            n += 1;
        }
    }
    assert!(n >= 8);
}
