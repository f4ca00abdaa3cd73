use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bergman_lab_cli::{emit_report, parse_structured, OutputFormat, Verdict, TABULAR_HEADER};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bergman-lab"));
    cmd.env_remove("SEED_OVERRIDE");
    cmd
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], config: &Path) -> Output {
    bin().arg("run").arg("--config").arg(config).args(args).output().unwrap()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exited normally")
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(shipped("")).unwrap() {
        let path = entry.unwrap().path();
        let output = bin().arg("validate").arg("--config").arg(&path).output().unwrap();
        assert_eq!(code(&output), 0, "{}: {}", path.display(), String::from_utf8_lossy(&output.stderr));
    }
}

#[test]
fn bad_configs_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown.toml", "kind = \"kernel\"\nsamplez = 10\n[domain]\nname = \"disc\"\n", "samplez"),
        ("radius.toml", "kind = \"kernel\"\n[domain]\nname = \"ball\"\ndimension = 2\nradius = -1.0\n", "domain.radius"),
        ("syntax.toml", "kind = = \"kernel\"\n", ""),
    ];
    for (name, text, field) in cases {
        let path = write_config(&dir, name, text);
        for sub in ["validate", "run"] {
            let output = bin().arg(sub).arg("--config").arg(&path).output().unwrap();
            assert_eq!(code(&output), 2, "{name} via {sub}");
            assert!(String::from_utf8_lossy(&output.stderr).contains(field), "{name}: stderr names {field}");
        }
    }
    assert_eq!(code(&run(&[], &dir.path().join("missing.toml"))), 2);
}

#[test]
fn ill_conditioned_gram_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(
        &dir,
        "cond.toml",
        "kind = \"kernel\"\nsamples = 20000\ncondition_cutoff = 1.5\n[domain]\nname = \"disc\"\n",
    );
    let output = run(&[], &path);
    assert_eq!(code(&output), 3, "{}", String::from_utf8_lossy(&output.stderr));
}

#[test]
fn seed_override_replaces_the_config_seed() {
    let config = shipped("disc-kernel.toml");
    let output = bin()
        .env("SEED_OVERRIDE", "4242")
        .args(["run", "--samples", "20000", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    let text = String::from_utf8(output.stdout).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[4], "4242");
    let flag = run(&["--samples", "20000", "--seed", "4242"], &config);
    assert_eq!(String::from_utf8(flag.stdout).unwrap(), text);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let config = shipped("ellipsoid-asymptotics.toml");
    let args = ["--samples", "100000", "--format", "tabular"];
    let a = run(&args, &config);
    let b = run(&args, &config);
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
    assert!(a.stdout.starts_with(TABULAR_HEADER.as_bytes()));
}

#[test]
fn structured_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let output = run(
        &["--samples", "100000", "--format", "structured", "--out", out.to_str().unwrap()],
        &shipped("disc-kernel.toml"),
    );
    assert!(output.stdout.is_empty());
    let bytes = std::fs::read(&out).unwrap();
    let report = parse_structured(&bytes).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(emit_report(&report, OutputFormat::Structured), bytes);
}

#[test]
fn every_part_runs_at_small_sample_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, domain) in [
        ("ball", "name = \"ball\"\ndimension = 2"),
        ("ellipsoid", "name = \"ellipsoid\"\nweights = [1.0, 4.0]"),
        ("perturbed", "name = \"perturbed-ball\"\ndimension = 2\nepsilon = 0.02"),
    ] {
        let text = format!("kind = \"all\"\nsamples = 1000\ndegree = 2\nblocks = 4\n[domain]\n{domain}\n");
        let path = write_config(&dir, &format!("{name}.toml"), &text);
        let output = run(&["--format", "structured"], &path);
        let status = code(&output);
        assert!(status == 0 || status == 1, "{name}: exit {status}: {}", String::from_utf8_lossy(&output.stderr));
        let report = parse_structured(&output.stdout).unwrap();
        assert!(!report.records.is_empty());
        assert_eq!(status == 0, !report.verdict.is_failure());
    }
}

#[test]
fn disc_kernel_at_the_centre() {
    let output = run(&["--format", "structured"], &shipped("disc-kernel.toml"));
    assert_eq!(code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    let report = parse_structured(&output.stdout).unwrap();
    assert_eq!(report.config.samples, 1_000_000);
    assert_eq!(report.model.as_ref().unwrap().degree, 10);
    let check = report.check("kernel-closed-form").unwrap();
    assert_eq!(check.verdict, Verdict::Pass);
    let k = check.value.unwrap();
    assert!((k * std::f64::consts::PI - 1.0).abs() < 0.01, "K(0) = {k}");
}

#[test]
fn ball_comparison_records_the_uncorrected_constant() {
    let output = run(&["--format", "structured"], &shipped("ball-compare.toml"));
    assert_eq!(code(&output), 0);
    let report = parse_structured(&output.stdout).unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    let expected_fail = report.records.iter().filter(|r| r.verdict == Verdict::ExpectedFail).count();
    assert_eq!(expected_fail * 2, report.records.len());
    for r in &report.records {
        assert_eq!(r.s_low, Some(1.0));
    }
    let checks: Vec<_> = report.checks.iter().filter(|c| c.name.starts_with("sandwich-exponent-n+1")).collect();
    assert!(!checks.is_empty() && checks.iter().all(|c| c.verdict == Verdict::Pass));
}
