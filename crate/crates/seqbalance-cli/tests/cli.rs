//! End-to-end checks of the binary: exit codes, provenance headers,
//! byte-identical reruns and the config-file precedence rules.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqbalance"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("seqbalance-cli-test-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_passes() {
    let out = bin().arg("verify").output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn gen_then_assign_round_trip() {
    let seq = tmp("seq.csv");
    let status = bin()
        .args([
            "gen",
            "--instance",
            "uniform",
            "--p",
            "1",
            "--T",
            "12",
            "--seed",
            "4",
        ])
        .arg("--out")
        .arg(&seq)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(&seq).unwrap();
    assert!(text.starts_with("# config:"));
    assert!(text.contains("# seed: 4"));
    assert!(text.contains("c1"));

    let trace = tmp("trace.csv");
    let out = bin()
        .args([
            "assign",
            "--design",
            "pigeonhole",
            "--partition",
            "uniform1d",
            "--eta",
            "0.5",
        ])
        .arg("--input")
        .arg(&seq)
        .arg("--out")
        .arg(&trace)
        .args(["--seed", "2", "--no-timestamp"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("discrepancy:"));
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.contains("t,w,cell_key"));
    // 12 subjects -> 12 trace rows, labels are 0/1.
    let rows: Vec<&str> = trace_text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,"))
        .collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(
        rows.iter()
            .filter(|r| r.split(',').nth(1) == Some("1"))
            .count(),
        6
    );
}

#[test]
fn discrepancy_prints_golden_value() {
    let control = tmp("control.csv");
    let treated = tmp("treated.csv");
    fs::write(&control, "c1\n0.1\n0.4\n").unwrap();
    fs::write(&treated, "c1\n0.7\n0.9\n").unwrap();
    let out = bin()
        .arg("discrepancy")
        .arg("--control")
        .arg(&control)
        .arg("--treated")
        .arg(&treated)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.1");
}

#[test]
fn rates_reruns_are_byte_identical_and_flags_override_config() {
    let run = |extra: &[&str], out: &PathBuf| {
        let status = bin()
            .args([
                "rates",
                "--design",
                "crd",
                "--instance",
                "halfzero",
                "--T",
                "64..256",
                "--R",
                "40",
                "--seed",
                "9",
                "--no-timestamp",
            ])
            .args(extra)
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    };
    let a = tmp("rates_a.csv");
    let b = tmp("rates_b.csv");
    run(&[], &a);
    run(&[], &b);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.contains("design,instance,T,R,mean,std,ci,mean_tau"));
    assert!(text.contains("# seed: 9"));
    assert!(!text.contains("timestamp"));

    // Config file supplies the same run; an explicit flag overrides it.
    let cfg = tmp("cfg.json");
    fs::write(
        &cfg,
        r#"{"design":"crd","instance":"halfzero","t":"64..256","r":40}"#,
    )
    .unwrap();
    let c = tmp("rates_c.csv");
    let status = bin()
        .arg("rates")
        .arg("--config")
        .arg(&cfg)
        .args(["--seed", "9", "--no-timestamp"])
        .arg("--out")
        .arg(&c)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());

    let d = tmp("rates_d.csv");
    let status = bin()
        .arg("rates")
        .arg("--config")
        .arg(&cfg)
        .args(["--R", "35", "--seed", "9", "--no-timestamp"])
        .arg("--out")
        .arg(&d)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(fs::read_to_string(&d).unwrap().contains(",35,"));
}

#[test]
fn config_errors_exit_2() {
    // Unknown design.
    let out = bin()
        .args([
            "rates",
            "--design",
            "bogus",
            "--instance",
            "halfzero",
            "--T",
            "64..128",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Unknown config key.
    let cfg = tmp("bad_cfg.json");
    fs::write(
        &cfg,
        r#"{"design":"crd","instance":"halfzero","t":"64..128","r":30,"mystery":1}"#,
    )
    .unwrap();
    let out = bin()
        .arg("rates")
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("mystery"));

    // Odd horizon in gen.
    let out = bin()
        .args(["gen", "--instance", "halfzero", "--T", "7"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_seed_fallback() {
    let a = tmp("env_a.csv");
    let b = tmp("env_b.csv");
    let status = bin()
        .args([
            "gen",
            "--instance",
            "uniform",
            "--p",
            "1",
            "--T",
            "8",
            "--no-timestamp",
        ])
        .env("SEQBALANCE_SEED", "33")
        .arg("--out")
        .arg(&a)
        .status()
        .unwrap();
    assert!(status.success());
    let status = bin()
        .args([
            "gen",
            "--instance",
            "uniform",
            "--p",
            "1",
            "--T",
            "8",
            "--seed",
            "33",
            "--no-timestamp",
        ])
        .arg("--out")
        .arg(&b)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}
