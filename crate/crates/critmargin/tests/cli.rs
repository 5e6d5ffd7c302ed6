//! Command-line contract: exit codes, error messages, and the margin
//! query modes.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

fn critmargin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_critmargin"));
    cmd.env("CRITMARGIN_LOG", "error");
    cmd
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

/// A small margin table fixture saved to disk.
fn table_fixture(dir: &Path) -> String {
    use critmargin::collect::{DataTuple, PerNStats, SampleMode};
    use critmargin::criticality::SamplingConfig;
    use critmargin::margins::{build_margin_table, fit_kde, BandwidthOverrides};
    use critmargin::stats::Confidence;
    use std::collections::BTreeMap;

    let tuples: Vec<DataTuple> = (0..60)
        .map(|i| {
            let proxy = i as f64 / 59.0;
            let mut per_n = BTreeMap::new();
            for n in [1u32, 2, 4] {
                per_n.insert(
                    n,
                    PerNStats {
                        c_star: proxy * n as f64,
                        trials: 12,
                        stdev: 0.1,
                        converged: true,
                    },
                );
            }
            DataTuple {
                episode_id: i,
                t: 0,
                mode: if i % 2 == 0 {
                    SampleMode::Natural
                } else {
                    SampleMode::Uniform
                },
                proxy,
                per_n,
            }
        })
        .collect();
    let sampling = SamplingConfig::new(0.2, Confidence::new(0.95).unwrap(), 10, 100).unwrap();
    let fits: Vec<_> = [1u32, 2, 4]
        .iter()
        .map(|&n| {
            fit_kde(
                &tuples,
                n,
                Confidence::new(0.95).unwrap(),
                &sampling,
                &BandwidthOverrides::default(),
            )
            .unwrap()
        })
        .collect();
    let table = build_margin_table(&fits, &[1, 2, 4], "cli-test").unwrap();
    let path = dir.join("table.json");
    table.save(&path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_environment_exits_2_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"env": {"name": "maze", "rows": 3, "cols": 4}}"#,
    );
    let out = critmargin()
        .args(["train", "--config", &config])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("env") || stderr.contains("maze"), "{stderr}");
}

#[test]
fn missing_qtable_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"env": {"name": "line_world", "length": 4}}"#,
    );
    let out = critmargin()
        .args(["collect", "--config", &config, "--table", "/nonexistent/q.json"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn degenerate_fit_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{"env": {"name": "line_world", "length": 4}, "s_set": [1], "exclude_tail_steps": 1}"#,
    );
    // All tuples share one proxy value: the axis is degenerate.
    let tuples_path = dir.path().join("tuples.jsonl");
    let mut body = String::new();
    for i in 0..20 {
        body.push_str(&format!(
            "{{\"episode_id\":{i},\"t\":0,\"mode\":\"natural\",\"proxy\":1.0,\
             \"per_n\":{{\"1\":{{\"c_star\":0.5,\"trials\":4,\"stdev\":0.0,\
             \"converged\":true}}}}}}\n"
        ));
    }
    std::fs::write(&tuples_path, body).unwrap();
    let out = critmargin()
        .args([
            "fit",
            "--config",
            &config,
            "--tuples",
            tuples_path.to_str().unwrap(),
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn margin_query_and_batch_mode() {
    let dir = tempfile::tempdir().unwrap();
    let table = table_fixture(dir.path());

    // A huge tolerance admits the largest configured size.
    let out = critmargin()
        .args(["margin", "--table", &table, "--proxy", "0.5", "--zeta", "1000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "4");

    // Above the fitted range the margin is conservatively zero.
    let out = critmargin()
        .args(["margin", "--table", &table, "--proxy", "99", "--zeta", "1000"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "0");

    // Batch mode echoes one margin per input pair.
    let mut child = critmargin()
        .args(["margin", "--table", &table, "--batch"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"0.5 1000\n99 1000\n0.1 0.2\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let lines: Vec<String> = String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "4");
    assert_eq!(lines[1], "0");

    // Malformed batch input exits 2 with the line number.
    let mut child = critmargin()
        .args(["margin", "--table", &table, "--batch"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"0.5 1.0\nnot numbers\n").unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unreadable_margin_table_exits_2() {
    let out = critmargin()
        .args(["margin", "--table", "/nonexistent/table.json", "--proxy", "1", "--zeta", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
