use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const EXAMPLE_A: &str = r#"
[source]
kind = "gauss_markov"
frames = 3
rho = 0.9

[distortion]
uniform = 0.05

[sweep]
t = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06]

[sim]
blocklength = 200000
seed = 7
"#;

fn seqcode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqcode")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn rates_jc_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", EXAMPLE_A);
    let o = seqcode(&["rates", "--config", cfg.to_str().unwrap(), "--kinds", "JC"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("4.0870"), "{out}");
    assert!(out.contains("closed_form"));
}

#[test]
fn rates_csv_has_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", EXAMPLE_A);
    let o = seqcode(&["rates", "--config", cfg.to_str().unwrap(), "--kinds", "CC,JC", "--format", "csv"]);
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "# schema: seqcode.rates v1");
    assert_eq!(lines[1], "kind,rate_bits,method,converged,in_region_cc,in_region_jc");
    assert!(lines[2].starts_with("CC,4.365730798,closed_form"));
}

#[test]
fn rates_out_of_region_falls_back_to_solver() {
    let dir = tempfile::tempdir().unwrap();
    let text = EXAMPLE_A.replace("uniform = 0.05", "values = [0.05, 0.9, 0.05]");
    let cfg = write_config(dir.path(), "b.toml", &text);
    let o = seqcode(&["rates", "--config", cfg.to_str().unwrap(), "--kinds", "CC"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("numerical"), "{out}");
    assert!(out.contains("false"));
}

#[test]
fn malformed_config_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &EXAMPLE_A.replace("rho = 0.9", "rhoo = 0.9"));
    let o = seqcode(&["rates", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rhoo"));

    let cfg = write_config(dir.path(), "syntax.toml", "[source\n");
    assert_eq!(seqcode(&["rates", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(seqcode(&["rates"]).status.code(), Some(2));
    assert_eq!(seqcode(&["rates", "--config", "/nonexistent/x.toml"]).status.code(), Some(2));
}

#[test]
fn gaussian_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", EXAMPLE_A);
    let o = seqcode(&["sweep", "--config", cfg.to_str().unwrap(), "--kinds", "CC,CNC1,JC"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "# schema: seqcode.sweep v1");
    let header: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(lines.len(), 2 + 6);
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for row in &lines[2..] {
        let cells: Vec<&str> = row.split(',').collect();
        if cells[col("in_region_jc")] == "true" {
            let cnc: f64 = cells[col("R_CNC1_bits")].parse().unwrap();
            let jc: f64 = cells[col("R_JC_bits")].parse().unwrap();
            assert!((cnc - jc).abs() < 1e-9);
        }
        let gap: f64 = cells[col("gap_CC_bits")].parse().unwrap();
        assert!(gap > 0.0);
    }
}

#[test]
fn empty_sweep_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let text = EXAMPLE_A.replace("t = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06]", "t = []");
    let cfg = write_config(dir.path(), "e.toml", &text);
    let o = seqcode(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn binary_scan_passthrough() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bin.toml",
        "[source]\nkind = \"binary_markov\"\ncrossovers = [0.1, 0.1]\n\n[sweep]\nmode = \"binary_scan\"\n",
    );
    let out = dir.path().join("scan.csv");
    let o = seqcode(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# schema: seqcode.equivalence_scan v1");
    assert_eq!(lines.len(), 2 + 125);
}

#[test]
fn simulate_routes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.toml", EXAMPLE_A);
    let o = seqcode(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("\"scheme\": \"ideal_dpcm\""));
    let mse_line = out.lines().skip_while(|l| !l.contains("\"mse\"")).take(4).collect::<String>();
    assert!(mse_line.contains("0.04") || mse_line.contains("0.05"));

    let zero = write_config(dir.path(), "z.toml", &EXAMPLE_A.replace("uniform = 0.05", "uniform = 0.0"));
    let o = seqcode(&["simulate", "--config", zero.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0));
    for row in stdout(&o).lines().skip(2) {
        let mse: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
        assert!(mse < 1e-12);
    }

    let bad = write_config(dir.path(), "r.toml", &EXAMPLE_A.replace("uniform = 0.05", "values = [0.05, 0.9, 0.05]"));
    assert_eq!(seqcode(&["simulate", "--config", bad.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn identical_inputs_give_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let text = EXAMPLE_A.replace("blocklength = 200000", "blocklength = 5000\nreplications = 3");
    let cfg = write_config(dir.path(), "a.toml", &text);
    let files: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out = dir.path().join(format!("sim{i}.csv"));
            let o = seqcode(&[
                "simulate", "--config", cfg.to_str().unwrap(), "--seed", "42", "--format", "csv", "--out",
                out.to_str().unwrap(),
            ]);
            assert_eq!(o.status.code(), Some(0));
            std::fs::read(out).unwrap()
        })
        .collect();
    assert_eq!(files[0], files[1]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert_eq!(text.lines().next(), Some("# schema: seqcode.sim_report v1"));
    assert_eq!(text.lines().count(), 2 + 9);
}

#[test]
fn verify_full_suite_passes() {
    let o = seqcode(&["verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 9);
    assert!(out.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn verify_single_check() {
    let o = seqcode(&["verify", "--check", "counter_example"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 1);
    assert!(out.contains("counter_example"));
    assert_eq!(seqcode(&["verify", "--check", "nope"]).status.code(), Some(2));
}

#[test]
fn verify_forced_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "f.toml", "[verify]\ncc_reference_bits = 5.0\nchecks = [\"closed_forms\"]\n");
    let o = seqcode(&["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL"));
}
