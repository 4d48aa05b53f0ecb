//! End-to-end tests of the `sptrain` binary: exit codes, file schemas,
//! determinism, and the documented output values.

use std::path::Path;
use std::process::{Command, Output};

fn sptrain(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sptrain"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn data_rows(csv: &str) -> Vec<Vec<f64>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse::<f64>().expect("float cell")).collect())
        .collect()
}

#[test]
fn simulate_writes_documented_schema_and_totals() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptrain(&["simulate", "--preset", "paper-d2", "--out", "run"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t_us,f1,f2,p11,p22,pop_total,flux_per_us,n_out_cum");
    assert!(csv.lines().any(|l| l.starts_with("# ")), "provenance header missing");

    let rows = data_rows(&csv);
    let final_n = rows.last().unwrap()[7];
    assert!((7.99..=8.00).contains(&final_n), "final n_out_cum {final_n}");
    // Nine significant digits everywhere.
    assert!(csv.contains("e0") || csv.contains("e-"));
}

#[test]
fn outputs_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = sptrain(
            &[
                "simulate",
                "--preset",
                "paper-d1",
                "--override",
                "n_subpulses=2",
                "--out",
                name,
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a/trajectory.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn g2_first_peak_at_pulse_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptrain(
        &[
            "g2",
            "--preset",
            "paper-d2",
            "--override",
            "pulse_fwhm_us=0.5",
            "--override",
            "n_subpulses=2",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("run/g2.csv")).unwrap();
    let rows = data_rows(&csv);
    // First local maximum above half of the global maximum.
    let max = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let mut first_peak = None;
    for w in rows.windows(3) {
        if w[1][1] > w[0][1] && w[1][1] >= w[2][1] && w[1][1] > 0.5 * max {
            first_peak = Some(w[1][0]);
            break;
        }
    }
    let tau = first_peak.expect("no peak found");
    assert!((tau - 3.0).abs() < 0.1, "first peak at {tau}");
    // Normalized column peaks at exactly 1.
    let norm_max = rows.iter().map(|r| r[2]).fold(0.0, f64::max);
    assert_eq!(norm_max, 1.0);
}

#[test]
fn sweep_matches_single_pulse_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.cfg"),
        "preset = paper-d2\nn_subpulses = 1\nomega2_mhz = 0\n\
         sweep_key = omega1_mhz\nsweep_values = 5,10,20\n",
    )
    .unwrap();
    let out = sptrain(&["sweep", "--config", "sweep.cfg", "--out", "run", "--jobs", "2"], dir.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/sweep.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "omega1_mhz,n_out_total,final_pop_total,g2_zero_over_max");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3);
    let area = 1.0644670194312262; // gaussian subpulse area at T = 1
    for row in rows {
        let omega_mhz = row[0];
        // alpha = 4 (g omega / delta)^2 / kappa in angular units.
        let tau = std::f64::consts::TAU;
        let g_eff = (tau * 10.0) * (tau * omega_mhz) / (tau * 100.0);
        let alpha = 4.0 * g_eff * g_eff / (tau * 3.0);
        let expect = 1.0 - (-alpha * area).exp();
        assert!(
            (row[1] - expect).abs() < 1e-6,
            "omega {omega_mhz}: n_out {} vs closed form {expect}",
            row[1]
        );
    }
}

#[test]
fn oracle_emits_comparison_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptrain(
        &[
            "oracle",
            "--preset",
            "paper-d2",
            "--override",
            "n_subpulses=1",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("run/oracle.csv")).unwrap();
    let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t_us,mean_photon,flux_per_us,p11,p22,trace");
    let rows = data_rows(&csv);
    // flux = kappa * mean_photon identically.
    let kappa = std::f64::consts::TAU * 3.0;
    for row in &rows {
        assert!((row[2] - kappa * row[1]).abs() <= 1e-12 * row[2].abs().max(1e-30));
    }
    let summary = std::fs::read_to_string(dir.path().join("run/oracle_summary.txt")).unwrap();
    assert!(summary.contains("photons_rel_deviation"));

    // With the toggle off only the CSV is produced.
    let out = sptrain(
        &[
            "oracle",
            "--preset",
            "paper-d2",
            "--override",
            "n_subpulses=1",
            "--override",
            "oracle=off",
            "--out",
            "bare",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(dir.path().join("bare/oracle.csv").exists());
    assert!(!dir.path().join("bare/oracle_summary.txt").exists());
}

#[test]
fn converge_reports_cutoff_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptrain(
        &[
            "converge",
            "--preset",
            "paper-d2",
            "--override",
            "n_subpulses=1",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("run/converge.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3); // cutoffs 1, 2, 3 pairwise
    let pair23 = rows.iter().find(|r| r[0] == 2.0 && r[1] == 3.0).unwrap();
    assert!(pair23[3] < 1e-4, "2 vs 3 relative flux difference {}", pair23[3]);
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    // Negative rate.
    let out = sptrain(
        &["simulate", "--preset", "paper-d1", "--override", "omega1_mhz=-3", "--out", "x"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("omega1_mhz"));

    // Unknown key.
    let out = sptrain(
        &["simulate", "--preset", "paper-d1", "--override", "omega_mhz=3", "--out", "x"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    // Parse error carries the line number.
    std::fs::write(dir.path().join("bad.cfg"), "preset = paper-d1\nnot a line\n").unwrap();
    let out = sptrain(&["simulate", "--config", "bad.cfg", "--out", "x"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Unknown preset.
    let out = sptrain(&["simulate", "--preset", "paper-d9", "--out", "x"], dir.path());
    assert!(!out.status.success());

    // No scenario source at all.
    let out = sptrain(&["simulate", "--out", "x"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn warnings_reach_the_diagnostic_stream() {
    let dir = tempfile::tempdir().unwrap();
    let out = sptrain(
        &[
            "simulate",
            "--preset",
            "paper-d2",
            "--override",
            "omega1_mhz=100",
            "--override",
            "n_subpulses=1",
            "--out",
            "run",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("warning"), "no regime warning on stderr: {stderr}");
    assert!(stderr.contains("far-detuning") || stderr.contains("bad-cavity"));
}
