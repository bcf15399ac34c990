//! Black-box tests for the `xlmd` binary: argument validation, exit codes,
//! output shapes, and byte-stability of the emitted CSV.

use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xlmd"))
        .args(args)
        .output()
        .expect("failed to launch the xlmd binary")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["run", "--help"],
        vec!["converge", "--help"],
        vec!["flowmap", "--help"],
        vec!["energy", "--help"],
        vec!["check", "--help"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?} must exit 0");
    }
}

#[test]
fn usage_errors_exit_two() {
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--bogus-flag"],
        vec!["run", "--epsilon", "-1.0"],
        vec!["run", "--epsilon", "0"],
        vec!["run", "--dt", "nan"],
        vec!["run", "--model", "no-such-model"],
        vec!["run", "--sample-stride", "0"],
        vec!["converge", "--eps-grid", "1e-2,1e-3"],
        vec![
            "flowmap", "--s", "0.9", "--t", "0.2", "--dt", "1e-3", "--t-final", "1.0",
        ],
        vec!["flowmap", "--model", "toy"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?} must exit 2; stderr: {}",
            stderr_of(&out)
        );
    }
}

#[test]
fn latent_stability_rejection_exits_two_with_message() {
    let out = run(&[
        "run", "--model", "scalar1d", "--epsilon", "1e-6", "--dt", "1e-2", "--t-final", "0.1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr_of(&out).contains("stability limit"),
        "stderr should explain the rejection: {}",
        stderr_of(&out)
    );
}

#[test]
fn trajectory_blow_up_exits_one() {
    // A quartic potential stepped with dt = 10 overflows within a few steps.
    let out = run(&[
        "run", "--integrator", "exact", "--model", "toy", "--dt", "10", "--t-final", "100",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr_of(&out).is_empty(), "failure must be reported on stderr");
}

#[test]
fn run_emits_sampled_rows_and_is_deterministic() {
    let args = [
        "run",
        "--model",
        "scalar1d",
        "--epsilon",
        "0.5",
        "--dt",
        "1e-3",
        "--t-final",
        "0.05",
        "--sample-stride",
        "10",
    ];
    let first = run(&args);
    assert_eq!(first.status.code(), Some(0), "stderr: {}", stderr_of(&first));
    let text = stdout_of(&first);

    let header: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("t,"))
        .collect();
    assert_eq!(header, ["t,r_1,p_1,x_1,v_1"]);

    // 50 steps sampled every 10, plus the final step (already a multiple).
    let data_rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,") && !l.is_empty())
        .collect();
    assert_eq!(data_rows.len(), 6);
    for row in &data_rows {
        assert_eq!(row.split(',').count(), 5);
        for field in row.split(',') {
            field.parse::<f64>().expect("numeric trajectory field");
        }
    }

    let second = run(&args);
    assert_eq!(first.stdout, second.stdout, "reruns must be byte-identical");
}

#[test]
fn run_includes_final_partial_stride_row() {
    // 45 steps with stride 10 samples 0,10,20,30,40 and then the final step.
    let out = run(&[
        "run",
        "--model",
        "scalar1d",
        "--epsilon",
        "0.5",
        "--dt",
        "1e-3",
        "--t-final",
        "0.045",
        "--sample-stride",
        "10",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout_of(&out);
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,") && !l.is_empty())
        .collect();
    assert_eq!(rows.len(), 6);
    let last_t: f64 = rows.last().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((last_t - 0.045).abs() < 1e-12);
}

const CHEAP_CONVERGE: [&str; 10] = [
    "converge",
    "--model",
    "constant",
    "--eps-grid",
    "1e-2,5e-3,2.5e-3,1.25e-3",
    "--dt",
    "1e-3",
    "--t-final",
    "0.2",
    "--ic",
];

#[test]
fn converge_output_is_byte_identical_across_thread_counts() {
    let mut args1: Vec<&str> = CHEAP_CONVERGE.to_vec();
    args1.extend(["compatible", "--threads", "1"]);
    let mut args4: Vec<&str> = CHEAP_CONVERGE.to_vec();
    args4.extend(["compatible", "--threads", "4"]);
    let out1 = run(&args1);
    let out4 = run(&args4);
    assert_eq!(out1.status.code(), Some(0), "stderr: {}", stderr_of(&out1));
    assert_eq!(out4.status.code(), Some(0), "stderr: {}", stderr_of(&out4));
    assert_eq!(out1.stdout, out4.stdout);
    let text = stdout_of(&out1);
    assert!(
        !text.contains("threads"),
        "worker count must not leak into the artifact"
    );
    assert!(text.contains("# command=converge"));
    assert!(text.contains("epsilon,err_r,err_p,err_x,status"));
    assert!(text.contains("# order_r="));
    assert!(text.contains("# fit_window="));
}

#[test]
fn converge_writes_out_file_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("study.csv");
    let plot_path = dir.path().join("plot.csv");
    let mut args: Vec<&str> = CHEAP_CONVERGE.to_vec();
    let out_s = out_path.to_str().unwrap();
    let plot_s = plot_path.to_str().unwrap();
    args.extend(["compatible", "--out", out_s, "--plot-data", plot_s]);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    assert!(out.stdout.is_empty(), "--out must redirect the artifact");

    let study = std::fs::read_to_string(&out_path).unwrap();
    assert!(study.starts_with("# command=converge"));
    assert!(study.contains("epsilon,err_r,err_p,err_x,status"));

    let plot = std::fs::read_to_string(&plot_path).unwrap();
    assert!(plot.starts_with("# command=converge/plot-data"));
    // Plot data is ascending in eps and numeric-only.
    let rows: Vec<&str> = plot
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("epsilon") && !l.is_empty())
        .collect();
    assert!(!rows.is_empty());
    let eps: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert!(eps.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn marginal_dt_warns_on_stderr_but_succeeds() {
    // scalar model at r0 = 0 has stiffness 2, so the stability limit for
    // eps = 1e-4 is ~7.07e-3; dt = 2e-3 eats into the 10x margin.
    let out = run(&[
        "run",
        "--model",
        "scalar1d",
        "--epsilon",
        "1e-4",
        "--dt",
        "2e-3",
        "--t-final",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let err = stderr_of(&out);
    assert!(
        err.contains("warning") && err.contains("stability limit"),
        "expected a marginal-dt warning, got: {err}"
    );
}

#[test]
fn flowmap_emits_single_result_row() {
    let out = run(&["flowmap", "--t", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("# command=flowmap"));
    let header: Vec<&str> = text.lines().filter(|l| l.starts_with("s,")).collect();
    assert_eq!(
        header,
        ["s,t,xi0,numeric_y,numeric_v,predicted_y,predicted_v,residual_y,residual_v"]
    );
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("s,") && !l.is_empty())
        .collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<f64> = rows[0]
        .split(',')
        .map(|f| f.parse().expect("numeric flowmap field"))
        .collect();
    assert_eq!(fields.len(), 9);
    assert_eq!(fields[0], 0.0);
    assert_eq!(fields[1], 0.5);
}

#[test]
fn energy_reports_single_drift_value() {
    let out = run(&[
        "energy", "--model", "constant", "--epsilon", "0.5", "--dt", "1e-3", "--t-final", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(lines.next(), Some("max_energy_drift"));
    let value: f64 = lines.next().unwrap().parse().unwrap();
    assert!(value.is_finite() && value >= 0.0);
    assert_eq!(lines.next(), None);
}

#[test]
fn check_row_is_well_formed() {
    let out = run(&["check", "--model", "constant", "--h", "1e-5"]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    let data: Vec<&str> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("h,") && !l.is_empty())
        .collect();
    assert_eq!(data.len(), 1);
    let fields: Vec<&str> = data[0].split(',').collect();
    assert_eq!(fields.len(), 6);
    assert_eq!(fields[5], "true");
    let h: f64 = fields[0].parse().unwrap();
    assert!((h - 1e-5).abs() < 1e-20);
}
