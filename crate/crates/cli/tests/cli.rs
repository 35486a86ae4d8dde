use std::process::Command;

use colht_cli::config::parse_config;
use colht_cli::report::{emit_report, read_jsonl, write_csv, ReportBody, Versions, CSV_COLUMNS};
use colht_cli::{run_experiment, Format};

const H0: &str = "h0 = [[0.4, 0.1], [0.15, 0.35]]\n";
const H1: &str = "h1 = [[0.1, 0.2], [0.2, 0.5]]\n";

fn config(text: &str) -> colht_cli::ExperimentConfig {
    parse_config(text, true, None).unwrap().config
}

fn render(body: &ReportBody, format: Format) -> String {
    let mut out = Vec::new();
    emit_report(body, format, &mut out).unwrap();
    String::from_utf8(out).unwrap()
}

#[test]
fn jsonl_round_trip() {
    let cfg = config(&format!("mode = \"zero-rate\"\nn = [10, 20]\n{H0}{H1}"));
    let body = run_experiment(&cfg).body;
    let text = render(&body, Format::Jsonl);
    assert_eq!(read_jsonl(&text).unwrap(), body);
}

#[test]
fn empty_report_is_header_only_csv() {
    let body = ReportBody {
        config: config(&format!("mode = \"zero-rate\"\n{H0}")),
        versions: Versions::default(),
        tasks: vec![],
    };
    let mut out = Vec::new();
    write_csv(&body, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), format!("{}\n", CSV_COLUMNS.join(",")));
}

#[test]
fn csv_rows_have_twelve_significant_digits() {
    let body = run_experiment(&config(&format!("mode = \"zero-rate\"\n{H0}{H1}"))).body;
    let text = render(&body, Format::Csv);
    let line = text.lines().nth(1).unwrap();
    let value = line.split(',').nth(4).unwrap();
    let digits = value.trim_start_matches("0.").trim_start_matches('0').len();
    assert_eq!(digits, 12, "{line}");
    let exact = body.tasks[0].rows[0].value.unwrap();
    assert!((value.parse::<f64>().unwrap() - exact).abs() < 1e-12);
}

#[test]
fn repeated_runs_agree_byte_for_byte() {
    let cfg = config(&format!(
        "mode = \"simulate\"\nseed = 5\nstack = \"random\"\ncardinalities = [[2, 2]]\nn = [4]\ntrials = 500\n{H0}"
    ));
    let a = run_experiment(&cfg);
    let b = run_experiment(&cfg);
    for f in [Format::Csv, Format::Jsonl, Format::Table] {
        assert_eq!(render(&a.body, f), render(&b.body, f));
    }
    let other = run_experiment(&colht_cli::ExperimentConfig { seed: 6, ..cfg });
    assert_ne!(render(&a.body, Format::Csv), render(&other.body, Format::Csv));
}

#[test]
fn zero_trials_warn_and_leave_estimates_empty() {
    let cfg = config(&format!(
        "mode = \"simulate\"\nstack = \"random\"\ncardinalities = [[2, 2]]\nn = [3]\ntrials = 0\n{H0}"
    ));
    let body = run_experiment(&cfg).body;
    let task = &body.tasks[0];
    assert!(task.failure.is_none());
    assert!(task.warnings.iter().any(|w| w.contains("trials = 0")));
    let mc = task.rows.iter().find(|r| r.mode == "simulate").unwrap();
    assert_eq!((mc.alpha, mc.beta, mc.slope), (None, None, None));
    // the exact row is still there
    assert!(task.rows.iter().any(|r| r.mode == "simulate-exact" && r.alpha.is_some()));
}

#[test]
fn audits_pass_on_small_instances() {
    let body = run_experiment(&config("mode = \"identity-audit\"\njoints = 10\n")).body;
    assert!(body.worst_failure().is_none());
    assert_eq!(body.tasks[0].rows.len(), 10);
    let body = run_experiment(&config(&format!("mode = \"converse-audit\"\ncodes = 20\nn = [3]\n{H0}"))).body;
    assert!(body.worst_failure().is_none(), "{:?}", body.tasks[0].failure);
}

fn colht(args: &[&str], config_text: Option<&str>) -> (i32, String, String) {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_colht"));
    cmd.args(args);
    if let Some(text) = config_text {
        let p = dir.path().join("run.toml");
        std::fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn exit_code_success() {
    let (code, stdout, _) = colht(&["zero-rate", "--format", "csv"], Some(&format!("{H0}{H1}n = [10]\n")));
    assert_eq!(code, 0);
    assert!(stdout.starts_with(&CSV_COLUMNS.join(",")));
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn exit_code_invalid_config() {
    let (code, _, stderr) = colht(&["zero-rate"], Some("h0 = [[0.5, 0.6]]\n"));
    assert_eq!(code, 2);
    assert!(stderr.contains("NotNormalized"), "{stderr}");
    let (code, _, stderr) = colht(&["zero-rate"], Some(&format!("{H0}bogus = 1\n")));
    assert_eq!(code, 2);
    assert!(stderr.contains("bogus"), "{stderr}");
    let (code, _, stderr) = colht(&["zero-rate", "--lax"], Some(&format!("{H0}bogus = 1\n")));
    assert_eq!(code, 0);
    assert!(stderr.contains("warning"), "{stderr}");
}

#[test]
fn exit_code_size_guard() {
    let text = format!("{H0}stack = \"random\"\ncardinalities = [[2, 2]]\nn = [5000]\ntrials = 1\n");
    let (code, _, stderr) = colht(&["simulate"], Some(&text));
    assert_eq!(code, 4, "{stderr}");
}

#[test]
fn exit_code_not_converged() {
    let text = format!("{H0}{H1}rates = [0.3]\ncardinalities = [[2, 2]]\n[search]\nrestarts = 1\nmax_evaluations = 1\n");
    let (code, stdout, _) = colht(&["exponent", "--format", "csv"], Some(&text));
    assert_eq!(code, 3);
    // partial output is still written
    assert_eq!(stdout.lines().count(), 2);
}

#[test]
fn out_dir_holds_report_and_timings() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let (code, stdout, _) = colht(
        &["identity-audit", "--format", "jsonl", "--out", out.to_str().unwrap(), "--seed", "3"],
        None,
    );
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let body = read_jsonl(&std::fs::read_to_string(out.join("report.jsonl")).unwrap()).unwrap();
    assert_eq!(body.config.seed, 3);
    assert!(out.join("timings.json").exists());
}
