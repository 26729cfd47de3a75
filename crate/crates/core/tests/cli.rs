use std::path::PathBuf;
use std::process::{Command, Output};

use superint::report::{psi_to_string, report_from_str, solutions_from_str};
use superint::variety::{psi_residual, CubicForm};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superint")).args(args).output().expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    run(args).status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn verify_exit_codes() {
    assert_eq!(code(&["verify", "--system", "oscillator", "--dim", "3", "--points", "3"]), 0);
    let o = run(&["verify", "--system", "nonwilczynski", "--dim", "3", "--points", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let body = stdout(&o);
    let report = report_from_str(&body).unwrap();
    assert!(!report.check("structure_unique").unwrap().pass);
    assert_eq!(code(&["verify", "--system", "oscillator", "--dim", "2"]), 2);
    assert_eq!(code(&["verify", "--system", "kepler", "--dim", "3"]), 2);
    assert_eq!(code(&["verify", "--system", "oscillator", "--dim", "3", "--params", "zeta=1"]), 2);
    assert_eq!(code(&["verify", "--system", "oscillator", "--dim", "3", "--params", "w"]), 2);
    assert_eq!(code(&["verify", "--system", "oscillator", "--dim", "3", "--points", "0"]), 2);
    assert_eq!(code(&["verify", "--system", "sw2_flat", "--dim", "3", "--params", "m=5"]), 2);
    assert_eq!(code(&["verify", "--dim", "3"]), 2);
}

#[test]
fn verify_summary_with_output_file() {
    let path = tmp("cli_nonwilczynski.json");
    let o = run(&["verify", "--system", "nonwilczynski", "--dim", "3", "--points", "2", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("Wilczynski: non-unique"));
    let report = report_from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report.system, "nonwilczynski");
    assert_eq!(report.points.len(), 2);
}

#[test]
fn solve_variety_and_check_psi() {
    let path = tmp("cli_solutions.json");
    let o = run(&["solve-variety", "--dim", "3", "--scalar-curvature", "0", "--starts", "8", "--seed", "1", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let forms = solutions_from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(!forms.is_empty());
    for f in &forms {
        assert!(psi_residual(f, 0.0).1 < 1e-10);
    }
    assert_eq!(code(&["solve-variety", "--dim", "3", "--scalar-curvature", "0", "--starts", "0"]), 2);
    assert_eq!(code(&["solve-variety", "--dim", "1", "--scalar-curvature", "0"]), 2);

    let on = tmp("cli_psi_on.json");
    std::fs::write(&on, psi_to_string(&forms[forms.len() - 1])).unwrap();
    assert_eq!(code(&["check-psi", "--in", on.to_str().unwrap(), "--scalar-curvature", "0"]), 0);
    let off = tmp("cli_psi_off.json");
    std::fs::write(&off, psi_to_string(&CubicForm::zeros(3).unwrap())).unwrap();
    let o = run(&["check-psi", "--in", off.to_str().unwrap(), "--scalar-curvature", "-1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("off variety"));
    assert_eq!(code(&["check-psi", "--in", tmp("missing.json").to_str().unwrap(), "--scalar-curvature", "0"]), 2);
}

#[test]
fn structure_command() {
    let o = run(&["structure", "--system", "generic_flat", "--dim", "3", "--point", "1,1,1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("t̄    = [-0.6000000000, -0.6000000000, -0.6000000000]"), "{text}");
    assert_eq!(code(&["structure", "--system", "generic_flat", "--dim", "3", "--point", "0,1,1"]), 2);
    assert_eq!(code(&["structure", "--system", "generic_flat", "--dim", "3", "--point", "1,1"]), 2);
    assert_eq!(code(&["structure", "--system", "generic_flat", "--dim", "3", "--point", "a,b,c"]), 2);
    let o = run(&["structure", "--system", "nonwilczynski", "--dim", "3", "--point", "1,1,1"]);
    assert!(stdout(&o).contains("not unique"));
}
