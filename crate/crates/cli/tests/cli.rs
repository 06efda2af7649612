mod common;

use clap::Parser;
use common::{cli, code, small_config, write_config};
use multitypical::exit;
use multitypical::report::{bounds_report, BoundInputs, BoundsReport};
use multitypical::study::{self, BaseSummary, CalibrationFile};

#[derive(Parser)]
struct Wrap {
    #[command(flatten)]
    inputs: BoundInputs,
}

fn flags(dir: &std::path::Path) -> Vec<String> {
    let cfg_path = dir.join("cfg.json");
    write_config(&cfg_path, &small_config(&dir.join("out")));
    vec!["--config".into(), cfg_path.display().to_string()]
}

fn run(cmd: &str, flags: &[String], extra: &[&str]) -> std::process::Output {
    let mut args: Vec<&str> = vec![cmd];
    args.extend(flags.iter().map(String::as_str));
    args.extend(extra);
    cli(&args)
}

#[test]
fn bounds_check_emits_the_report() {
    let out = cli(&["bounds-check", "--seed", "3"]);
    assert_eq!(code(&out), exit::SUCCESS);
    let report: BoundsReport = serde_json::from_slice(&out.stdout).unwrap();
    let expected = bounds_report(&Wrap::parse_from(["x"]).inputs, 3).unwrap();
    assert_eq!(report, expected);
    assert!((report.theorem1.beta_bound - 0.15).abs() < 1e-9);
    assert_eq!(report.lemma0.estimated_prob, 0.0);
    assert!(report.lemma0.holds);
    assert_eq!(report.inputs.seed, 3);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.json");
    let out = cli(&[
        "bounds-check",
        "--seed",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), exit::SUCCESS);
    assert!(out.stdout.is_empty());
    let from_file: BoundsReport = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(from_file, expected);
}

#[test]
fn bounds_check_hand_example_with_flags() {
    let out = cli(&[
        "bounds-check",
        "--n",
        "1",
        "--epsilon",
        "0.01",
        "--members",
        "2",
        "--d-k",
        "1.0,3.8",
        "--r",
        "0.5",
        "--kl-ab",
        "1.0",
        "--h-a",
        "2.0",
        "--h-b",
        "2.0",
        "--mean-b",
        "-1.5",
    ]);
    assert_eq!(
        code(&out),
        exit::SUCCESS,
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r: BoundsReport = serde_json::from_slice(&out.stdout).unwrap();
    let t2 = (98.0 * (-0.04f64).exp() - 50.0).ln() + 0.03;
    assert!((r.theorem2.d_threshold.unwrap() - t2).abs() < 1e-6);
    assert!(r.theorem2.condition2 && r.theorem2.condition1);
    let t3 = -0.03 - (0.5 * 0.99 * (-0.02f64).exp() - 0.02).ln();
    assert!((r.theorem3.threshold.unwrap() - t3).abs() < 1e-6);
    assert!(r.theorem3.holds && r.theorem3.small_n_warning);
    assert_eq!(r.inputs.q_b, [-1.5, 0.0]);
}

#[test]
fn bad_arguments_fail() {
    assert_eq!(
        code(&cli(&["bounds-check", "--epsilon", "0.7"])),
        exit::FAILURE
    );
    assert_ne!(code(&cli(&["no-such-command"])), exit::SUCCESS);
    let dir = tempfile::tempdir().unwrap();
    let f = flags(dir.path());
    assert_eq!(code(&run("train", &f, &[])), exit::FAILURE);
    assert_eq!(code(&run("table1", &f, &[])), exit::FAILURE);
    assert_eq!(
        code(&run("gen-base", &f, &["--target-coverage", "1.5"])),
        exit::FAILURE
    );
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&cli(&["gen-base", "--config", missing.to_str().unwrap()])),
        exit::FAILURE
    );
}

#[test]
fn gen_base_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f = flags(dir.path());
    let a = run("gen-base", &f, &[]);
    assert_eq!(code(&a), exit::SUCCESS);
    let model = std::fs::read(dir.path().join("out").join(study::BASE_MODEL)).unwrap();
    let b = run("gen-base", &f, &[]);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(
        model,
        std::fs::read(dir.path().join("out").join(study::BASE_MODEL)).unwrap()
    );
    let s: BaseSummary = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!((s.dim, s.num_components), (5, 4));
    assert!(s.min_mean_distance.unwrap() > 0.0);

    let one = run("gen-base", &f, &["--num-components", "1"]);
    assert_eq!(code(&one), exit::SUCCESS);
    let s: BaseSummary = serde_json::from_slice(&one.stdout).unwrap();
    assert_eq!(s.num_components, 1);
    assert_eq!(s.min_mean_distance, None);
    assert_eq!(s.max_cross_mode_probability, None);
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    let f = flags(dir.path());
    for cmd in ["gen-base", "train", "table1", "reject", "export"] {
        let out = run(cmd, &f, &[]);
        assert_eq!(
            code(&out),
            exit::SUCCESS,
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let table = run("table1", &f, &[]);
    assert!(String::from_utf8(table.stdout)
        .unwrap()
        .starts_with("typical_set,p,q1,q2,q3\n"));

    let whole = tempfile::tempdir().unwrap();
    let g = flags(whole.path());
    assert_eq!(code(&run("run-study", &g, &[])), exit::SUCCESS);
    for file in [
        study::TABLE1,
        study::REJECTION,
        study::PROJECTIONS,
        "model_q2.json",
    ] {
        assert_eq!(
            std::fs::read(dir.path().join("out").join(file)).unwrap(),
            std::fs::read(whole.path().join("out").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn partial_ensembles_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let f = flags(dir.path());
    assert_eq!(code(&run("gen-base", &f, &[])), exit::SUCCESS);
    // at this step size one of six members diverges
    let extra = ["--num-members", "6", "--learning-rate", "100"];
    assert_eq!(code(&run("train", &f, &extra)), exit::PARTIAL);
    let cal: CalibrationFile = serde_json::from_slice(
        &std::fs::read(dir.path().join("out").join(study::CALIBRATION)).unwrap(),
    )
    .unwrap();
    assert!(cal.partial);
    assert_eq!(cal.failures.len(), 1);
    assert_eq!(cal.members.len(), 5);
    assert_eq!(code(&run("reject", &f, &extra)), exit::PARTIAL);

    let all_fail = ["--learning-rate", "1e6"];
    assert_eq!(code(&run("train", &f, &all_fail)), exit::FAILURE);
}
