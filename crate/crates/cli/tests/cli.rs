use std::path::Path;
use std::process::{Command, Output};

use noisy_mdp::choice::Dataset;
use noisy_mdp::mdp::{ValueFunction, ValueMode};
use noisy_mdp::sampler::{DivergenceCheck, PosteriorSamples, SamplerConfig};
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisy-mdp")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let o = cli(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["generate", "--v=-3,-15,-1", "-T", "500", "--seed", "11", "--out", s(out)]);
    }
    let text = std::fs::read(a.join("dataset.jsonl")).unwrap();
    assert_eq!(text, std::fs::read(b.join("dataset.jsonl")).unwrap());
    assert_eq!(String::from_utf8_lossy(&text).lines().count(), 501);
    let d = Dataset::load(&a.join("dataset.jsonl")).unwrap();
    assert_eq!(d.len(), 500);
    assert_eq!(d.to_jsonl_string().as_bytes(), &text[..]);
    let manifest = json(&a.join("run.json"));
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["config"]["seed"], 11);
}

#[test]
fn manifests_reproduce_their_run() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["generate", "--env", "tabular", "-T", "30", "--seed", "4", "--out", s(&a)]);
    ok(&["infer", s(&a.join("dataset.jsonl")), "--iterations", "400", "--burn-in", "100", "--out", s(&a)]);
    let a_run = a.join("run.json");
    ok(&["infer", "--config", s(&a_run), "--out", s(&b)]);
    assert_eq!(std::fs::read(a.join("posterior.jsonl")).unwrap(), std::fs::read(b.join("posterior.jsonl")).unwrap());
    assert_eq!(std::fs::read(a.join("summary.json")).unwrap(), std::fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn tabular_inference_writes_posterior_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["generate", "--env", "tabular", "-T", "20", "--seed", "1", "--out", s(out)]);
    ok(&["infer", s(&out.join("dataset.jsonl")), "--iterations", "10000", "--ig-a", "1", "--ig-b", "1", "--out", s(out)]);
    let post = PosteriorSamples::load(&out.join("posterior.jsonl")).unwrap();
    assert_eq!(post.len(), 5000);
    assert!(post.draws.iter().all(|d| d.values().iter().sum::<f64>().abs() < 1e-9));
    let summary = json(&out.join("summary.json"));
    assert!(summary["sampler"]["acceptance_rate"].as_f64().unwrap() > 0.5);
    assert_eq!(summary["chain"]["components"].as_array().unwrap().len(), 7);
    let acf = std::fs::read_to_string(out.join("acf_v1.csv")).unwrap();
    assert!(acf.starts_with("lag,acf,se\n0,1.0000000000000000e0,"), "{acf}");
    assert!(std::fs::read_to_string(out.join("trace.csv")).unwrap().starts_with("iter,v1,"));
}

#[test]
fn basis_inference_uses_the_documented_prior() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["generate", "-T", "40", "--out", s(out)]);
    ok(&["infer", s(&out.join("dataset.jsonl")), "--iterations", "300", "--burn-in", "100", "--out", s(out)]);
    let config: SamplerConfig = PosteriorSamples::load(&out.join("posterior.jsonl")).unwrap().config;
    assert_eq!(config.kappa.value(), 2500.0);
    assert_eq!((config.ig.a, config.ig.b), (3.0, 1e5));
    assert_eq!(config.moves.to_string(), "scale");
    let manifest = json(&out.join("run.json"));
    assert_eq!(manifest["config"]["mode"], "basis");
}

fn single_draw_posterior(path: &Path, v: Vec<f64>) {
    let draws = vec![ValueFunction::basis(v)];
    let post = PosteriorSamples {
        config: SamplerConfig::default(),
        mode: ValueMode::Basis,
        dim: 3,
        iterations: vec![0],
        divergence: DivergenceCheck::from_draws(&draws),
        draws,
        acceptance: Vec::new(),
        newton_fallbacks: 0,
        wall_time_secs: 0.0,
    };
    post.save(path).unwrap();
}

#[test]
fn truth_as_posterior_beats_uniform_guessing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["generate", "-T", "300", "--seed", "3", "--out", s(out)]);
    let post = out.join("truth.jsonl");
    single_draw_posterior(&post, vec![-3.0, -15.0, -1.0]);
    ok(&["predict", "--posterior", s(&post), "--data", s(&out.join("dataset.jsonl")), "--from", "100", "--out", s(out)]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["observations"], 200);
    assert!(report["action_error"].as_f64().unwrap() < report["uniform_error"].as_f64().unwrap());
    let lines = std::fs::read_to_string(out.join("predictions.csv")).unwrap();
    assert_eq!(lines.lines().count(), 201);

    // Nothing left to predict.
    assert!(!cli(&["predict", "--posterior", s(&post), "--data", s(&out.join("dataset.jsonl")), "--from", "300", "--out", s(out)])
        .status
        .success());
}

#[test]
fn predict_rejects_a_mode_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["generate", "--env", "tabular", "-T", "10", "--out", s(out)]);
    let post = out.join("truth.jsonl");
    single_draw_posterior(&post, vec![-3.0, -15.0, -1.0]);
    let o = cli(&["predict", "--posterior", s(&post), "--data", s(&out.join("dataset.jsonl")), "--out", s(out)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("posterior is"));
}

#[test]
fn diag_compares_several_chains() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["generate", "--env", "tabular", "--states", "3", "--actions", "2", "-T", "10", "--out", s(out)]);
    let data = out.join("dataset.jsonl");
    for (moves, name) in [("none", "da"), ("scale+translate", "px")] {
        let sub = out.join(name);
        ok(&["infer", s(&data), "--moves", moves, "--iterations", "2000", "--burn-in", "500", "--out", s(&sub)]);
    }
    let d = out.join("diag");
    ok(&[
        "diag",
        s(&out.join("da/posterior.jsonl")),
        s(&out.join("px/posterior.jsonl")),
        "--max-lag",
        "20",
        "--out",
        s(&d),
    ]);
    let cmp = std::fs::read_to_string(d.join("compare_v1.csv")).unwrap();
    assert!(cmp.starts_with("lag,chain1,chain1_se,chain2,chain2_se\n"));
    assert_eq!(cmp.lines().count(), 22);
    assert!(d.join("chain2/hist_v3.csv").exists());
}

#[test]
fn toy_replicate_writes_acf_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&["replicate", "toy", "--scale", "desk", "--iterations", "10000", "--out", s(out)]);
    let report = json(&out.join("report.json"));
    assert!(report["criteria"]["min_acceptance_rate"].as_f64().unwrap() >= 0.9);
    let csv = std::fs::read_to_string(out.join("acf_v1.csv")).unwrap();
    assert!(csv.starts_with("lag,none,none_se,scale,scale_se,translate,translate_se,scale+translate,scale+translate_se\n"));
    let manifest = json(&out.join("run.json"));
    assert_eq!(manifest["config"]["experiment"], "toy");
    assert_eq!(manifest["config"]["params"]["iterations"], 10000);
}

#[test]
fn protocol_replicate_accepts_parameter_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment":"exp2-protocol","params":{"blocks":60,"iterations":1500,"burn_in":500,"self_play_seeds":3}}"#,
    )
    .unwrap();
    ok(&["replicate", "--config", s(&cfg), "--out", s(out)]);
    let report = json(&out.join("report.json"));
    assert_eq!(report["recording"]["observations"], 60);
    assert_eq!(report["self_play"].as_array().unwrap().len(), 3);
    assert!(report["action_error"].as_f64().unwrap() <= 1.0);
}

#[test]
fn unknown_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["infer", s(&dir.path().join("missing.jsonl")), "--out", s(dir.path())]);
    assert!(!o.status.success());
    let o = cli(&["infer", "x", "--moves", "sideways", "--out", s(dir.path())]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("sideways"));
    assert!(!cli(&["replicate", "--out", s(dir.path())]).status.success());
}
