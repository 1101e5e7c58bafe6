//! End-to-end runs of the binary on the bundled models.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn models() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn model(name: &str) -> String {
    models().join(name).display().to_string()
}

fn pcegar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcegar"))
        .args(args)
        .env_remove("PCEGAR_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_reports_values_and_exit_codes() {
    let o = pcegar(&["check", &model("no_dtmc.mdp"), "P<3/4[X (P1&!P2)] | P<3/4[X (!P1&P2)]"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("max=3/4"));
    assert!(out.trim_end().ends_with("violated"));

    let o = pcegar(&["check", &model("chain.mdp"), "P<=1[F P]"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("holds"));
}

#[test]
fn input_errors_exit_with_two() {
    assert_eq!(pcegar(&["check", &model("chain.mdp"), "P<2[F P]"]).status.code(), Some(2));
    assert_eq!(pcegar(&["check", "/nonexistent.mdp", "true"]).status.code(), Some(2));
    assert_eq!(pcegar(&["bogus"]).status.code(), Some(2));
    let o = pcegar(&["cex", &model("chain.mdp"), "P<1[F P]", "--order", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown edge order"));
}

#[test]
fn abstract_prints_quotient() {
    let o = pcegar(&["abstract", &model("kripke.mdp"), &model("kripke.part")]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().filter(|l| l.starts_with("state ")).count(), 8);
    assert!(out.contains("state [q5|q6]"));
}

#[test]
fn cex_validate_and_otf_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cex = dir.path().join("cex");
    let cex_s = cex.display().to_string();
    let psi = "P<=3/4[F P]";
    let o = pcegar(&["cex", &model("chain.mdp"), psi, "--out", &cex_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(cex.join("cex.mdp").exists() && cex.join("rel.tsv").exists());

    let part = dir.path().join("id.part");
    std::fs::write(&part, "").unwrap();
    let part_s = part.display().to_string();
    let o = pcegar(&["validate", &model("chain.mdp"), &part_s, &cex_s]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("valid"));

    let o = pcegar(&["otf", &model("chain.mdp"), &part_s, &cex_s, psi, "--trace"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("k=6 |R|=3 sat_init=true maxprob_init=7/8"));
    assert!(out.contains("safety-violated at depth 6"));

    let o = pcegar(&["otf", &model("chain.mdp"), &part_s, &cex_s, psi, "--max-depth", "3", "--delta"]);
    assert_eq!(o.status.code(), Some(3));

    let o = pcegar(&["dot", &cex_s, "--model", &model("chain.mdp"), "--partition", &part_s]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("style=dashed"));
}

#[test]
fn spurious_counterexample_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let cex = dir.path().join("k");
    let cex_s = cex.display().to_string();
    let (m, p) = (model("kripke.mdp"), model("kripke.part"));
    assert_eq!(pcegar(&["cex", &m, "P<=0[F P]", "--partition", &p, "--out", &cex_s]).status.code(), Some(1));
    let o = pcegar(&["validate", &m, &p, &cex_s]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("invalid at"));
    let o = pcegar(&["otf", &m, &p, &cex_s, "P<=0[F P]"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("not-simulated"));
}

#[test]
fn cegar_traces_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace");
    let o = pcegar(&[
        "cegar",
        &model("kripke.mdp"),
        "P<=0[F P]",
        "--partition",
        &model("kripke.part"),
        "--trace",
        &trace.display().to_string(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("iter=1 blocks=8"));
    assert!(out.trim_end().ends_with("violated"));
    assert!(trace.join("iter-1/partition.part").exists());
    assert!(trace.join("iter-1/cex/cex.mdp").exists());

    let o = pcegar(&["cegar", &model("kripke.mdp"), "P<=0[F P]", "--max-iters", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("iteration-limit"));

    let o = pcegar(&["cegar", &model("kripke.mdp"), "P<=0[X P]"]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn random_order_reads_seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let status = Command::new(env!("CARGO_BIN_EXE_pcegar"))
            .args(["cex", &model("kripke.mdp"), "P<=0[F P]", "--order", "random", "--out"])
            .arg(&out)
            .env("PCEGAR_SEED", seed)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(1));
        std::fs::read_to_string(out.join("cex.mdp")).unwrap()
    };
    assert_eq!(run("7", "a"), run("7", "b"));
    let o = Command::new(env!("CARGO_BIN_EXE_pcegar"))
        .args(["cex", &model("kripke.mdp"), "P<=0[F P]", "--order", "random"])
        .env("PCEGAR_SEED", "x")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dot_is_deterministic() {
    let a = stdout(&pcegar(&["dot", &model("no_dtmc.mdp")]));
    let b = stdout(&pcegar(&["dot", &model("no_dtmc.mdp")]));
    assert_eq!(a, b);
    assert_eq!(a.matches("shape=point").count(), 2);
    let q = stdout(&pcegar(&["dot", &model("kripke.mdp"), "--partition", &model("kripke.part")]));
    assert!(q.contains("tooltip=\"q5 q6\""));
}
