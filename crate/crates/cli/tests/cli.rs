use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn boxfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boxfuse"))
        .args(args)
        .env_remove("BOXFUSE_THREADS")
        .output()
        .expect("spawn boxfuse")
}

fn ok(args: &[&str]) -> String {
    let out = boxfuse(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn softnms_matches_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b.csv");
    ok(&["softnms", "--in", p(&fixture("preds.csv")), "--out", p(&out), "--sigma", "0.5"]);
    assert_eq!(read(&out), read(&fixture("softnms_golden.csv")));
}

#[test]
fn nms_matches_golden() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b.csv");
    ok(&["nms", "--in", p(&fixture("preds.csv")), "--out", p(&out), "--iou", "0.5"]);
    assert_eq!(read(&out), read(&fixture("nms_golden.csv")));
}

#[test]
fn zero_sigma_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out =
        boxfuse(&["softnms", "--in", p(&fixture("preds.csv")), "--out", p(&dir.path().join("b.csv")), "--sigma", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sigma must be > 0"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
    assert!(!dir.path().join("b.csv").exists());
}

#[test]
fn empty_input_gives_empty_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("b.csv");
    ok(&["softnms", "--in", p(&fixture("empty.csv")), "--out", p(&out)]);
    assert_eq!(read(&out), "image_id,label,score,xmin,ymin,xmax,ymax\n");
}

#[test]
fn malformed_row_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = boxfuse(&["nms", "--in", p(&fixture("bad_score.csv")), "--out", p(&dir.path().join("b.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:") && err.contains("score"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let out = boxfuse(&["nms", "--in", p(&dir.path().join("nope.csv")), "--out", p(&dir.path().join("b.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_flag_values_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    let o = dir.path().join("b.csv");
    let input = fixture("preds.csv");
    for args in [
        vec!["nms", "--in", p(&input), "--out", p(&o), "--iou", "0"],
        vec!["nms", "--in", p(&input), "--out", p(&o), "--iou", "half"],
        vec!["ensemble", "--in", p(&input), "--out", p(&o), "--k", "0"],
        vec!["eval", "--pred", p(&input), "--gt", p(&input), "--iou", "1.5"],
        vec!["simulate", "--out-dir", p(dir.path())],
        vec!["--threads", "0", "nms", "--in", p(&input), "--out", p(&o)],
    ] {
        assert_eq!(boxfuse(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn k1_score_voting_returns_hard_nms_input_unchanged() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.csv");
    let input = fixture("hard_nms_input.csv");
    ok(&["ensemble", "--in", p(&input), "--out", p(&out), "--k", "1", "--mode", "score", "--iou", "0.5"]);
    assert_eq!(read(&out), read(&input));
}

#[test]
fn two_identical_inputs_fuse_to_one() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.csv");
    let input = fixture("hard_nms_input.csv");
    ok(&["ensemble", "--in", p(&input), "--in", p(&input), "--out", p(&out), "--k", "2"]);
    assert_eq!(read(&out), read(&input));
}

#[test]
fn three_models_match_golden() {
    let dir = TempDir::new().unwrap();
    let (out, sub) = (dir.path().join("f.csv"), dir.path().join("s.csv"));
    let models: Vec<PathBuf> = ["a", "b", "c"].iter().map(|m| fixture(&format!("model_{m}.csv"))).collect();
    ok(&[
        "ensemble",
        "--in",
        p(&models[0]),
        "--in",
        p(&models[1]),
        "--in",
        p(&models[2]),
        "--out",
        p(&out),
        "--submission",
        p(&sub),
    ]);
    assert_eq!(read(&out), read(&fixture("fused_golden.csv")));
    assert_eq!(read(&sub), read(&fixture("fused_submission_golden.csv")));
}

fn last_line(s: &str) -> &str {
    s.trim_end().lines().last().unwrap()
}

#[test]
fn perfect_predictions_score_one() {
    let out = ok(&["eval", "--pred", p(&fixture("perfect.csv")), "--gt", p(&fixture("ground_truth.csv"))]);
    assert_eq!(last_line(&out), "mAP=1.000000");
}

#[test]
fn hand_worked_ap_fixture() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.csv");
    let out = ok(&[
        "eval",
        "--pred",
        p(&fixture("ap_predictions.csv")),
        "--gt",
        p(&fixture("ap_ground_truth.csv")),
        "--out",
        p(&report),
    ]);
    assert_eq!(last_line(&out), "mAP=0.833333");
    assert_eq!(read(&report), "label,ap,tp,fp,fn,gt_count\nCar,0.833333,2,1,0,2\n__mAP__,0.833333,,,,\n");
}

#[test]
fn disjoint_label_vocabularies_score_zero_with_a_warning() {
    let out = boxfuse(&["eval", "--pred", p(&fixture("foreign_labels.csv")), "--gt", p(&fixture("ground_truth.csv"))]);
    assert!(out.status.success());
    assert_eq!(last_line(&String::from_utf8_lossy(&out.stdout)), "mAP=0.000000");
    assert!(String::from_utf8_lossy(&out.stderr).contains("Zebra"));
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        ok(&["simulate", "--seed", "5", "--images", "40", "--num-seeds", "2", "--out-dir", p(d.path())]);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert_eq!(ta.len(), 8);
    assert_eq!(ta, tb);
}

fn ablation(dir: &Path) -> Vec<(String, f64)> {
    read(&dir.join("ablation.csv"))
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn noiseless_simulation_scores_one_everywhere() {
    let dir = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "3", "--jitter", "0", "--miss", "0", "--fp", "0", "--out-dir", p(dir.path())]);
    let text = read(&dir.path().join("ablation.csv"));
    assert_eq!(text.lines().count(), 7);
    for line in text.lines().skip(1) {
        assert!(line.contains(",1.000000,"), "{line}");
    }
}

#[test]
fn default_simulation_seed_42_voting_beats_soft_nms() {
    let dir = TempDir::new().unwrap();
    ok(&["simulate", "--seed", "42", "--out-dir", p(dir.path())]);
    let rows = ablation(dir.path());
    let get = |m: &str| rows.iter().find(|(n, _)| n == m).unwrap().1;
    assert!(get("topk-score-location") >= get("soft-nms"), "{rows:?}");
}

/// Option entries of a help page: the flag line plus its description.
fn help_entries(help: &str) -> Vec<(String, String)> {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut in_options = false;
    for line in help.lines() {
        if line.starts_with("Options:") {
            in_options = true;
            continue;
        }
        if !in_options {
            continue;
        }
        let t = line.trim_start();
        if t.starts_with('-') && line.len() - t.len() <= 6 {
            entries.push((t.to_string(), String::new()));
        } else if let Some(last) = entries.last_mut() {
            last.1.push_str(t);
            last.1.push(' ');
        }
    }
    entries
}

#[test]
fn help_documents_every_flag() {
    // value flags without a default: required inputs or optional outputs
    let no_default = ["--in", "--out", "--pred", "--gt", "--seed", "--out-dir", "--submission", "--threads"];
    for sub in ["nms", "softnms", "ensemble", "eval", "simulate"] {
        let help = ok(&[sub, "--help"]);
        let entries = help_entries(&help);
        assert!(entries.len() > 3, "{sub}: {help}");
        for (flag, desc) in entries {
            let full = format!("{flag} {desc}");
            let long = flag.split_whitespace().find(|w| w.starts_with("--")).unwrap().trim_end_matches(',');
            assert!(!desc.trim().is_empty() || flag.contains("  "), "{sub} {long} is undocumented");
            let takes_value = flag.contains('<');
            if takes_value && !no_default.contains(&long) {
                assert!(full.contains("[default:"), "{sub} {long} has no default in help");
            }
        }
    }
}
