//! End-to-end runs of the command-line pipeline on a miniature dataset:
//! synth → train → eval → cam, plus vote aggregation and the error paths.

use std::fs;
use std::path::Path;
use std::process::Command;

use daan::checkpoint::Checkpoint;
use daan::cli::{cmd_cam, cmd_eval, cmd_synth, cmd_train, cmd_votes};
use daan::config::ExperimentConfig;
use daan::trainer::Method;

/// A config file small enough for tests that still exercises every stage.
const TINY_CONFIG: &str = "\
batch_size = 4
total_steps = 8
checkpoint_every = 0
n_per_domain = 12
n_test_per_domain = 6
seed = 5
";

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.cfg");
    fs::write(&path, format!("{TINY_CONFIG}{extra}")).unwrap();
    path
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn synth_writes_schema_and_manifests_idempotently() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    cmd_synth(Some(&config), &out_a).unwrap();
    cmd_synth(Some(&config), &out_b).unwrap();

    for name in ["source_train", "target_train", "source_test", "target_test"] {
        let a = read(&out_a.join(format!("{name}.csv")));
        assert_eq!(a, read(&out_b.join(format!("{name}.csv"))), "{name} differs across reruns");
        assert!(!a.is_empty());
    }
    assert_eq!(read(&out_a.join("schema.txt")), read(&out_b.join("schema.txt")));

    // The unlabeled target manifest must keep its label columns empty.
    let target_train = String::from_utf8(read(&out_a.join("target_train.csv"))).unwrap();
    let row = target_train.lines().nth(1).unwrap();
    assert!(row.ends_with(",,,,,,,,"), "target train row should have 8 empty label cells: {row}");
    let source_train = String::from_utf8(read(&out_a.join("source_train.csv"))).unwrap();
    assert!(!source_train.lines().nth(1).unwrap().ends_with(','));

    // A referenced image decodes to the configured size.
    let image_rel = row.split(',').nth(1).unwrap();
    let img = image::open(out_a.join(image_rel)).unwrap();
    assert_eq!((img.width(), img.height()), (24, 24));
}

#[test]
fn train_eval_cam_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let data = dir.path().join("data");
    cmd_synth(Some(&config), &data).unwrap();

    let run = dir.path().join("run");
    cmd_train(Some(&config), Some("daan_lfa"), None, None, Some(&run)).unwrap();
    assert!(run.join("config.txt").exists());
    assert!(run.join("train_log.csv").exists());
    let ckpt_path = run.join("checkpoint_final.ckpt");
    let ckpt = Checkpoint::load(&ckpt_path).unwrap();
    assert_eq!(ckpt.step, 8);

    // The embedded config reproduces the run settings.
    let embedded = ExperimentConfig::parse(&ckpt.config_text, "embedded").unwrap();
    assert_eq!(embedded.train.method, Method::DaanLFA);
    assert_eq!(embedded.train.total_steps, 8);
    assert_eq!(embedded.synth.n_per_domain, 12);

    // Evaluation writes the same report twice and exits cleanly.
    let manifest = data.join("target_test.csv");
    let report_a = dir.path().join("report_a.csv");
    let report_b = dir.path().join("report_b.csv");
    cmd_eval(&ckpt_path, &manifest, Some(&report_a)).unwrap();
    cmd_eval(&ckpt_path, &manifest, Some(&report_b)).unwrap();
    assert_eq!(read(&report_a), read(&report_b));
    let report = String::from_utf8(read(&report_a)).unwrap();
    assert!(report.starts_with("attribute,tp,fp,tn,fn,acc,precision,recall,f1"));
    assert!(report.lines().last().unwrap().starts_with("MACRO,"));

    // Two ids × three classes → six deterministic overlays.
    let target_train = String::from_utf8(read(&data.join("target_train.csv"))).unwrap();
    let ids: Vec<&str> =
        target_train.lines().skip(1).take(2).map(|l| l.split(',').next().unwrap()).collect();
    let id_list = ids.join(",");
    let cams_a = dir.path().join("cams_a");
    let cams_b = dir.path().join("cams_b");
    let classes = "shape:circle,size:large,dot:dot";
    cmd_cam(&ckpt_path, &data.join("target_train.csv"), &id_list, classes, &cams_a).unwrap();
    cmd_cam(&ckpt_path, &data.join("target_train.csv"), &id_list, classes, &cams_b).unwrap();
    let mut names: Vec<String> = fs::read_dir(&cams_a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    assert!(names.contains(&format!("{}_shape_circle.png", ids[0])));
    assert!(names.contains(&format!("{}_dot_dot.png", ids[1])));
    for name in &names {
        assert_eq!(read(&cams_a.join(name)), read(&cams_b.join(name)), "{name} not reproducible");
    }
}

#[test]
fn eval_rejects_mismatched_manifest_without_partial_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let run = dir.path().join("run");
    cmd_train(Some(&config), Some("source_only"), None, None, Some(&run)).unwrap();

    // A manifest with a different attribute set must be rejected up front.
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "id,path,label_other\nx,images/x.png,1\n").unwrap();
    let report = dir.path().join("report.csv");
    let err = cmd_eval(&run.join("checkpoint_final.ckpt"), &bad, Some(&report)).unwrap_err();
    assert!(err.to_string().contains("header"), "unexpected error: {err:#}");
    assert!(!report.exists(), "no partial report may be written on the error path");
}

#[test]
fn cam_names_unknown_ids_and_lists_valid_classes() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let data = dir.path().join("data");
    cmd_synth(Some(&config), &data).unwrap();
    let run = dir.path().join("run");
    cmd_train(Some(&config), Some("daan_l"), None, None, Some(&run)).unwrap();
    let ckpt = run.join("checkpoint_final.ckpt");
    let manifest = data.join("target_test.csv");
    let out = dir.path().join("cams");

    let err = cmd_cam(&ckpt, &manifest, "target_02000", "shape:hexagon", &out).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("unknown class shape:hexagon"), "got: {msg}");
    assert!(msg.contains("shape:circle") && msg.contains("dot:dot"), "got: {msg}");

    let err = cmd_cam(&ckpt, &manifest, "nobody", "shape:circle", &out).unwrap_err();
    assert!(err.to_string().contains("nobody"), "got: {err:#}");

    let err = cmd_cam(&ckpt, &manifest, "target_02000", "circle", &out).unwrap_err();
    assert!(err.to_string().contains("not group:class"), "got: {err:#}");
}

#[test]
fn votes_command_aggregates_majorities_and_rejects_thin_ids() {
    let dir = tempfile::tempdir().unwrap();
    // 8 attribute bits per row (shape 3 + size 2 + stroke 2 + dot 1).
    let votes = dir.path().join("votes.csv");
    fs::write(
        &votes,
        "a,ann1,1,0,0,0,1,1,0,1\n\
         a,ann2,1,0,0,0,1,1,0,1\n\
         a,ann3,0,1,0,0,1,0,0,1\n\
         b,ann1,0,0,1,1,0,0,1,0\n\
         b,ann2,0,0,1,1,0,0,1,0\n\
         b,ann3,0,0,1,1,0,1,1,0\n\
         b,ann4,0,0,1,0,1,1,1,0\n",
    )
    .unwrap();
    let out = dir.path().join("labels.csv");
    cmd_votes(&votes, None, Some(&out)).unwrap();
    let text = String::from_utf8(read(&out)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,label_circle,label_square,label_triangle,label_small,label_large,label_thin,label_thick,label_dot");
    // a: 2/3 majorities keep the first two annotators' pattern.
    assert_eq!(lines[1], "a,1,0,0,0,1,1,0,1");
    // b: 4 votes; bit 4 (small) ties 2-2 → 0, bit 6 (thin) 2-2 → 0.
    assert_eq!(lines[2], "b,0,0,1,1,0,0,1,0");

    // Two votes for an id is below the aggregation threshold.
    fs::write(&votes, "c,ann1,1,0,0,0,1,1,0,1\nc,ann2,1,0,0,0,1,1,0,1\n").unwrap();
    let err = cmd_votes(&votes, None, Some(&out)).unwrap_err();
    assert!(err.to_string().contains('c'), "got: {err:#}");
}

#[test]
fn binary_exit_codes_and_streams() {
    let bin = env!("CARGO_BIN_EXE_daan");

    // No arguments: usage to stderr, exit code 2 (flag error).
    let out = Command::new(bin).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    // Unknown method: our error path, exit code 1, message on stderr.
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let out = Command::new(bin)
        .args(["train", "--config", config.to_str().unwrap(), "--method", "daan_xyz"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:"), "stderr: {stderr}");
    assert!(stderr.contains("daan_xyz"));
    assert!(out.stdout.is_empty());

    // Success: exit 0 and the aggregate on stdout when --out is omitted.
    let votes = dir.path().join("votes.csv");
    fs::write(&votes, "a,x,1,0,0,0,1,1,0,1\na,y,1,0,0,0,1,1,0,1\na,z,1,0,0,0,1,1,0,1\n").unwrap();
    let out = Command::new(bin).args(["votes", votes.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("a,1,0,0,0,1,1,0,1"));
}

#[test]
fn out_root_variable_anchors_relative_outputs() {
    let bin = env!("CARGO_BIN_EXE_daan");
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    let root = dir.path().join("root");
    fs::create_dir_all(&root).unwrap();

    let out = Command::new(bin)
        .args(["synth", "--config", config.to_str().unwrap(), "--out", "made_here"])
        .env("DAAN_OUT_ROOT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(root.join("made_here/schema.txt").exists());
    assert!(root.join("made_here/source_train.csv").exists());
}

#[test]
fn train_flag_overrides_reach_the_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "method = daan_lfa\n");
    let run = dir.path().join("run");
    cmd_train(Some(&config), Some("target_only"), Some("off"), Some(123), Some(&run)).unwrap();
    let ckpt = Checkpoint::load(run.join("checkpoint_final.ckpt")).unwrap();
    let embedded = ExperimentConfig::parse(&ckpt.config_text, "embedded").unwrap();
    assert_eq!(embedded.train.method, Method::TargetOnly);
    assert!(!embedded.train.multitask);
    assert_eq!(embedded.train.seed, 123);
    // Flat-head runs carry flat-head parameters.
    assert!(ckpt.tensor_names().any(|n| n == "param.head.flat.weight"));
}
