use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const RECIPE: &str = "\
# tiny recipe
seed = 7
source_classes = 6
target_classes = 6
items_per_class = 25
width = 3
height = 3
channels = 4
hidden = 8
feature_channels = 4
pretrain_epochs = 3
finetune_epochs = 4
episodes = 5
queries_per_class = 5
query_offset = 1.0
source_bank = source.dfb
target_bank = target.dfb
checkpoint = pre.ck
finetuned = ft.ck
report = report.json
report_csv = report.csv
histogram = hist.csv
";

fn dara(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dara"))
        .args(args)
        .current_dir(dir)
        .env_remove("DARA_WORKERS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = dara(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn recipe_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("recipe.cfg"), RECIPE).unwrap();
    dir
}

fn run_recipe(dir: &Path) {
    for cmd in ["synth", "pretrain", "finetune", "eval", "hist"] {
        ok(dir, &[cmd, "-c", "recipe.cfg"]);
    }
}

#[test]
fn full_recipe_is_byte_reproducible() {
    let a = recipe_dir();
    let b = recipe_dir();
    run_recipe(a.path());
    run_recipe(b.path());
    for f in ["source.dfb", "target.dfb", "pre.ck", "ft.ck", "report.json", "report.csv", "hist.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["episodes"], 5);
    assert_eq!(report["config_digest"].as_str().unwrap().len(), 64);
    let hist = fs::read_to_string(a.path().join("hist.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some(dara::pipeline::HIST_HEADER));
    assert_eq!(hist.lines().count(), 1 + 2 * 5 * 5 * 5);
}

#[test]
fn workers_do_not_change_the_report() {
    let dir = recipe_dir();
    run_recipe(dir.path());
    let one = fs::read(dir.path().join("report.json")).unwrap();
    ok(dir.path(), &["eval", "-c", "recipe.cfg", "-s", "workers=4"]);
    assert_eq!(fs::read(dir.path().join("report.json")).unwrap(), one);
    let out = Command::new(env!("CARGO_BIN_EXE_dara"))
        .args(["eval", "-c", "recipe.cfg"])
        .current_dir(dir.path())
        .env("DARA_WORKERS", "3")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("report.json")).unwrap(), one);
}

#[test]
fn overrides_win_and_reach_the_digest() {
    let dir = recipe_dir();
    run_recipe(dir.path());
    let read = |p: &Path| -> serde_json::Value { serde_json::from_slice(&fs::read(p).unwrap()).unwrap() };
    let base = read(&dir.path().join("report.json"));
    ok(dir.path(), &["eval", "-c", "recipe.cfg", "-s", "episodes=3", "-s", "report=r3.json"]);
    let over = read(&dir.path().join("r3.json"));
    assert_eq!(over["episodes"], 3);
    assert_ne!(over["config_digest"], base["config_digest"]);
}

#[test]
fn inspect_echoes_synth_config() {
    let dir = recipe_dir();
    ok(dir.path(), &["synth", "-c", "recipe.cfg"]);
    let text = ok(dir.path(), &["inspect", "target.dfb"]);
    for line in ["magic: DARAFB01", "num_items: 150", "width: 3", "height: 3", "channels: 4", "class_count: 6"] {
        assert!(text.contains(line), "missing `{line}` in\n{text}");
    }
    ok(dir.path(), &["pretrain", "-c", "recipe.cfg"]);
    let text = ok(dir.path(), &["inspect", "pre.ck"]);
    assert!(text.contains("magic: DARACK01"));
    assert!(text.contains("in_channels: 4"));
    assert!(text.contains("base_prototypes: 6"));
}

#[test]
fn exit_codes() {
    let dir = recipe_dir();
    // missing bank: config error naming the key
    let out = dara(dir.path(), &["eval", "-c", "recipe.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint") || String::from_utf8_lossy(&out.stderr).contains("target_bank"));

    ok(dir.path(), &["synth", "-c", "recipe.cfg"]);
    ok(dir.path(), &["pretrain", "-c", "recipe.cfg"]);
    let out = dara(dir.path(), &["eval", "-c", "recipe.cfg", "-s", "target_bank=nope.dfb"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("target_bank"));

    let out = dara(dir.path(), &["eval", "-c", "recipe.cfg", "-s", "bogus_key=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let out = dara(dir.path(), &["eval", "-c", "recipe.cfg", "-s", "beta=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("beta"));

    fs::write(dir.path().join("junk.ck"), b"NOTMAGIC........").unwrap();
    let out = dara(dir.path(), &["inspect", "junk.ck"]);
    assert_eq!(out.status.code(), Some(1));

    let out = dara(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn commands_write_only_declared_outputs() {
    let dir = recipe_dir();
    run_recipe(dir.path());
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        ["ft.ck", "hist.csv", "pre.ck", "recipe.cfg", "report.csv", "report.json", "source.dfb", "target.dfb"]
    );
}
