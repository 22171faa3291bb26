//! End-to-end runs of the `nnlogic` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use nnlogic::cost::{estimate_area, CostModel};
use nnlogic::netlist::Netlist;
use nnlogic::qmodel::load_model;

const CONFIG: &str = r#"
stages = ["train", "hat", "compile", "verify", "report"]

[synthetic]
samples = 600

[train]
epochs = 8
learning_rate = 0.01

[train.hat]
epochs = 2

[compile]
pipeline_stages = 1

[report]
max_stages = 2
power_cycles = 64
"#;

fn nnlogic(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_nnlogic"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("nnlogic.toml"), config).unwrap();
    dir
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn full_pipeline_writes_consistent_outputs() {
    let dir = setup(CONFIG);
    let (code, stdout, stderr) = nnlogic(dir.path(), &["run", "--config", "nnlogic.toml", "--out-dir", "a"]);
    assert_eq!(code, 0, "{stdout}\n{stderr}");
    let a = dir.path().join("a");

    let model = load_model(a.join("model.json")).unwrap();
    assert_eq!(model.arch(), vec![8, 16, 4]);
    let hat = load_model(a.join("hat_model.json")).unwrap();

    let sel: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("selected_weights.json")).unwrap()).unwrap();
    let set: Vec<i64> = sel["set"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect();
    assert!(set.windows(2).all(|w| w[0] < w[1]), "sorted and duplicate-free");
    assert!(set.contains(&0));
    for w in hat.layers.iter().flat_map(|l| l.weights.iter().flatten()) {
        assert!(set.contains(&(*w as i64)));
    }
    let sizes: Vec<usize> = csv_rows(&a.join("hat_log.csv")).iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(sizes[0], 40);
    let mut distinct = sizes.clone();
    distinct.dedup();
    assert!(distinct.iter().enumerate().all(|(i, &s)| s == 40 + 10 * i));
    assert_eq!(distinct.last().copied(), Some(set.len()));

    let train_log = csv_rows(&a.join("train_log.csv"));
    assert_eq!(train_log.len(), 8);

    let stats: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("stats.json")).unwrap()).unwrap();
    let n = Netlist::load(a.join("netlist.json")).unwrap();
    assert_eq!(stats["area"].as_u64().unwrap(), estimate_area(&n, &CostModel::default()));
    assert!(stats["period"].as_u64() <= stats["staged_period"].as_u64());
    assert_eq!(stats["latency"].as_u64().unwrap(), 4);
    let verilog = fs::read_to_string(a.join("netlist.v")).unwrap();
    assert!(verilog.starts_with("module nnlogic_qat ("));

    let areas = csv_rows(&a.join("weight_areas.csv"));
    assert_eq!(areas.len(), 256);
    let explore = csv_rows(&a.join("stage_exploration.csv"));
    let periods: Vec<u32> = explore.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(periods.len(), 3);
    assert!(periods.windows(2).all(|w| w[1] <= w[0]));
    let cmp = csv_rows(&a.join("comparison.csv"));
    let area = |build: &str| -> u64 { cmp.iter().find(|r| r[0] == build).unwrap()[1].parse().unwrap() };
    assert!(area("embedded") < area("baseline"));
    assert!(cmp.iter().any(|r| r[0] == "hat"));

    // same seed, same bytes
    let (code, ..) = nnlogic(dir.path(), &["run", "--config", "nnlogic.toml", "--out-dir", "b", "--jobs", "2"]);
    assert_eq!(code, 0);
    for entry in fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between runs");
    }
}

#[test]
fn missing_dataset_is_a_config_error() {
    let dir = setup("[paths]\ndataset = \"nowhere.csv\"\n");
    let (code, _, stderr) = nnlogic(dir.path(), &["train", "--config", "nnlogic.toml"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("paths.dataset"), "{stderr}");
}

#[test]
fn bad_configs_and_arguments_exit_with_2() {
    let dir = setup("stages = [\"verify\", \"train\"]\n");
    assert_eq!(nnlogic(dir.path(), &["run", "--config", "nnlogic.toml"]).0, 2);
    assert_eq!(nnlogic(dir.path(), &["run", "--config", "missing.toml"]).0, 2);
    assert_eq!(nnlogic(dir.path(), &["frobnicate"]).0, 2);
    assert_eq!(nnlogic(dir.path(), &["run", "--stages", "train,bogus"]).0, 2);
    // compile before train
    let (code, _, stderr) = nnlogic(dir.path(), &["compile", "--out-dir", "empty"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("run `train` first"), "{stderr}");
}

#[test]
fn dataset_csv_drives_training() {
    let mut text = String::from("a,b,label\n");
    for i in 0..200i32 {
        let (a, b) = ((i * 37) % 255 - 127, (i * 91) % 255 - 127);
        text.push_str(&format!("{a},{b},{}\n", (a + b > 0) as u8));
    }
    let dir = setup("arch = [2, 4, 2]\n[paths]\ndataset = \"data.csv\"\n[train]\nepochs = 5\nlearning_rate = 0.01\n");
    fs::write(dir.path().join("data.csv"), text).unwrap();
    let (code, out, err) = nnlogic(
        dir.path(),
        &["run", "--config", "nnlogic.toml", "--stages", "train,compile,verify", "--seed", "3"],
    );
    assert_eq!(code, 0, "{out}\n{err}");
    assert!(out.contains("equivalent"));
    assert_eq!(load_model(dir.path().join("out/model.json")).unwrap().arch(), vec![2, 4, 2]);
}

#[test]
fn verification_catches_tampering() {
    let dir = setup("[synthetic]\nsamples = 300\n[train]\nepochs = 2\n");
    let cfg = ["--config", "nnlogic.toml"];
    for stage in ["train", "compile", "verify"] {
        let (code, out, err) = nnlogic(dir.path(), &[&[stage][..], &cfg[..]].concat());
        assert_eq!(code, 0, "{stage}: {out}\n{err}");
    }
    let path = dir.path().join("out/netlist.json");
    let good = fs::read_to_string(&path).unwrap();

    // one gate flipped
    fs::write(&path, good.replacen("\"kind\":\"XOR2\"", "\"kind\":\"XNOR2\"", 1)).unwrap();
    let (code, out, _) = nnlogic(dir.path(), &[&["verify"][..], &cfg[..]].concat());
    assert_eq!(code, 1);
    assert!(out.contains("cycle"), "counterexample is printed: {out}");

    // latency off by one
    let lat = good.find("\"latency\":").unwrap();
    let digits: String = good[lat + 10..].chars().take_while(|c| c.is_ascii_digit()).collect();
    let wrong = format!("\"latency\":{}", digits.parse::<u32>().unwrap() + 1);
    fs::write(&path, good.replacen(&format!("\"latency\":{digits}"), &wrong, 1)).unwrap();
    assert_eq!(nnlogic(dir.path(), &[&["verify"][..], &cfg[..]].concat()).0, 1);

    fs::write(&path, &good).unwrap();
    assert_eq!(nnlogic(dir.path(), &[&["verify"][..], &cfg[..]].concat()).0, 0);
}

#[test]
fn single_table_commands() {
    let dir = setup("");
    let (code, ..) = nnlogic(dir.path(), &["rank-weights", "--out-dir", "t"]);
    assert_eq!(code, 0);
    let rows = csv_rows(&dir.path().join("t/weight_areas.csv"));
    assert_eq!(rows.len(), 256);
    assert_eq!(rows[0], vec!["0", "0", "0"]);
    // exploration needs a model
    assert_eq!(nnlogic(dir.path(), &["explore-stages", "--out-dir", "t"]).0, 2);
}

#[test]
fn sample_config_in_the_repository_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../nnlogic.example.toml");
    let cfg = nnlogic::cli::PipelineConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.arch, Some(vec![8, 16, 4]));
    assert_eq!(cfg.compile.source, nnlogic::cli::ModelSource::Hat);
}
