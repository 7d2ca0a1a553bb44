//! Acceptance criterion 9: every CLI subcommand, re-run with identical
//! config and seeds, produces byte-identical output files. Each subcommand
//! is run twice into separate directories and every produced file is
//! hashed and compared.

use std::collections::BTreeMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::process::Command;

const CONFIG_TEMPLATE: &str = "\
dataset = toy:0
algorithm = fair
attack = {ATTACK}
metric = balance
fractions = 0.0, 0.3
seeds = 2
k = 2
budget = 64
output_dir = {DIR}
";

fn run(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_fairkit"))
        .args(args)
        .current_dir(dir)
        .status()
        .expect("spawn fairkit");
    assert!(status.success(), "fairkit {args:?} failed in {dir:?}");
}

/// Hash of every regular file under `dir`, keyed by relative path.
fn hash_tree(dir: &Path) -> BTreeMap<String, u64> {
    fn walk(root: &Path, current: &Path, out: &mut BTreeMap<String, u64>) {
        for entry in std::fs::read_dir(current).expect("readable dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let bytes = std::fs::read(&path).expect("readable file");
                let mut hasher = DefaultHasher::new();
                bytes.hash(&mut hasher);
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hasher.finish());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn exercise_all_subcommands(dir: &Path) {
    run(dir, &["gen-toy", "--seed", "0", "--out", "data.csv", "--split-out", "split.json"]);
    for algorithm in ["fair", "kmeans", "kmedian"] {
        run(
            dir,
            &[
                "cluster", "--data", "data.csv", "--algorithm", algorithm, "--k", "2",
                "--seed", "0", "--out", &format!("cluster_{algorithm}.json"),
            ],
        );
    }
    for kind in ["optimized", "random"] {
        run(
            dir,
            &[
                "attack", "--data", "data.csv", "--split", "split.json", "--kind", kind,
                "--metric", "balance", "--k", "2", "--seed", "0", "--budget", "64",
                "--out", &format!("attack_{kind}.json"),
            ],
        );
    }
    run(
        dir,
        &[
            "defend", "--data", "data.csv", "--k", "2", "--seed", "0", "--partitions", "20",
            "--epochs", "60", "--hidden", "8", "--embed", "4", "--beta", "1.0",
            "--dropout", "0.1", "--out", "defend.json", "--checkpoint", "model.bin",
            "--coassoc", "coassoc.bin",
        ],
    );
    for attack in ["optimized", "random"] {
        let config = CONFIG_TEMPLATE
            .replace("{ATTACK}", attack)
            .replace("{DIR}", &format!("exp_{attack}"));
        let config_path = format!("config_{attack}.txt");
        std::fs::write(dir.join(&config_path), config).expect("write config");
        run(dir, &["experiment", "--config", &config_path]);
    }
    run(
        dir,
        &[
            "compare", "--ours", "exp_optimized/report.json",
            "--random", "exp_random/report.json", "--out", "compare.json",
        ],
    );
    run(
        dir,
        &[
            "diagnose", "--data", "data.csv", "--split", "split.json",
            "--assignment", "attack_optimized.json", "--k", "2", "--seed", "0",
            "--partitions", "20", "--bins", "10", "--out", "diagnose.json",
        ],
    );
}

#[test]
fn acceptance_9_cli_determinism() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    exercise_all_subcommands(first.path());
    exercise_all_subcommands(second.path());
    let first_hashes = hash_tree(first.path());
    let second_hashes = hash_tree(second.path());
    let mismatches: Vec<&String> = first_hashes
        .iter()
        .filter(|(path, hash)| second_hashes.get(*path) != Some(hash))
        .map(|(path, _)| path)
        .collect();
    let ok = first_hashes == second_hashes && !first_hashes.is_empty();
    println!(
        "acceptance 9 (cli determinism): {} — {} files compared, mismatches: {mismatches:?}",
        if ok { "pass" } else { "FAIL" },
        first_hashes.len(),
    );
    assert!(ok, "acceptance 9 (cli determinism) failed: {mismatches:?}");
}
