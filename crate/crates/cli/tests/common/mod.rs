#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny")
}

/// Runs `ppr` with `args`; the data-root variable is cleared so runs do not
/// depend on the caller's environment.
pub fn ppr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppr"))
        .args(args)
        .env_remove("PPR_DATA_ROOT")
        .output()
        .expect("ppr runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = ppr(args);
    assert!(
        out.status.success(),
        "ppr {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub const SMALL_MLP: &str = r#"
[model]
dropout = 0.1
[model.architecture]
family = "mlp"
layers = 1
hidden_dim = 8

[train]
learning_rate = 0.001
epochs = 6
batch_size = 2
"#;

/// build → split → train (MLP and baseline) → eval → analyze → report on the
/// bundled fixture, all under `root`.
pub fn pipeline(root: &Path, seed: u64) {
    let fx = fixture();
    let seed = seed.to_string();
    let dataset = root.join("build/dataset.json");
    let split = root.join("split/split.json");
    std::fs::create_dir_all(root).unwrap();
    let config = root.join("mlp.toml");
    std::fs::write(&config, SMALL_MLP).unwrap();
    ok(&[
        "build",
        "--lexicon",
        s(&fx.join("lexicon.csv")),
        "--index",
        s(&fx.join("index.csv")),
        "--keypoints",
        s(&fx),
        "--out",
        s(&root.join("build")),
    ]);
    ok(&[
        "split", "--dataset", s(&dataset), "--property", "movement", "--mode", "phoneme", "--seed", &seed, "--out",
        s(&root.join("split")),
    ]);
    ok(&[
        "train", "--dataset", s(&dataset), "--split", s(&split), "--config", s(&config), "--seed", &seed, "--final-fit",
        "--out", s(&root.join("mlp")),
    ]);
    ok(&[
        "train", "--dataset", s(&dataset), "--split", s(&split), "--family", "baseline", "--seed", &seed, "--out",
        s(&root.join("baseline")),
    ]);
    for name in ["mlp", "baseline"] {
        ok(&[
            "eval", "--dataset", s(&dataset), "--split", s(&split), "--model", s(&root.join(name).join("model.ckpt")),
            "--out", s(&root.join(format!("eval_{name}"))),
        ]);
    }
    let reports = [root.join("eval_mlp/report.json"), root.join("eval_baseline/report.json")];
    ok(&["analyze", "--reports", s(&reports[0]), s(&reports[1]), "--out", s(&root.join("analyze"))]);
    ok(&["report", "--reports", s(&reports[0]), s(&reports[1]), "--out", s(&root.join("report"))]);
}

/// Every artifact under `root` except the timestamped sidecar logs and lock
/// files, keyed by relative path.
pub fn artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(base: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(base, &path, out);
                continue;
            }
            let name = path.file_name().unwrap().to_str().unwrap();
            if name == "ppr.log" || name == ".ppr.lock" {
                continue;
            }
            let rel = path.strip_prefix(base).unwrap().to_str().unwrap().to_string();
            out.insert(rel, std::fs::read(&path).unwrap());
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}
