use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmvae_lab::csvio::Table;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmvae-lab"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    /// 60 trajectories and a briefly trained model.
    fn trained() -> Self {
        let ws = Self { dir: tempfile::tempdir().unwrap() };
        fs::write(
            ws.path("cfg.toml"),
            "[dataset]\nn_samples = 60\n[model]\nhidden_dims = [8]\ndecoder_var = 1e-3\n[training]\nepochs = 40\nbatch_size = 16\nlr = 1e-2\n",
        )
        .unwrap();
        ok(ws.root(), &["generate", "--config", "cfg.toml", "--out", "data.csv"]);
        ok(ws.root(), &["train", "--config", "cfg.toml", "--data", "data.csv", "--out", "run"]);
        ws
    }

    fn root(&self) -> &Path {
        self.dir.path()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn generate_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let s = ok(d, &["generate", "--n-samples", "10", "--seed", "4", "--out", "a.csv"]);
    assert!(s.contains("8/1/1"), "{s}");
    ok(d, &["generate", "--n-samples", "10", "--seed", "4", "--out", "b.csv"]);
    ok(d, &["generate", "--n-samples", "10", "--seed", "5", "--out", "c.csv"]);
    let a = fs::read(d.join("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.join("b.csv")).unwrap());
    assert_ne!(a, fs::read(d.join("c.csv")).unwrap());
    let t = Table::read(&d.join("a.csv")).unwrap();
    assert_eq!(t.len(), 10);
}

#[test]
fn invalid_input_exits_1_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "[training]\nbatch_size = 0\n").unwrap();
    let out = run(d, &["generate", "--config", "bad.toml", "--out", "x.csv"]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("x.csv").exists());

    fs::write(d.join("typo.toml"), "[dataset]\nn_sample = 5\n").unwrap();
    assert_eq!(code(&run(d, &["generate", "--config", "typo.toml", "--out", "x.csv"])), 1);

    let out = run(d, &["train", "--data", "missing.csv", "--out", "run"]);
    assert_eq!(code(&out), 1);
    assert!(!d.join("run").exists());

    assert_eq!(code(&run(d, &["generate"])), 1, "missing --out is a usage error");
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_empty_history() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--n-samples", "20", "--out", "data.csv"]);
    let s = ok(d, &["train", "--data", "data.csv", "--epochs", "0", "--out", "run"]);
    assert!(s.contains("checkpoint sha256"));
    let h = Table::read(&d.join("run/history.csv")).unwrap();
    assert!(h.is_empty());
    assert!(h.has("pi_2"));
    let e = Table::read(&d.join("run/embeddings.csv")).unwrap();
    assert_eq!(e.len(), 20);
    for col in ["sample_id", "split", "mu_1", "mu_2", "var_1", "var_2", "gamma_1", "gamma_2", "hard_label", "true_label"] {
        assert!(e.has(col), "missing {col}");
    }
}

#[test]
fn training_pipeline_is_reproducible() {
    let a = Workspace::trained();
    let b = Workspace::trained();
    for f in ["run/checkpoint.json", "run/history.csv", "run/embeddings.csv"] {
        assert_eq!(fs::read(a.path(f)).unwrap(), fs::read(b.path(f)).unwrap(), "{f} differs");
    }
    let h = Table::read(&a.path("run/history.csv")).unwrap();
    assert_eq!(h.len(), 40);

    // embed reproduces the training-time export
    ok(a.root(), &["embed", "--checkpoint", "run/checkpoint.json", "--data", "data.csv", "--out", "emb.csv"]);
    assert_eq!(fs::read(a.path("emb.csv")).unwrap(), fs::read(a.path("run/embeddings.csv")).unwrap());
}

#[test]
fn sampling_surface() {
    let ws = Workspace::trained();
    let d = ws.root();
    ok(d, &["sample", "--checkpoint", "run/checkpoint.json", "--count", "0", "--out", "none.csv"]);
    let t = Table::read(&ws.path("none.csv")).unwrap();
    assert!(t.is_empty());
    assert_eq!(t.header.first().map(String::as_str), Some("sample_id"));
    assert_eq!(t.header.last().map(String::as_str), Some("cluster"));
    assert!(t.has("rho_49"));

    ok(d, &["sample", "--checkpoint", "run/checkpoint.json", "--count", "7", "--cluster", "1", "--out", "c1.csv"]);
    let t = Table::read(&ws.path("c1.csv")).unwrap();
    assert_eq!(t.len(), 7);
    assert!(t.f64_column("cluster").unwrap().iter().all(|&c| c == 1.0));

    let out = run(d, &["sample", "--checkpoint", "run/checkpoint.json", "--cluster", "2", "--out", "bad.csv"]);
    assert_eq!(code(&out), 1);
    assert!(!ws.path("bad.csv").exists());
}

#[test]
fn metric_surface() {
    let ws = Workspace::trained();
    let d = ws.root();
    // constant quantity column
    let data = fs::read_to_string(ws.path("data.csv")).unwrap();
    let mut lines = data.lines();
    let mut q = String::from("sample_id,const,alpha\n");
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let ai = header.iter().position(|h| *h == "alpha").unwrap();
    for (i, line) in lines.enumerate() {
        let alpha = line.split(',').nth(ai).unwrap();
        q.push_str(&format!("{i},2.5,{alpha}\n"));
    }
    fs::write(ws.path("q.csv"), q).unwrap();

    ok(d, &["metric", "--embeddings", "run/embeddings.csv", "--quantities", "q.csv", "--columns", "const,alpha", "--k", "5", "--out", "m.csv"]);
    let t = Table::read(&ws.path("m.csv")).unwrap();
    assert_eq!(t.header, ["quantity", "k", "r", "eta", "n_components"]);
    let eta = t.f64_column("eta").unwrap();
    // constant signal: η = 1 only on a connected graph; otherwise all zero modes count
    let comps = t.f64_column("n_components").unwrap();
    if comps[0] == 1.0 {
        assert!((eta[0] - 1.0).abs() < 1e-12);
    }

    ok(d, &["metric", "--embeddings", "run/embeddings.csv", "--quantities", "data.csv", "--k", "5", "--r", "100", "--random-control", "--spectrum", "spec.csv", "--out", "m100.csv"]);
    let t = Table::read(&ws.path("m100.csv")).unwrap();
    assert_eq!(t.len(), 8);
    assert!(t.f64_column("eta").unwrap().iter().all(|e| (e - 1.0).abs() < 1e-12));
    let spec = Table::read(&ws.path("spec.csv")).unwrap();
    assert_eq!(spec.len(), 4 * 60);

    // ids that do not join
    fs::write(ws.path("short.csv"), "sample_id,alpha\n0,1.0\n1,2.0\n").unwrap();
    let out = run(d, &["metric", "--embeddings", "run/embeddings.csv", "--quantities", "short.csv", "--columns", "alpha", "--out", "bad.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample_id 2"));
    assert!(!ws.path("bad.csv").exists());
}

#[test]
fn baseline_surface() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // three collinear "trajectories": x, 2x, 4x
    let steps = 5;
    let mut csv = String::from("sample_id");
    for t in 0..steps {
        csv.push_str(&format!(",rho_{t}"));
    }
    csv.push('\n');
    for (i, s) in [1.0, 2.0, 4.0].iter().enumerate() {
        csv.push_str(&i.to_string());
        for t in 0..steps {
            csv.push_str(&format!(",{}", s * (t as f64 + 1.0) / 10.0));
        }
        csv.push('\n');
    }
    fs::write(d.join("line.csv"), csv).unwrap();
    let s = ok(d, &["baseline", "--method", "mds", "--data", "line.csv", "--out", "mds.csv"]);
    assert!(s.contains("stress"));
    let t = Table::read(&d.join("mds.csv")).unwrap();
    assert!(!t.has("gamma_1"));
    assert!(t.f64_column("mu_2").unwrap().iter().all(|v| v.abs() < 1e-6));

    ok(d, &["baseline", "--method", "isomap", "--k", "2", "--data", "line.csv", "--out", "iso.csv"]);
    let a = Table::read(&d.join("mds.csv")).unwrap().f64_column("mu_1").unwrap();
    let b = Table::read(&d.join("iso.csv")).unwrap().f64_column("mu_1").unwrap();
    let same = a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9);
    let flipped = a.iter().zip(&b).all(|(x, y)| (x + y).abs() < 1e-9);
    assert!(same || flipped, "{a:?} vs {b:?}");

    ok(d, &["baseline", "--method", "mds", "--data", "line.csv", "--out", "mds2.csv"]);
    assert_eq!(fs::read(d.join("mds.csv")).unwrap(), fs::read(d.join("mds2.csv")).unwrap());
}

#[test]
fn isomap_on_disconnected_graph_reports_components() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("p.csv"), "sample_id,mu_1\n0,0\n1,1\n2,2\n3,50\n4,51\n").unwrap();
    let out = run(d, &["baseline", "--method", "isomap", "--k", "1", "--data", "p.csv", "--out", "iso.csv"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("component sizes"));
}

#[test]
fn align_surface() {
    let ws = Workspace::trained();
    let d = ws.root();
    // parameters equal to the embedding itself
    let e = Table::read(&ws.path("run/embeddings.csv")).unwrap();
    let (m1, m2) = (e.f64_column("mu_1").unwrap(), e.f64_column("mu_2").unwrap());
    let mut same = String::from("sample_id,p1,p2\n");
    let mut shuffled = same.clone();
    for i in 0..m1.len() {
        same.push_str(&format!("{i},{:e},{:e}\n", m1[i], m2[i]));
        let j = (i * 7 + 3) % m1.len();
        shuffled.push_str(&format!("{i},{:e},{:e}\n", m1[j], m2[j]));
    }
    fs::write(ws.path("same.csv"), same).unwrap();
    fs::write(ws.path("shuf.csv"), shuffled).unwrap();
    ok(d, &["align", "--embeddings", "run/embeddings.csv", "--params", "same.csv", "--columns", "p1,p2", "--out", "al_same"]);
    ok(d, &["align", "--embeddings", "run/embeddings.csv", "--params", "shuf.csv", "--columns", "p1,p2", "--out", "al_shuf"]);
    let read = |dir: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(ws.path(dir).join("fit.json")).unwrap()).unwrap()
    };
    let same = read("al_same");
    let shuf = read("al_shuf");
    let rms = |v: &serde_json::Value| v["fit"]["residual_rms"].as_f64().unwrap();
    assert!(rms(&same) < 1e-12);
    assert!(rms(&shuf) > rms(&same));
    let m = &same["m"];
    assert!((m[0][0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(m[0][1].as_f64().unwrap().abs() < 1e-9);
    let t = Table::read(&ws.path("al_same/transformed.csv")).unwrap();
    assert!(t.has("pred_p2"));

    ok(d, &["align", "--embeddings", "run/embeddings.csv", "--params", "data.csv", "--out", "al_xi"]);
    let xi = read("al_xi");
    assert_eq!(xi["fit"]["r_squared"].as_array().unwrap().len(), 2);
}

#[test]
fn rank_deficient_alignment_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut emb = String::from("sample_id,mu_1,mu_2\n");
    let mut par = String::from("sample_id,p\n");
    for i in 0..10 {
        emb.push_str(&format!("{i},{},{}\n", i, 2 * i));
        par.push_str(&format!("{i},{}\n", i * i));
    }
    fs::write(d.join("e.csv"), emb).unwrap();
    fs::write(d.join("p.csv"), par).unwrap();
    let out = run(d, &["align", "--embeddings", "e.csv", "--params", "p.csv", "--columns", "p", "--out", "al"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!d.join("al").exists());
}
