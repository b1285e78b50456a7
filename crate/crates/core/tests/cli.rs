use std::path::Path;
use std::process::{Command, Output};

fn fedmeta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmeta"))
        .args(args)
        .env("FEDMETA_LOG", "warn")
        .output()
        .expect("binary runs")
}

const SMALL: &str = "kind = federated
rounds = 2
eval_every = 1
eval_tasks = 4
[model]
hidden = 6
batchnorm = true
[meta]
tasks_per_batch = 2
batches_per_round = 2
[episodes]
k_shot = 2
q_query = 2
[federation]
clients = 2
[data]
resolution = 4
examples_per_class = 30
";

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap()
}

#[test]
fn run_writes_reproducible_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "small.ini", SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = fedmeta(&["run", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("federated-2"));
    }
    for name in [
        "rounds.csv",
        "final_report.json",
        "checkpoints/centralized.ckpt",
        "checkpoints/federated-2.ckpt",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
    }
    let csv = String::from_utf8(read(&a, "rounds.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "scenario,arm,round,client_id,epsilon,sigma,loss,accuracy,precision,recall,f1"
    );

    // the resolved config alone reproduces the run
    let resolved = a.join("resolved_config.ini");
    let c = tmp.path().join("c");
    let o = fedmeta(&["run", resolved.to_str().unwrap(), "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(read(&a, "rounds.csv"), read(&c, "rounds.csv"));

    // another seed, another trajectory
    let d = tmp.path().join("d");
    let o = fedmeta(&["run", &cfg, "--seed", "5", "--out", d.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(read(&a, "rounds.csv"), read(&d, "rounds.csv"));
    assert!(String::from_utf8(read(&d, "resolved_config.ini")).unwrap().contains("seed = 5"));

    let o = fedmeta(&["compare", d.join("final_report.json").to_str().unwrap(), a.join("final_report.json").to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(table.contains('±'));
}

#[test]
fn config_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write(tmp.path(), "bad.ini", "kind = federated\n\n[privacy]\nepsilon = -1\n");
    let o = fedmeta(&["run", &bad]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");

    let unknown = write(tmp.path(), "unknown.ini", "[meta]\nlearning_rate = 0.1\n");
    assert_eq!(fedmeta(&["run", &unknown]).status.code(), Some(1));
    assert_eq!(fedmeta(&["run", "/no/such/config.ini"]).status.code(), Some(1));
    assert_eq!(fedmeta(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    // too few examples for 5-shot 5-query episodes
    let cfg = write(tmp.path(), "tiny.ini", "rounds = 1\n[data]\nresolution = 4\nexamples_per_class = 6\n");
    let out = tmp.path().join("out");
    let o = fedmeta(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert_eq!(fedmeta(&["compare", "/no/such/report.json"]).status.code(), Some(2));
}

#[test]
fn generated_corpus_runs_through_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = write(tmp.path(), "spec.ini", "[data]\nresolution = 4\nexamples_per_class = 30\nmodalities = xray, ct\n");
    let manifest = tmp.path().join("corpus").join("manifest.tsv");
    std::fs::create_dir_all(manifest.parent().unwrap()).unwrap();
    let o = fedmeta(&["gen-synthetic", &spec, manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 120);

    let cfg = write(
        tmp.path(),
        "mm.ini",
        "kind = multi-modal\nrounds = 1\neval_every = 0\neval_tasks = 4\n[model]\nhidden = 4\n\
         [meta]\ntasks_per_batch = 2\nbatches_per_round = 1\n[episodes]\nk_shot = 2\nq_query = 2\n\
         [data]\nsource = manifest\nmanifest = corpus/manifest.tsv\nresolution = 4\n",
    );
    let out = tmp.path().join("mm");
    let o = fedmeta(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = String::from_utf8(read(&out, "final_report.json")).unwrap();
    assert!(report.contains("\"single-ct\"") && report.contains("\"group\": \"xray\""));
}
