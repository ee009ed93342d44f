use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flowbridge")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TOY: &str = "epochs = 4\nbatch_size = 50\nlearning_rate = 0.001\nhidden = 32,32\ndata.n = 200\nseed = 3\n";

fn toy_model(dir: &Path) {
    fs::write(dir.join("toy.cfg"), TOY).unwrap();
    assert_eq!(code(&run(dir, &["make-data", "--kind", "points", "--out", "pts", "--n", "200"])), 0);
    let o = run(dir, &["train", "--config", "toy.cfg", "--data", "pts", "--out", "m.ckpt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn phantom_manifest_split_and_reproducibility() {
    let d = TempDir::new().unwrap();
    let make = |out: &str| run(d.path(), &["make-data", "--kind", "phantoms", "--out", out, "--n", "20", "--resolution", "16"]);
    assert_eq!(code(&make("a")), 0);
    assert_eq!(code(&make("b")), 0);
    let manifest = fs::read_to_string(d.path().join("a/split.csv")).unwrap();
    assert_eq!(manifest, fs::read_to_string(d.path().join("b/split.csv")).unwrap());
    assert_eq!(manifest.lines().filter(|l| l.ends_with(",test")).count(), 3);
    assert_eq!(manifest.lines().count(), 21);

    let names = |sub: &str| {
        let mut v: Vec<String> = fs::read_dir(d.path().join("a").join(sub))
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    assert_eq!(names("synthetic/high"), names("real/normal"));
    assert_eq!(names("synthetic/high").len(), 20);
}

#[test]
fn zero_epochs_still_writes_checkpoint() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("z.cfg"), "epochs = 0\nbatch_size = 16\nhidden = 8\ndata.n = 64\n").unwrap();
    let o = run(d.path(), &["train", "--config", "z.cfg", "--toy", "two_moons,checkerboard", "--out", "z.ckpt"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(d.path().join("z.ckpt").exists());
    assert_eq!(fs::read_to_string(d.path().join("z.loss.csv")).unwrap(), "step,loss\n");
}

#[test]
fn missing_data_root_is_data_error() {
    let d = TempDir::new().unwrap();
    let o = run(d.path(), &["train", "--data", "no/such/root", "--out", "m.ckpt"]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("no/such/root"), "{}", stderr(&o));
}

#[test]
fn seeded_runs_are_byte_identical() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("toy.cfg"), TOY).unwrap();
    for out in ["a.ckpt", "b.ckpt"] {
        let o = run(d.path(), &["train", "--config", "toy.cfg", "--toy", "two_moons,gaussian_mixture", "--out", out]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let read = |f: &str| fs::read(d.path().join(f)).unwrap();
    assert_eq!(read("a.loss.csv"), read("b.loss.csv"));
    assert_eq!(read("a.ckpt"), read("b.ckpt"));
    // one row per step: 2 domains × 200 points / 50 per batch × 4 epochs
    assert_eq!(String::from_utf8(read("a.loss.csv")).unwrap().lines().count(), 1 + 32);
}

#[test]
fn config_and_numeric_errors_have_their_codes() {
    let d = TempDir::new().unwrap();
    fs::write(d.path().join("bad.cfg"), "epochs = 1\ntau = 2\n").unwrap();
    let o = run(d.path(), &["train", "--config", "bad.cfg", "--toy", "two_moons,two_rings", "--out", "m.ckpt"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    fs::write(d.path().join("huge.cfg"), "epochs = 2\nbatch_size = 16\nwarmup_steps = 0\nlearning_rate = 1e30\ndata.n = 64\n").unwrap();
    let o = run(d.path(), &["train", "--config", "huge.cfg", "--out", "m.ckpt"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

fn translate_args<'a>(src: &'a str, input: &'a str) -> Vec<&'a str> {
    let mut v = vec!["translate", "--ckpt", "m.ckpt", "--source-domain", src, "--target-domain", "two_rings"];
    v.extend(["--in", input, "--out", "tr", "--emit-latents"]);
    v
}

#[test]
fn translate_outputs_mirror_inputs() {
    let d = TempDir::new().unwrap();
    toy_model(d.path());
    let o = run(d.path(), &translate_args("two_moons", "pts/two_moons/test.csv"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = |p: &str| fs::read_to_string(d.path().join(p)).unwrap().lines().count();
    assert_eq!(rows("tr/test.csv"), rows("pts/two_moons/test.csv"));
    assert_eq!(rows("tr/latents/test.csv"), rows("pts/two_moons/test.csv"));

    assert_eq!(code(&run(d.path(), &translate_args("nope", "pts/two_moons/test.csv"))), 2);
    fs::create_dir(d.path().join("empty")).unwrap();
    assert_eq!(code(&run(d.path(), &translate_args("two_moons", "empty"))), 3);
}

fn report_values(dir: &Path, file: &str) -> Vec<(String, f64)> {
    fs::read_to_string(dir.join(file))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(" = ").unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn evaluate_identical_sets() {
    let d = TempDir::new().unwrap();
    assert_eq!(code(&run(d.path(), &["make-data", "--kind", "points", "--out", "pts", "--n", "100"])), 0);
    let real = "pts/two_rings/test.csv";
    let o = run(d.path(), &["evaluate", "--real", real, "--gen", &format!("same={real}"), "--source", real, "--out", "rep"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for (k, v) in report_values(d.path(), "rep.txt") {
        match k.as_str() {
            "same.rfid" => assert!(v.abs() < 1e-6, "{v}"),
            "same.coverage" => assert_eq!(v, 1.0),
            "same.realism_rank" | "same.structure_rank" | "same.average_rank" => assert_eq!(v, 1.0),
            _ => {}
        }
    }
    assert!(fs::read_to_string(d.path().join("rep.csv")).unwrap().starts_with("method,"));
}

#[test]
fn one_cell_ablation_matches_evaluate() {
    let d = TempDir::new().unwrap();
    toy_model(d.path());
    let common = ["--ckpt", "m.ckpt", "--source-domain", "two_moons", "--target-domain", "two_rings", "--cfg-weight", "2"];
    let mut abl = vec!["ablate", "--in", "pts/two_moons/test.csv", "--real", "pts/two_rings/test.csv"];
    abl.extend(["--taus", "0.45", "--cfg-weights", "2", "--out", "abl.csv"]);
    abl.extend(&common[..6]);
    let o = run(d.path(), &abl);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(d.path().join("abl.csv")).unwrap();
    let cells: Vec<f64> = text.lines().nth(1).unwrap().split(',').skip(1).map(|v| v.parse().unwrap()).collect();

    let mut tr = vec!["translate", "--in", "pts/two_moons/test.csv", "--out", "tr", "--tau", "0.45"];
    tr.extend(common);
    assert_eq!(code(&run(d.path(), &tr)), 0);
    let o = run(
        d.path(),
        &["evaluate", "--real", "pts/two_rings/test.csv", "--gen", "m=tr/test.csv", "--source", "pts/two_moons/test.csv", "--out", "rep"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: std::collections::BTreeMap<String, f64> = report_values(d.path(), "rep.txt").into_iter().collect();
    // columns: rfid, ssim (NaN for points), source_l2
    assert!((cells[0] - rep["m.rfid"]).abs() <= 1e-9 * (1.0 + cells[0]), "{} vs {}", cells[0], rep["m.rfid"]);
    assert!((cells[2] - rep["m.source_l2"]).abs() <= 1e-9, "{} vs {}", cells[2], rep["m.source_l2"]);
    assert!(text.lines().any(|l| l.starts_with("# ")));
}

#[test]
fn diagnose_tau_one_is_raw_mmd_and_taus_must_descend() {
    let d = TempDir::new().unwrap();
    toy_model(d.path());
    let base = ["diagnose", "--ckpt", "m.ckpt", "--domain-a", "two_moons", "--in-a", "pts/two_moons/test.csv"];
    let mut args = base.to_vec();
    args.extend(["--domain-b", "two_rings", "--in-b", "pts/two_rings/test.csv", "--out", "d.csv", "--bootstrap", "0"]);
    let mut bad = args.clone();
    bad.extend(["--taus", "0.3,0.6"]);
    assert_eq!(code(&run(d.path(), &bad)), 2);

    let mut one = args.clone();
    one.extend(["--taus", "1.0"]);
    let o = run(d.path(), &one);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(d.path().join("d.csv")).unwrap();
    let mmd: f64 = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();

    // the same statistic from evaluate's realism metrics
    let o = run(
        d.path(),
        &[
            "evaluate", "--real", "pts/two_rings/test.csv", "--gen", "raw=pts/two_moons/test.csv", "--source",
            "pts/two_moons/test.csv", "--out", "rep",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rep: std::collections::BTreeMap<String, f64> = report_values(d.path(), "rep.txt").into_iter().collect();
    assert_eq!(mmd, rep["raw.mmd"]);
}
