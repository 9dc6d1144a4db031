use std::fs;
use std::path::Path;

use super::{run, CliResult, Failure};

fn sh(args: &[&str]) -> CliResult<String> {
    run(std::iter::once("shapesearch").chain(args.iter().copied()))
}

fn ok(args: &[&str]) -> String {
    match sh(args) {
        Ok(out) => out,
        Err(f) => panic!("{args:?} failed: {}", f.message()),
    }
}

fn fail(args: &[&str]) -> Failure {
    match sh(args) {
        Ok(out) => panic!("{args:?} succeeded with {out:?}"),
        Err(f) => f,
    }
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Meshes, a small dataset and a config file whose paths are relative to it.
struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new(shapes: usize, per_object: usize) -> Workspace {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        ok(&["gen-shapes", "--out", s(&ws.path("meshes")), "--count", &shapes.to_string(), "--seed", "7"]);
        ok(&[
            "gen-data",
            "--meshes",
            s(&ws.path("meshes")),
            "--out",
            s(&ws.path("data")),
            "--per-object",
            &per_object.to_string(),
            "--mix",
            "0.5",
            "--seed",
            "3",
            "--size",
            "32",
        ]);
        let cfg = "# small and fast\ndata=data/manifest.tsv\nmeshes=meshes\ninput_size=32\nrender_resolution=64\nepochs=3\nval_fraction=0.25\nlr=3e-4\n";
        fs::write(ws.path("train.cfg"), cfg).unwrap();
        ws
    }

    fn path(&self, name: &str) -> std::path::PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, extra: &[&str]) -> String {
        let (cfg, ckpt) = (self.path("train.cfg"), self.path(out));
        let mut args = vec!["train", "--config", s(&cfg), "--out", s(&ckpt)];
        args.extend_from_slice(extra);
        ok(&args)
    }
}

#[test]
fn gen_data_writes_one_manifest_line_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("m");
    let data = dir.path().join("d");
    ok(&["gen-shapes", "--out", s(&meshes), "--count", "10", "--seed", "1"]);
    let out = ok(&[
        "gen-data", "--meshes", s(&meshes), "--out", s(&data), "--per-object", "20", "--mix", "0.5", "--seed", "2",
        "--size", "16",
    ]);
    let manifest = data.join("manifest.tsv");
    assert_eq!(out.trim_end(), s(&manifest));
    assert_eq!(fs::read_to_string(manifest).unwrap().lines().count(), 200);
}

#[test]
fn id_list_and_manifest_match_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("m");
    ok(&["gen-shapes", "--out", s(&meshes), "--count", "3", "--seed", "7"]);
    assert_eq!(fs::read_to_string(meshes.join("ids.txt")).unwrap(), golden("ids.txt"));
    let data = dir.path().join("d");
    ok(&[
        "gen-data", "--meshes", s(&meshes), "--out", s(&data), "--per-object", "2", "--mix", "0.5", "--seed", "3",
        "--size", "16",
    ]);
    assert_eq!(fs::read_to_string(data.join("manifest.tsv")).unwrap(), golden("manifest.tsv"));
}

#[test]
fn commands_are_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("m");
    ok(&["gen-shapes", "--out", s(&meshes), "--count", "2", "--seed", "4"]);
    let obj = fs::read(meshes.join(fs::read_to_string(meshes.join("ids.txt")).unwrap().lines().next().unwrap().to_owned() + ".obj")).unwrap();
    ok(&["gen-shapes", "--out", s(&meshes), "--count", "2", "--seed", "4"]);
    let again = fs::read(meshes.join(fs::read_to_string(meshes.join("ids.txt")).unwrap().lines().next().unwrap().to_owned() + ".obj")).unwrap();
    assert_eq!(obj, again);

    let data = dir.path().join("d");
    let args = [
        "gen-data", "--meshes", s(&meshes), "--out", s(&data), "--per-object", "3", "--mix", "0.5", "--seed", "9",
        "--size", "16",
    ];
    ok(&args);
    let first: Vec<Vec<u8>> = fs::read_to_string(data.join("manifest.tsv"))
        .unwrap()
        .lines()
        .map(|l| fs::read(data.join(l.split('\t').next().unwrap())).unwrap())
        .collect();
    ok(&args);
    let second: Vec<Vec<u8>> = fs::read_to_string(data.join("manifest.tsv"))
        .unwrap()
        .lines()
        .map(|l| fs::read(data.join(l.split('\t').next().unwrap())).unwrap())
        .collect();
    assert_eq!(first, second);
}

#[test]
fn render_views_writes_one_png_per_rig_vertex() {
    let dir = tempfile::tempdir().unwrap();
    let meshes = dir.path().join("m");
    ok(&["gen-shapes", "--out", s(&meshes), "--count", "1", "--seed", "5"]);
    let id = fs::read_to_string(meshes.join("ids.txt")).unwrap().trim().to_owned();
    let mesh = meshes.join(format!("{id}.obj"));
    for n in ["12", "20", "42"] {
        let out = dir.path().join(format!("v{n}"));
        ok(&["render-views", "--mesh", s(&mesh), "--out", s(&out), "--views", n, "--res", "64", "--size", "32"]);
        assert_eq!(fs::read_dir(&out).unwrap().count(), n.parse::<usize>().unwrap());
        assert!(out.join("view_00.png").is_file());
    }
    assert_eq!(fail(&["render-views", "--mesh", s(&mesh), "--out", s(&dir.path().join("x")), "--views", "13"]).exit_code(), 2);
}

/// gen-shapes, gen-data, train, build-index, query and eval on a tiny corpus.
#[test]
fn full_pipeline_emits_ranked_lists_and_an_accuracy_table() {
    let ws = Workspace::new(6, 8);
    ws.train("model.ckpt", &[]);
    let stats = fs::read_to_string(ws.path("model.ckpt.stats.tsv")).unwrap();
    assert_eq!(stats.lines().count(), 3);
    for (i, line) in stats.lines().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 5, "{line}");
        assert_eq!(f[0], (i + 1).to_string());
        assert_eq!(f[1].split('.').nth(1).map(str::len), Some(6), "{line}");
        for acc in &f[2..] {
            assert_eq!(acc.split('.').nth(1).map(str::len), Some(4), "{line}");
        }
    }

    let (ckpt, index) = (ws.path("model.ckpt"), ws.path("shapes.idx"));
    ok(&["build-index", "--ckpt", s(&ckpt), "--meshes", s(&ws.path("meshes")), "--out", s(&index), "--res", "64", "--size", "32"]);

    let manifest = fs::read_to_string(ws.path("data/manifest.tsv")).unwrap();
    let image = ws.path("data").join(manifest.lines().next().unwrap().split('\t').next().unwrap());
    let ids = fs::read_to_string(ws.path("meshes/ids.txt")).unwrap();
    let out = ok(&["query", "--ckpt", s(&ckpt), "--index", s(&index), "--image", s(&image), "--topk", "5"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 5);
    let mut last = f64::INFINITY;
    for (i, line) in lines.iter().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        assert_eq!(f.len(), 3, "{line}");
        assert_eq!(f[0], (i + 1).to_string());
        assert!(ids.lines().any(|id| id == f[1]), "{line}");
        assert_eq!(f[2].split('.').nth(1).map(str::len), Some(6), "{line}");
        let score: f64 = f[2].parse().unwrap();
        assert!(score <= last && (-1.0..=1.0).contains(&score));
        last = score;
    }

    let table = ok(&["eval", "--ckpt", s(&ckpt), "--index", s(&index), "--manifest", s(&ws.path("data/manifest.tsv"))]);
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "k\taccuracy");
    let ks: Vec<&str> = rows[1..].iter().map(|r| r.split('\t').next().unwrap()).collect();
    assert_eq!(ks, ["1", "2", "5"]);
    let acc: Vec<f64> = rows[1..].iter().map(|r| r.split('\t').nth(1).unwrap().parse().unwrap()).collect();
    assert!(acc.windows(2).all(|w| w[0] <= w[1]) && acc.iter().all(|a| (0.0..=1.0).contains(a)));

}

#[test]
fn flags_override_the_config_file() {
    let ws = Workspace::new(3, 8);
    ws.train("a.ckpt", &["--epochs", "1"]);
    assert_eq!(fs::read_to_string(ws.path("a.ckpt.stats.tsv")).unwrap().lines().count(), 1);
}

#[test]
fn usage_errors_exit_2_and_name_the_offender() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "epochs=2\nlearning_rat=0.1\n").unwrap();
    let f = fail(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("x.ckpt"))]);
    assert_eq!(f.exit_code(), 2);
    assert!(f.message().contains("learning_rat"), "{}", f.message());
    assert!(!f.message().contains('\n'));

    let missing = dir.path().join("nope.ckpt");
    let f = fail(&["query", "--ckpt", s(&missing), "--index", "i", "--image", "q.png"]);
    assert_eq!(f.exit_code(), 2);
    assert!(f.message().contains("nope.ckpt"));

    let f = fail(&["gen-shapes", "--out", "x", "--count", "2", "--seed", "1", "--colour", "red"]);
    assert!(matches!(f, Failure::Parse(_)));
    assert_eq!(f.exit_code(), 2);
    assert!(f.message().contains("--colour"));

    assert_eq!(fail(&["--threads", "0", "gen-shapes", "--out", "x", "--count", "1", "--seed", "1"]).exit_code(), 2);
    assert_eq!(fail(&["gen-shapes", "--out", "x", "--count", "0", "--seed", "1"]).exit_code(), 2);

    let spec = dir.path().join("e.spec");
    fs::write(&spec, "kind=data_mix\nshapes=40\n").unwrap();
    let f = fail(&["experiment", "--spec", s(&spec), "--out", s(dir.path())]);
    assert_eq!(f.exit_code(), 2);
    assert!(f.message().contains("shapes"), "{}", f.message());
}

#[test]
fn runtime_errors_exit_1() {
    let ws = Workspace::new(3, 6);
    let junk = ws.path("junk.ckpt");
    fs::write(&junk, b"SRCK\x01\x00").unwrap();
    let f = fail(&["build-index", "--ckpt", s(&junk), "--meshes", s(&ws.path("meshes")), "--out", s(&ws.path("i"))]);
    assert_eq!(f.exit_code(), 1);
    assert!(!f.message().contains('\n'));

    let empty = ws.path("empty");
    fs::create_dir(&empty).unwrap();
    let f = fail(&[
        "gen-data", "--meshes", s(&empty), "--out", s(&ws.path("d2")), "--per-object", "4", "--mix", "0.5", "--seed", "1",
    ]);
    assert_eq!(f.exit_code(), 1);
}

#[test]
fn experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("share.spec");
    fs::write(
        &spec,
        "kind=share_mode\nseeds=1,2\ntrain_objects=4\ntest_objects=2\nper_object=8\nqueries_per_object=2\nepochs=1\ninput_size=32\nrender_resolution=64\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let summary = ok(&["experiment", "--spec", s(&spec), "--out", s(&out)]);
    let rows: Vec<&str> = summary.lines().collect();
    assert_eq!(rows[0], "arm\ttop1\ttop2\ttop5");
    assert_eq!(rows.len(), 3);
    assert_eq!(fs::read_to_string(out.join("summary.tsv")).unwrap(), summary);
    let runs = fs::read_to_string(out.join("runs.tsv")).unwrap();
    assert_eq!(runs.lines().next(), Some("arm\tseed\ttop1\ttop2\ttop5\tbest_epoch"));
    assert_eq!(runs.lines().count(), 5);
    assert_eq!(fs::read_to_string(out.join("test_ids.txt")).unwrap().lines().count(), 2);
}
