use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const DIM: usize = 40;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_intersect-rsa"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// xorshift noise in [-0.5, 0.5).
struct Noise(u64);

impl Noise {
    fn next(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

/// Writes a GloVe file where `alpha*` and `gamma*` tokens share one base
/// direction and `beta*` tokens another, plus three word-set files.
fn fixture(dir: &Path) {
    let mut noise = Noise(0x2545f4914f6cdd1d);
    let base_a: Vec<f64> = (0..DIM).map(|_| noise.next()).collect();
    let base_b: Vec<f64> = (0..DIM).map(|_| noise.next()).collect();
    let mut lines = String::new();
    let mut sets = Vec::new();
    for (prefix, base, count, kind, name) in [
        ("alpha", &base_a, 12, "group", "g1"),
        ("beta", &base_b, 12, "group", "g2"),
        ("gamma", &base_a, 11, "concept", "concept"),
    ] {
        let mut items = Vec::new();
        for i in 0..count {
            let token = format!("{prefix}{i}");
            let values: Vec<String> = base
                .iter()
                .map(|b| format!("{:.6}", b + 0.08 * noise.next()))
                .collect();
            lines.push_str(&format!("{token} {}\n", values.join(" ")));
            items.push(json!({"id": token, "text": token, "target": token}));
        }
        sets.push((name, json!({"name": name, "kind": kind, "items": items})));
    }
    fs::write(dir.join("vectors.txt"), lines).unwrap();
    for (name, set) in sets {
        fs::write(dir.join(format!("{name}.json")), set.to_string()).unwrap();
    }
}

fn experiment(name: &str, g1: &str, g2: &str, seed: u64) -> Value {
    json!({
        "name": name,
        "group1": {"path": format!("{g1}.json")},
        "group2": {"path": format!("{g2}.json")},
        "concept": {"path": "concept.json"},
        "num_samples": 40,
        "seed": seed,
        "source": {"kind": "glove", "path": "vectors.txt"},
        "label": "Synthetic"
    })
}

fn write_config(dir: &Path, file: &str, value: &Value) -> PathBuf {
    let path = dir.join(file);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let config = write_config(
        dir.path(),
        "exp.json",
        &experiment("synthetic", "g1", "g2", 7),
    );
    (dir, config)
}

#[test]
fn run_prints_summary_line_favouring_hyp1() {
    let (_dir, config) = setup();
    let out = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let line = stdout(&out);
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields.len(), 4, "{line}");
    let m1: f64 = fields[0].parse().unwrap();
    let m2: f64 = fields[1].parse().unwrap();
    let p: f64 = fields[2].parse().unwrap();
    assert!(m1 > m2);
    assert!(p < 1e-6);
    assert_eq!(fields[3], "hyp1");
}

#[test]
fn run_json_is_thread_count_independent() {
    let (dir, config) = setup();
    let cfg = config.to_str().unwrap();
    let one = run(&["run", "--config", cfg, "--json", "--threads", "1"]);
    let four = run(&["run", "--config", cfg, "--json", "--threads", "4"]);
    assert_eq!(code(&one), 0, "{}", stderr(&one));
    assert_eq!(stdout(&one), stdout(&four));

    let saved = dir.path().join("result.json");
    let out = run(&["run", "--config", cfg, "--out", saved.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let value: Value = serde_json::from_str(&fs::read_to_string(&saved).unwrap()).unwrap();
    assert_eq!(value["s_hyp1"].as_array().unwrap().len(), 40);
    assert_eq!(value["seed"], 7);
    assert_eq!(value["source"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(value, serde_json::from_str::<Value>(&stdout(&one)).unwrap());
}

#[test]
fn validate_reports_missing_tokens() {
    let (dir, config) = setup();
    let out = run(&["validate", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("ok"));

    let items: Vec<Value> = (0..11)
        .map(|i| format!("beta{i}"))
        .chain(["zeta".to_string()])
        .map(|t| json!({"id": t, "text": t, "target": t}))
        .collect();
    fs::write(
        dir.path().join("g2.json"),
        json!({"name": "g2", "kind": "group", "items": items}).to_string(),
    )
    .unwrap();
    let out = run(&["validate", "--config", config.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let missing: Vec<&Value> = report[0]["sets"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|s| s["missing"].as_array().unwrap())
        .collect();
    assert_eq!(missing, [&json!("zeta")]);

    let out = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(
        stderr(&out).contains("missing embeddings for: g2: zeta"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn suite_writes_tables_and_keeps_going_after_a_failing_row() {
    let (dir, _) = setup();
    let mut broken = experiment("broken", "g1", "g2", 0);
    broken["source"]["path"] = json!("absent.txt");
    let suite = json!({
        "name": "synthetic suite",
        "experiments": [
            experiment("straight", "g1", "g2", 1),
            broken,
            experiment("swapped", "g2", "g1", 1),
        ]
    });
    let config = write_config(dir.path(), "suite.json", &suite);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "suite",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--threads",
        "2",
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("absent.txt"));

    let md = fs::read_to_string(out_dir.join("table.md")).unwrap();
    assert_eq!(md, stdout(&out));
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(
        lines[2].starts_with("| Synthetic | g1 | g2 | concept | **"),
        "{md}"
    );
    assert!(lines[3].contains("error:"));
    assert!(lines[4].ends_with("hyp2 |"), "{md}");

    let tsv = fs::read_to_string(out_dir.join("table.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 4);
    assert!(out_dir.join("00-straight.json").exists());
    assert!(!out_dir.join("01-broken.json").exists());
    assert!(out_dir.join("02-swapped.json").exists());

    let report = run(&[
        "report",
        out_dir.join("00-straight.json").to_str().unwrap(),
        out_dir.join("02-swapped.json").to_str().unwrap(),
        "--tsv",
    ]);
    assert_eq!(code(&report), 0, "{}", stderr(&report));
    let rows: Vec<&str> = tsv.lines().filter(|l| !l.contains("error:")).collect();
    assert_eq!(stdout(&report).lines().collect::<Vec<_>>(), rows);
}

#[test]
fn validate_accepts_suites() {
    let (dir, _) = setup();
    let suite =
        json!({"experiments": [experiment("a", "g1", "g2", 0), experiment("b", "g2", "g1", 0)]});
    let config = write_config(dir.path(), "suite.json", &suite);
    let out = run(&["validate", "--config", config.to_str().unwrap(), "--json"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report.as_array().unwrap().len(), 2);
    assert_eq!(report[1]["experiment"], "b");
}

fn manifest(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn templates_expand_builtin_sets() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("bf.jsonl");
    let out = run(&[
        "templates",
        "--spec",
        "bf-sent-race",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records = manifest(&out_path);
    assert_eq!(records.len(), 21);
    assert!(records
        .iter()
        .any(|r| r["text"] == "The Black woman is here." && r["target"] == "Black"));
    for r in &records {
        let keys: Vec<&String> = r.as_object().unwrap().keys().collect();
        assert_eq!(keys, ["id", "target", "text"]);
        assert!(r["id"].as_str().unwrap().starts_with("bf-sent-race/"));
    }

    let out_path = dir.path().join("female.jsonl");
    let out = run(&[
        "templates",
        "--spec",
        "female-concept-sent",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let records = manifest(&out_path);
    assert_eq!(records.len(), 30);
    assert!(records
        .iter()
        .any(|r| r["text"] == "Here is a woman." && r["target"] == "woman"));
}

#[test]
fn templates_expand_template_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_config(
        dir.path(),
        "spec.json",
        &json!({
            "name": "custom",
            "kind": "group",
            "fillers": [{"singular": "Latina woman", "plural": "Latina women"}],
            "templates": [
                {"pattern": "This is a <X>.", "number": "singular"},
                {"pattern": "<X> are here.", "number": "plural"}
            ]
        }),
    );
    let out_path = dir.path().join("custom.jsonl");
    let out = run(&[
        "templates",
        "--spec",
        spec.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let records = manifest(&out_path);
    assert_eq!(
        records,
        [
            json!({"id": "custom/000", "text": "This is a Latina woman.", "target": "Latina"}),
            json!({"id": "custom/001", "text": "Latina women are here.", "target": "Latina"}),
        ]
    );
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("x.jsonl");
    let out_str = out_path.to_str().unwrap();
    assert_eq!(
        code(&run(&["templates", "--spec", "", "--out", out_str])),
        64
    );
    assert_eq!(
        code(&run(&[
            "templates",
            "--spec",
            "no-such-set",
            "--out",
            out_str
        ])),
        64
    );
    assert_eq!(code(&run(&["frobnicate"])), 64);
    assert_eq!(code(&run(&["run"])), 64);
    assert_eq!(code(&run(&["report"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bad_inputs_map_to_exit_codes() {
    let (dir, config) = setup();
    let cfg = config.to_str().unwrap();
    assert_eq!(code(&run(&["run", "--config", cfg, "--threads", "0"])), 64);

    let unknown_field = write_config(dir.path(), "bad.json", &json!({"name": "x", "bogus": 1}));
    let out = run(&["run", "--config", unknown_field.to_str().unwrap()]);
    assert_eq!(code(&out), 1);

    let mut too_big = experiment("too big", "g1", "g2", 0);
    too_big["n3"] = json!(12);
    let too_big = write_config(dir.path(), "big.json", &too_big);
    let out = run(&["run", "--config", too_big.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("11 items but 12"), "{}", stderr(&out));

    fs::write(dir.path().join("vectors.txt"), "alpha0 1 2\nbeta0 1\n").unwrap();
    let out = run(&["run", "--config", cfg]);
    assert_eq!(code(&out), 2);
    assert!(
        stderr(&out).contains("vectors.txt:2: ragged line"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn shipped_configs_parse_and_resolve() {
    use intersect_rsa::{Experiment, ExperimentConfig, SuiteConfig};

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let configs = match SuiteConfig::load(&path) {
            Ok(suite) => suite.experiments,
            Err(_) => vec![ExperimentConfig::from_json(&text).unwrap()],
        };
        for config in configs {
            Experiment::resolve(config, &dir).unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 8, "{seen}");
}
