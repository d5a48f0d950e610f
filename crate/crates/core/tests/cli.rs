use std::path::Path;
use std::process::{Command, Output};

use nlpt::cli::{emit_curve, parse_curve, parse_window, run, RunConfig, TaskTag};
use nlpt::Error;

const STRIP: &str = r#"
[domain]
kind = "k_cylinder"
n = 2
k = 1
base = { shape = "box", bounds = [[0.0, 3.141592653589793]] }

[solver]
resolution = [121, 33]
cut = 4.0
tau = "0.5:2.5:0.125"

[growth]
field = { kind = "separated", mode = 1.0 }
"#;

fn nlpt(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlpt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn classify_euclidean_three_space_is_hyperbolic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "e3.toml", "[domain]\nkind = \"euclidean_space\"\nn = 3\n");
    let v = json(&nlpt(dir.path(), &["classify", "--config", "e3.toml", "--p", "2"]));
    assert_eq!(v["task"], "classify");
    assert_eq!(v["results"]["verdict"], "Hyperbolic");
    let v = json(&nlpt(dir.path(), &["classify", "--config", "e3.toml", "--p", "3"]));
    assert_eq!(v["results"]["verdict"], "Parabolic");
}

#[test]
fn annulus_capacity_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "ann.toml",
        "[domain]\nkind = \"euclidean_space\"\nn = 2\n[solver]\nresolution = [121, 128]\ncut = 20.0\n\
         [capacity]\nt1 = 0.0\nt2 = 2.0\nfield_out = \"phi.txt\"\n",
    );
    let v = json(&nlpt(dir.path(), &["capacity", "--config", "ann.toml"]));
    let value = v["results"]["value"].as_f64().unwrap();
    let exact = std::f64::consts::PI;
    assert!((value - exact).abs() / exact < 0.01, "{value}");
    assert!((v["results"]["exhaustion_value"].as_f64().unwrap() - exact).abs() < 1e-9);
    assert_eq!(v["provenance"]["resolution"], serde_json::json!([121, 128]));
    assert_eq!(v["provenance"]["truncation"], 20.0);
    let table = nlpt::domains::parse_grid(&std::fs::read_to_string(dir.path().join("phi.txt")).unwrap()).unwrap();
    assert_eq!(table.field_names, vec!["phi".to_string()]);
}

#[test]
fn exponent_below_one_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "e3.toml", "[domain]\nkind = \"euclidean_space\"\nn = 3\n");
    let out = nlpt(dir.path(), &["classify", "--config", "e3.toml", "--p", "0.5"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("solver.p"), "{err}");
    assert!(out.stdout.is_empty());

    let mut config = RunConfig::from_toml("task = \"classify\"\n[domain]\nkind = \"euclidean_space\"\nn = 3\n").unwrap();
    config.solver.p = 0.5;
    assert!(matches!(run(&config), Err(Error::ConfigInvalid { ref field, .. }) if field == "solver.p"));
}

#[test]
fn invalid_fields_are_named() {
    let cases = [
        ("[solver]\nresolution = [4, 33]\n", "solver.resolution"),
        ("[solver]\nnu1 = 2.0\nnu2 = 1.0\n", "solver.nu2"),
        ("[solver]\ntau = \"3:1:0.5\"\n", "tau"),
    ];
    for (extra, field) in cases {
        let text = format!("task = \"classify\"\n[domain]\nkind = \"euclidean_space\"\nn = 3\n{extra}");
        let config = RunConfig::from_toml(&text).unwrap();
        match config.validate() {
            Err(Error::ConfigInvalid { field: f, .. }) => assert_eq!(f, field),
            other => panic!("{extra}: {other:?}"),
        }
    }
    let text = format!("task = \"growth\"\n{}", STRIP.replace("kind = \"separated\", mode = 1.0", "kind = \"table\", path = \"/nonexistent.txt\", column = \"f\""));
    let config = RunConfig::from_toml(&text).unwrap();
    assert!(matches!(config.validate(), Err(Error::ConfigInvalid { ref field, .. }) if field == "growth.field.path"));
}

#[test]
fn growth_csv_round_trips_and_monotone_column_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "strip.toml", STRIP);
    let out = nlpt(dir.path(), &["growth", "--config", "strip.toml", "--format", "csv", "--out", "curve.csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    let curve = parse_curve(&text).unwrap();
    assert_eq!(curve.tau_samples, parse_window("0.5:2.5:0.125").unwrap());

    let config = RunConfig::from_toml(&format!("task = \"growth\"\n{STRIP}")).unwrap();
    let report = run(&config).unwrap();
    assert_eq!(report.curve.as_ref().unwrap(), &curve);
    assert_eq!(emit_curve(&report).unwrap(), text);

    let q0 = curve.monotone_quantity[0];
    for q in &curve.monotone_quantity {
        assert!((q - q0).abs() / q0 < 0.03, "{q} vs {q0}");
    }
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "strip.toml", STRIP);
    write(
        dir.path(),
        "ann.toml",
        "[domain]\nkind = \"euclidean_space\"\nn = 2\n[solver]\nresolution = [81, 96]\ncut = 10.0\n",
    );
    for args in [["growth", "--config", "strip.toml"], ["capacity", "--config", "ann.toml"]] {
        let run = |threads: &str| {
            let mut v = json(&nlpt(dir.path(), &[&args[..], &["--seed", "3", "--threads", threads]].concat()));
            assert_eq!(v["provenance"]["seed"], 3);
            v["config"]["threads"] = serde_json::Value::Null;
            v
        };
        assert_eq!(run("1"), run("4"), "{args:?}");
    }
}

#[test]
fn csv_without_curve_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "e3.toml", "[domain]\nkind = \"euclidean_space\"\nn = 3\n");
    let out = nlpt(dir.path(), &["classify", "--config", "e3.toml", "--format", "csv"]);
    assert!(!out.status.success());

    let config = RunConfig::from_toml("task = \"classify\"\n[domain]\nkind = \"euclidean_space\"\nn = 3\n").unwrap();
    let mut report = run(&config).unwrap();
    assert!(matches!(emit_curve(&report), Err(Error::NoCurvePayload)));
    let mut empty = run(&RunConfig::from_toml(&format!("task = \"growth\"\n{STRIP}")).unwrap())
        .unwrap()
        .curve
        .unwrap();
    empty.tau_samples.clear();
    empty.i.clear();
    empty.di.clear();
    empty.eps.clear();
    empty.monotone_quantity.clear();
    report.curve = Some(empty);
    assert!(matches!(emit_curve(&report), Err(Error::NoCurvePayload)));
}

#[test]
fn window_parsing() {
    assert_eq!(parse_window("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    assert_eq!(parse_window("1:1:0.5").unwrap(), vec![1.0]);
    assert!(parse_window("0:1").is_err());
    assert!(parse_window("0:1:-1").is_err());
    assert!(parse_window("a:1:1").is_err());
}

#[test]
fn wtcheck_presets_chain() {
    for extra in ["preset = \"p_laplace\"", "preset = \"anisotropic\"\nweights = [1.0, 4.0]"] {
        let text = format!("task = \"wtcheck\"\nseed = 11\n[solver]\nresolution = [17, 17]\n[wtcheck]\n{extra}\nstructure_samples = 200\n");
        let report = run(&RunConfig::from_toml(&text).unwrap()).unwrap();
        assert_eq!(report.task, TaskTag::Wtcheck);
        let r = &report.results;
        assert_eq!(r["pairs"], 100);
        assert_eq!(r["wt2_passed"], 100, "{extra}");
        assert_eq!(r["wt1_passed_given_wt2"], 100, "{extra}");
        assert_eq!(r["structure"]["passed"], true);
    }
}

#[test]
fn ahlfors_from_tract_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "strip.toml", STRIP);
    write(
        dir.path(),
        "tracts.toml",
        "[[tract]]\nkind = \"slab\"\nlo = 0.0\nhi = 3.141592653589793\n\
         [partitions]\nkind = \"slabs\"\ncuts = [[1.5707963267948966]]\n",
    );
    let v = json(&nlpt(dir.path(), &["ahlfors", "--config", "strip.toml", "--tracts", "tracts.toml", "--N", "2", "--tau", "0.5:3.25:0.25"]));
    assert_eq!(v["results"]["n"], 2);
    assert_eq!(v["results"]["chain"]["am_gm_holds"], true);
    assert_eq!(v["results"]["verdict"], "BoundAsserted");
}

#[test]
fn unknown_keys_are_rejected() {
    let err = RunConfig::from_toml("task = \"classify\"\nbogus = 1\n").unwrap_err();
    assert!(matches!(err, Error::ConfigInvalid { .. }));
}
