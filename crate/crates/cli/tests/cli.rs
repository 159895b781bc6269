use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn beltlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beltlab"))
        .current_dir(dir)
        .env_remove("BELTLAB_SAMPLES")
        .args(args)
        .output()
        .expect("running beltlab")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = beltlab(dir, args);
    assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn worst(check: &Value) -> f64 {
    check["residuals"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["value"].as_f64().unwrap())
        .fold(0.0, f64::max)
}

fn csv_rows(path: PathBuf) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn vp_plug_records_the_golden_parameter() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["build", "vp-plug", "--n", "5", "-o", "plug.json"]);
    let m = json(dir.path().join("plug.json"));
    assert_eq!(m["name"], "wilson_vp_plug");
    let b = m.to_string();
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    assert!(b.contains(&format!("{golden}")), "{b}");
}

#[test]
fn binding_neighborhood_is_five_dimensional() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["build", "binding-neighborhood", "--binding", "t3-contact", "-o", "bn5.json"],
    );
    let m = json(dir.path().join("bn5.json"));
    assert_eq!(m["dimension"], 5);
    let names: Vec<String> = m["chart"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(names, ["x", "y", "z", "r", "theta"]);
}

#[test]
fn suspension_slope_is_stored_exactly() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["build", "suspension", "--v", "0.414213562,0.732050808", "-o", "sus.json"],
    );
    let m = json(dir.path().join("sus.json"));
    let text = m.to_string();
    assert!(text.contains("0.414213562") && text.contains("0.732050808"), "{text}");
}

#[test]
fn verify_exit_codes_follow_the_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "vp-plug", "-o", "plug.json"]);
    ok(d, &["verify", "plug.json", "--checks", "beltrami,volume", "-o", "pass.json"]);
    let r = json(d.join("pass.json"));
    assert_eq!(r["result"]["passed"], true);
    for c in r["result"]["checks"].as_array().unwrap() {
        assert!(worst(c) < 1e-10, "{c}");
    }

    let out = beltlab(d, &["verify", "plug.json", "--checks", "gluck", "-o", "fail.json"]);
    assert_eq!(out.status.code(), Some(1));
    let r = json(d.join("fail.json"));
    assert_eq!(r["result"]["passed"], false);
    assert!(worst(&r["result"]["checks"][0]) > 0.05);

    let out = beltlab(d, &["verify", "plug.json", "--checks", "ses"]);
    assert_eq!(out.status.code(), Some(2));

    ok(d, &["build", "suspension", "--v", "0.414213562,0.732050808", "-o", "sus.json"]);
    ok(d, &["verify", "sus.json", "--checks", "ses,euler_constB"]);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(beltlab(d, &["build", "no-such-thing", "-o", "x.json"]).status.code(), Some(2));
    assert_eq!(beltlab(d, &["verify", "missing.json"]).status.code(), Some(2));
    ok(d, &["build", "suspension", "--v", "0.5,0.25", "-o", "sus.json"]);
    assert_eq!(beltlab(d, &["trap", "sus.json"]).status.code(), Some(2));
    let tampered = std::fs::read_to_string(d.join("sus.json")).unwrap().replace("0.25", "0.26");
    std::fs::write(d.join("bad.json"), tampered).unwrap();
    let out = beltlab(d, &["verify", "bad.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash mismatch"));
}

#[test]
fn reports_are_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "binding-neighborhood", "--binding", "t3-contact", "-o", "bn.json"]);
    let run = |name: &str| {
        ok(
            d,
            &[
                "verify",
                "bn.json",
                "--checks",
                "ses,beltrami",
                "--samples",
                "200",
                "--seed",
                "7",
                "-o",
                name,
            ],
        );
        std::fs::read(d.join(name)).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
    let r = json(d.join("a.json"));
    assert_eq!(r["seeds"]["seed"], 7);
    assert_eq!(r["model"]["hash"], json(d.join("bn.json"))["hash"]);
}

#[test]
fn sample_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "suspension", "--v", "0.5,0.25", "-o", "sus.json"]);
    let out = Command::new(env!("CARGO_BIN_EXE_beltlab"))
        .current_dir(d)
        .env("BELTLAB_SAMPLES", "17")
        .args(["verify", "sus.json", "-o", "r.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(d.join("r.json"))["parameters"]["samples"], 17);
}

#[test]
fn suspension_theta_column_is_time() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "suspension", "--v", "0.414213562,0.732050808", "-o", "sus.json"]);
    ok(
        d,
        &[
            "flow",
            "sus.json",
            "--from",
            "0,0,0",
            "-T",
            "10",
            "-o",
            "orbit.csv",
            "--report",
            "flow.json",
        ],
    );
    let rows = csv_rows(d.join("orbit.csv"));
    assert_eq!(rows[0][..2], ["t", "theta"]);
    assert!(rows.len() > 100);
    for r in &rows[1..] {
        assert_eq!(r[0].parse::<f64>().unwrap(), r[1].parse::<f64>().unwrap(), "{r:?}");
    }
    assert_eq!(rows.last().unwrap()[0], "10");

    ok(d, &["plot", "--kind", "orbit", "orbit.csv", "-o", "orbit.svg"]);
    let svg = std::fs::read_to_string(d.join("orbit.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn trap_grid_plot_matches_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "vp-plug", "-o", "plug.json"]);
    ok(
        d,
        &[
            "trap",
            "plug.json",
            "--grid",
            "6",
            "--Tmax",
            "200",
            "-o",
            "trap.csv",
            "--report",
            "trap.json",
        ],
    );
    let rows = csv_rows(d.join("trap.csv"));
    assert_eq!(rows.len() - 1, 36);
    let exits = rows[1..].iter().filter(|r| r[4] == "exit").count();
    let r = json(d.join("trap.json"));
    assert!(r["result"]["max_displacement"].as_f64().unwrap() < 1e-6, "{r}");

    ok(d, &["plot", "--kind", "trapgrid", "trap.csv", "-o", "grid.svg"]);
    let svg = std::fs::read_to_string(d.join("grid.svg")).unwrap();
    assert_eq!(svg.matches(r#"class="cell "#).count(), 36);
    assert!(svg.contains(&format!("Exit ({exits})")));
    assert!(svg.contains(&format!("Trapped ({})", 36 - exits)));
}

#[test]
fn malformed_csv_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.csv"), "i,j,axis0,axis1,outcome,value,transit_time,in_window\n0,0,0.1\n").unwrap();
    let out = beltlab(d, &["plot", "--kind", "trapgrid", "bad.csv"]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(d.join("bad2.csv"), "t,x\n0,abc\n").unwrap();
    assert_eq!(beltlab(d, &["plot", "--kind", "orbit", "bad2.csv"]).status.code(), Some(2));
}

#[test]
fn profiles_plot_shows_the_plateaus() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["plot", "--kind", "profiles"]);
    let svg = String::from_utf8(out.stdout).unwrap();
    let curve = |name: &str| -> Vec<(f64, f64)> {
        let tag = format!(r#"data-name="{name}""#);
        let start = svg.find(&tag).unwrap_or_else(|| panic!("no curve {name}"));
        let pts = &svg[start..];
        let pts = &pts[pts.find("points=\"").unwrap() + 8..];
        let pts = &pts[..pts.find('"').unwrap()];
        pts.split(' ')
            .map(|p| {
                let (x, y) = p.split_once(',').unwrap();
                (x.parse().unwrap(), y.parse().unwrap())
            })
            .collect()
    };
    let f = curve("f");
    let plateau: Vec<_> = f.iter().filter(|(r, _)| (1.0 / 3.0..=2.0 / 3.0).contains(r)).collect();
    assert!(plateau.len() > 10);
    assert!(plateau.iter().all(|(_, v)| *v == 0.5), "{plateau:?}");
    let h = curve("h");
    assert!(h.iter().filter(|(r, _)| *r < 1.0 / 3.0).all(|(_, v)| *v == 0.0));
    assert!(h.iter().filter(|(r, _)| *r > 2.0 / 3.0).all(|(_, v)| *v == 1.0));
}

#[test]
fn hfield_marks_one_singular_point_per_half() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "vp-plug", "-o", "plug.json"]);
    let out = ok(d, &["plot", "--kind", "hfield", "plug.json"]);
    let svg = String::from_utf8(out.stdout).unwrap();
    let marks: Vec<&str> = svg.lines().filter(|l| l.contains(r#"class="singular""#)).collect();
    assert_eq!(marks.len(), 2, "{marks:?}");
    for m in &marks {
        assert!(m.contains(r#"data-r="1.5""#), "{m}");
    }
    assert!(marks[0].contains("data-z=\"-") != marks[1].contains("data-z=\"-"));
}

#[test]
fn aperiodic_model_has_no_periodic_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["build", "aperiodic", "-o", "aperiodic.json"]);
    ok(
        d,
        &[
            "periodic",
            "aperiodic.json",
            "--max-period",
            "20",
            "-o",
            "c.csv",
            "--report",
            "p.json",
        ],
    );
    assert_eq!(csv_rows(d.join("c.csv")).len(), 1);
}
