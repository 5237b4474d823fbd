use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dpw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpw")).current_dir(dir).args(args).output().expect("spawn dpw")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup(files: &[(&str, &str)]) -> TempDir {
    let d = tempfile::tempdir().unwrap();
    for (name, body) in files {
        fs::write(d.path().join(name), body).unwrap();
    }
    d
}

const CYL: &str = r#"{"type":"cylinder"}"#;
const SMYTH2: &str = r#"{"type":"smyth","m":2,"c":[1,0]}"#;

type V3 = [f64; 3];

struct Obj {
    v: Vec<V3>,
    vn: Vec<V3>,
    faces: Vec<Vec<usize>>,
}

fn parse_obj(text: &str) -> Obj {
    let mut o = Obj { v: vec![], vn: vec![], faces: vec![] };
    let triple = |it: &mut dyn Iterator<Item = &str>| -> V3 {
        let x: Vec<f64> = it.map(|t| t.parse().unwrap()).collect();
        assert_eq!(x.len(), 3);
        [x[0], x[1], x[2]]
    };
    for line in text.lines() {
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => o.v.push(triple(&mut it)),
            Some("vn") => o.vn.push(triple(&mut it)),
            Some("f") => o.faces.push(
                it.map(|t| {
                    let (a, b) = t.split_once("//").expect("v//vn");
                    assert_eq!(a, b);
                    a.parse().unwrap()
                })
                .collect(),
            ),
            Some(t) if t.starts_with('#') => {}
            None => {}
            Some(t) => panic!("unexpected OBJ record {t}"),
        }
    }
    o
}

fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}
fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Largest deviation of the mesh from a round cylinder of radius 1 (|H| = 1/2).
/// The axis is orthogonal to every normal; points shifted by ±N land on it.
fn cylinder_deviation(o: &Obj) -> f64 {
    let mut axis = [0.0; 3];
    for a in &o.vn {
        for b in &o.vn {
            let c = cross(*a, *b);
            if dot(c, c) > dot(axis, axis) {
                axis = c;
            }
        }
    }
    let axis = scale(axis, 1.0 / dot(axis, axis).sqrt());
    let perp = |p: V3| sub(p, scale(axis, dot(p, axis)));
    let centre = |s: f64| -> (V3, f64) {
        let q: Vec<V3> = o.v.iter().zip(&o.vn).map(|(p, n)| perp(sub(*p, scale(*n, s)))).collect();
        let c = q.iter().fold([0.0; 3], |acc, p| [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]);
        let c = scale(c, 1.0 / q.len() as f64);
        let spread = q.iter().map(|p| dot(sub(*p, c), sub(*p, c)).sqrt()).fold(0.0, f64::max);
        (c, spread)
    };
    let (c1, s1) = centre(1.0);
    let (c2, s2) = centre(-1.0);
    let c = if s1 < s2 { c1 } else { c2 };
    o.v.iter().map(|p| (dot(sub(perp(*p), c), sub(perp(*p), c)).sqrt() - 1.0).abs()).fold(0.0, f64::max)
}

#[test]
fn generate_cylinder_mesh_is_a_unit_cylinder() {
    let d = setup(&[("cyl.json", CYL)]);
    let o = dpw(d.path(), &["generate", "--potential", "cyl.json", "--grid", "n=17,R=1", "--out", "cyl.obj"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let obj = parse_obj(&fs::read_to_string(d.path().join("cyl.obj")).unwrap());
    assert_eq!(obj.v.len(), 17 * 17);
    assert_eq!(obj.v.len(), obj.vn.len());
    assert_eq!(obj.faces.len(), 16 * 16);
    for f in &obj.faces {
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|&i| (1..=obj.v.len()).contains(&i)));
    }
    for n in &obj.vn {
        assert!((dot(*n, *n).sqrt() - 1.0).abs() < 1e-6);
    }
    let dev = cylinder_deviation(&obj);
    assert!(dev <= 1e-5, "radial deviation {dev:e}");

    // The input potential file must survive.
    assert_eq!(fs::read_to_string(d.path().join("cyl.json")).unwrap(), CYL);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("cyl_report.json")).unwrap()).unwrap();
    assert_eq!(rep["schema"], 1);
    let s = &rep["members"][0]["summary"];
    assert!(s["max_abs_h_error"].as_f64().unwrap() < 1e-9);
    assert!(s["max_gauss_codazzi"].as_f64().unwrap() < 1e-8);
}

#[test]
fn generate_is_deterministic() {
    let run = || {
        let d = setup(&[("s.json", SMYTH2)]);
        let o = dpw(d.path(), &["generate", "--potential", "s.json", "--grid", "n=13,R=0.8", "--lambdas", "0,1.2", "--out", "m.obj"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        ["m_0.obj", "m_1.obj", "m_report.json"].map(|f| fs::read(d.path().join(f)).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn report_may_not_overwrite_input() {
    let d = setup(&[("cyl.json", CYL)]);
    let o = dpw(d.path(), &["generate", "--potential", "cyl.json", "--grid", "n=9,R=1", "--report", "cyl.json"]);
    assert_eq!(code(&o), 2);
    assert_eq!(fs::read_to_string(d.path().join("cyl.json")).unwrap(), CYL);
}

#[test]
fn smyth_rotation_verdicts() {
    let d = setup(&[("s.json", SMYTH2)]);
    let yes = dpw(d.path(), &["check-symmetry", "--potential", "s.json", "--grid", "n=17,R=0.6", "-a", "rot:4", "--report", "r4.json"]);
    assert_eq!(code(&yes), 0, "{}", String::from_utf8_lossy(&yes.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("r4.json")).unwrap()).unwrap();
    assert_eq!(rep["verdict"], "symmetric");
    assert_eq!(rep["schema"], 1);

    let no = dpw(d.path(), &["check-symmetry", "--potential", "s.json", "--grid", "n=17,R=0.6", "-a", "rot:3"]);
    assert_eq!(code(&no), 1);
    let rep: serde_json::Value = serde_json::from_slice(&no.stdout).unwrap();
    assert_ne!(rep["verdict"], "symmetric");
}

#[test]
fn dressing_preserves_translation_only_for_unit_c() {
    let d = setup(&[]);
    let ok = dpw(d.path(), &["dress", "--h-plus", "omega:1", "-a", "trans:1,0"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let broken = dpw(d.path(), &["dress", "--h-plus", "omega:4", "-a", "trans:1,0"]);
    assert_eq!(code(&broken), 1);
}

#[test]
fn dress_reads_coefficient_file() {
    let h = r#"[{"degree":0,"matrix":[[[1,0],[0,0]],[[0,0],[1,0]]]}]"#;
    let d = setup(&[("h.json", h)]);
    let o = dpw(d.path(), &["dress", "--h-plus", "h.json", "-a", "trans:0.5,0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn cylinder_translation_is_a_symmetry() {
    let d = setup(&[("cyl.json", CYL)]);
    let o = dpw(d.path(), &["check-symmetry", "--potential", "cyl.json", "--grid", "n=9,R=0.5", "-a", "trans:1,0"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn smyth_generate_reports_mean_curvature() {
    let d = setup(&[("s1.json", r#"{"type":"smyth","m":1,"c":[1,0]}"#)]);
    let o = dpw(d.path(), &["generate", "--potential", "s1.json", "--grid", "n=17,R=0.8", "--out", "s1.obj"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("s1_report.json")).unwrap()).unwrap();
    let s = &rep["members"][0]["summary"];
    assert!((s["mean_h"].as_f64().unwrap() + 0.5).abs() < 1e-9);
    assert!(s["max_abs_h_error"].as_f64().unwrap() < 1e-9);
}

#[test]
fn pole_inside_grid_exits_3() {
    let pole = r#"{"type":"custom","f_num":[[1,0]],"f_den":[[-0.5,0],[1,0]],"E":[[1,0]]}"#;
    let d = setup(&[("p.json", pole)]);
    let o = dpw(d.path(), &["generate", "--potential", "p.json", "--grid", "n=9,R=1"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("0.5"));
}

#[test]
fn invalid_inputs_exit_2() {
    let d = setup(&[("cyl.json", CYL), ("bad.json", r#"{"type":"torus"}"#)]);
    let cases: [&[&str]; 6] = [
        &["generate", "--potential", "missing.json"],
        &["generate", "--potential", "bad.json"],
        &["generate", "--potential", "cyl.json", "--grid", "n=3,R=1"],
        &["generate", "--potential", "cyl.json", "--lambdas", "7"],
        &["check-symmetry", "--potential", "cyl.json", "-a", "spin:2"],
        &["generate"],
    ];
    for args in cases {
        let o = dpw(d.path(), args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn full_config_file_round_trip() {
    let cfg = r#"{"potential":{"type":"cylinder"},"grid":{"kind":"disk","n_r":9,"n_phi":12,"radius":0.8},
                  "lambdas":[0.5],"outputs":{"mesh":"out/d.obj","report":"out/d.json"}}"#;
    let d = setup(&[("run.json", cfg)]);
    let o = dpw(d.path(), &["generate", "--config", "run.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let obj = parse_obj(&fs::read_to_string(d.path().join("out/d.obj")).unwrap());
    assert_eq!(obj.v.len(), 1 + 8 * 12);
    assert!(cylinder_deviation(&obj) <= 1e-5);
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/d.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["lambdas"][0], 0.5);
}
