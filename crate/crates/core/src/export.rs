//! Run configuration, spec-string parsing, OBJ meshes and JSON reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{geometry_report, Derivatives, GeometryReport};
use crate::loops::{make_loop, Mat2, TwistedLoop, C64, DEFAULT_TRUNC};
use crate::pipeline::{FrameSource, GridDomain, ImmersionSample, PlanarGrid};
use crate::potentials::{DomainAutomorphism, MeromorphicPotential, PotentialConfig};
use crate::symmetry::omega_loop;
use crate::tolerances::Tolerances;

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Sampled domain as given in a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridConfig {
    Plane {
        n: usize,
        #[serde(rename = "R")]
        r: f64,
    },
    Disk { n_r: usize, n_phi: usize, radius: f64 },
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig::Plane { n: 33, r: 1.0 }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<PlanarGrid> {
        match *self {
            GridConfig::Plane { n, r } => {
                if n < 9 {
                    return Err(Error::InvalidGrid(format!("n must be at least 9, got {n}")));
                }
                PlanarGrid::plane(n, r)
            }
            GridConfig::Disk { n_r, n_phi, radius } => {
                if n_r < 9 || n_phi < 9 {
                    return Err(Error::InvalidGrid("disk grids need n_r >= 9 and n_phi >= 9".into()));
                }
                PlanarGrid::disk(n_r, n_phi, radius)
            }
        }
    }

    /// Parses "n=65,R=1.5", "n=65x65,R=1.5" or "disk:n_r=17,n_phi=48,radius=0.9".
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |m: &str| Error::Parse(format!("grid spec '{spec}': {m}"));
        let (disk, body) = match spec.strip_prefix("disk:") {
            Some(rest) => (true, rest),
            None => (false, spec.strip_prefix("plane:").unwrap_or(spec)),
        };
        let mut n = None;
        let mut r = None;
        let (mut n_r, mut n_phi, mut radius) = (None, None, None);
        for kv in body.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad("expected key=value pairs"))?;
            let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad("bad integer"));
            let real = |v: &str| v.trim().parse::<f64>().map_err(|_| bad("bad number"));
            match (disk, k.trim()) {
                (false, "n") => {
                    let v = v.trim();
                    n = Some(match v.split_once(['x', 'X']) {
                        Some((a, b)) if a == b => int(a)?,
                        Some(_) => return Err(bad("only square grids are supported")),
                        None => int(v)?,
                    });
                }
                (false, "R") | (false, "r") => r = Some(real(v)?),
                (true, "n_r") => n_r = Some(int(v)?),
                (true, "n_phi") => n_phi = Some(int(v)?),
                (true, "radius") => radius = Some(real(v)?),
                (_, other) => return Err(bad(&format!("unknown key '{other}'"))),
            }
        }
        if disk {
            Ok(GridConfig::Disk {
                n_r: n_r.ok_or_else(|| bad("missing n_r"))?,
                n_phi: n_phi.ok_or_else(|| bad("missing n_phi"))?,
                radius: radius.ok_or_else(|| bad("missing radius"))?,
            })
        } else {
            Ok(GridConfig::Plane { n: n.ok_or_else(|| bad("missing n"))?, r: r.ok_or_else(|| bad("missing R"))? })
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub mesh: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn default_lambdas() -> Vec<f64> {
    vec![0.0]
}

fn default_trunc() -> usize {
    DEFAULT_TRUNC
}

/// Everything a run needs; unspecified keys take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub potential: PotentialConfig,
    #[serde(default)]
    pub grid: GridConfig,
    /// θ values of λ = e^{iθ}.
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_trunc")]
    pub trunc_degree: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
}

impl RunConfig {
    pub fn new(potential: PotentialConfig) -> Self {
        Self {
            potential,
            grid: GridConfig::default(),
            lambdas: default_lambdas(),
            trunc_degree: DEFAULT_TRUNC,
            tolerances: Tolerances::default(),
            outputs: Outputs::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.build()?;
        if self.lambdas.is_empty() {
            return Err(Error::InvalidParameter("at least one lambda is required".into()));
        }
        if let Some(t) = self.lambdas.iter().find(|t| !(0.0..2.0 * std::f64::consts::PI).contains(*t)) {
            return Err(Error::InvalidParameter(format!("theta {t} is outside [0, 2pi)")));
        }
        if self.trunc_degree == 0 {
            return Err(Error::InvalidParameter("trunc_degree must be positive".into()));
        }
        Ok(())
    }

    pub fn potential(&self) -> Result<MeromorphicPotential> {
        self.potential.build()
    }

    pub fn source(&self) -> Result<FrameSource> {
        let mut s = FrameSource::new(self.potential()?, self.trunc_degree);
        s.tol = self.tolerances;
        Ok(s)
    }
}

/// Parses "1.5", "-2i", "0.3-0.4i", "i".
pub fn parse_complex(s: &str) -> Result<C64> {
    let t = s.trim().replace(' ', "");
    let bad = || Error::Parse(format!("bad complex number '{s}'"));
    if t.is_empty() {
        return Err(bad());
    }
    let Some(body) = t.strip_suffix('i') else {
        return t.parse::<f64>().map(|re| C64::new(re, 0.0)).map_err(|_| bad());
    };
    // Split at the last sign that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let coef = |x: &str| match x {
        "" | "+" => Ok(1.0),
        "-" => Ok(-1.0),
        _ => x.parse::<f64>().map_err(|_| bad()),
    };
    match split {
        Some(k) => Ok(C64::new(body[..k].parse::<f64>().map_err(|_| bad())?, coef(&body[k..])?)),
        None => Ok(C64::new(0.0, coef(body)?)),
    }
}

/// Parses "rot:k[:re,im]", "trans:re,im" or "mobius:a,b,c,d".
pub fn parse_automorphism(spec: &str) -> Result<DomainAutomorphism> {
    let bad = |m: &str| Error::Parse(format!("automorphism '{spec}': {m}"));
    let (kind, rest) = spec.split_once(':').ok_or_else(|| bad("expected kind:args"))?;
    let reals = |s: &str| -> Result<Vec<f64>> {
        s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad("bad number"))).collect()
    };
    match kind {
        "rot" => {
            let (k, center) = match rest.split_once(':') {
                Some((k, c)) => {
                    let v = reals(c)?;
                    if v.len() != 2 {
                        return Err(bad("center must be re,im"));
                    }
                    (k, C64::new(v[0], v[1]))
                }
                None => (rest, C64::new(0.0, 0.0)),
            };
            let k: i64 = k.trim().parse().map_err(|_| bad("rotation order must be an integer"))?;
            if k == 0 {
                return Err(bad("rotation order must be nonzero"));
            }
            Ok(DomainAutomorphism::rotation(2.0 * std::f64::consts::PI / k as f64, center))
        }
        "trans" => {
            let v = reals(rest)?;
            if v.len() != 2 {
                return Err(bad("translation must be re,im"));
            }
            Ok(DomainAutomorphism::translation(C64::new(v[0], v[1])))
        }
        "mobius" => {
            let v: Vec<C64> = rest.split(',').map(parse_complex).collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(bad("mobius needs four coefficients a,b,c,d"));
            }
            DomainAutomorphism::mobius(v[0], v[1], v[2], v[3]).map_err(|e| bad(&e.to_string()))
        }
        _ => Err(bad("kind must be rot, trans or mobius")),
    }
}

/// One coefficient of a dressing loop in a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoeffJson {
    pub degree: i32,
    /// [row][col][re, im].
    pub matrix: [[[f64; 2]; 2]; 2],
}

/// Parses "omega:c" or the contents of a coefficient file (a JSON list of [`CoeffJson`]).
pub fn parse_h_plus(spec: &str, file_contents: Option<&str>, trunc: usize) -> Result<TwistedLoop> {
    if let Some(c) = spec.strip_prefix("omega:") {
        return omega_loop(parse_complex(c)?, trunc);
    }
    let text = file_contents.ok_or_else(|| Error::Parse(format!("h_plus spec '{spec}' is neither omega:c nor a file")))?;
    let coeffs: Vec<CoeffJson> = serde_json::from_str(text)?;
    if coeffs.iter().any(|c| c.degree < 0) {
        return Err(Error::Parse("dressing loops have nonnegative degrees only".into()));
    }
    let list: Vec<(i32, Mat2)> = coeffs
        .iter()
        .map(|c| {
            let e = |r: usize, s: usize| C64::new(c.matrix[r][s][0], c.matrix[r][s][1]);
            (c.degree, Mat2::new(e(0, 0), e(0, 1), e(1, 0), e(1, 1)))
        })
        .collect();
    make_loop(&list, trunc)
}

/// Wavefront OBJ of one sample: vertices, unit normals and faces over the grid.
/// Faces touching a flagged node are omitted.
pub fn obj_string(s: &ImmersionSample, flagged: &[bool]) -> String {
    let n = s.grid.len();
    let ok: Vec<bool> = (0..n).map(|i| s.valid[i] && !flagged.get(i).copied().unwrap_or(false)).collect();
    let mut index = vec![0usize; n];
    let mut out = String::new();
    let _ = writeln!(out, "# CMC surface, theta = {}", s.lambda.theta);
    let mut next = 1;
    for i in 0..n {
        if ok[i] {
            index[i] = next;
            next += 1;
            let p = s.points[i];
            let _ = writeln!(out, "v {} {} {}", p[0], p[1], p[2]);
        }
    }
    for i in 0..n {
        if ok[i] {
            let v = s.normals[i];
            let _ = writeln!(out, "vn {} {} {}", v[0], v[1], v[2]);
        }
    }
    let mut face = |ids: &[usize]| {
        if ids.iter().all(|&i| ok[i]) {
            out.push('f');
            for &i in ids {
                let _ = write!(out, " {0}//{0}", index[i]);
            }
            out.push('\n');
        }
    };
    match s.grid.domain {
        GridDomain::Plane { n: m, .. } => {
            for j in 0..m - 1 {
                for i in 0..m - 1 {
                    let a = j * m + i;
                    face(&[a, a + 1, a + m + 1, a + m]);
                }
            }
        }
        GridDomain::Disk { n_r, n_phi, .. } => {
            for k in 0..n_phi {
                face(&[0, 1 + k, 1 + (k + 1) % n_phi]);
            }
            for ring in 1..n_r - 1 {
                let base = |r: usize| 1 + (r - 1) * n_phi;
                for k in 0..n_phi {
                    let k1 = (k + 1) % n_phi;
                    face(&[base(ring) + k, base(ring + 1) + k, base(ring + 1) + k1, base(ring) + k1]);
                }
            }
        }
    }
    out
}

/// Writes via a temporary file in the same directory and a rename. Creates missing parent directories.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().ok_or_else(|| Error::Io(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::from(e)
    })
}

/// Mesh path for member k of `count`: "out.obj" becomes "out_1.obj" etc. when count > 1.
pub fn member_path(base: &Path, k: usize, count: usize) -> PathBuf {
    if count <= 1 {
        return base.to_path_buf();
    }
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match base.extension() {
        Some(ext) => format!("{stem}_{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{k}"),
    };
    base.with_file_name(name)
}

/// JSON report of a generate run.
#[derive(Debug, Clone, Serialize)]
pub struct GenerateReport {
    pub schema: u32,
    pub config: RunConfig,
    pub warnings: Vec<String>,
    pub meshes: Vec<PathBuf>,
    pub members: Vec<GeometryReport>,
}

/// Result of [`generate`]: samples plus their diagnostics.
pub struct Generated {
    pub samples: Vec<ImmersionSample>,
    pub report: GenerateReport,
    pub objs: Vec<String>,
}

/// Runs the pipeline for every λ of the config. Fails with AllNodesSingular when nothing is usable.
pub fn generate(config: &RunConfig) -> Result<Generated> {
    config.validate()?;
    let grid = config.grid.build()?;
    let source = config.source()?;
    let xi = source.potential.clone();
    let samples = crate::pipeline::immersion_family(&source, &grid, &config.lambdas)?;
    if samples.iter().all(|s| s.valid.iter().all(|v| !v)) {
        return Err(Error::AllNodesSingular);
    }
    let mut members = Vec::new();
    let mut objs = Vec::new();
    for s in &samples {
        let rep = geometry_report(s, &xi, Derivatives::Frame, &config.tolerances)?;
        objs.push(obj_string(s, &rep.degenerate));
        members.push(rep);
    }
    let meshes = match &config.outputs.mesh {
        Some(p) => (0..samples.len()).map(|k| member_path(p, k, samples.len())).collect(),
        None => Vec::new(),
    };
    let report = GenerateReport { schema: SCHEMA_VERSION, config: config.clone(), warnings: xi.warnings(), meshes, members };
    Ok(Generated { samples, report, objs })
}

/// Serializes any report with the schema tag attached at the top level.
pub fn with_schema<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("schema".into(), SCHEMA_VERSION.into());
    }
    Ok(serde_json::to_string_pretty(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_parsing() {
        assert_eq!(parse_complex("1.5").unwrap(), C64::new(1.5, 0.0));
        assert_eq!(parse_complex("-2i").unwrap(), C64::new(0.0, -2.0));
        assert_eq!(parse_complex("0.3-0.4i").unwrap(), C64::new(0.3, -0.4));
        assert_eq!(parse_complex("i").unwrap(), C64::new(0.0, 1.0));
        assert_eq!(parse_complex("1e-3+2e+1i").unwrap(), C64::new(1e-3, 20.0));
        assert!(parse_complex("x").is_err());
    }

    #[test]
    fn grid_specs() {
        assert_eq!(GridConfig::parse("n=65x65,R=1.5").unwrap(), GridConfig::Plane { n: 65, r: 1.5 });
        assert_eq!(GridConfig::parse("n=9,R=1").unwrap(), GridConfig::Plane { n: 9, r: 1.0 });
        assert!(matches!(GridConfig::parse("disk:n_r=9,n_phi=24,radius=0.5").unwrap(), GridConfig::Disk { .. }));
        assert!(GridConfig::parse("n=9x11,R=1").is_err());
        assert!(GridConfig::Plane { n: 7, r: 1.0 }.build().is_err());
    }

    #[test]
    fn automorphism_specs() {
        let g = parse_automorphism("rot:4").unwrap();
        assert!((g.apply(C64::new(1.0, 0.0)) - C64::new(0.0, 1.0)).norm() < 1e-15);
        let g = parse_automorphism("trans:1,0").unwrap();
        assert_eq!(g.apply(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        assert!(parse_automorphism("mobius:1,0.5,0.5,1").is_ok());
        assert!(parse_automorphism("mobius:1,2,0,1").is_err());
        assert!(parse_automorphism("spin:3").is_err());
    }

    #[test]
    fn config_defaults_and_rejections() {
        let c = RunConfig::from_json(r#"{"potential": {"type": "cylinder"}}"#).unwrap();
        assert_eq!(c.trunc_degree, DEFAULT_TRUNC);
        assert!(RunConfig::from_json(r#"{"potential": {"type": "cylinder"}, "lambdas": [7.0]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"potential": {"type": "cylinder"}, "tolerances": {"nope": 1}}"#).is_err());
        let c = RunConfig::from_json(r#"{"potential": {"type": "cylinder"}, "tolerances": {"gauge": 1e-5}}"#).unwrap();
        assert_eq!(c.tolerances.gauge, 1e-5);
    }

    #[test]
    fn member_paths() {
        assert_eq!(member_path(Path::new("a/out.obj"), 2, 3), PathBuf::from("a/out_2.obj"));
        assert_eq!(member_path(Path::new("out.obj"), 0, 1), PathBuf::from("out.obj"));
    }
}
