//! The TOML problem file.
//!
//! ```toml
//! vertex_count = 4
//! faces = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]]
//! radii = [1.5, 0.8, 1.1, 0.9]      # optional, default all 1
//! target = "constant"               # or a list of N curvatures
//!
//! [inversive]
//! default = 1.0                     # optional if every edge is listed
//! edges = [{ edge = [2, 3], value = 3.0 }]
//!
//! [solver]                          # every key optional
//! dt = 0.01
//! t_max = 200.0
//! tol = 1e-10
//! method = "rk4"                    # explicit-euler | rk4 | newton-hybrid
//! normalize = false
//! record_every = 1
//! max_subsets = 20
//! ```
//!
//! Vertices are numbered from 1 in the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::complex::TriangulatedSurface;
use crate::curvature::{InversivePacking, PackingMetric};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Method};
use crate::geometry::InversiveWeights;
use crate::potential::CurvatureTarget;

/// Tolerance on `Σ K̄ − 2πχ` for targets read from a file. Accepted targets
/// are then shifted so the sum is exact.
pub const FILE_TARGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub vertex_count: usize,
    pub faces: Vec<[usize; 3]>,
    #[serde(default)]
    pub inversive: InversiveSection,
    #[serde(default)]
    pub radii: Option<Vec<f64>>,
    #[serde(default)]
    pub target: Option<TargetSpec>,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InversiveSection {
    pub default: Option<f64>,
    #[serde(default)]
    pub edges: Vec<EdgeValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeValue {
    pub edge: [usize; 2],
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Named(String),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub dt: Option<f64>,
    pub t_max: Option<f64>,
    pub tol: Option<f64>,
    pub method: Option<String>,
    pub normalize: Option<bool>,
    pub record_every: Option<usize>,
    pub max_subsets: Option<usize>,
}

/// Failure to load a problem: unreadable or malformed text, or a document
/// that parses but describes an invalid problem.
#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Syntax(String),
    Invalid(Error),
}

impl std::fmt::Display for LoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LoadError::Io(e) => write!(f, "cannot read problem file: {e}"),
            LoadError::Syntax(e) => write!(f, "malformed problem file: {e}"),
            LoadError::Invalid(e) => write!(f, "{}", one_based(e)),
        }
    }
}

impl std::error::Error for LoadError {}

impl From<Error> for LoadError {
    fn from(e: Error) -> Self {
        LoadError::Invalid(e)
    }
}

/// A validated problem with zero-based internals.
#[derive(Debug, Clone)]
pub struct Problem {
    pub packing: InversivePacking,
    pub initial: PackingMetric,
    pub target: CurvatureTarget,
    pub explicit_target: bool,
    pub solver: SolverSection,
}

impl ProblemFile {
    pub fn parse(text: &str) -> std::result::Result<Self, LoadError> {
        toml::from_str(text).map_err(|e| LoadError::Syntax(e.to_string()))
    }

    pub fn read(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
        Self::parse(&text)
    }

    pub fn build(&self) -> Result<Problem> {
        let surface = TriangulatedSurface::from_one_based(self.vertex_count, &self.faces)?;
        let n = surface.vertex_count();

        let mut values = vec![self.inversive.default; surface.edges().len()];
        for entry in &self.inversive.edges {
            let [a, b] = entry.edge;
            let idx = (a >= 1 && b >= 1)
                .then(|| surface.edge_index(a - 1, b - 1))
                .flatten()
                .ok_or(Error::UnknownEdge([a.wrapping_sub(1), b.wrapping_sub(1)]))?;
            values[idx] = Some(entry.value);
        }
        let values = values
            .iter()
            .zip(surface.edges())
            .map(|(v, e)| {
                v.ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "edge [{}, {}] has no inversive distance and there is no default",
                        e[0] + 1,
                        e[1] + 1
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let weights = InversiveWeights::new(&surface, values)?;
        let packing = InversivePacking::new(surface, weights)?;

        let initial = match &self.radii {
            Some(r) => {
                if r.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        actual: r.len(),
                    });
                }
                PackingMetric::from_radii(r.clone())?
            }
            None => PackingMetric::uniform(n),
        };

        let (target, explicit_target) = match &self.target {
            None => (CurvatureTarget::constant(&packing), false),
            Some(TargetSpec::Named(name)) if name == "constant" => (CurvatureTarget::constant(&packing), false),
            Some(TargetSpec::Named(name)) => {
                return Err(Error::InvalidConfig(format!(
                    "target must be \"constant\" or a list of {n} numbers, got {name:?}"
                )))
            }
            Some(TargetSpec::Values(v)) => {
                let checked = CurvatureTarget::with_tolerance(&packing, v.clone(), FILE_TARGET_TOL)?;
                let shift = (checked.values().iter().sum::<f64>() - packing.total_curvature()) / n as f64;
                let exact = checked.values().iter().map(|x| x - shift).collect();
                (CurvatureTarget::with_tolerance(&packing, exact, FILE_TARGET_TOL)?, true)
            }
        };
        if let Some(m) = &self.solver.method {
            m.parse::<Method>()?;
        }
        Ok(Problem {
            packing,
            initial,
            target,
            explicit_target,
            solver: self.solver.clone(),
        })
    }
}

impl Problem {
    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        Ok(ProblemFile::read(path)?.build()?)
    }

    /// Flow settings from the `[solver]` section; unset keys keep defaults.
    pub fn flow_config(&self) -> Result<FlowConfig> {
        let mut c = FlowConfig::new(self.target.clone());
        let s = &self.solver;
        if let Some(v) = s.dt {
            c.dt = v;
        }
        if let Some(v) = s.t_max {
            c.t_max = v;
        }
        if let Some(v) = s.tol {
            c.residual_tol = v;
        }
        if let Some(m) = &s.method {
            c.method = m.parse()?;
        }
        if let Some(v) = s.normalize {
            c.normalize = v;
        }
        if let Some(v) = s.record_every {
            c.record_every = v;
        }
        Ok(c)
    }
}

/// The same error with vertex indices shifted to the file's numbering.
pub fn one_based(e: &Error) -> Error {
    let up = |v: usize| v.wrapping_add(1);
    match e.clone() {
        Error::VertexOutOfRange {
            face,
            vertex,
            vertex_count,
        } => Error::VertexOutOfRange {
            face: face.map(up),
            vertex: up(vertex),
            vertex_count,
        },
        Error::DegenerateFace(f) => Error::DegenerateFace(f.map(up)),
        Error::DuplicateFace(f) => Error::DuplicateFace(f.map(up)),
        Error::NonManifoldEdge { edge, count } => Error::NonManifoldEdge {
            edge: edge.map(up),
            count,
        },
        Error::DanglingVertex(v) => Error::DanglingVertex(up(v)),
        Error::SubsetVertexOutOfRange { vertex, vertex_count } => Error::SubsetVertexOutOfRange {
            vertex: up(vertex),
            vertex_count,
        },
        Error::NegativeInversiveDistance { edge, value } => Error::NegativeInversiveDistance {
            edge: edge.map(up),
            value,
        },
        Error::UnknownEdge(edge) => Error::UnknownEdge(edge.map(up)),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TETRA: &str = r#"
vertex_count = 4
faces = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]]
radii = [1.5, 0.8, 1.1, 0.9]

[inversive]
default = 1.0
"#;

    #[test]
    fn tetrahedron_file() {
        let p = ProblemFile::parse(TETRA).unwrap().build().unwrap();
        assert_eq!(p.packing.vertex_count(), 4);
        assert_eq!(p.initial.radii(), &[1.5, 0.8, 1.1, 0.9]);
        assert!(!p.explicit_target);
        assert_eq!(p.target.values(), &[PI; 4]);
    }

    #[test]
    fn negative_edge_is_named() {
        let text = format!("{TETRA}edges = [{{ edge = [2, 4], value = -0.5 }}]\n");
        let err = ProblemFile::parse(&text).unwrap().build().unwrap_err();
        assert_eq!(
            err,
            Error::NegativeInversiveDistance {
                edge: [1, 3],
                value: -0.5
            }
        );
        assert_eq!(
            one_based(&err).to_string(),
            "inversive distance must be finite and >= 0, got -0.5 on edge [2, 4]"
        );
    }

    #[test]
    fn open_shell_is_rejected() {
        let text = "vertex_count = 4\nfaces = [[1, 2, 3], [1, 2, 4], [1, 3, 4]]\n[inversive]\ndefault = 1.0\n";
        let err = ProblemFile::parse(text).unwrap().build().unwrap_err();
        assert!(matches!(one_based(&err), Error::NonManifoldEdge { edge: [2, 3], count: 1 }), "{err:?}");
    }

    #[test]
    fn missing_weight_needs_default() {
        let text = "vertex_count = 4\nfaces = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]]\n";
        assert!(matches!(
            ProblemFile::parse(text).unwrap().build(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn unknown_edge() {
        let text = "vertex_count = 4\nfaces = [[1, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]]\n[inversive]\ndefault = 1.0\nedges = [{ edge = [1, 9], value = 2.0 }]\n";
        assert!(matches!(
            ProblemFile::parse(text).unwrap().build(),
            Err(Error::UnknownEdge(_))
        ));
    }

    #[test]
    fn explicit_target_is_checked_and_made_exact() {
        let good = format!("target = [3.1415927, 3.1415926, 3.1415926, 3.1415927]\n{TETRA}");
        let p = ProblemFile::parse(&good).unwrap().build().unwrap();
        assert!(p.explicit_target);
        assert!((p.target.values().iter().sum::<f64>() - 4.0 * PI).abs() < 1e-14);

        let bad = format!("target = [1.0, 1.0, 1.0, 1.0]\n{TETRA}");
        assert!(matches!(
            ProblemFile::parse(&bad).unwrap().build(),
            Err(Error::BadTotalCurvature { .. })
        ));
    }

    #[test]
    fn solver_overrides() {
        let text = format!("{TETRA}[solver]\ndt = 0.05\nmethod = \"newton-hybrid\"\n");
        let c = ProblemFile::parse(&text).unwrap().build().unwrap().flow_config().unwrap();
        assert_eq!(c.dt, 0.05);
        assert_eq!(c.method, Method::NewtonHybrid);
        let bad = format!("{TETRA}[solver]\nmethod = \"leapfrog\"\n");
        assert!(ProblemFile::parse(&bad).unwrap().build().is_err());
    }

    #[test]
    fn syntax_errors_are_separate() {
        assert!(matches!(ProblemFile::parse("vertex_count = "), Err(LoadError::Syntax(_))));
        assert!(matches!(ProblemFile::parse("bogus = 1\nvertex_count = 4\nfaces = []"), Err(LoadError::Syntax(_))));
    }
}
