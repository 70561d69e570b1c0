use henon_lab::critical::SearchOpts;
use henon_lab::henon::{DegeneratingFamily, FactorFamily, HenonMap, MapFamily};
use henon_lab::{Poly1D, C64};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ScanFamily,
    ScanDegeneration,
    DegenerateLocus,
    TangencyReport,
    DimensionTable,
    #[serde(alias = "line_tangency")]
    LineTangencyCount,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ScanFamily => "scan_family",
            ExperimentKind::ScanDegeneration => "scan_degeneration",
            ExperimentKind::DegenerateLocus => "degenerate_locus",
            ExperimentKind::TangencyReport => "tangency_report",
            ExperimentKind::DimensionTable => "dimension_table",
            ExperimentKind::LineTangencyCount => "line_tangency_count",
        }
    }
}

/// One-parameter family of maps. Parameter values come from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    /// (λw + p(z), λz).
    Jacobian { poly: Poly1D },
    /// (a·w + z² + λ, a·z).
    Constant { a: C64 },
    /// (b·w + p(z), b·z), degenerating to p at b = 0.
    Degeneration { poly: Poly1D },
    /// Arbitrary polynomial dependence; `base_poly` marks a degenerating family.
    Custom {
        #[serde(default)]
        parameter: Option<String>,
        factors: Vec<FactorFamily>,
        #[serde(default)]
        base_poly: Option<Poly1D>,
    },
}

impl FamilyConfig {
    pub fn map_family(&self) -> MapFamily {
        match self {
            FamilyConfig::Jacobian { poly } => MapFamily::jacobian_family(poly),
            FamilyConfig::Constant { a } => MapFamily::quadratic_constant_family(*a),
            FamilyConfig::Degeneration { poly } => MapFamily::degeneration(poly),
            FamilyConfig::Custom { parameter, factors, .. } => MapFamily {
                parameter: parameter.clone().unwrap_or_else(|| "b".into()),
                factors: factors.clone(),
            },
        }
    }

    pub fn at(&self, lambda: C64) -> henon_lab::Result<HenonMap> {
        self.map_family().at(lambda)
    }

    pub fn degenerating(&self) -> Result<DegeneratingFamily, RunError> {
        match self {
            FamilyConfig::Degeneration { poly } => Ok(DegeneratingFamily::standard(poly)),
            FamilyConfig::Custom { base_poly: Some(p), .. } => DegeneratingFamily::new(p.clone(), self.map_family())
                .map_err(|e| RunError::Config(format!("family: {e}"))),
            _ => Err(RunError::Config(
                "family: scan_degeneration needs type = \"degeneration\" or a custom family with base_poly".into(),
            )),
        }
    }
}

/// Parameter grid: explicit values, or `points` evenly spaced from `start` to `end`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<C64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl GridConfig {
    pub fn resolve(&self) -> Result<Vec<C64>, RunError> {
        let v = match (&self.values, self.start, self.end, self.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(s), Some(e), Some(n)) => match n {
                0 => Vec::new(),
                1 => vec![s],
                _ => (0..n).map(|i| s + (e - s) * (i as f64 / (n - 1) as f64)).collect(),
            },
            _ => {
                return Err(RunError::Config(
                    "grid: give either `values` or all of `start`, `end`, `points`".into(),
                ))
            }
        };
        if v.is_empty() {
            return Err(RunError::Config("grid: no parameter values".into()));
        }
        if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(RunError::Config("grid: non-finite parameter value".into()));
        }
        Ok(v)
    }
}

/// Estimator settings. Unset fields take per-experiment defaults, which are
/// written back into the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSettings {
    pub saddle_period: Option<usize>,
    pub saddle_grid: Option<usize>,
    pub bedford_smillie: Option<bool>,
    pub rho: Option<f64>,
    pub annulus_a: Option<f64>,
    pub birkhoff_depth: Option<usize>,
    pub birkhoff_samples: Option<usize>,
    pub search: Option<SearchOpts>,
}

impl MethodSettings {
    pub fn resolved(&self, kind: ExperimentKind) -> MethodSettings {
        let period = match kind {
            ExperimentKind::ScanDegeneration => 8,
            _ => 6,
        };
        MethodSettings {
            saddle_period: Some(self.saddle_period.unwrap_or(period)),
            saddle_grid: Some(self.saddle_grid.unwrap_or(0)),
            bedford_smillie: Some(self.bedford_smillie.unwrap_or(kind != ExperimentKind::ScanDegeneration)),
            rho: self.rho,
            annulus_a: self.annulus_a,
            birkhoff_depth: Some(self.birkhoff_depth.unwrap_or(30)),
            birkhoff_samples: Some(self.birkhoff_samples.unwrap_or(10_000)),
            search: Some(self.search.unwrap_or_default()),
        }
    }

    pub fn period(&self) -> usize {
        self.saddle_period.unwrap_or(6)
    }

    pub fn grid(&self) -> usize {
        self.saddle_grid.unwrap_or(0)
    }

    pub fn search(&self) -> SearchOpts {
        self.search.unwrap_or_default()
    }
}

/// Square Q in the φ⁺-plane for line tangency counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareConfig {
    pub center: C64,
    pub side: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    /// Heights w₀ of the horizontal lines.
    pub w0: Vec<C64>,
    /// Number of iterates; chosen from the annulus conditions when unset.
    pub iterations: Option<usize>,
    /// Q; defaults to a square around the heaviest postcritical atom.
    pub square: Option<SquareConfig>,
    /// Relative shrink δ of Q.
    pub delta: Option<f64>,
    /// Annulus level A; defaults to 1.1 × the torus maximum of the map.
    pub annulus_a: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub stem: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub methods: MethodSettings,
    /// Extra one-dimensional rows for dimension_table.
    #[serde(default)]
    pub polys: Vec<Poly1D>,
    #[serde(default)]
    pub line: Option<LineConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, family: FamilyConfig, grid: Vec<C64>) -> Self {
        ExperimentConfig {
            kind: Some(kind),
            family: Some(family),
            grid: Some(GridConfig {
                values: Some(grid),
                ..Default::default()
            }),
            methods: MethodSettings::default(),
            polys: Vec::new(),
            line: None,
            output: OutputConfig::default(),
            seed: 0,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn kind(&self) -> Result<ExperimentKind, RunError> {
        self.kind.ok_or_else(|| RunError::Config("missing field `kind`".into()))
    }

    pub fn family(&self) -> Result<&FamilyConfig, RunError> {
        self.family.as_ref().ok_or_else(|| RunError::Config("missing field `family`".into()))
    }

    pub fn grid_values(&self) -> Result<Vec<C64>, RunError> {
        self.grid
            .as_ref()
            .ok_or_else(|| RunError::Config("missing field `grid`".into()))?
            .resolve()
    }

    /// Checks required fields and fills defaults. The result is what gets
    /// recorded in the sidecar.
    pub fn validate(&self) -> Result<ExperimentConfig, RunError> {
        let kind = self.kind()?;
        let mut out = self.clone();
        out.methods = self.methods.resolved(kind);
        match kind {
            ExperimentKind::ScanDegeneration => {
                self.family()?.degenerating()?;
                if self.grid.is_none() {
                    out.grid = Some(GridConfig {
                        values: Some([0.3, 0.1, 0.03, 0.01].iter().map(|&b| C64::new(b, 0.0)).collect()),
                        ..Default::default()
                    });
                }
            }
            ExperimentKind::DimensionTable => {
                if self.family.is_none() && self.polys.is_empty() {
                    return Err(RunError::Config("missing field `family` (or `polys`)".into()));
                }
                if self.family.is_some() {
                    self.grid_values()?;
                }
            }
            ExperimentKind::LineTangencyCount => {
                self.family()?;
                let line = self.line.as_ref().ok_or_else(|| RunError::Config("missing field `line`".into()))?;
                if line.w0.is_empty() {
                    return Err(RunError::Config("line.w0: no lines".into()));
                }
                if let Some(s) = line.square {
                    if !(s.side > 0.0) {
                        return Err(RunError::Config("line.square.side must be positive".into()));
                    }
                }
            }
            _ => {
                self.family()?;
            }
        }
        if kind != ExperimentKind::DimensionTable || self.family.is_some() {
            out.grid_values()?;
        }
        if let Some(r) = out.methods.rho {
            if !(r > 0.0 && r.is_finite()) {
                return Err(RunError::Config("methods.rho must be positive".into()));
            }
        }
        if out.methods.period() == 0 {
            return Err(RunError::Config("methods.saddle_period must be at least 1".into()));
        }
        Ok(out)
    }
}
