//! Run configuration: TOML schema and conversion into solver objects.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use num_complex::Complex64;
use serde::Deserialize;

use mlfrac_core::mlf::{ml_eval, MlParams};
use mlfrac_core::nonlinear::{NonlinearRhs, SolveConfig};
use mlfrac_core::{MatrixSymbol, PolySymbol, Propagator, SourceSpec, SpectralGrid, StateField};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub symbol: SymbolConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub nonlinear: Option<NonlinearConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub beta: f64,
    pub horizon: f64,
    pub t_out: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub extent: Vec<f64>,
    pub points: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolConfig {
    pub m: usize,
    #[serde(default)]
    pub entries: Vec<SymbolEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolEntry {
    /// 1-based row index
    pub row: usize,
    /// 1-based column index
    pub col: usize,
    pub terms: Vec<TermSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub alpha: Vec<u32>,
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: String,
    #[serde(default)]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub width: Vec<f64>,
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default)]
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    #[serde(default = "zero_kind")]
    pub kind: String,
    #[serde(default)]
    pub amplitude: Vec<f64>,
    #[serde(default)]
    pub width: Vec<f64>,
    #[serde(default)]
    pub center: Vec<f64>,
    /// H(t, x) = e^{-decay_rate t} g(x); 0 keeps the source constant in time
    #[serde(default)]
    pub decay_rate: f64,
    #[serde(default)]
    pub paths: Vec<PathBuf>,
}

fn zero_kind() -> String {
    "zero".into()
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: zero_kind(),
            amplitude: vec![],
            width: vec![],
            center: vec![],
            decay_rate: 0.0,
            paths: vec![],
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearConfig {
    pub rhs: String,
    #[serde(default)]
    pub coefficients: Vec<f64>,
    pub lipschitz_l0: f64,
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub target_delta: f64,
    pub quadrature_nodes: usize,
    pub time_steps: usize,
    pub max_picard_iters: usize,
    pub lipschitz_audit_samples: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            picard_tol: d.picard_tol,
            target_delta: d.target_delta,
            quadrature_nodes: d.quadrature_nodes,
            time_steps: d.time_steps,
            max_picard_iters: d.max_picard_iters,
            lipschitz_audit_samples: d.lipschitz_audit_samples,
        }
    }
}

#[derive(Debug, Deserialize, Clone)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// max |stored field - oracle march| across manifest outputs
    pub oracle_tol: f64,
    /// max Caputo-L1 residual of the stored outputs over t >= horizon/4
    pub residual_tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            oracle_tol: 1e-3,
            residual_tol: 0.1,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).context("config parse error")?;
        cfg.validate_basic()?;
        Ok(cfg)
    }

    fn validate_basic(&self) -> Result<()> {
        let p = &self.problem;
        if !(p.beta > 0.0 && p.beta <= 1.0) {
            bail!("problem.beta must be in (0, 1], got {}", p.beta);
        }
        if !(p.horizon > 0.0) {
            bail!("problem.horizon must be > 0");
        }
        if p.t_out.is_empty() {
            bail!("problem.t_out must not be empty");
        }
        if p.t_out.windows(2).any(|w| w[1] < w[0]) {
            bail!("problem.t_out must be sorted");
        }
        for &t in &p.t_out {
            if t < 0.0 || t > p.horizon * (1.0 + 1e-12) {
                bail!("output time {t} outside [0, {}]", p.horizon);
            }
        }
        if self.grid.extent.len() != self.grid.points.len() {
            bail!("grid.extent and grid.points must have the same length");
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<SpectralGrid> {
        Ok(SpectralGrid::new(&self.grid.extent, &self.grid.points)?)
    }

    pub fn build_symbol(&self) -> Result<MatrixSymbol> {
        let m = self.symbol.m;
        let n = self.grid.extent.len();
        let mut entries = vec![PolySymbol::zero(n); m * m];
        for e in &self.symbol.entries {
            if e.row == 0 || e.row > m || e.col == 0 || e.col > m {
                bail!("symbol entry ({}, {}) outside 1..={m}", e.row, e.col);
            }
            let terms: Vec<(Vec<u32>, Complex64)> = e
                .terms
                .iter()
                .map(|t| (t.alpha.clone(), Complex64::new(t.re, t.im)))
                .collect();
            entries[(e.row - 1) * m + (e.col - 1)] = PolySymbol::new(n, terms)?;
        }
        Ok(MatrixSymbol::new(m, n, entries)?)
    }

    pub fn build_initial(&self, grid: &SpectralGrid, base_dir: &Path) -> Result<StateField> {
        let m = self.symbol.m;
        build_profile(&self.initial, grid, m, base_dir)
    }

    pub fn build_source(&self, grid: &SpectralGrid, base_dir: &Path) -> Result<SourceSpec> {
        let m = self.symbol.m;
        match self.source.kind.as_str() {
            "zero" => Ok(SourceSpec::Zero),
            "gaussian" => {
                let profile = InitialConfig {
                    kind: "gaussian".into(),
                    amplitude: self.source.amplitude.clone(),
                    width: self.source.width.clone(),
                    center: self.source.center.clone(),
                    wavevector: vec![],
                    path: None,
                };
                let g = build_profile(&profile, grid, m, base_dir)?;
                let rate = self.source.decay_rate;
                if rate == 0.0 {
                    Ok(SourceSpec::Constant(g))
                } else {
                    Ok(SourceSpec::Callback(Box::new(move |t| {
                        let mut f = g.clone();
                        let scale = (-rate * t).exp();
                        for c in 0..f.components() {
                            for v in f.component_mut(c) {
                                *v *= scale;
                            }
                        }
                        Ok(f)
                    })))
                }
            }
            "file-series" => {
                if self.source.paths.len() < 2 {
                    bail!("file-series source needs at least two field files");
                }
                let fields = self
                    .source
                    .paths
                    .iter()
                    .map(|p| Ok(mlfrac_core::field_io::read_field(&base_dir.join(p))?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SourceSpec::Sampled {
                    horizon: self.problem.horizon,
                    fields,
                })
            }
            other => bail!("unknown source kind '{other}'"),
        }
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            horizon: self.problem.horizon,
            time_steps: self.tolerances.time_steps,
            quadrature_nodes: self.tolerances.quadrature_nodes,
            picard_tol: self.tolerances.picard_tol,
            target_delta: self.tolerances.target_delta,
            max_picard_iters: self.tolerances.max_picard_iters,
            lipschitz_audit_samples: self.tolerances.lipschitz_audit_samples,
            seed: self.problem.seed,
        }
    }

    /// Named built-in nonlinear right-hand sides. L0 formulas:
    /// - `sine`: h_j = c_j sin(u_j), L0 = max_j |c_j|
    /// - `cubic`: h_j = c_j u_j^3, locally Lipschitz; declare
    ///   L0 >= 3 max|c_j| U^2 for the expected amplitude range U
    /// - `logistic-coupling`: h_j = c_j u_j (1 - sum_k u_k); declare
    ///   L0 >= max|c_j| (1 + (m+1) U) for the expected amplitude range U
    /// - `manufactured-decay`: forcing that makes e^{-t} Phi(x) the exact
    ///   solution, plus a coefficients[0]-scaled sine coupling; L0 = c_0
    pub fn build_rhs(
        &self,
        prop: &Propagator,
        phi: &StateField,
    ) -> Result<NonlinearRhs> {
        let nl = self
            .nonlinear
            .as_ref()
            .context("config has no [nonlinear] section")?;
        let m = self.symbol.m;
        let mut coeff = nl.coefficients.clone();
        coeff.resize(m.max(1), *coeff.first().unwrap_or(&0.0));
        let l0 = nl.lipschitz_l0;
        match nl.rhs.as_str() {
            "sine" => Ok(NonlinearRhs::new(l0, move |_t, _flat, _x, u, out| {
                for j in 0..out.len() {
                    out[j] = coeff[j] * u[j].sin();
                }
            })?),
            "cubic" => Ok(NonlinearRhs::new(l0, move |_t, _flat, _x, u, out| {
                for j in 0..out.len() {
                    out[j] = coeff[j] * u[j] * u[j] * u[j];
                }
            })?),
            "logistic-coupling" => Ok(NonlinearRhs::new(l0, move |_t, _flat, _x, u, out| {
                let total: Complex64 = u.iter().sum();
                for j in 0..out.len() {
                    out[j] = coeff[j] * u[j] * (Complex64::ONE - total);
                }
            })?),
            "manufactured-decay" => {
                let eps = *coeff.first().unwrap_or(&0.0);
                let beta = prop.beta();
                let apsi = prop.symbol().apply(&phi.to_frequency()?)?.fft_inverse()?;
                let psi_data: Vec<Vec<Complex64>> =
                    (0..m).map(|c| phi.component(c).to_vec()).collect();
                let apsi_data: Vec<Vec<Complex64>> =
                    (0..m).map(|c| apsi.component(c).to_vec()).collect();
                let dparams = MlParams::new(1.0, 2.0 - beta)?;
                Ok(NonlinearRhs::new(l0, move |t, flat, _x, u, out| {
                    let decay = (-t).exp();
                    let dtb = if t == 0.0 {
                        0.0
                    } else {
                        -t.powf(1.0 - beta) * ml_eval(dparams, -t).map(|r| r.value).unwrap_or(0.0)
                    };
                    for j in 0..out.len() {
                        let ustar = decay * psi_data[j][flat];
                        out[j] = dtb * psi_data[j][flat]
                            + decay * apsi_data[j][flat]
                            + eps * (u[j].sin() - ustar.sin());
                    }
                })?)
            }
            other => bail!("unknown nonlinear rhs '{other}'"),
        }
    }
}

fn build_profile(
    cfg: &InitialConfig,
    grid: &SpectralGrid,
    m: usize,
    base_dir: &Path,
) -> Result<StateField> {
    let n = grid.dim();
    let center = if cfg.center.is_empty() {
        vec![0.0; n]
    } else if cfg.center.len() == n {
        cfg.center.clone()
    } else {
        bail!("center must have {n} entries");
    };
    let per_component = |v: &Vec<f64>, name: &str, default: f64| -> Result<Vec<f64>> {
        match v.len() {
            0 => Ok(vec![default; m]),
            1 => Ok(vec![v[0]; m]),
            l if l == m => Ok(v.clone()),
            _ => bail!("{name} must have 1 or {m} entries"),
        }
    };
    match cfg.kind.as_str() {
        "gaussian" => {
            let amp = per_component(&cfg.amplitude, "initial.amplitude", 1.0)?;
            let width = per_component(&cfg.width, "initial.width", 0.25)?;
            Ok(StateField::from_fn_physical(grid.clone(), m, move |c, x| {
                let r2: f64 = x
                    .iter()
                    .zip(&center)
                    .map(|(xi, ci)| (xi - ci) * (xi - ci))
                    .sum();
                Complex64::new(amp[c] * (-r2 / (2.0 * width[c])).exp(), 0.0)
            }))
        }
        "plane-wave" => {
            if cfg.wavevector.len() != n {
                bail!("plane-wave needs a wavevector with {n} entries");
            }
            let amp = per_component(&cfg.amplitude, "initial.amplitude", 1.0)?;
            let k = cfg.wavevector.clone();
            Ok(StateField::from_fn_physical(grid.clone(), m, move |c, x| {
                let phase: f64 = x.iter().zip(&k).map(|(xi, ki)| xi * ki).sum();
                Complex64::new(0.0, -phase).exp() * amp[c]
            }))
        }
        "file" => {
            let path = cfg
                .path
                .as_ref()
                .context("initial.kind = \"file\" needs initial.path")?;
            let f = mlfrac_core::field_io::read_field(&base_dir.join(path))?;
            if f.components() != m {
                bail!("initial field has {} components, need {m}", f.components());
            }
            Ok(f)
        }
        other => bail!("unknown initial kind '{other}'"),
    }
}
