//! Linear solver: the propagator S(t,D) built from the eigendecomposed
//! symbol (diagonal Mittag-Leffler matrix functions per frequency) and the
//! Duhamel source term W(t) = int_0^t S'(eta, D) H(t - eta) d eta.
//!
//! The Duhamel quadrature is product integration: the singular kernel
//! eta^{beta-1} E_{beta,beta}(-lambda eta^beta) is integrated exactly
//! against a piecewise-linear-in-time interpolant of the transformed source,
//! using the antiderivatives
//!   I0(x) = x^beta     E_{beta,beta+1}(-lambda x^beta)
//!   J1(x) = x^{beta+1} E_{beta,beta+2}(-lambda x^beta),
//! which are uniformly stable evaluations of (1 - E_beta(-lambda x^beta))/lambda
//! and its running integral.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Space, SpectralGrid, StateField};
use crate::mlf::{MlEvaluator, MlParams};
use crate::symbol::{EigenDecomp, MatrixSymbol, ValidationReport};

/// Default number of product-integration panels for the Duhamel term.
pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// Inhomogeneous source H(t, x).
pub enum SourceSpec {
    Zero,
    /// Time-independent H(x); uses the closed-form kernel integral.
    Constant(StateField),
    /// Uniform time samples over [0, horizon]; linearly interpolated.
    Sampled {
        horizon: f64,
        fields: Vec<StateField>,
    },
    /// Pointwise-in-time evaluator returning a physical-space field.
    Callback(Box<dyn Fn(f64) -> Result<StateField> + Send + Sync>),
}

impl SourceSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, SourceSpec::Zero)
    }

    /// Evaluate the source at a single time (physical space).
    pub fn eval(&self, t: f64) -> Result<Option<StateField>> {
        match self {
            SourceSpec::Zero => Ok(None),
            SourceSpec::Constant(f) => Ok(Some(f.to_physical()?)),
            SourceSpec::Sampled { horizon, fields } => {
                if fields.len() < 2 {
                    return Err(Error::Config(
                        "sampled source needs at least two fields".into(),
                    ));
                }
                let steps = fields.len() - 1;
                let dt = horizon / steps as f64;
                if t < -1e-12 || t > horizon * (1.0 + 1e-12) {
                    return Err(Error::Domain(format!(
                        "source queried at t = {t} outside [0, {horizon}]"
                    )));
                }
                let pos = (t / dt).clamp(0.0, steps as f64);
                let i = (pos.floor() as usize).min(steps - 1);
                let w = pos - i as f64;
                let a = fields[i].to_physical()?;
                let b = fields[i + 1].to_physical()?;
                let mut out = a.clone();
                for c in 0..out.components() {
                    let (bc, oc) = (b.component(c), out.component_mut(c));
                    for (o, &bv) in oc.iter_mut().zip(bc) {
                        *o = *o * (1.0 - w) + bv * w;
                    }
                }
                Ok(Some(out))
            }
            SourceSpec::Callback(f) => Ok(Some(f(t)?.to_physical()?)),
        }
    }
}

/// Per-lattice-mode kernel antiderivative tables on a uniform grid.
pub(crate) struct ModeKernel {
    /// hat weights: contribution of the earlier sample of panel j = i - p
    pub a: Vec<f64>,
    /// hat weights: contribution of the later sample
    pub b: Vec<f64>,
}

impl ModeKernel {
    /// Tables for panels of width `dt`, indices 1..=panels.
    pub fn build(
        lambda: f64,
        dt: f64,
        panels: usize,
        beta: f64,
        e_b1: &MlEvaluator,
        e_b2: &MlEvaluator,
    ) -> Result<Self> {
        let mut i0 = Vec::with_capacity(panels + 1);
        let mut j1 = Vec::with_capacity(panels + 1);
        i0.push(0.0);
        j1.push(0.0);
        for j in 1..=panels {
            let x = j as f64 * dt;
            let u = -lambda * x.powf(beta);
            i0.push(x.powf(beta) * e_b1.eval(u)?.value);
            j1.push(x.powf(beta + 1.0) * e_b2.eval(u)?.value);
        }
        let mut a = vec![0.0; panels + 1];
        let mut b = vec![0.0; panels + 1];
        for j in 1..=panels {
            let (tj, tjm) = (j as f64 * dt, (j - 1) as f64 * dt);
            let m0 = i0[j] - i0[j - 1];
            let m1 = tj * i0[j] - tjm * i0[j - 1] - (j1[j] - j1[j - 1]);
            a[j] = (m1 - tjm * m0) / dt;
            b[j] = (tj * m0 - m1) / dt;
        }
        Ok(Self { a, b })
    }

    /// Convolution sum_{p=0}^{i-1} (A_{i-p} h_p + B_{i-p} h_{p+1}).
    pub fn convolve(&self, samples: &[Complex64], i: usize) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for p in 0..i {
            let j = i - p;
            acc += self.a[j] * samples[p] + self.b[j] * samples[p + 1];
        }
        acc
    }
}

/// Propagator: validated symbol + per-lattice eigendecomposition cache +
/// Mittag-Leffler evaluators for the kernel family.
pub struct Propagator {
    grid: SpectralGrid,
    sym: MatrixSymbol,
    beta: f64,
    report: ValidationReport,
    eig: Vec<EigenDecomp>,
    pub(crate) e_1: MlEvaluator,
    pub(crate) e_bb: MlEvaluator,
    pub(crate) e_b1: MlEvaluator,
    pub(crate) e_b2: MlEvaluator,
}

impl Propagator {
    /// Validates Conditions (A) on the lattice and refuses symbols with
    /// negative sampled eigenvalues; eigenvalues within roundoff of zero are
    /// clamped to zero (those modes propagate with E_beta(0) = 1).
    pub fn new(grid: SpectralGrid, sym: MatrixSymbol, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::Domain(format!("beta must be in (0, 1], got {beta}")));
        }
        let report = sym.validate(&grid)?;
        if !report.solver_admissible() {
            return Err(Error::SymbolRejected(report.summary()));
        }
        let len = grid.len();
        let n = grid.dim();
        let eig: Vec<EigenDecomp> = (0..len)
            .into_par_iter()
            .map(|flat| {
                let mut xi = [0.0f64; 3];
                grid.xi_at(flat, &mut xi);
                let h = sym.eval(&xi[..n]);
                let mut dec = crate::symbol::eig_hermitian(&h)?;
                for l in dec.lambdas.iter_mut() {
                    if *l < 0.0 {
                        *l = 0.0;
                    }
                }
                Ok(dec)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            grid,
            sym,
            beta,
            report,
            eig,
            e_1: MlEvaluator::new(MlParams::new(beta, 1.0)?),
            e_bb: MlEvaluator::new(MlParams::new(beta, beta)?),
            e_b1: MlEvaluator::new(MlParams::new(beta, beta + 1.0)?),
            e_b2: MlEvaluator::new(MlParams::new(beta, beta + 2.0)?),
        })
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn symbol(&self) -> &MatrixSymbol {
        &self.sym
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn components(&self) -> usize {
        self.sym.size()
    }

    pub fn validation_report(&self) -> &ValidationReport {
        &self.report
    }

    pub fn eigendecomp(&self, flat: usize) -> &EigenDecomp {
        &self.eig[flat]
    }

    /// Largest cached eigenvalue over the lattice.
    pub fn max_eigenvalue(&self) -> f64 {
        self.eig
            .iter()
            .flat_map(|d| d.lambdas.iter().copied())
            .fold(0.0, f64::max)
    }

    fn check_field(&self, f: &StateField) -> Result<()> {
        if f.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "field grid does not match the propagator".into(),
            ));
        }
        if f.components() != self.sym.size() {
            return Err(Error::GridMismatch(format!(
                "field has {} components, symbol needs {}",
                f.components(),
                self.sym.size()
            )));
        }
        Ok(())
    }

    /// Gather the frequency field into per-lattice interleaved m-vectors.
    fn interleave(&self, hat: &StateField) -> Vec<Complex64> {
        let m = self.sym.size();
        let len = self.grid.len();
        let mut buf = vec![Complex64::ZERO; len * m];
        for c in 0..m {
            let comp = hat.component(c);
            for flat in 0..len {
                buf[flat * m + c] = comp[flat];
            }
        }
        buf
    }

    fn deinterleave(&self, buf: &[Complex64]) -> StateField {
        let m = self.sym.size();
        let len = self.grid.len();
        let mut out = StateField::zeros(self.grid.clone(), m, Space::Frequency);
        for c in 0..m {
            let comp = out.component_mut(c);
            for flat in 0..len {
                comp[flat] = buf[flat * m + c];
            }
        }
        out
    }

    /// Apply S(t, D) in frequency space: per lattice point
    /// M diag(E_beta(-lambda_q t^beta)) M^{-1}.
    pub fn apply_propagator_hat(&self, t: f64, hat: &StateField) -> Result<StateField> {
        if t < 0.0 {
            return Err(Error::Domain(format!("t must be >= 0, got {t}")));
        }
        self.check_field(hat)?;
        let m = self.sym.size();
        let mut buf = self.interleave(hat);
        let tb = t.powf(self.beta);
        let eig = &self.eig;
        let e_1 = &self.e_1;
        buf.par_chunks_mut(m).enumerate().try_for_each(
            |(flat, v): (usize, &mut [Complex64])| -> Result<()> {
                let dec = &eig[flat];
                sandwich(dec, v, |lam| e_1.eval(-lam * tb).map(|r| r.value))
            },
        )?;
        Ok(self.deinterleave(&buf))
    }

    /// U(t, x) = S(t, D) Phi(x); returns a physical-space field.
    pub fn apply_s(&self, t: f64, phi: &StateField) -> Result<StateField> {
        let hat = phi.to_frequency()?;
        self.apply_propagator_hat(t, &hat)?.fft_inverse()
    }

    /// Duhamel term W(t, x) = int_0^t S'(eta, D) H(t - eta, x) d eta with
    /// `panels` product-integration panels.
    pub fn apply_duhamel(
        &self,
        t: f64,
        source: &SourceSpec,
        panels: usize,
    ) -> Result<StateField> {
        if t <= 0.0 {
            return Err(Error::Domain(format!("t must be > 0, got {t}")));
        }
        let m = self.sym.size();
        match source {
            SourceSpec::Zero => Ok(StateField::zeros(
                self.grid.clone(),
                m,
                Space::Physical,
            )),
            SourceSpec::Constant(h) => {
                self.check_field(h)?;
                let hat = h.to_frequency()?;
                let mut buf = self.interleave(&hat);
                let tb = t.powf(self.beta);
                let eig = &self.eig;
                let e_b1 = &self.e_b1;
                buf.par_chunks_mut(m).enumerate().try_for_each(
                    |(flat, v): (usize, &mut [Complex64])| -> Result<()> {
                        let dec = &eig[flat];
                        // int_0^t eta^{b-1} E_{b,b}(-lam eta^b) d eta
                        //   = t^b E_{b,b+1}(-lam t^b)
                        sandwich(dec, v, |lam| {
                            Ok(tb * e_b1.eval(-lam * tb)?.value)
                        })
                    },
                )?;
                self.deinterleave(&buf).fft_inverse()
            }
            _ => {
                if panels < 1 {
                    return Err(Error::Config("need at least one quadrature panel".into()));
                }
                let dt = t / panels as f64;
                // transformed source samples g(p) = F[H](t - eta_p)|_{eta_p = t - s_p},
                // i.e. H at times s_p = p dt, p = 0..panels
                let mut hats = Vec::with_capacity(panels + 1);
                for p in 0..=panels {
                    let s = (p as f64 * dt).min(t);
                    let h = source
                        .eval(s)?
                        .ok_or_else(|| Error::Config("source evaluated to zero variant".into()))?;
                    self.check_field(&h)?;
                    hats.push(h.to_frequency()?);
                }
                let interleaved: Vec<Vec<Complex64>> =
                    hats.iter().map(|h| self.interleave(h)).collect();
                let len = self.grid.len();
                let beta = self.beta;
                let eig = &self.eig;
                let e_b1 = &self.e_b1;
                let e_b2 = &self.e_b2;
                let out: Vec<Vec<Complex64>> = (0..len)
                    .into_par_iter()
                    .map(|flat| -> Result<Vec<Complex64>> {
                        let dec = &eig[flat];
                        // rotate samples into the eigenbasis per mode
                        let mut w = vec![Complex64::ZERO; m];
                        let mut g = vec![Complex64::ZERO; panels + 1];
                        for q in 0..m {
                            for (p, gp) in g.iter_mut().enumerate() {
                                let mut acc = Complex64::ZERO;
                                for k in 0..m {
                                    acc += dec.basis_inv[(q, k)]
                                        * interleaved[p][flat * m + k];
                                }
                                *gp = acc;
                            }
                            let kern = ModeKernel::build(
                                dec.lambdas[q],
                                dt,
                                panels,
                                beta,
                                e_b1,
                                e_b2,
                            )?;
                            w[q] = kern.convolve(&g, panels);
                        }
                        // back to component basis
                        let mut v = vec![Complex64::ZERO; m];
                        for (j, vj) in v.iter_mut().enumerate() {
                            let mut acc = Complex64::ZERO;
                            for q in 0..m {
                                acc += dec.basis[(j, q)] * w[q];
                            }
                            *vj = acc;
                        }
                        Ok(v)
                    })
                    .collect::<Result<_>>()?;
                let mut buf = vec![Complex64::ZERO; len * m];
                for (flat, v) in out.iter().enumerate() {
                    buf[flat * m..flat * m + m].copy_from_slice(v);
                }
                self.deinterleave(&buf).fft_inverse()
            }
        }
    }

    /// Solve the linear problem at every point of a uniform time grid.
    ///
    /// The kernel antiderivative tables are built once per lattice mode and
    /// shared across all output times, so a dense trajectory costs the same
    /// quadrature work as a single `apply_duhamel` call at the horizon.
    pub fn solve_linear_dense(
        &self,
        phi: &StateField,
        source: &SourceSpec,
        tg: crate::fracops::TimeGrid,
    ) -> Result<Vec<StateField>> {
        let m = self.sym.size();
        let len = self.grid.len();
        let nt = tg.steps();
        let dt = tg.dt();
        self.check_field(phi)?;
        let phi_hat = phi.to_frequency()?;
        let phi_buf = self.interleave(&phi_hat);

        // eigenbasis source samples at every grid time
        let g: Option<Vec<Vec<Complex64>>> = if source.is_zero() {
            None
        } else {
            let mut all = Vec::with_capacity(nt + 1);
            for i in 0..=nt {
                let h = source
                    .eval(tg.time(i))?
                    .ok_or_else(|| Error::Config("source evaluated to zero variant".into()))?;
                self.check_field(&h)?;
                let hat = h.to_frequency()?;
                let buf = self.interleave(&hat);
                let mut rot = vec![Complex64::ZERO; len * m];
                for flat in 0..len {
                    let dec = &self.eig[flat];
                    for q in 0..m {
                        let mut acc = Complex64::ZERO;
                        for k in 0..m {
                            acc += dec.basis_inv[(q, k)] * buf[flat * m + k];
                        }
                        rot[flat * m + q] = acc;
                    }
                }
                all.push(rot);
            }
            Some(all)
        };
        let kernels: Option<Vec<ModeKernel>> = match &g {
            None => None,
            Some(_) => Some(
                (0..len * m)
                    .into_par_iter()
                    .map(|idx| {
                        ModeKernel::build(
                            self.eig[idx / m].lambdas[idx % m],
                            dt,
                            nt,
                            self.beta,
                            &self.e_b1,
                            &self.e_b2,
                        )
                    })
                    .collect::<Result<_>>()?,
            ),
        };

        let e_1 = &self.e_1;
        let eig = &self.eig;
        let bufs: Vec<Vec<Complex64>> = (0..=nt)
            .into_par_iter()
            .map(|i| -> Result<Vec<Complex64>> {
                let tb = tg.time(i).powf(self.beta);
                let mut buf = phi_buf.clone();
                for flat in 0..len {
                    sandwich(&eig[flat], &mut buf[flat * m..(flat + 1) * m], |lam| {
                        e_1.eval(-lam * tb).map(|r| r.value)
                    })?;
                }
                if let (Some(g), Some(kernels)) = (&g, &kernels) {
                    for flat in 0..len {
                        let dec = &eig[flat];
                        for q in 0..m {
                            let kern = &kernels[flat * m + q];
                            let mut acc = Complex64::ZERO;
                            for p in 0..i {
                                let j = i - p;
                                acc += kern.a[j] * g[p][flat * m + q]
                                    + kern.b[j] * g[p + 1][flat * m + q];
                            }
                            for (jc, b) in
                                buf[flat * m..(flat + 1) * m].iter_mut().enumerate()
                            {
                                *b += dec.basis[(jc, q)] * acc;
                            }
                        }
                    }
                }
                Ok(buf)
            })
            .collect::<Result<_>>()?;
        bufs.into_iter()
            .map(|buf| self.deinterleave(&buf).fft_inverse())
            .collect()
    }

    /// Solve the linear problem at the requested output times.
    pub fn solve_linear(
        &self,
        phi: &StateField,
        source: &SourceSpec,
        t_out: &[f64],
        panels: usize,
    ) -> Result<Vec<StateField>> {
        if t_out.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("output times must be sorted".into()));
        }
        let mut out = Vec::with_capacity(t_out.len());
        for &t in t_out {
            if t < 0.0 {
                return Err(Error::Config(format!("negative output time {t}")));
            }
            let mut u = self.apply_s(t, phi)?;
            if !source.is_zero() && t > 0.0 {
                let w = self.apply_duhamel(t, source, panels)?;
                for c in 0..u.components() {
                    let (uc, wc) = (u.component_mut(c), w.component(c));
                    for (a, b) in uc.iter_mut().zip(wc) {
                        *a += b;
                    }
                }
            }
            out.push(u);
        }
        Ok(out)
    }

    /// Empirical coercive-estimate diagnostic at time t > 0:
    /// lhs  = max_j ( ||D_t^beta u_j||_inf + sum_k ||A_{j,k}(D) u_k||_inf ),
    /// rhs  = sum_k ( t^{-beta} ||phi_k||_{tau+tau*} + max_t ||h_k||_{tau+tau*} ),
    /// with tau = n/2 + 1/2. The ratio lhs/rhs must stay bounded under grid
    /// refinement; the constant itself is not quantified.
    pub fn coercive_diagnostic(
        &self,
        phi: &StateField,
        source: &SourceSpec,
        t: f64,
        panels: usize,
    ) -> Result<(f64, f64)> {
        if t <= 0.0 {
            return Err(Error::Domain("t must be > 0".into()));
        }
        let m = self.sym.size();
        let u = self.solve_linear(phi, source, &[t], panels)?.remove(0);
        let uhat = u.to_frequency()?;
        // per-entry operator applications A_{j,k}(D) u_k
        let len = self.grid.len();
        let n = self.grid.dim();
        let mut entry_sup = vec![vec![0.0f64; m]; m];
        let mut au = StateField::zeros(self.grid.clone(), m, Space::Frequency);
        for j in 0..m {
            for k in 0..m {
                let mut hat = StateField::zeros(self.grid.clone(), 1, Space::Frequency);
                let mut xi = [0.0f64; 3];
                for flat in 0..len {
                    self.grid.xi_at(flat, &mut xi);
                    let a = self.sym.entry(j, k).eval(&xi[..n]);
                    hat.component_mut(0)[flat] = a * uhat.component(k)[flat];
                }
                for (dst, src) in au
                    .component_mut(j)
                    .iter_mut()
                    .zip(hat.component(0).iter())
                {
                    *dst += src;
                }
                let phys = hat.fft_inverse()?;
                entry_sup[j][k] = phys.linf();
            }
        }
        // D_t^beta U = H - A(D) U by the equation
        let h_t = source.eval(t)?;
        let au_phys = au.fft_inverse()?;
        let mut lhs = 0.0f64;
        for j in 0..m {
            let mut dsup = 0.0f64;
            for flat in 0..len {
                let hval = h_t
                    .as_ref()
                    .map(|h| h.component(j)[flat])
                    .unwrap_or(Complex64::ZERO);
                dsup = dsup.max((hval - au_phys.component(j)[flat]).norm());
            }
            let asum: f64 = entry_sup[j].iter().sum();
            lhs = lhs.max(dsup + asum);
        }

        let tau = self.grid.dim() as f64 / 2.0 + 0.5;
        let a = tau + self.sym.tau_star() as f64;
        let mut rhs = 0.0f64;
        for k in 0..m {
            rhs += t.powf(-self.beta) * component_sobolev(phi, k, a)?;
            if !source.is_zero() {
                let mut hmax = 0.0f64;
                for i in 0..=16 {
                    let s = t * i as f64 / 16.0;
                    if let Some(h) = source.eval(s)? {
                        hmax = hmax.max(component_sobolev(&h, k, a)?);
                    }
                }
                rhs += hmax;
            }
        }
        Ok((lhs, rhs))
    }

    /// Green kernels at time t: Z = F^{-1}[S(t, xi)] entrywise and
    /// Y = F^{-1}[S'(t, xi)] entrywise, as m x m single-component fields.
    pub fn green_kernels(
        &self,
        t: f64,
    ) -> Result<(Vec<Vec<StateField>>, Vec<Vec<StateField>>)> {
        if t <= 0.0 {
            return Err(Error::Domain("t must be > 0".into()));
        }
        let m = self.sym.size();
        let len = self.grid.len();
        let tb = t.powf(self.beta);
        let tb1 = t.powf(self.beta - 1.0);
        // per lattice point: E values per eigenmode
        let mut z = vec![vec![StateField::zeros(self.grid.clone(), 1, Space::Frequency); m]; m];
        let mut y = z.clone();
        for flat in 0..len {
            let dec = &self.eig[flat];
            let evals: Vec<f64> = dec
                .lambdas
                .iter()
                .map(|&lam| self.e_1.eval(-lam * tb).map(|r| r.value))
                .collect::<Result<_>>()?;
            let kvals: Vec<f64> = dec
                .lambdas
                .iter()
                .map(|&lam| Ok(tb1 * self.e_bb.eval(-lam * tb)?.value))
                .collect::<Result<_>>()?;
            for j in 0..m {
                for k in 0..m {
                    let mut sz = Complex64::ZERO;
                    let mut sy = Complex64::ZERO;
                    for q in 0..m {
                        let w = dec.basis[(j, q)] * dec.basis_inv[(q, k)];
                        sz += w * evals[q];
                        sy += w * kvals[q];
                    }
                    z[j][k].component_mut(0)[flat] = sz;
                    y[j][k].component_mut(0)[flat] = sy;
                }
            }
        }
        let to_phys = |mat: Vec<Vec<StateField>>| -> Result<Vec<Vec<StateField>>> {
            mat.into_iter()
                .map(|row| row.into_iter().map(|f| f.fft_inverse()).collect())
                .collect()
        };
        Ok((to_phys(z)?, to_phys(y)?))
    }
}

/// v <- M diag(f(lambda_q)) M^{-1} v for one lattice point.
fn sandwich(
    dec: &EigenDecomp,
    v: &mut [Complex64],
    f: impl Fn(f64) -> Result<f64>,
) -> Result<()> {
    let m = v.len();
    let mut w = [Complex64::ZERO; 8];
    let w = &mut w[..m.min(8)];
    if m > 8 {
        return sandwich_heap(dec, v, f);
    }
    for q in 0..m {
        let mut acc = Complex64::ZERO;
        for k in 0..m {
            acc += dec.basis_inv[(q, k)] * v[k];
        }
        w[q] = acc * f(dec.lambdas[q])?;
    }
    for j in 0..m {
        let mut acc = Complex64::ZERO;
        for q in 0..m {
            acc += dec.basis[(j, q)] * w[q];
        }
        v[j] = acc;
    }
    Ok(())
}

fn sandwich_heap(
    dec: &EigenDecomp,
    v: &mut [Complex64],
    f: impl Fn(f64) -> Result<f64>,
) -> Result<()> {
    let m = v.len();
    let mut w = vec![Complex64::ZERO; m];
    for q in 0..m {
        let mut acc = Complex64::ZERO;
        for k in 0..m {
            acc += dec.basis_inv[(q, k)] * v[k];
        }
        w[q] = acc * f(dec.lambdas[q])?;
    }
    for j in 0..m {
        let mut acc = Complex64::ZERO;
        for q in 0..m {
            acc += dec.basis[(j, q)] * w[q];
        }
        v[j] = acc;
    }
    Ok(())
}

/// Sobolev norm of a single component.
pub fn component_sobolev(field: &StateField, c: usize, a: f64) -> Result<f64> {
    let hat = field.to_frequency()?;
    let w = hat.grid().freq_weight();
    let len = hat.grid().len();
    let mut total = 0.0f64;
    for flat in 0..len {
        let r = hat.grid().freq_radius(flat);
        total += hat.component(c)[flat].norm_sqr() * (1.0 + r * r).powf(a);
    }
    Ok((total * w).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlf::ml_eval;
    use crate::symbol::testsupport::{coupled_symbol_1d, diag_laplacian};
    use nalgebra::DMatrix;

    const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

    fn gaussian_pair(grid: &SpectralGrid) -> StateField {
        StateField::from_fn_physical(grid.clone(), 2, |c, x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            let width = if c == 0 { 0.18 } else { 0.3 };
            let amp = if c == 0 { 1.0 } else { 0.6 };
            Complex64::new(amp * (-r2 / (2.0 * width)).exp(), 0.0)
        })
    }

    fn coupled_prop(beta: f64, n_points: usize) -> Propagator {
        let grid = SpectralGrid::new(&[TWO_PI], &[n_points]).unwrap();
        Propagator::new(grid, coupled_symbol_1d(1.0), beta).unwrap()
    }

    #[test]
    fn apply_s_at_zero_is_identity() {
        let prop = coupled_prop(0.5, 64);
        let phi = gaussian_pair(prop.grid());
        let u = prop.apply_s(0.0, &phi).unwrap();
        let mut worst = 0.0f64;
        for c in 0..2 {
            for (a, b) in u.component(c).iter().zip(phi.component(c)) {
                worst = worst.max((a - b).norm());
            }
        }
        assert!(worst < 1e-12 * (1.0 + phi.linf()), "worst {worst:.2e}");
    }

    #[test]
    fn heat_mode_decays_exponentially() {
        // beta = 1, diagonal Laplacian, single mode: (e^{-k0^2 t}, 0)
        let grid = SpectralGrid::new(&[TWO_PI], &[32]).unwrap();
        let prop = Propagator::new(grid.clone(), diag_laplacian(2, 1), 1.0).unwrap();
        let mut hat = StateField::zeros(grid.clone(), 2, Space::Frequency);
        let k_idx = 3;
        hat.component_mut(0)[k_idx] = Complex64::ONE;
        let t = 0.37;
        let out = prop.apply_propagator_hat(t, &hat).unwrap();
        let k0 = grid.xi(0, k_idx);
        let want = (-k0 * k0 * t).exp();
        assert!((out.component(0)[k_idx] - Complex64::new(want, 0.0)).norm() < 1e-12);
        assert!(out.component(1)[k_idx].norm() < 1e-14);
    }

    #[test]
    fn coupled_mode_matches_symbol_functions() {
        // single mode xi = 2, eigenvalues 6 and 2:
        // u1 = (E(-6 t^b) + E(-2 t^b))/2, u2 = (E(-6 t^b) - E(-2 t^b))/2
        let beta = 0.5;
        let prop = coupled_prop(beta, 32);
        let grid = prop.grid().clone();
        let mut hat = StateField::zeros(grid.clone(), 2, Space::Frequency);
        let k_idx = 2;
        assert_eq!(grid.xi(0, k_idx), 2.0);
        hat.component_mut(0)[k_idx] = Complex64::ONE;
        let t: f64 = 0.8;
        let tb = t.powf(beta);
        let out = prop.apply_propagator_hat(t, &hat).unwrap();
        let p = MlParams::new(beta, 1.0).unwrap();
        let ep = ml_eval(p, -6.0 * tb).unwrap().value;
        let em = ml_eval(p, -2.0 * tb).unwrap().value;
        let want1 = 0.5 * (ep + em);
        let want2 = 0.5 * (ep - em);
        assert!((out.component(0)[k_idx].re - want1).abs() < 1e-12);
        assert!((out.component(1)[k_idx].re - want2).abs() < 1e-12);
    }

    #[test]
    fn duhamel_zero_source_is_zero() {
        let prop = coupled_prop(0.6, 32);
        let w = prop.apply_duhamel(0.5, &SourceSpec::Zero, 64).unwrap();
        assert_eq!(w.linf(), 0.0);
    }

    #[test]
    fn duhamel_constant_source_closed_form() {
        // constant source, one mode: W_q = h_q (1 - E_beta(-lam t^beta))/lam,
        // via all three source representations
        let beta = 0.5;
        let prop = coupled_prop(beta, 32);
        let grid = prop.grid().clone();
        let mut hat = StateField::zeros(grid.clone(), 2, Space::Frequency);
        let k_idx = 2;
        hat.component_mut(0)[k_idx] = Complex64::ONE;
        let h_phys = hat.fft_inverse().unwrap();
        let t: f64 = 0.9;
        let tb = t.powf(beta);
        let p1 = MlParams::new(beta, 1.0).unwrap();
        let i0 = |lam: f64| (1.0 - ml_eval(p1, -lam * tb).unwrap().value) / lam;
        let want1 = 0.5 * (i0(6.0) + i0(2.0));
        let want2 = 0.5 * (i0(6.0) - i0(2.0));

        let sources: Vec<SourceSpec> = vec![
            SourceSpec::Constant(h_phys.clone()),
            SourceSpec::Sampled {
                horizon: 1.0,
                fields: vec![h_phys.clone(); 5],
            },
            {
                let hp = h_phys.clone();
                SourceSpec::Callback(Box::new(move |_t| Ok(hp.clone())))
            },
        ];
        for (i, src) in sources.iter().enumerate() {
            let w = prop.apply_duhamel(t, src, 128).unwrap().fft_forward().unwrap();
            let got1 = w.component(0)[k_idx].re;
            let got2 = w.component(1)[k_idx].re;
            assert!(
                (got1 - want1).abs() < 1e-8 && (got2 - want2).abs() < 1e-8,
                "source {i}: got ({got1}, {got2}), want ({want1}, {want2})"
            );
        }
    }

    #[test]
    fn duhamel_classical_limit() {
        // beta = 1: W = h (1 - e^{-lam t})/lam on each eigenmode
        let prop = coupled_prop(1.0, 32);
        let grid = prop.grid().clone();
        let mut hat = StateField::zeros(grid.clone(), 2, Space::Frequency);
        let k_idx = 2;
        hat.component_mut(0)[k_idx] = Complex64::new(0.7, 0.0);
        let h_phys = hat.fft_inverse().unwrap();
        let t = 1.3;
        let i0 = |lam: f64| (1.0 - (-lam * t).exp()) / lam;
        let want1 = 0.7 * 0.5 * (i0(6.0) + i0(2.0));
        let w = prop
            .apply_duhamel(t, &SourceSpec::Constant(h_phys), 64)
            .unwrap()
            .fft_forward()
            .unwrap();
        assert!((w.component(0)[k_idx].re - want1).abs() < 1e-12);
    }

    #[test]
    fn solve_linear_is_linear_in_data() {
        let prop = coupled_prop(0.7, 64);
        let grid = prop.grid().clone();
        let phi1 = gaussian_pair(&grid);
        let phi2 = StateField::from_fn_physical(grid.clone(), 2, |c, x| {
            Complex64::new((-(x[0] - 0.4).powi(2) / 0.1).exp() * (c as f64 + 0.5), 0.0)
        });
        let (a, b) = (2.0, -0.75);
        let mut combo = StateField::zeros(grid.clone(), 2, Space::Physical);
        for c in 0..2 {
            for flat in 0..grid.len() {
                combo.component_mut(c)[flat] =
                    a * phi1.component(c)[flat] + b * phi2.component(c)[flat];
            }
        }
        let t_out = [0.25, 1.0];
        let u1 = prop.solve_linear(&phi1, &SourceSpec::Zero, &t_out, 32).unwrap();
        let u2 = prop.solve_linear(&phi2, &SourceSpec::Zero, &t_out, 32).unwrap();
        let uc = prop.solve_linear(&combo, &SourceSpec::Zero, &t_out, 32).unwrap();
        for ti in 0..t_out.len() {
            let mut worst = 0.0f64;
            for c in 0..2 {
                for flat in 0..grid.len() {
                    let want = a * u1[ti].component(c)[flat] + b * u2[ti].component(c)[flat];
                    worst = worst.max((uc[ti].component(c)[flat] - want).norm());
                }
            }
            assert!(worst < 1e-10, "t index {ti}: {worst:.2e}");
        }
    }

    #[test]
    fn initial_condition_continuity() {
        let prop = coupled_prop(0.5, 64);
        let phi = gaussian_pair(prop.grid());
        let mut prev = f64::INFINITY;
        for &t in &[1e-2, 1e-3, 1e-4] {
            let u = prop.apply_s(t, &phi).unwrap();
            let mut gap = 0.0f64;
            for c in 0..2 {
                for (a, b) in u.component(c).iter().zip(phi.component(c)) {
                    gap = gap.max((a - b).norm());
                }
            }
            assert!(gap < prev, "gap {gap} at t={t} did not decrease");
            prev = gap;
        }
    }

    #[test]
    fn homogeneous_solution_norm_decays() {
        let prop = coupled_prop(0.4, 64);
        let phi = gaussian_pair(prop.grid());
        let mut prev = f64::INFINITY;
        for i in 0..6 {
            let t = 0.2 * i as f64;
            let u = prop.apply_s(t, &phi).unwrap();
            let norm = u.sobolev_norm(0.0).unwrap();
            assert!(norm <= prev + 1e-12, "norm grew at t={t}");
            prev = norm;
        }
    }

    #[test]
    fn beta_one_equals_matrix_exponential() {
        let prop = coupled_prop(1.0, 32);
        let grid = prop.grid().clone();
        let t = 0.45;
        for k_idx in [1usize, 5, 20] {
            let xi = grid.xi(0, k_idx);
            let a = coupled_symbol_1d(1.0).eval(&[xi]);
            let expm = matrix_exp(&(-a * Complex64::new(t, 0.0)));
            for comp_in in 0..2 {
                let mut hat = StateField::zeros(grid.clone(), 2, Space::Frequency);
                hat.component_mut(comp_in)[k_idx] = Complex64::ONE;
                let out = prop.apply_propagator_hat(t, &hat).unwrap();
                for comp_out in 0..2 {
                    let got = out.component(comp_out)[k_idx];
                    let want = expm[(comp_out, comp_in)];
                    assert!(
                        (got - want).norm() < 1e-10,
                        "xi={xi} in={comp_in} out={comp_out}: {got} vs {want}"
                    );
                }
            }
        }
    }

    /// Scaling-and-squaring Taylor exponential, independent of the eigenpath.
    fn matrix_exp(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let m = a.nrows();
        let mut s = 0;
        let mut scaled = a.clone();
        while scaled.norm() > 0.5 {
            scaled *= Complex64::new(0.5, 0.0);
            s += 1;
        }
        let mut acc = DMatrix::<Complex64>::identity(m, m);
        let mut term = DMatrix::<Complex64>::identity(m, m);
        for k in 1..30 {
            term = &term * &scaled / Complex64::new(k as f64, 0.0);
            acc += &term;
            if term.norm() < 1e-17 {
                break;
            }
        }
        for _ in 0..s {
            acc = &acc * &acc;
        }
        acc
    }

    #[test]
    fn no_semigroup_property_for_fractional_order() {
        // E_beta(-lam (t+s)^beta) != E_beta(-lam t^beta) E_beta(-lam s^beta)
        let p = MlParams::new(0.5, 1.0).unwrap();
        let (t, s, lam) = (1.0f64, 1.0f64, 1.0f64);
        let combined = ml_eval(p, -lam * (t + s).powf(0.5)).unwrap().value;
        let split = ml_eval(p, -lam * t.powf(0.5)).unwrap().value
            * ml_eval(p, -lam * s.powf(0.5)).unwrap().value;
        assert!(
            (combined - split).abs() > 1e-2,
            "S(t+s) unexpectedly equals S(t)S(s): {combined} vs {split}"
        );
    }

    #[test]
    fn green_kernel_offdiagonal_vanishes_for_diagonal_symbol() {
        let grid = SpectralGrid::new(&[TWO_PI], &[32]).unwrap();
        let prop = Propagator::new(grid, diag_laplacian(2, 1), 0.5).unwrap();
        let (z, y) = prop.green_kernels(0.5).unwrap();
        assert!(z[0][1].linf() < 1e-13);
        assert!(z[1][0].linf() < 1e-13);
        assert!(y[0][1].linf() < 1e-13);
        assert!(y[1][0].linf() < 1e-13);
    }

    #[test]
    fn green_kernel_matches_wrapped_heat_kernel() {
        // beta = 1, scalar Laplacian: Z is the periodized Gaussian kernel
        let l = 20.0;
        let grid = SpectralGrid::new(&[l], &[128]).unwrap();
        let prop = Propagator::new(grid.clone(), diag_laplacian(1, 1), 1.0).unwrap();
        let t = 0.5;
        let (z, _) = prop.green_kernels(t).unwrap();
        let mut worst = 0.0f64;
        for flat in 0..grid.len() {
            let x = grid.x(0, flat);
            let mut want = 0.0;
            for img in -3i32..=3 {
                let xi = x + img as f64 * l;
                want += (-xi * xi / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
            }
            worst = worst.max((z[0][0].component(0)[flat].re - want).abs());
        }
        assert!(worst < 1e-8, "worst {worst:.2e}");
    }

    #[test]
    fn green_kernel_convolution_reproduces_propagator() {
        let prop = coupled_prop(0.5, 64);
        let grid = prop.grid().clone();
        let phi = gaussian_pair(&grid);
        let t = 0.4;
        let (z, _) = prop.green_kernels(t).unwrap();
        let direct = prop.apply_s(t, &phi).unwrap();
        let n = grid.points()[0];
        let dx = grid.dx(0);
        let mut worst = 0.0f64;
        for j_out in 0..2 {
            for i in 0..n {
                let mut acc = Complex64::ZERO;
                for k_in in 0..2 {
                    let zk = z[j_out][k_in].component(0);
                    let pk = phi.component(k_in);
                    for jj in 0..n {
                        // displacement x_i - x_jj sits at index (i - jj + N/2) mod N
                        let d = (i + n - jj + n / 2) % n;
                        acc += zk[d] * pk[jj] * dx;
                    }
                }
                worst = worst.max((acc - direct.component(j_out)[i]).norm());
            }
        }
        assert!(worst < 1e-8, "worst {worst:.2e}");
    }

    #[test]
    fn coercive_diagnostic_zero_data() {
        let prop = coupled_prop(0.5, 32);
        let zero = StateField::zeros(prop.grid().clone(), 2, Space::Physical);
        let (lhs, rhs) = prop
            .coercive_diagnostic(&zero, &SourceSpec::Zero, 0.5, 32)
            .unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn coercive_ratio_stable_under_refinement() {
        let mut ratios = Vec::new();
        for &n in &[32usize, 64, 128] {
            let grid = SpectralGrid::new(&[TWO_PI], &[n]).unwrap();
            let prop = Propagator::new(grid.clone(), coupled_symbol_1d(1.0), 0.5).unwrap();
            let phi = gaussian_pair(&grid);
            let (lhs, rhs) = prop
                .coercive_diagnostic(&phi, &SourceSpec::Zero, 0.5, 32)
                .unwrap();
            ratios.push(lhs / rhs);
        }
        let base = ratios[0];
        for r in &ratios {
            assert!(
                (r / base - 1.0).abs() < 0.2,
                "coercive ratio drifted: {ratios:?}"
            );
        }
    }

    #[test]
    fn coercive_lhs_blowup_bounded_by_t_power() {
        // lhs grows no faster than t^{-beta} as t -> 0+ (log-log slope)
        let beta = 0.5;
        let prop = coupled_prop(beta, 64);
        let phi = gaussian_pair(prop.grid());
        let ts = [1e-1, 1e-2, 1e-3];
        let mut lhss = Vec::new();
        for &t in &ts {
            let (lhs, _) = prop
                .coercive_diagnostic(&phi, &SourceSpec::Zero, t, 32)
                .unwrap();
            lhss.push(lhs);
        }
        let slope = (lhss[2].ln() - lhss[0].ln()) / (ts[2].ln() - ts[0].ln());
        assert!(
            slope >= -beta - 0.1,
            "lhs grows too fast as t->0: slope {slope:.3}"
        );
    }

    #[test]
    fn propagator_rejects_bad_inputs() {
        let grid = SpectralGrid::new(&[TWO_PI], &[16]).unwrap();
        assert!(Propagator::new(grid.clone(), coupled_symbol_1d(1.0), 0.0).is_err());
        assert!(Propagator::new(grid.clone(), coupled_symbol_1d(1.0), 1.5).is_err());
        // wide lattice spacing puts fractional modes inside the positivity gap
        let wide = SpectralGrid::new(&[4.0 * TWO_PI], &[16]).unwrap();
        match Propagator::new(wide, coupled_symbol_1d(1.0), 0.5).map(|_| ()) {
            Err(Error::SymbolRejected(_)) => {}
            other => panic!("expected rejection, got {other:?}"),
        }
        // mismatched field
        let prop = coupled_prop(0.5, 16);
        let other_grid = SpectralGrid::new(&[TWO_PI], &[32]).unwrap();
        let phi = StateField::zeros(other_grid, 2, Space::Physical);
        assert!(matches!(
            prop.apply_s(0.1, &phi),
            Err(Error::GridMismatch(_))
        ));
    }
}

#[cfg(test)]
mod dense_tests {
    use super::*;
    use crate::fracops::TimeGrid;
    use crate::symbol::testsupport::coupled_symbol_1d;

    #[test]
    fn dense_solve_matches_pointwise_solve() {
        let grid = SpectralGrid::new(&[2.0 * std::f64::consts::PI], &[32]).unwrap();
        let prop = Propagator::new(grid.clone(), coupled_symbol_1d(1.0), 0.5).unwrap();
        let phi = StateField::from_fn_physical(grid.clone(), 2, |c, x| {
            Complex64::new((1.0 - 0.3 * c as f64) * (-x[0] * x[0] / 0.3).exp(), 0.0)
        });
        let bump = StateField::from_fn_physical(grid.clone(), 2, |_, x| {
            Complex64::new(0.4 * (-x[0] * x[0] / 0.5).exp(), 0.0)
        });
        let mk = || {
            let b = bump.clone();
            SourceSpec::Callback(Box::new(move |t: f64| {
                let mut f = b.clone();
                let s = (-t).exp();
                for c in 0..2 {
                    for v in f.component_mut(c) {
                        *v *= s;
                    }
                }
                Ok(f)
            }))
        };
        let tg = TimeGrid::new(1.0, 16).unwrap();
        let dense = prop.solve_linear_dense(&phi, &mk(), tg).unwrap();
        // pointwise path with the same panel width at the final time
        let direct = prop.solve_linear(&phi, &mk(), &[1.0], 16).unwrap();
        let mut worst = 0.0f64;
        for c in 0..2 {
            for (a, b) in dense[16].component(c).iter().zip(direct[0].component(c)) {
                worst = worst.max((a - b).norm());
            }
        }
        assert!(worst < 1e-12, "dense vs pointwise: {worst:.2e}");
        // t = 0: initial data
        let mut worst0 = 0.0f64;
        for c in 0..2 {
            for (a, b) in dense[0].component(c).iter().zip(phi.component(c)) {
                worst0 = worst0.max((a - b).norm());
            }
        }
        assert!(worst0 < 1e-12);
    }
}
