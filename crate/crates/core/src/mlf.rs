//! Two-parameter Mittag-Leffler function E_{rho,mu}(z) for real arguments,
//! with an emphasis on the negative axis where the propagator lives.
//!
//! Regimes:
//! - Taylor series near the origin (and for all z > 0, where the terms are
//!   positive and there is no cancellation),
//! - real-axis asymptotic expansion for large negative z, truncated at the
//!   smallest term,
//! - inverse-Laplace evaluation on a parabolic contour (trapezoidal rule)
//!   for the mid-range where neither of the above reaches target accuracy.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::{ln_gamma, rgamma};

/// Parameters (rho, mu) of E_{rho,mu}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    rho: f64,
    mu: f64,
}

impl MlParams {
    /// rho in (0, 1], mu > 0.
    pub fn new(rho: f64, mu: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) || !rho.is_finite() {
            return Err(Error::Domain(format!("rho must be in (0, 1], got {rho}")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::Domain(format!("mu must be > 0, got {mu}")));
        }
        Ok(Self { rho, mu })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Which evaluation branch produced the result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MlRegime {
    Series,
    Asymptotic,
    Integral,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MlEvalResult {
    pub value: f64,
    pub regime: MlRegime,
    /// Upper bound on the truncation/roundoff error of the branch taken.
    pub est_abs_error: f64,
}

/// Reusable evaluator with a precomputed reciprocal-gamma table for the
/// series branch. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct MlEvaluator {
    params: MlParams,
    /// rgamma(rho*k + mu) for k = 0..TABLE_LEN
    series_rg: Vec<f64>,
    /// |z| threshold below which the alternating series stays accurate in f64
    series_zmax: f64,
}

const TABLE_LEN: usize = 256;
const SERIES_TERM_CAP: usize = 200_000;
/// Parabolic contour parameters (validated against 30-digit references:
/// absolute error <= ~1e-13 across rho in [0.05, 0.999]).
const CONTOUR_M: f64 = 6.0;
const CONTOUR_N: usize = 40;

impl MlEvaluator {
    pub fn new(params: MlParams) -> Self {
        let series_rg = (0..TABLE_LEN)
            .map(|k| rgamma(params.rho * k as f64 + params.mu))
            .collect();
        // Cancellation in the alternating series is governed by the largest
        // term ~ exp(|z|^{1/rho}); keep that amplification below ~e^6.
        let series_zmax = 6f64.powf(params.rho);
        Self {
            params,
            series_rg,
            series_zmax,
        }
    }

    pub fn params(&self) -> MlParams {
        self.params
    }

    fn rg(&self, k: usize) -> f64 {
        if k < self.series_rg.len() {
            self.series_rg[k]
        } else {
            rgamma(self.params.rho * k as f64 + self.params.mu)
        }
    }

    /// Evaluate E_{rho,mu}(z).
    pub fn eval(&self, z: f64) -> Result<MlEvalResult> {
        let MlParams { rho, mu } = self.params;
        if !z.is_finite() {
            return Err(Error::Domain(format!("z must be finite, got {z}")));
        }
        if z == 0.0 {
            return Ok(MlEvalResult {
                value: rgamma(mu),
                regime: MlRegime::Series,
                est_abs_error: 4.0 * f64::EPSILON * rgamma(mu).abs(),
            });
        }
        if rho == 1.0 {
            if let Some(r) = closed_form_rho1(mu, z)? {
                return Ok(r);
            }
        }
        if z > 0.0 {
            // Growth e^{z^{1/rho}} (up to an algebraic prefactor)
            if z.powf(1.0 / rho) > 705.0 {
                return Err(Error::Overflow(format!(
                    "E_{{{rho},{mu}}}({z}) exceeds the f64 range"
                )));
            }
            return self.series(z);
        }
        // z < 0
        if -z <= self.series_zmax {
            let r = self.series(z)?;
            if r.est_abs_error <= 2e-13 * (1.0 + r.value.abs()) {
                return Ok(r);
            }
        }
        let asym = self.asymptotic(z);
        if asym.est_abs_error <= 1e-12 * (1.0 + asym.value.abs()) {
            return Ok(asym);
        }
        if rho < 1.0 {
            Ok(self.contour(z))
        } else {
            // rho == 1 with non-integer mu falls outside the contour's branch
            // cut geometry; return the better of the two expansions with an
            // honest error estimate.
            let ser = self.series(z)?;
            if ser.est_abs_error < asym.est_abs_error {
                Ok(ser)
            } else {
                Ok(asym)
            }
        }
    }

    fn series(&self, z: f64) -> Result<MlEvalResult> {
        let mut sum = 0.0f64;
        let mut zk = 1.0f64;
        let mut max_term = 0.0f64;
        let mut k = 0usize;
        let (first_neglected, n_terms) = loop {
            let term = zk * self.rg(k);
            sum += term;
            max_term = max_term.max(term.abs());
            zk *= z;
            k += 1;
            if !zk.is_finite() {
                return Err(Error::Overflow(format!(
                    "series term overflow at k={k} for z={z}"
                )));
            }
            let next = (zk * self.rg(k)).abs();
            if k > 4 && next <= f64::EPSILON * sum.abs().max(f64::MIN_POSITIVE) {
                break (next, k);
            }
            if k >= SERIES_TERM_CAP {
                break (next, k);
            }
        };
        let roundoff = n_terms as f64 * f64::EPSILON * max_term;
        Ok(MlEvalResult {
            value: sum,
            regime: MlRegime::Series,
            est_abs_error: first_neglected + roundoff,
        })
    }

    /// E_{rho,mu}(z) ~ -sum_{k>=1} z^{-k}/Gamma(mu - rho k) as z -> -inf,
    /// truncated at the smallest term.
    ///
    /// Stopping decisions use the sine-free envelope |z|^{-k} Gamma(1+rho k-mu)/pi
    /// of the term magnitudes; the reflected sine factor has near-zeros that
    /// would otherwise truncate far before the true minimum.
    fn asymptotic(&self, z: f64) -> MlEvalResult {
        let MlParams { rho, mu } = self.params;
        let envelope = |x: f64, zk_mag: f64| -> f64 {
            // bound on |z^{-k} rgamma(x)|
            if x >= 0.5 {
                zk_mag * rgamma(x).abs()
            } else {
                let ln_env = ln_gamma(1.0 - x) + zk_mag.ln() - std::f64::consts::PI.ln();
                if ln_env > 700.0 {
                    f64::INFINITY
                } else {
                    ln_env.exp()
                }
            }
        };
        let zinv = 1.0 / z;
        let mut sum = 0.0f64;
        let mut zk = 1.0f64;
        let mut smallest_env = f64::INFINITY;
        let mut k = 0usize;
        let est = loop {
            k += 1;
            zk *= zinv;
            let x = mu - rho * k as f64;
            let env = envelope(x, zk.abs());
            if env > smallest_env {
                break smallest_env;
            }
            sum -= zk * rgamma(x);
            smallest_env = env;
            if env <= f64::EPSILON * sum.abs() {
                break env;
            }
            if k >= 400 {
                break smallest_env;
            }
        };
        MlEvalResult {
            value: sum,
            regime: MlRegime::Asymptotic,
            est_abs_error: 2.0 * est + 4.0 * f64::EPSILON * (1.0 + sum.abs()),
        }
    }

    /// Bromwich integral of s^{rho-mu}/(s^rho + lam) over the parabola
    /// s(u) = M(1+iu)^2 with the trapezoidal rule; lam = -z > 0.
    fn contour(&self, z: f64) -> MlEvalResult {
        let MlParams { rho, mu } = self.params;
        let lam = -z;
        let umax = (1.0 + 40.0 / CONTOUR_M).sqrt();
        let h = umax / CONTOUR_N as f64;
        let mut total = 0.0f64;
        for k in 0..=CONTOUR_N {
            let u = k as f64 * h;
            let s = Complex64::new(CONTOUR_M * (1.0 - u * u), 2.0 * CONTOUR_M * u);
            let f = s.powf(rho - mu) / (s.powf(rho) + lam);
            let g = (s.exp() * f * Complex64::new(1.0, u)).re;
            total += if k == 0 { g } else { 2.0 * g };
        }
        let value = CONTOUR_M * h / std::f64::consts::PI * total;
        MlEvalResult {
            value,
            regime: MlRegime::Integral,
            est_abs_error: 3e-13 * (1.0 + value.abs()),
        }
    }
}

/// E_{1,mu} closed forms for the integer mu used by the solver at beta = 1.
fn closed_form_rho1(mu: f64, z: f64) -> Result<Option<MlEvalResult>> {
    let value = if mu == 1.0 {
        if z > 709.0 {
            return Err(Error::Overflow(format!("exp({z}) exceeds the f64 range")));
        }
        z.exp()
    } else if mu == 2.0 {
        z.exp_m1() / z
    } else if mu == 3.0 {
        // (e^z - 1 - z)/z^2, stable split near 0
        if z.abs() < 1e-4 {
            0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
        } else {
            (z.exp_m1() - z) / (z * z)
        }
    } else {
        return Ok(None);
    };
    if !value.is_finite() {
        return Err(Error::Overflow(format!("E_{{1,{mu}}}({z}) overflowed")));
    }
    Ok(Some(MlEvalResult {
        value,
        regime: MlRegime::Series,
        est_abs_error: 4.0 * f64::EPSILON * (1.0 + value.abs()),
    }))
}

/// One-shot evaluation of E_{rho,mu}(z).
pub fn ml_eval(params: MlParams, z: f64) -> Result<MlEvalResult> {
    MlEvaluator::new(params).eval(z)
}

/// Check the decay envelope |E_{rho,mu}(-t)| <= C/(1+t).
pub fn ml_bound_check(params: MlParams, t: f64, c: f64) -> Result<bool> {
    if t < 0.0 {
        return Err(Error::Domain(format!("t must be >= 0, got {t}")));
    }
    if !(c > 0.0) {
        return Err(Error::Domain(format!("C must be > 0, got {c}")));
    }
    let v = ml_eval(params, -t)?;
    Ok(v.value.abs() <= c / (1.0 + t))
}

/// Absolute discrepancy between the numerically integrated Laplace transform
/// of t^{mu-1} E_{rho,mu}(-lam t^rho) at s and its closed form
/// s^{rho-mu}/(s^rho + lam).
pub fn ml_laplace_pair_check(params: MlParams, lam: f64, s: f64) -> Result<f64> {
    let MlParams { rho, mu } = params;
    if !(lam > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lam}")));
    }
    if !(s > 0.0) || lam * s.powf(-rho) >= 1.0 {
        return Err(Error::Domain(format!(
            "require s > 0 and |lambda s^-rho| < 1 (s={s}, lambda={lam})"
        )));
    }
    let ev = MlEvaluator::new(params);
    let integrand = |t: f64| -> f64 {
        if t == 0.0 {
            return 0.0;
        }
        let e = ev.eval(-lam * t.powf(rho)).map(|r| r.value).unwrap_or(0.0);
        (-s * t).exp() * t.powf(mu - 1.0) * e
    };

    // Tail cutoff: e^{-sT} decayed to ~1e-18 relative to the head.
    let t_cut = (1.0f64).max((mu + 42.0) / s);
    if t_cut > 1e8 {
        return Err(Error::Quadrature(format!(
            "tail truncation cannot meet tolerance for s = {s}"
        )));
    }

    let head = if mu < 1.0 {
        // substitute t = v^{1/mu}: t^{mu-1} dt = dv/mu, removes the endpoint
        // singularity
        let g = |v: f64| -> f64 {
            if v <= 0.0 {
                return 0.0;
            }
            let t = v.powf(1.0 / mu);
            let e = ev.eval(-lam * t.powf(rho)).map(|r| r.value).unwrap_or(0.0);
            (-s * t).exp() * e / mu
        };
        crate::quad::adaptive(&g, 0.0, 1.0, 1e-12, 40)?.0
    } else {
        crate::quad::adaptive(&integrand, 0.0, 1.0, 1e-12, 40)?.0
    };
    let tail = crate::quad::adaptive(&integrand, 1.0, t_cut, 1e-12, 48)?.0;

    let closed = s.powf(rho - mu) / (s.powf(rho) + lam);
    Ok((head + tail - closed).abs())
}
