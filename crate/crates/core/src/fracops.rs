//! Discrete fractional operators on uniform time grids: the L1 Caputo
//! derivative and the product-integration Riemann-Liouville integral.
//! These are the independent oracle family used to verify solver output;
//! they share no code with the propagator path.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::special::gamma;

/// Uniform time grid on [0, T] with `steps` intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::Domain(format!("need at least 2 steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.time(i))
    }
}

/// Complex-valued samples on a uniform time grid (steps + 1 values).
#[derive(Debug, Clone)]
pub struct SampledPath {
    pub grid: TimeGrid,
    pub samples: Vec<Complex64>,
}

impl SampledPath {
    pub fn new(grid: TimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.steps() + 1 {
            return Err(Error::Domain(format!(
                "expected {} samples, got {}",
                grid.steps() + 1,
                samples.len()
            )));
        }
        Ok(Self { grid, samples })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = grid.times().map(f).collect();
        Self { grid, samples }
    }

    pub fn from_real_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(grid, |t| Complex64::new(f(t), 0.0))
    }
}

/// L1 weights c_k = (k+1)^{1-beta} - k^{1-beta}, with 0^{1-beta} := 0 so the
/// beta = 1 limit degenerates to the backward difference.
pub fn l1_weights(beta: f64, n: usize) -> Vec<f64> {
    let pow = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else {
            (k as f64).powf(1.0 - beta)
        }
    };
    (0..n).map(|k| pow(k + 1) - pow(k)).collect()
}

fn check_beta_caputo(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("beta must be in (0, 1], got {beta}")));
    }
    Ok(())
}

/// L1-scheme Caputo derivative of order beta in (0, 1] at each grid point.
/// The value at t_0 is defined as the i = 1 value (one-sided).
pub fn caputo_l1(path: &SampledPath, beta: f64) -> Result<SampledPath> {
    check_beta_caputo(beta)?;
    let n = path.grid.steps();
    let h = path.grid.dt();
    let w0 = h.powf(-beta) / gamma(2.0 - beta);
    let c = l1_weights(beta, n);
    let u = &path.samples;
    let mut out = vec![Complex64::ZERO; n + 1];
    for i in 1..=n {
        let mut acc = Complex64::ZERO;
        for k in 0..i {
            acc += c[k] * (u[i - k] - u[i - k - 1]);
        }
        out[i] = w0 * acc;
    }
    out[0] = out[1];
    SampledPath::new(path.grid, out)
}

/// Riemann-Liouville integral J^beta by product integration of the exact
/// kernel against the piecewise-linear interpolant (exact for linear data).
pub fn rl_integral(path: &SampledPath, beta: f64) -> Result<SampledPath> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    let n = path.grid.steps();
    let h = path.grid.dt();
    let scale = h.powf(beta) / gamma(beta + 2.0);
    let u = &path.samples;
    // powers k^{beta+1}
    let p: Vec<f64> = (0..=n + 1).map(|k| (k as f64).powf(beta + 1.0)).collect();
    let mut out = vec![Complex64::ZERO; n + 1];
    for i in 1..=n {
        let bi = beta + 1.0;
        let a0 = p[i - 1] - (i as f64).powf(beta) * (i as f64 - bi);
        let mut acc = a0 * u[0];
        for j in 1..i {
            let d = i - j;
            let w = p[d + 1] + p[d - 1] - 2.0 * p[d];
            acc += w * u[j];
        }
        acc += u[i];
        out[i] = scale * acc;
    }
    SampledPath::new(path.grid, out)
}

/// Max-norm of J^beta(caputo_l1(f)) - (f - f(0)) over the grid; decays like
/// O(h^{2-beta}) under refinement for smooth f.
pub fn inverse_identity_check(path: &SampledPath, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!(
            "beta must be in (0, 1) for the composition check, got {beta}"
        )));
    }
    let d = caputo_l1(path, beta)?;
    let j = rl_integral(&d, beta)?;
    let f0 = path.samples[0];
    let mut worst = 0.0f64;
    for i in 0..=path.grid.steps() {
        let err = (j.samples[i] - (path.samples[i] - f0)).norm();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::new(t, n).unwrap()
    }

    #[test]
    fn caputo_of_constant_vanishes() {
        let p = SampledPath::from_real_fn(grid(2.0, 64), |_| 7.0);
        for &beta in &[0.2, 0.5, 0.9, 1.0] {
            let d = caputo_l1(&p, beta).unwrap();
            for v in &d.samples {
                assert!(v.norm() < 1e-13);
            }
        }
    }

    #[test]
    fn caputo_of_linear_matches_closed_form() {
        // D^beta t = t^{1-beta}/Gamma(2-beta); L1 is exact for linear data
        let beta = 0.5;
        let p = SampledPath::from_real_fn(grid(1.0, 256), |t| t);
        let d = caputo_l1(&p, beta).unwrap();
        let want = 1.0 / gamma(1.5);
        let got = d.samples[256].re;
        assert!(
            (got - want).abs() < 2e-3,
            "got {got}, want {want} (= 1.1283792)"
        );
        // mid-grid as well
        let t = 0.5f64;
        let want_mid = t.powf(0.5) / gamma(1.5);
        assert!((d.samples[128].re - want_mid).abs() < 2e-3);
    }

    #[test]
    fn caputo_beta1_is_backward_difference() {
        let n = 32;
        let h = 1.0 / n as f64;
        let p = SampledPath::from_real_fn(grid(1.0, n), |t| t * t);
        let d = caputo_l1(&p, 1.0).unwrap();
        for i in 1..=n {
            let t = i as f64 * h;
            // backward difference of t^2 is exactly 2t - h
            assert!((d.samples[i].re - (2.0 * t - h)).abs() < 1e-12);
        }
    }

    #[test]
    fn rl_integral_examples() {
        let n = 128;
        let one = SampledPath::from_real_fn(grid(1.0, n), |_| 1.0);
        // J^1 1 = t exactly
        let j1 = rl_integral(&one, 1.0).unwrap();
        for i in 0..=n {
            let t = i as f64 / n as f64;
            assert!((j1.samples[i].re - t).abs() < 1e-13);
        }
        // J^{1/2} 1 = t^{1/2}/Gamma(1.5), exact for constants
        let jh = rl_integral(&one, 0.5).unwrap();
        for i in 0..=n {
            let t = i as f64 / n as f64;
            assert!(
                (jh.samples[i].re - t.sqrt() / gamma(1.5)).abs() < 1e-12,
                "i={i}"
            );
        }
        // J^{1/2} t at t = 1 is 1/Gamma(2.5); product rule exact for linear f
        let lin = SampledPath::from_real_fn(grid(1.0, n), |t| t);
        let jl = rl_integral(&lin, 0.5).unwrap();
        assert!((jl.samples[n].re - 1.0 / gamma(2.5)).abs() < 1e-12);
        assert!((1.0 / gamma(2.5) - 0.7522528).abs() < 1e-7);
    }

    #[test]
    fn inverse_identity_refinement() {
        // J^beta(D^beta f) = f - f(0) at rate 2 - beta
        let beta = 0.5;
        let e64 = inverse_identity_check(
            &SampledPath::from_real_fn(grid(1.0, 64), |t| t * t),
            beta,
        )
        .unwrap();
        let e128 = inverse_identity_check(
            &SampledPath::from_real_fn(grid(1.0, 128), |t| t * t),
            beta,
        )
        .unwrap();
        let ratio = e64 / e128;
        let want = 2f64.powf(2.0 - beta);
        assert!(
            (ratio - want).abs() / want < 0.25,
            "ratio {ratio}, want {want}"
        );
        // constants are exact
        let ec = inverse_identity_check(
            &SampledPath::from_real_fn(grid(1.0, 64), |_| 3.25),
            beta,
        )
        .unwrap();
        assert!(ec < 1e-13);
        // smooth data at beta = 0.9
        let es = inverse_identity_check(
            &SampledPath::from_real_fn(grid(1.0, 256), |t| t.sin()),
            0.9,
        )
        .unwrap();
        assert!(es < 1e-2);
    }

    #[test]
    fn linearity_to_machine_precision() {
        let g = grid(1.5, 64);
        let f1 = SampledPath::from_fn(g, |t| Complex64::new(t.sin(), t.cos()));
        let f2 = SampledPath::from_fn(g, |t| Complex64::new(t * t, -t));
        let (a, b) = (Complex64::new(2.0, 0.5), Complex64::new(-1.0, 0.25));
        let combo = SampledPath::new(
            g,
            f1.samples
                .iter()
                .zip(&f2.samples)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        )
        .unwrap();
        for &beta in &[0.4, 0.8] {
            let lhs = caputo_l1(&combo, beta).unwrap();
            let d1 = caputo_l1(&f1, beta).unwrap();
            let d2 = caputo_l1(&f2, beta).unwrap();
            for i in 0..=64 {
                let rhs = a * d1.samples[i] + b * d2.samples[i];
                assert!((lhs.samples[i] - rhs).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn weights_positive() {
        for &beta in &[0.1, 0.5, 0.9] {
            for w in l1_weights(beta, 200) {
                assert!(w > 0.0);
            }
            // product-integration interior weights are second differences of
            // the convex map k^{beta+1}
            let p = |k: usize| (k as f64).powf(beta + 1.0);
            for d in 1..200usize {
                assert!(p(d + 1) + p(d - 1) - 2.0 * p(d) > 0.0);
            }
        }
    }

    #[test]
    fn beta_to_one_continuity() {
        let g = grid(1.0, 128);
        let f = SampledPath::from_real_fn(g, |t| (1.5 * t).sin() + t * t);
        let ref1 = caputo_l1(&f, 1.0).unwrap();
        let mut prev_gap = f64::INFINITY;
        for &eps in &[0.1, 0.01, 0.001] {
            let d = caputo_l1(&f, 1.0 - eps).unwrap();
            let gap = d
                .samples
                .iter()
                .zip(&ref1.samples)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0f64, f64::max);
            assert!(gap < prev_gap, "gap {gap} did not shrink (prev {prev_gap})");
            prev_gap = gap;
        }
        assert!(prev_gap < 0.05, "gap at eps=1e-3 is {prev_gap}");
    }

    #[test]
    fn domain_errors() {
        let p = SampledPath::from_real_fn(grid(1.0, 8), |t| t);
        assert!(caputo_l1(&p, 0.0).is_err());
        assert!(caputo_l1(&p, 1.5).is_err());
        assert!(rl_integral(&p, 0.0).is_err());
        assert!(rl_integral(&p, -0.5).is_err());
    }
}
