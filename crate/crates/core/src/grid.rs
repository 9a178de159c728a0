//! Truncated periodic lattice approximating R^n, discrete Fourier transforms
//! of m-component fields, and frequency-weighted (Sobolev) norms.
//!
//! Sign convention: the forward transform uses the kernel e^{+i x xi}
//! (and the inverse carries the (2 pi)^{-n} factor), which is the opposite
//! of the usual engineering convention. The physical box is [-L/2, L/2)^n;
//! frequency data is stored in FFT index order (non-negative frequencies
//! first, then negative).

use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};

pub const DEFAULT_POINT_CAP: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Physical,
    Frequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGrid {
    n: usize,
    extent: Vec<f64>,
    points: Vec<usize>,
}

impl SpectralGrid {
    pub fn new(extent: &[f64], points: &[usize]) -> Result<Self> {
        Self::with_cap(extent, points, DEFAULT_POINT_CAP)
    }

    pub fn with_cap(extent: &[f64], points: &[usize], cap: usize) -> Result<Self> {
        let n = extent.len();
        if n == 0 || n > 3 {
            return Err(Error::Config(format!("dimension must be 1..=3, got {n}")));
        }
        if points.len() != n {
            return Err(Error::Config(
                "extent and points must have the same length".into(),
            ));
        }
        for &l in extent {
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::Config(format!("extent must be positive, got {l}")));
            }
        }
        let mut total = 1usize;
        for &p in points {
            if p < 4 || !p.is_power_of_two() {
                return Err(Error::Config(format!(
                    "points per axis must be a power of two >= 4, got {p}"
                )));
            }
            total = total.saturating_mul(p);
        }
        if total > cap {
            return Err(Error::Config(format!(
                "total lattice size {total} exceeds the cap {cap}"
            )));
        }
        Ok(Self {
            n,
            extent: extent.to_vec(),
            points: points.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    /// Physical quadrature cell volume prod(L_d/N_d).
    pub fn cell_volume(&self) -> f64 {
        (0..self.n).map(|a| self.dx(a)).product()
    }

    /// Physical coordinate along one axis; the box is [-L/2, L/2).
    pub fn x(&self, axis: usize, idx: usize) -> f64 {
        -0.5 * self.extent[axis] + idx as f64 * self.dx(axis)
    }

    /// Frequency along one axis in FFT index order.
    pub fn xi(&self, axis: usize, idx: usize) -> f64 {
        let np = self.points[axis];
        let k = if idx < np / 2 {
            idx as isize
        } else {
            idx as isize - np as isize
        };
        2.0 * std::f64::consts::PI * k as f64 / self.extent[axis]
    }

    pub fn flat_to_multi(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for a in (0..self.n).rev() {
            idx[a] = rem % self.points[a];
            rem /= self.points[a];
        }
        idx
    }

    /// Write the frequency vector at a flat index into `out[..n]`.
    pub fn xi_at(&self, flat: usize, out: &mut [f64]) {
        let multi = self.flat_to_multi(flat);
        for a in 0..self.n {
            out[a] = self.xi(a, multi[a]);
        }
    }

    /// Write the physical coordinates at a flat index into `out[..n]`.
    pub fn x_at(&self, flat: usize, out: &mut [f64]) {
        let multi = self.flat_to_multi(flat);
        for a in 0..self.n {
            out[a] = self.x(a, multi[a]);
        }
    }

    pub fn freq_radius(&self, flat: usize) -> f64 {
        let mut xi = [0.0; 3];
        self.xi_at(flat, &mut xi);
        xi[..self.n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frequency-space quadrature weight prod(dxi)/(2 pi)^n = 1/prod(L_d).
    pub fn freq_weight(&self) -> f64 {
        1.0 / self.extent.iter().product::<f64>()
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    let mut p = planner().lock().unwrap();
    if forward {
        p.plan_fft_forward(len)
    } else {
        p.plan_fft_inverse(len)
    }
}

/// m-component complex field on a lattice, tagged physical or frequency.
#[derive(Debug, Clone)]
pub struct StateField {
    grid: SpectralGrid,
    m: usize,
    space: Space,
    /// component-major, row-major lattice order within each component
    data: Vec<Vec<Complex64>>,
}

impl StateField {
    pub fn zeros(grid: SpectralGrid, m: usize, space: Space) -> Self {
        let len = grid.len();
        Self {
            grid,
            m,
            space,
            data: vec![vec![Complex64::ZERO; len]; m],
        }
    }

    pub fn from_data(
        grid: SpectralGrid,
        space: Space,
        data: Vec<Vec<Complex64>>,
    ) -> Result<Self> {
        let len = grid.len();
        if data.is_empty() || data.iter().any(|c| c.len() != len) {
            return Err(Error::GridMismatch(
                "component length does not match the lattice".into(),
            ));
        }
        Ok(Self {
            m: data.len(),
            grid,
            space,
            data,
        })
    }

    /// Build a physical-space field from a pointwise map (component, x).
    pub fn from_fn_physical(
        grid: SpectralGrid,
        m: usize,
        f: impl Fn(usize, &[f64]) -> Complex64,
    ) -> Self {
        let len = grid.len();
        let n = grid.dim();
        let mut data = Vec::with_capacity(m);
        for c in 0..m {
            let mut comp = Vec::with_capacity(len);
            let mut x = [0.0f64; 3];
            for flat in 0..len {
                grid.x_at(flat, &mut x);
                comp.push(f(c, &x[..n]));
            }
            data.push(comp);
        }
        Self {
            grid,
            m,
            space: Space::Physical,
            data,
        }
    }

    pub fn grid(&self) -> &SpectralGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.m
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn component(&self, c: usize) -> &[Complex64] {
        &self.data[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [Complex64] {
        &mut self.data[c]
    }

    pub fn data(&self) -> &[Vec<Complex64>] {
        &self.data
    }

    /// Transform along every axis with the given kernel direction, applying
    /// the alternating phase (from the centered box) and the scale factor.
    fn transform(&self, forward_kernel_positive: bool, phase_before: bool, scale: f64) -> Self {
        let grid = &self.grid;
        let len = grid.len();
        let mut out = self.data.clone();
        for axis in 0..grid.dim() {
            let na = grid.points[axis];
            let stride: usize = grid.points[axis + 1..].iter().product();
            let lines = len / na;
            let fft = plan(na, !forward_kernel_positive);
            let mut scratch = vec![Complex64::ZERO; na];
            for comp in out.iter_mut() {
                for line in 0..lines {
                    // base index of this line: interleave outer/inner blocks
                    let outer = line / stride;
                    let inner = line % stride;
                    let base = outer * na * stride + inner;
                    for (j, s) in scratch.iter_mut().enumerate() {
                        *s = comp[base + j * stride];
                    }
                    if phase_before {
                        for (k, s) in scratch.iter_mut().enumerate() {
                            if k % 2 == 1 {
                                *s = -*s;
                            }
                        }
                    }
                    fft.process(&mut scratch);
                    if !phase_before {
                        for (k, s) in scratch.iter_mut().enumerate() {
                            if k % 2 == 1 {
                                *s = -*s;
                            }
                        }
                    }
                    for (j, s) in scratch.iter().enumerate() {
                        comp[base + j * stride] = *s;
                    }
                }
            }
        }
        let mut field = Self {
            grid: self.grid.clone(),
            m: self.m,
            space: if self.space == Space::Physical {
                Space::Frequency
            } else {
                Space::Physical
            },
            data: out,
        };
        for comp in field.data.iter_mut() {
            for v in comp.iter_mut() {
                *v *= scale;
            }
        }
        field
    }

    /// Discrete surrogate of F[f](xi) = int f(x) e^{+i x xi} dx.
    pub fn fft_forward(&self) -> Result<Self> {
        if self.space != Space::Physical {
            return Err(Error::Domain(
                "fft_forward expects a physical-space field".into(),
            ));
        }
        // e^{+i x xi} kernel; phase (-1)^k after the transform (centered box)
        Ok(self.transform(true, false, self.grid.cell_volume()))
    }

    /// Discrete surrogate of F^{-1}, with the (2 pi)^{-n} factor absorbed.
    pub fn fft_inverse(&self) -> Result<Self> {
        if self.space != Space::Frequency {
            return Err(Error::Domain(
                "fft_inverse expects a frequency-space field".into(),
            ));
        }
        let scale = 1.0 / self.grid.extent.iter().product::<f64>();
        Ok(self.transform(false, true, scale))
    }

    /// Return the field in frequency space (transforming if needed).
    pub fn to_frequency(&self) -> Result<Self> {
        match self.space {
            Space::Frequency => Ok(self.clone()),
            Space::Physical => self.fft_forward(),
        }
    }

    /// Return the field in physical space (transforming if needed).
    pub fn to_physical(&self) -> Result<Self> {
        match self.space {
            Space::Physical => Ok(self.clone()),
            Space::Frequency => self.fft_inverse(),
        }
    }

    /// Frequency-weighted norm: the root of
    /// sum_j (2 pi)^{-n} sum_xi |F[f_j](xi)|^2 (1+|xi|^2)^a dxi.
    /// At a = 0 this equals the physical L2 norm (Parseval).
    pub fn sobolev_norm(&self, a: f64) -> Result<f64> {
        let hat = self.to_frequency()?;
        let w = self.grid.freq_weight();
        let mut total = 0.0f64;
        if a == 0.0 {
            for comp in &hat.data {
                for v in comp {
                    total += v.norm_sqr();
                }
            }
        } else {
            let len = self.grid.len();
            let mut weights = Vec::with_capacity(len);
            for flat in 0..len {
                let r = hat.grid.freq_radius(flat);
                weights.push((1.0 + r * r).powf(a));
            }
            for comp in &hat.data {
                for (v, wq) in comp.iter().zip(&weights) {
                    total += v.norm_sqr() * wq;
                }
            }
        }
        Ok((total * w).sqrt())
    }

    /// Max pointwise magnitude over all components and lattice points.
    pub fn linf(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|c| c.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Relative L2 mass on the outermost lattice shell (physical space).
    /// The domain-truncation contract requires this to be < 1e-8 for
    /// admissible initial data.
    pub fn boundary_tail_fraction(&self) -> Result<f64> {
        let phys = self.to_physical()?;
        let grid = &phys.grid;
        let mut boundary = 0.0f64;
        let mut total = 0.0f64;
        for comp in &phys.data {
            for (flat, v) in comp.iter().enumerate() {
                let multi = grid.flat_to_multi(flat);
                let on_boundary = (0..grid.dim())
                    .any(|a| multi[a] == 0 || multi[a] == grid.points[a] - 1);
                let mag = v.norm_sqr();
                total += mag;
                if on_boundary {
                    boundary += mag;
                }
            }
        }
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok((boundary / total).sqrt())
    }

    /// Deviation from conjugate symmetry F(-xi) = conj(F(xi)); zero for
    /// transforms of real-valued fields.
    pub fn conjugate_symmetry_deviation(&self) -> Result<f64> {
        let hat = self.to_frequency()?;
        let grid = &hat.grid;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for comp in &hat.data {
            for (flat, v) in comp.iter().enumerate() {
                scale = scale.max(v.norm());
                let multi = grid.flat_to_multi(flat);
                let mut neg = [0usize; 3];
                for a in 0..grid.dim() {
                    neg[a] = (grid.points[a] - multi[a]) % grid.points[a];
                }
                let mut negflat = 0usize;
                for a in 0..grid.dim() {
                    negflat = negflat * grid.points[a] + neg[a];
                }
                worst = worst.max((comp[negflat] - v.conj()).norm());
            }
        }
        Ok(if scale == 0.0 { 0.0 } else { worst / scale })
    }
}
