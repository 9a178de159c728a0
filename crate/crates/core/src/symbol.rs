//! Polynomial matrix symbols: evaluation on the frequency lattice,
//! admissibility validation (Hermitianity, order dominance, diagonal
//! ellipticity, positivity radius), Gershgorin segments and the Hermitian
//! eigendecomposition feeding the propagator.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{SpectralGrid, Space, StateField};

/// Relative Frobenius tolerance for treating a matrix as Hermitian;
/// deviations below it are symmetrized away.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Multivariate polynomial in xi with complex coefficients, indexed by
/// multi-indices. One entry A_{j,k}(xi) of the matrix symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySymbol {
    n: usize,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

impl PolySymbol {
    pub fn new(n: usize, terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>) -> Result<Self> {
        let mut map: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (alpha, coeff) in terms {
            if alpha.len() != n {
                return Err(Error::Config(format!(
                    "multi-index {alpha:?} does not match dimension {n}"
                )));
            }
            *map.entry(alpha).or_insert(Complex64::ZERO) += coeff;
        }
        map.retain(|_, c| *c != Complex64::ZERO);
        Ok(Self { n, terms: map })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn monomial(n: usize, alpha: Vec<u32>, coeff: Complex64) -> Result<Self> {
        Self::new(n, [(alpha, coeff)])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.terms.iter().map(|(a, c)| (a.as_slice(), *c))
    }

    /// Order = max |alpha| over stored terms (0 for the zero polynomial).
    pub fn order(&self) -> usize {
        self.terms
            .keys()
            .map(|a| a.iter().map(|&v| v as usize).sum())
            .max()
            .unwrap_or(0)
    }

    /// All stored multi-indices have |alpha| = order.
    pub fn is_homogeneous(&self) -> bool {
        let ord = self.order();
        self.terms
            .keys()
            .all(|a| a.iter().map(|&v| v as usize).sum::<usize>() == ord)
    }

    pub fn conjugate(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|(a, c)| (a.clone(), c.conj()))
                .collect(),
        }
    }

    pub fn eval(&self, xi: &[f64]) -> Complex64 {
        let mut acc = Complex64::ZERO;
        for (alpha, coeff) in &self.terms {
            let mut mono = 1.0f64;
            for (a, &p) in alpha.iter().enumerate() {
                for _ in 0..p {
                    mono *= xi[a];
                }
            }
            acc += coeff * mono;
        }
        acc
    }

    /// Max coefficient deviation from `other.conjugate()`, relative to the
    /// largest coefficient magnitude of either polynomial.
    fn conj_deviation(&self, other: &Self) -> f64 {
        let mut scale = 0.0f64;
        let mut worst = 0.0f64;
        let keys: std::collections::BTreeSet<_> =
            self.terms.keys().chain(other.terms.keys()).collect();
        for k in keys {
            let a = self.terms.get(k).copied().unwrap_or(Complex64::ZERO);
            let b = other.terms.get(k).copied().unwrap_or(Complex64::ZERO);
            scale = scale.max(a.norm()).max(b.norm());
            worst = worst.max((a - b.conj()).norm());
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }
}

/// Lattice point where the evaluated symbol had a negative eigenvalue.
#[derive(Debug, Clone, Serialize)]
pub struct NegativeMode {
    pub flat_index: usize,
    pub xi: Vec<f64>,
    pub min_eigenvalue: f64,
}

/// Outcome of Conditions-(A) validation against a lattice.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub m: usize,
    pub n: usize,
    pub hermitian_ok: bool,
    /// max relative coefficient/lattice deviation from Hermitianity
    pub hermitian_deviation: f64,
    pub order_dominance_ok: bool,
    /// (row, column) pairs with l_{row,col} >= l_{col,col}
    pub dominance_violations: Vec<(usize, usize)>,
    pub diagonal_homogeneous_ok: bool,
    pub diagonal_elliptic_ok: bool,
    pub nonelliptic_diagonals: Vec<usize>,
    /// smallest lattice radius beyond which all sampled eigenvalues are
    /// strictly positive (NaN when no grid was supplied)
    pub r0: f64,
    pub lattice_points_checked: usize,
    pub min_eigenvalue: f64,
    pub negative_points: Vec<NegativeMode>,
}

impl ValidationReport {
    /// Structural Conditions (A): Hermitianity, order dominance, homogeneous
    /// elliptic diagonal.
    pub fn structural_ok(&self) -> bool {
        self.hermitian_ok
            && self.order_dominance_ok
            && self.diagonal_homogeneous_ok
            && self.diagonal_elliptic_ok
    }

    /// Structurally sound and no negative eigenvalues on the sampled lattice.
    pub fn solver_admissible(&self) -> bool {
        self.structural_ok() && self.negative_points.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut parts = Vec::new();
        if !self.hermitian_ok {
            parts.push(format!(
                "not Hermitian (deviation {:.3e})",
                self.hermitian_deviation
            ));
        }
        if !self.order_dominance_ok {
            parts.push(format!(
                "order dominance violated at {:?}",
                self.dominance_violations
            ));
        }
        if !self.diagonal_homogeneous_ok {
            parts.push("diagonal entries not homogeneous".into());
        }
        if !self.diagonal_elliptic_ok {
            parts.push(format!(
                "diagonal entries not elliptic: {:?}",
                self.nonelliptic_diagonals
            ));
        }
        if !self.negative_points.is_empty() {
            parts.push(format!(
                "{} lattice points with negative eigenvalues (min {:.3e})",
                self.negative_points.len(),
                self.min_eigenvalue
            ));
        }
        if parts.is_empty() {
            "ok".into()
        } else {
            parts.join("; ")
        }
    }
}

/// m x m matrix of polynomial symbols with order metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSymbol {
    m: usize,
    n: usize,
    entries: Vec<PolySymbol>,
    orders: Vec<usize>,
    ell_max: usize,
    ell_min: usize,
}

impl MatrixSymbol {
    /// Shape-level construction; Conditions (A) are checked by `validate`.
    pub fn new(m: usize, n: usize, entries: Vec<PolySymbol>) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("need m >= 1 components".into()));
        }
        if entries.len() != m * m {
            return Err(Error::Config(format!(
                "expected {} entries (m = {m}), got {}",
                m * m,
                entries.len()
            )));
        }
        if entries.iter().any(|p| p.dim() != n) {
            return Err(Error::Config(
                "entry dimension does not match the symbol dimension".into(),
            ));
        }
        let orders: Vec<usize> = entries.iter().map(|p| p.order()).collect();
        let diag_orders: Vec<usize> = (0..m).map(|j| orders[j * m + j]).collect();
        let ell_max = *diag_orders.iter().max().unwrap();
        let ell_min = *diag_orders.iter().min().unwrap();
        Ok(Self {
            m,
            n,
            entries,
            orders,
            ell_max,
            ell_min,
        })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entry(&self, row: usize, col: usize) -> &PolySymbol {
        &self.entries[row * self.m + col]
    }

    pub fn order(&self, row: usize, col: usize) -> usize {
        self.orders[row * self.m + col]
    }

    /// max diagonal order l*
    pub fn ell_star_max(&self) -> usize {
        self.ell_max
    }

    /// min diagonal order l_*
    pub fn ell_star_min(&self) -> usize {
        self.ell_min
    }

    /// tau* = l* - l_* (0 when all diagonal operators share one order)
    pub fn tau_star(&self) -> usize {
        self.ell_max - self.ell_min
    }

    /// Entrywise polynomial evaluation at a frequency point.
    pub fn eval(&self, xi: &[f64]) -> DMatrix<Complex64> {
        DMatrix::from_fn(self.m, self.m, |j, k| self.entry(j, k).eval(xi))
    }

    /// Apply the symbol to a frequency-space field: out_j = sum_k A_{j,k} u_k.
    pub fn apply(&self, field: &StateField) -> Result<StateField> {
        if field.space() != Space::Frequency {
            return Err(Error::Domain(
                "matrix symbol applies in frequency space".into(),
            ));
        }
        if field.components() != self.m {
            return Err(Error::GridMismatch(format!(
                "field has {} components, symbol is {}x{}",
                field.components(),
                self.m,
                self.m
            )));
        }
        if field.grid().dim() != self.n {
            return Err(Error::GridMismatch(
                "grid dimension does not match the symbol".into(),
            ));
        }
        let grid = field.grid().clone();
        let len = grid.len();
        let mut out = StateField::zeros(grid.clone(), self.m, Space::Frequency);
        let mut xi = [0.0f64; 3];
        for flat in 0..len {
            grid.xi_at(flat, &mut xi);
            let a = self.eval(&xi[..self.n]);
            for j in 0..self.m {
                let mut acc = Complex64::ZERO;
                for k in 0..self.m {
                    acc += a[(j, k)] * field.component(k)[flat];
                }
                out.component_mut(j)[flat] = acc;
            }
        }
        Ok(out)
    }

    fn structural_report(&self) -> ValidationReport {
        let m = self.m;
        let mut hermitian_deviation = 0.0f64;
        for j in 0..m {
            for k in 0..m {
                hermitian_deviation =
                    hermitian_deviation.max(self.entry(j, k).conj_deviation(self.entry(k, j)));
            }
        }
        let mut dominance_violations = Vec::new();
        for j in 0..m {
            for k in 0..m {
                if k != j && self.order(k, j) >= self.order(j, j) && !self.entry(k, j).is_zero() {
                    dominance_violations.push((k, j));
                }
            }
        }
        let diagonal_homogeneous_ok = (0..m).all(|j| self.entry(j, j).is_homogeneous());
        let mut nonelliptic = Vec::new();
        for j in 0..m {
            let diag = self.entry(j, j);
            let elliptic = unit_sphere(self.n, 64)
                .iter()
                .all(|dir| diag.eval(dir).re > 0.0);
            if !elliptic || diag.is_zero() {
                nonelliptic.push(j);
            }
        }
        ValidationReport {
            m,
            n: self.n,
            hermitian_ok: hermitian_deviation <= HERMITIAN_TOL,
            hermitian_deviation,
            order_dominance_ok: dominance_violations.is_empty(),
            dominance_violations,
            diagonal_homogeneous_ok,
            diagonal_elliptic_ok: nonelliptic.is_empty(),
            nonelliptic_diagonals: nonelliptic,
            r0: f64::NAN,
            lattice_points_checked: 0,
            min_eigenvalue: f64::NAN,
            negative_points: Vec::new(),
        }
    }

    /// Structural checks only (no lattice); Err carries the failing report.
    pub fn validate_structural(&self) -> Result<ValidationReport> {
        let report = self.structural_report();
        if report.structural_ok() {
            Ok(report)
        } else {
            Err(Error::ValidationFailure {
                summary: report.summary(),
                report: Box::new(report),
            })
        }
    }

    /// Full Conditions-(A) validation against a lattice: structural checks
    /// plus an eigenvalue sweep measuring the positivity radius R0 and
    /// listing lattice points with negative eigenvalues.
    pub fn validate(&self, grid: &SpectralGrid) -> Result<ValidationReport> {
        if grid.dim() != self.n {
            return Err(Error::GridMismatch(
                "grid dimension does not match the symbol".into(),
            ));
        }
        let mut report = self.structural_report();
        if !report.structural_ok() {
            return Err(Error::ValidationFailure {
                summary: report.summary(),
                report: Box::new(report),
            });
        }

        let len = grid.len();
        let mut xi = [0.0f64; 3];
        // (radius, min eigenvalue) per lattice point
        let mut sweep: Vec<(f64, f64)> = Vec::with_capacity(len);
        let mut min_eig = f64::INFINITY;
        let mut herm_lattice = 0.0f64;
        for flat in 0..len {
            grid.xi_at(flat, &mut xi);
            let h = self.eval(&xi[..self.n]);
            herm_lattice = herm_lattice.max(hermitian_deviation(&h));
            let dec = eig_hermitian(&h)?;
            let lo = dec.lambdas[0];
            min_eig = min_eig.min(lo);
            sweep.push((grid.freq_radius(flat), lo));
            let scale = 1.0 + h.norm();
            if lo < -HERMITIAN_TOL * scale {
                report.negative_points.push(NegativeMode {
                    flat_index: flat,
                    xi: xi[..self.n].to_vec(),
                    min_eigenvalue: lo,
                });
            }
        }
        report.hermitian_deviation = report.hermitian_deviation.max(herm_lattice);
        report.hermitian_ok = report.hermitian_deviation <= HERMITIAN_TOL;
        report.lattice_points_checked = len;
        report.min_eigenvalue = min_eig;

        // Discrete radius sweep: smallest distinct lattice radius r such that
        // every lattice point with |xi| > r has a strictly positive minimum
        // eigenvalue; never below the smallest positive lattice radius.
        sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
        let smallest_positive = sweep
            .iter()
            .map(|&(r, _)| r)
            .find(|&r| r > 0.0)
            .unwrap_or(0.0);
        let mut r0 = 0.0f64;
        for &(r, lo) in &sweep {
            if lo <= 0.0 {
                r0 = r0.max(r);
            }
        }
        report.r0 = r0.max(smallest_positive);

        if !report.hermitian_ok {
            return Err(Error::ValidationFailure {
                summary: report.summary(),
                report: Box::new(report),
            });
        }
        Ok(report)
    }
}

/// Deterministic unit-sphere sample directions.
pub fn unit_sphere(n: usize, count: usize) -> Vec<Vec<f64>> {
    match n {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![th.cos(), th.sin()]
            })
            .collect(),
        3 => {
            // Fibonacci spiral
            let phi = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = phi * i as f64;
                    vec![r * th.cos(), y, r * th.sin()]
                })
                .collect()
        }
        _ => unreachable!("dimension checked at construction"),
    }
}

/// Relative Frobenius deviation of H from its Hermitian part.
pub fn hermitian_deviation(h: &DMatrix<Complex64>) -> f64 {
    let adj = h.adjoint();
    let diff = h - &adj;
    let scale = 1.0 + h.norm();
    diff.norm() / scale
}

/// Gershgorin segments (center, radius) of a Hermitian matrix: center is the
/// real diagonal entry, radius the off-diagonal row sum of magnitudes.
pub fn gershgorin_segments(h: &DMatrix<Complex64>) -> Result<Vec<(f64, f64)>> {
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    let m = h.nrows();
    Ok((0..m)
        .map(|j| {
            let center = h[(j, j)].re;
            let radius: f64 = (0..m).filter(|&k| k != j).map(|k| h[(j, k)].norm()).sum();
            (center, radius)
        })
        .collect())
}

/// Eigendecomposition of a Hermitian matrix with ascending eigenvalues,
/// unitary basis and a deterministic phase convention (the first component
/// of each eigenvector above a relative threshold is made real-positive).
#[derive(Debug, Clone)]
pub struct EigenDecomp {
    pub lambdas: Vec<f64>,
    /// columns are the orthonormal eigenvectors
    pub basis: DMatrix<Complex64>,
    /// inverse basis (= adjoint, since the basis is unitary)
    pub basis_inv: DMatrix<Complex64>,
}

impl EigenDecomp {
    /// Frobenius error of the reconstruction M diag(lambda) M^{-1} vs `h`.
    pub fn reconstruction_error(&self, h: &DMatrix<Complex64>) -> f64 {
        let m = self.lambdas.len();
        let lam = DMatrix::from_fn(m, m, |i, j| {
            if i == j {
                Complex64::new(self.lambdas[i], 0.0)
            } else {
                Complex64::ZERO
            }
        });
        (&self.basis * lam * &self.basis_inv - h).norm()
    }

    pub fn unitarity_error(&self) -> f64 {
        let m = self.lambdas.len();
        (&self.basis * &self.basis_inv - DMatrix::<Complex64>::identity(m, m)).norm()
    }

    pub fn max_entry_norm(&self) -> f64 {
        self.basis
            .iter()
            .chain(self.basis_inv.iter())
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

pub fn eig_hermitian(h: &DMatrix<Complex64>) -> Result<EigenDecomp> {
    let dev = hermitian_deviation(h);
    if dev > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    // symmetrize roundoff-level deviations
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    let m = sym.nrows();
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 1024)
        .ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let lambdas: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut basis = DMatrix::<Complex64>::zeros(m, m);
    for (col, &src) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(src);
        // phase convention: first component with non-negligible magnitude
        // becomes real positive
        let lead = (0..m).find(|&i| v[i].norm() > 1e-8).unwrap_or(0);
        let phase = v[lead].conj() / v[lead].norm();
        for i in 0..m {
            basis[(i, col)] = v[i] * phase;
        }
    }
    let basis_inv = basis.adjoint();
    Ok(EigenDecomp {
        lambdas,
        basis,
        basis_inv,
    })
}

/// Sorted-eigenvalue vs sorted-diagonal relative deviation per radius,
/// maximized over sphere directions; measures the diagonal-dominance
/// asymptotics lambda_j = A_{j,j}(1 + o(1)).
pub fn corollary_asymptotics_check(
    sym: &MatrixSymbol,
    radii: &[f64],
) -> Result<Vec<(f64, f64)>> {
    sym.validate_structural()?;
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("radii must be strictly increasing".into()));
    }
    let dirs = unit_sphere(sym.dim(), 128);
    let m = sym.size();
    let mut table = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut worst = 0.0f64;
        for dir in &dirs {
            let xi: Vec<f64> = dir.iter().map(|d| d * r).collect();
            let h = sym.eval(&xi);
            let dec = eig_hermitian(&h)?;
            let mut diag: Vec<f64> = (0..m).map(|j| h[(j, j)].re).collect();
            diag.sort_by(f64::total_cmp);
            for j in 0..m {
                let d = diag[j];
                let dev = if d == 0.0 {
                    f64::INFINITY
                } else {
                    (dec.lambdas[j] / d - 1.0).abs()
                };
                worst = worst.max(dev);
            }
        }
        table.push((r, worst));
    }
    Ok(table)
}

/// Symbols shared by tests across modules.
#[cfg(test)]
pub(crate) mod testsupport {
    use super::*;

    /// Coupled second-order example: [[|xi|^2, a xi], [a xi, |xi|^2]] in 1D.
    pub(crate) fn coupled_symbol_1d(a: f64) -> MatrixSymbol {
        let one = Complex64::new(1.0, 0.0);
        let lap = PolySymbol::monomial(1, vec![2], one).unwrap();
        let off = PolySymbol::monomial(1, vec![1], Complex64::new(a, 0.0)).unwrap();
        MatrixSymbol::new(2, 1, vec![lap.clone(), off.clone(), off, lap]).unwrap()
    }

    /// diag(|xi|^2, ..., |xi|^2) in n dimensions.
    pub(crate) fn diag_laplacian(m: usize, n: usize) -> MatrixSymbol {
        let one = Complex64::new(1.0, 0.0);
        let lap = PolySymbol::new(
            n,
            (0..n).map(|a| {
                let mut alpha = vec![0u32; n];
                alpha[a] = 2;
                (alpha, one)
            }),
        )
        .unwrap();
        let mut entries = Vec::with_capacity(m * m);
        for j in 0..m {
            for k in 0..m {
                entries.push(if j == k {
                    lap.clone()
                } else {
                    PolySymbol::zero(n)
                });
            }
        }
        MatrixSymbol::new(m, n, entries).unwrap()
    }
}
