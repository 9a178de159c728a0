//! End-to-end library workflows: closed-form golden solutions through the
//! public API, and the solve -> persist -> verify loop.

use num_complex::Complex64;

use mlfrac_core::field_io::{read_field, write_field};
use mlfrac_core::{
    ml_eval, residual_check, MatrixSymbol, MlParams, PolySymbol, Propagator, SourceSpec, Space,
    SpectralGrid, StateField, TimeGrid,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn coupled_symbol(a: f64) -> MatrixSymbol {
    let one = Complex64::new(1.0, 0.0);
    let lap = PolySymbol::monomial(1, vec![2], one).unwrap();
    let off = PolySymbol::monomial(1, vec![1], Complex64::new(a, 0.0)).unwrap();
    MatrixSymbol::new(2, 1, vec![lap.clone(), off.clone(), off, lap]).unwrap()
}

fn gaussian_pair(grid: &SpectralGrid) -> StateField {
    StateField::from_fn_physical(grid.clone(), 2, |c, x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let (amp, w) = if c == 0 { (1.0, 0.16) } else { (0.6, 0.25) };
        Complex64::new(amp * (-r2 / (2.0 * w)).exp(), 0.0)
    })
}

/// Closed-form solution of the coupled example: per frequency, with
/// lp = xi^2 + a xi and lm = xi^2 - a xi,
///   u1 = (E(-lp t^b) + E(-lm t^b))/2 phi1 + (E(-lp t^b) - E(-lm t^b))/2 phi2
///   u2 = (E(-lp t^b) - E(-lm t^b))/2 phi1 + (E(-lp t^b) + E(-lm t^b))/2 phi2
fn closed_form_solution(
    grid: &SpectralGrid,
    a: f64,
    beta: f64,
    t: f64,
    phi: &StateField,
) -> StateField {
    let hat = phi.to_frequency().unwrap();
    let p = MlParams::new(beta, 1.0).unwrap();
    let tb = t.powf(beta);
    let mut out = StateField::zeros(grid.clone(), 2, Space::Frequency);
    for flat in 0..grid.len() {
        let xi = grid.xi(0, flat);
        let lp = xi * xi + a * xi;
        let lm = xi * xi - a * xi;
        let ep = ml_eval(p, -lp * tb).unwrap().value;
        let em = ml_eval(p, -lm * tb).unwrap().value;
        let (s, d) = (0.5 * (ep + em), 0.5 * (ep - em));
        let (p1, p2) = (hat.component(0)[flat], hat.component(1)[flat]);
        out.component_mut(0)[flat] = s * p1 + d * p2;
        out.component_mut(1)[flat] = d * p1 + s * p2;
    }
    out.fft_inverse().unwrap()
}

#[test]
fn coupled_example_matches_closed_form() {
    let grid = SpectralGrid::new(&[TWO_PI], &[64]).unwrap();
    let phi = gaussian_pair(&grid);
    for &beta in &[0.5, 1.0] {
        let prop = Propagator::new(grid.clone(), coupled_symbol(1.0), beta).unwrap();
        for &t in &[0.1, 0.5, 1.0] {
            let got = prop.apply_s(t, &phi).unwrap();
            let want = closed_form_solution(&grid, 1.0, beta, t, &phi);
            let mut worst = 0.0f64;
            for c in 0..2 {
                for (g, w) in got.component(c).iter().zip(want.component(c)) {
                    worst = worst.max((g - w).norm());
                }
            }
            assert!(worst <= 1e-10, "beta={beta}, t={t}: {worst:.2e}");
        }
    }
}

#[test]
fn classical_heat_limit_1d() {
    // beta = 1, scalar diffusion of a Gaussian: closed-form free-space
    // solution, domain wide enough that wrap-around is negligible
    let l = 20.0;
    let grid = SpectralGrid::new(&[l], &[128]).unwrap();
    let lap = PolySymbol::monomial(1, vec![2], Complex64::new(1.0, 0.0)).unwrap();
    let sym = MatrixSymbol::new(1, 1, vec![lap]).unwrap();
    let prop = Propagator::new(grid.clone(), sym, 1.0).unwrap();
    let sigma2 = 0.5;
    let phi = StateField::from_fn_physical(grid.clone(), 1, |_, x| {
        Complex64::new((-x[0] * x[0] / (2.0 * sigma2)).exp(), 0.0)
    });
    let t = 0.1;
    let u = prop.apply_s(t, &phi).unwrap();
    let s2t = sigma2 + 2.0 * t;
    let mut worst = 0.0f64;
    for flat in 0..grid.len() {
        let x = grid.x(0, flat);
        let want = (sigma2 / s2t).sqrt() * (-x * x / (2.0 * s2t)).exp();
        worst = worst.max((u.component(0)[flat].re - want).abs());
    }
    assert!(worst <= 1e-8, "heat solution error {worst:.2e}");
}

#[test]
fn solve_persist_verify_round_trip() {
    let dir = std::env::temp_dir().join("mlfrac-pipeline-test");
    std::fs::create_dir_all(&dir).unwrap();
    let beta = 0.5;
    let grid = SpectralGrid::new(&[TWO_PI], &[64]).unwrap();
    let sym = coupled_symbol(1.0);
    let prop = Propagator::new(grid.clone(), sym.clone(), beta).unwrap();
    let phi = gaussian_pair(&grid);

    let tg = TimeGrid::new(1.0, 32).unwrap();
    let t_out: Vec<f64> = tg.times().collect();
    let fields = prop.solve_linear(&phi, &SourceSpec::Zero, &t_out, 64).unwrap();

    // persist and reload every output
    let mut reloaded = Vec::new();
    for (i, f) in fields.iter().enumerate() {
        let path = dir.join(format!("u{i:03}.field"));
        write_field(&path, f).unwrap();
        reloaded.push(read_field(&path).unwrap());
    }
    let report = residual_check(&reloaded, &sym, beta, None, tg).unwrap();
    // coarse grid smoke threshold; the refinement-rate contract is tested
    // against finer sweeps elsewhere
    assert!(
        report.tail_max(0.25) < 0.05,
        "residual {:.3e}",
        report.tail_max(0.25)
    );
}
