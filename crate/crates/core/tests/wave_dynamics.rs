use std::f64::consts::PI;
use std::sync::OnceLock;

use fracdirac::bloch::{coeff_inner, coeff_norm, BlochMatrix};
use fracdirac::dirac::{analyze, DiracAnalysis, DiracSetup};
use fracdirac::dynamics::{
    admissible_dt, cfl_limit, convergence_study, evolve_dirac, evolve_fnls, fitted_rate, read_snapshot,
    sobolev_weight, synthesize_profile, weighted_hs_norm, write_snapshot, Ansatz, ApproximationOrder, CaseReport,
    DiracParams, DiracSolver, EnvelopeState, Field2D, FnlsProblem, FnlsSolver, GaussianPacket, Integrator,
    MicroProfiles, SimConfig, Spectral, TimeGrid,
};
use fracdirac::grid::ObliqueGrid;
use fracdirac::{Error, FourierPotential, LatticeBasis, Modulation, Vec2};
use num_complex::Complex64;
use proptest::prelude::*;

const I: Complex64 = Complex64::new(0.0, 1.0);

struct Fixture {
    analysis: DiracAnalysis,
    profiles: MicroProfiles,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let lattice = LatticeBasis::honeycomb();
        let analysis = analyze(&DiracSetup {
            lattice: lattice.clone(),
            potential: FourierPotential::builtin_v(),
            perturbation: FourierPotential::builtin_w(),
            sigma: 2.0,
            truncation: 10,
        })
        .unwrap();
        let profiles = MicroProfiles::compute(&analysis, &FourierPotential::builtin_w(), lattice.cell_area).unwrap();
        Fixture { analysis, profiles }
    })
}

fn grid(cells: usize, n: usize, eps: f64) -> ObliqueGrid {
    ObliqueGrid::new(&LatticeBasis::honeycomb(), cells, n, eps).unwrap()
}

fn plane_wave(g: &ObliqueGrid, f: [i64; 2], amp: Complex64) -> Field2D {
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector(f);
    Field2D::from_fn(g, |x| amp * Complex64::from_polar(1.0, xi.dot(x)))
}

fn gaussian_field(g: &ObliqueGrid, width: f64) -> Field2D {
    let p = GaussianPacket {
        amplitude: [1.0, 0.5],
        center: [0.3, -0.2],
        width,
    };
    Field2D::new(g, p.sample(g)).unwrap()
}

fn problem(sigma: f64, mu: f64, v: FourierPotential, kappa: Modulation) -> FnlsProblem {
    FnlsProblem {
        sigma,
        mu,
        potential: v,
        perturbation: FourierPotential::builtin_w(),
        kappa,
    }
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn time_grid_lands_on_every_frame() {
    let t = TimeGrid::new(1.0, 4, 0.03).unwrap();
    assert!(t.dt <= 0.03);
    assert_eq!(t.frames, 4);
    assert!((t.dt * t.steps_per_frame as f64 - 0.25).abs() < 1e-14);
    assert_eq!(t.total_steps(), 4 * t.steps_per_frame);
    assert!((t.time(4) - 1.0).abs() < 1e-15);
    let exact = TimeGrid::new(1.0, 1, 0.25).unwrap();
    assert_eq!(exact.steps_per_frame, 4);
    assert!(TimeGrid::new(-1.0, 1, 0.1).is_err());
    assert!(TimeGrid::new(1.0, 1, 0.0).is_err());
}

#[test]
fn sobolev_weight_matches_expanded_multinomial() {
    let xi = Vec2::new(1.3, -0.7);
    let eps = 0.4;
    let (a, b) = ((eps * xi.x).powi(2), (eps * xi.y).powi(2));
    assert_eq!(sobolev_weight(xi, eps, 0), 1.0);
    assert!((sobolev_weight(xi, eps, 1) - (1.0 + a + b)).abs() < 1e-15);
    let s2 = 1.0 + a + b + a * a + a * b + b * b;
    assert!((sobolev_weight(xi, eps, 2) - s2).abs() < 1e-14);
}

#[test]
fn weighted_norm_of_plane_wave_is_exact() {
    let g = grid(6, 4, 0.5);
    let mut sp = Spectral::new(&g);
    let f = [2, -1];
    let psi = plane_wave(&g, f, Complex64::new(0.6, -0.8));
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector(f);
    let area = g.box_area();
    let l2 = weighted_hs_norm(&psi, 0, &mut sp).unwrap();
    assert!((l2 - area.sqrt()).abs() < 1e-12 * area.sqrt());
    assert!((l2 - psi.l2_norm()).abs() < 1e-12);
    for s in 1..=3 {
        let expected = (area * sobolev_weight(xi, g.epsilon, s)).sqrt();
        let got = weighted_hs_norm(&psi, s, &mut sp).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected, "s = {s}");
    }
}

#[test]
fn spectral_gradient_of_plane_wave() {
    let g = grid(3, 8, 1.0);
    let mut sp = Spectral::new(&g);
    let f = [1, 2];
    let psi = plane_wave(&g, f, Complex64::new(1.0, 0.0));
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector(f);
    let [dx, dy] = sp.gradient(&psi.values);
    let ex: Vec<Complex64> = psi.values.iter().map(|z| I * xi.x * z).collect();
    let ey: Vec<Complex64> = psi.values.iter().map(|z| I * xi.y * z).collect();
    assert!(max_diff(&dx, &ex) < 1e-11);
    assert!(max_diff(&dy, &ey) < 1e-11);
}

#[test]
fn norm_rejects_foreign_grid() {
    let a = grid(3, 4, 1.0);
    let b = grid(3, 5, 1.0);
    let mut sp = Spectral::new(&a);
    let f = Field2D::zeros(&b);
    assert!(matches!(weighted_hs_norm(&f, 1, &mut sp), Err(Error::GridMismatch(_))));
    assert!(matches!(Field2D::new(&a, vec![Complex64::new(0.0, 0.0); 3]), Err(Error::GridMismatch(_))));
}

#[test]
fn linear_flow_of_single_mode_is_a_phase() {
    // V = 0, κ = 0, μ = 0: e^{iξx} ↦ e^{−i t |εξ|^σ/ε} e^{iξx}.
    let g = grid(6, 4, 0.5);
    let f = [1, -2];
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector(f);
    for sigma in [1.2, 2.0] {
        let prob = problem(sigma, 0.0, FourierPotential::zero(), Modulation::default());
        let t = 0.37;
        let times = TimeGrid::new(t, 1, 0.01).unwrap();
        let psi0 = plane_wave(&g, f, Complex64::new(1.0, 0.0));
        let phase = Complex64::from_polar(1.0, -t * (g.epsilon * xi.norm()).powf(sigma) / g.epsilon);
        let expected: Vec<Complex64> = psi0.values.iter().map(|z| z * phase).collect();
        for integrator in [Integrator::SplitStep, Integrator::BlochSplitStep] {
            let out = evolve_fnls(&psi0, &prob, integrator, &times).unwrap();
            assert!(max_diff(&out[1].values, &expected) < 1e-10, "σ = {sigma}, {integrator:?}");
        }
    }
}

#[test]
fn constant_field_under_cubic_term_rotates_exactly() {
    // A constant state with V = 0, κ = 0 only feels μ|ψ|².
    let g = grid(3, 4, 1.0);
    let a = Complex64::new(0.3, 0.4);
    let psi0 = Field2D::from_fn(&g, |_| a);
    let prob = problem(1.6, -1.0, FourierPotential::zero(), Modulation::default());
    let t = 0.8;
    let times = TimeGrid::new(t, 2, 0.05).unwrap();
    let out = evolve_fnls(&psi0, &prob, Integrator::BlochSplitStep, &times).unwrap();
    let expected = a * Complex64::from_polar(1.0, -(-1.0) * a.norm_sqr() * t);
    assert!(out[2].values.iter().all(|z| (z - expected).norm() < 1e-13));
}

#[test]
fn exact_periodic_propagator_converges_to_fine_split_step() {
    // Only κW + μ|ψ|² is split off, so the remaining error is second order
    // in dt.
    let g = grid(36, 6, 0.2);
    let prob = problem(2.0, 1.0, FourierPotential::builtin_v(), Modulation::Constant { value: 0.7 });
    let psi0 = gaussian_field(&g, 0.8);
    let t = 0.02;
    let fine = TimeGrid::new(t, 1, cfl_limit(&g, 2.0, &prob.potential) / 4.0).unwrap();
    let reference = evolve_fnls(&psi0, &prob, Integrator::SplitStep, &fine).unwrap().pop().unwrap();
    let error = |dt: f64| {
        let times = TimeGrid::new(t, 1, dt).unwrap();
        let bd = evolve_fnls(&psi0, &prob, Integrator::BlochSplitStep, &times).unwrap().pop().unwrap();
        bd.difference(&reference).unwrap().l2_norm() / psi0.l2_norm()
    };
    let (coarse, half) = (error(0.002), error(0.001));
    let ratio = coarse / half;
    assert!((3.0..5.0).contains(&ratio), "{coarse:e} → {half:e}");
    assert!(half < 1e-4, "relative difference {half:e}");
}

#[test]
fn split_step_is_second_order_in_time() {
    let g = grid(3, 4, 0.5);
    let prob = problem(1.6, 1.0, FourierPotential::builtin_v(), Modulation::Constant { value: 1.0 });
    let psi0 = gaussian_field(&g, 0.5);
    let t = 0.04;
    let h = cfl_limit(&g, 1.6, &prob.potential);
    let run = |dt: f64| {
        let times = TimeGrid::new(t, 1, dt).unwrap();
        evolve_fnls(&psi0, &prob, Integrator::SplitStep, &times).unwrap().pop().unwrap()
    };
    let (a, b, c) = (run(h), run(h / 2.0), run(h / 4.0));
    let e1 = a.difference(&b).unwrap().l2_norm();
    let e2 = b.difference(&c).unwrap().l2_norm();
    let ratio = e1 / e2;
    assert!((3.0..5.0).contains(&ratio), "refinement ratio {ratio}");
}

#[test]
fn cfl_limit_reduces_split_step_only() {
    let g = grid(6, 4, 0.5);
    let prob = problem(2.0, 1.0, FourierPotential::builtin_v(), Modulation::default());
    let limit = cfl_limit(&g, 2.0, &prob.potential);
    assert!(limit > 0.0);
    assert_eq!(admissible_dt(&g, &prob, Integrator::SplitStep, 1.0), limit);
    assert_eq!(admissible_dt(&g, &prob, Integrator::SplitStep, limit / 2.0), limit / 2.0);
    assert_eq!(admissible_dt(&g, &prob, Integrator::BlochSplitStep, 1.0), 1.0);
}

#[test]
fn fnls_is_time_reversible() {
    let g = grid(3, 6, 0.5);
    for mu in [0.0, 1.0] {
        let prob = problem(1.6, mu, FourierPotential::builtin_v(), Modulation::Constant { value: 0.5 });
        let psi0 = gaussian_field(&g, 0.4);
        for integrator in [Integrator::BlochSplitStep, Integrator::SplitStep] {
            let dt = admissible_dt(&g, &prob, integrator, 0.01);
            let mut fwd = FnlsSolver::new(&g, &prob, integrator, dt).unwrap();
            let mut bwd = FnlsSolver::new(&g, &prob, integrator, -dt).unwrap();
            let mut psi = psi0.clone();
            fwd.advance(&mut psi, 20, 1, 0.0).unwrap();
            bwd.advance(&mut psi, 20, 1, 0.0).unwrap();
            assert!(max_diff(&psi.values, &psi0.values) < 1e-10, "μ = {mu}, {integrator:?}");
        }
    }
}

#[test]
fn fnls_conserves_mass() {
    let g = grid(6, 4, 0.5);
    for mu in [1.0, -1.0] {
        let prob = problem(2.0, mu, FourierPotential::builtin_v(), Modulation::Gaussian {
            amplitude: 1.0,
            center: [0.0, 0.0],
            width: 1.0,
        });
        let psi0 = gaussian_field(&g, 0.6);
        let times = TimeGrid::new(0.5, 5, 0.01).unwrap();
        let out = evolve_fnls(&psi0, &prob, Integrator::BlochSplitStep, &times).unwrap();
        let m0 = psi0.mass();
        for f in &out {
            assert!(((f.mass() - m0) / m0).abs() < 1e-12);
        }
    }
}

#[test]
fn fnls_solver_rejects_bad_input() {
    let g = grid(3, 4, 0.5);
    let prob = problem(2.0, 1.0, FourierPotential::builtin_v(), Modulation::default());
    assert!(FnlsSolver::new(&g, &prob, Integrator::SplitStep, 0.0).is_err());
    assert!(FnlsSolver::new(&g, &prob, Integrator::SplitStep, f64::NAN).is_err());
    let bad = problem(2.5, 1.0, FourierPotential::builtin_v(), Modulation::default());
    assert!(FnlsSolver::new(&g, &bad, Integrator::SplitStep, 0.01).is_err());
    let mut solver = FnlsSolver::new(&g, &prob, Integrator::SplitStep, 0.001).unwrap();
    let mut other = Field2D::zeros(&grid(3, 5, 0.5));
    assert!(matches!(solver.advance(&mut other, 1, 1, 0.0), Err(Error::GridMismatch(_))));
    let mut nan = Field2D::from_fn(&g, |_| Complex64::new(f64::NAN, 0.0));
    assert!(matches!(solver.advance(&mut nan, 3, 2, 0.0), Err(Error::NonFinite { frame: 2, .. })));
}

fn dirac_params(mu: f64) -> DiracParams {
    DiracParams {
        v_f: 1.3,
        theta: 0.4,
        b1: 0.9,
        b2: 0.35,
        mu,
    }
}

#[test]
fn dirac_constant_envelopes_rotate_in_closed_form() {
    let g = grid(3, 4, 1.0);
    let (a, b) = (Complex64::new(0.5, 0.2), Complex64::new(-0.1, 0.6));
    let mut env = EnvelopeState::zeros(&g);
    env.alpha = [vec![a; g.len()], vec![b; g.len()]];
    let p = dirac_params(1.0);
    let c = 0.8;
    let t = 1.1;
    let times = TimeGrid::new(t, 1, 0.05).unwrap();
    let out = evolve_dirac(&env, p, vec![c; g.len()], &times).unwrap();
    let (n1, n2) = (a.norm_sqr(), b.norm_sqr());
    let ea = a * Complex64::from_polar(1.0, -(p.theta * c + p.mu * (p.b1 * n1 + p.b2 * n2)) * t);
    let eb = b * Complex64::from_polar(1.0, (p.theta * c - p.mu * (p.b2 * n1 + p.b1 * n2)) * t);
    assert!(out[1].alpha[0].iter().all(|z| (z - ea).norm() < 1e-12));
    assert!(out[1].alpha[1].iter().all(|z| (z - eb).norm() < 1e-12));
    assert!((out[1].time - t).abs() < 1e-12);
}

/// `exp(tM)` for a 2×2 matrix by scaling and squaring a Taylor series.
fn expm2(m: [[Complex64; 2]; 2], t: f64) -> [[Complex64; 2]; 2] {
    let mul = |a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]| {
        let mut c = [[Complex64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        c
    };
    let squarings = 10;
    let h = t / f64::from(1 << squarings);
    let a = [[m[0][0] * h, m[0][1] * h], [m[1][0] * h, m[1][1] * h]];
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut result = [[one, zero], [zero, one]];
    let mut term = result;
    for k in 1..20 {
        term = mul(term, a);
        let inv = 1.0 / k as f64;
        term = [[term[0][0] * inv, term[0][1] * inv], [term[1][0] * inv, term[1][1] * inv]];
        for i in 0..2 {
            for j in 0..2 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul(result, result);
    }
    result
}

#[test]
fn dirac_plane_wave_matches_matrix_exponential() {
    // With κ = μ = 0 a mode e^{iξx}(a, b) obeys d/dt(a, b) = M(a, b) with
    // M = −vF [[0, iξ1 − ξ2], [iξ1 + ξ2, 0]].
    let g = grid(6, 4, 0.5);
    let f = [2, 1];
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector(f);
    let p = dirac_params(0.0);
    let (a, b) = (Complex64::new(0.7, 0.1), Complex64::new(0.2, -0.4));
    let wave = plane_wave(&g, f, Complex64::new(1.0, 0.0)).values;
    let mut env = EnvelopeState::zeros(&g);
    env.alpha = [wave.iter().map(|w| a * w).collect(), wave.iter().map(|w| b * w).collect()];
    let zero = Complex64::new(0.0, 0.0);
    let m = [
        [zero, -p.v_f * Complex64::new(-xi.y, xi.x)],
        [-p.v_f * Complex64::new(xi.y, xi.x), zero],
    ];
    let t = 0.6;
    let e = expm2(m, t);
    let (ea, eb) = (e[0][0] * a + e[0][1] * b, e[1][0] * a + e[1][1] * b);
    let times = TimeGrid::new(t, 1, 0.1).unwrap();
    let out = evolve_dirac(&env, p, vec![0.0; g.len()], &times).unwrap();
    let exp_a: Vec<Complex64> = wave.iter().map(|w| ea * w).collect();
    let exp_b: Vec<Complex64> = wave.iter().map(|w| eb * w).collect();
    assert!(max_diff(&out[1].alpha[0], &exp_a) < 1e-11);
    assert!(max_diff(&out[1].alpha[1], &exp_b) < 1e-11);
}

#[test]
fn dirac_system_conserves_charge() {
    let g = grid(12, 4, 0.5);
    let kappa = Modulation::Gaussian {
        amplitude: 1.0,
        center: [0.0, 0.0],
        width: 1.0,
    }
    .evaluate_on_grid(&g);
    for mu in [1.0, -1.0] {
        let a1 = GaussianPacket {
            amplitude: [1.0, 0.0],
            center: [0.0, 0.0],
            width: 0.8,
        };
        let a2 = GaussianPacket {
            amplitude: [0.0, 0.5],
            center: [0.4, 0.0],
            width: 0.6,
        };
        let env = EnvelopeState::gaussian(&g, [&a1, &a2]);
        let times = TimeGrid::new(1.0, 4, 0.01).unwrap();
        let out = evolve_dirac(&env, dirac_params(mu), kappa.clone(), &times).unwrap();
        let q0 = env.charge();
        for s in &out {
            assert!(((s.charge() - q0) / q0).abs() < 1e-12);
        }
    }
}

#[test]
fn dirac_solver_validates_inputs() {
    let g = grid(3, 4, 1.0);
    assert!(matches!(
        DiracSolver::new(&g, dirac_params(1.0), vec![0.0; 3], 0.1),
        Err(Error::GridMismatch(_))
    ));
    assert!(DiracSolver::new(&g, dirac_params(1.0), vec![0.0; g.len()], 0.0).is_err());
}

#[test]
fn nyquist_fraction_separates_smooth_and_rough_envelopes() {
    let g = grid(48, 4, 0.25);
    let mut sp = Spectral::new(&g);
    let smooth = GaussianPacket {
        amplitude: [1.0, 0.0],
        center: [0.0, 0.0],
        width: 1.0,
    };
    let env = EnvelopeState::gaussian(&g, [&smooth, &GaussianPacket::zero()]);
    assert!(env.nyquist_fraction(&mut sp) < 1e-9);
    let mut rough = EnvelopeState::zeros(&g);
    rough.alpha[0] = plane_wave(&g, [20, 0], Complex64::new(1.0, 0.0)).values;
    assert!(rough.nyquist_fraction(&mut sp) > 0.99);
}

#[test]
fn corrector_profiles_solve_the_cell_problem() {
    let fx = fixture();
    let data = &fx.analysis.data;
    let pw = &fx.analysis.basis;
    let h = BlochMatrix::assemble(pw, &FourierPotential::builtin_v(), 2.0).unwrap();
    let units = [data.phi1.clone(), data.phi2.clone()];
    let pairs = fx.profiles.solved_pairs();
    assert_eq!(pairs.len(), 4 + 2 + 8);
    for (source, u) in pairs {
        let hu = h.apply(u);
        let mut projected = source.to_vec();
        for v in &units {
            let c = coeff_inner(v, source);
            for (p, vi) in projected.iter_mut().zip(v) {
                *p -= c * vi;
            }
        }
        let residual: f64 = hu
            .iter()
            .zip(u)
            .zip(&projected)
            .map(|((hu, u), f)| (hu - data.e_d * u - f).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(residual < 1e-8 * coeff_norm(source).max(1.0), "residual {residual:e}");
    }
    assert!(fx.profiles.max_dirac_overlap() < 1e-12);
}

#[test]
fn synthesis_requires_commensurate_grid() {
    let fx = fixture();
    let g = grid(4, 6, 0.5);
    let mut sp = Spectral::new(&g);
    assert!(matches!(
        synthesize_profile(&fx.profiles.phi[0], &fx.profiles.basis, &g, &mut sp.fft),
        Err(Error::NonCommensurateGrid(_))
    ));
}

#[test]
fn synthesized_dirac_mode_is_k_pseudo_periodic() {
    // Φ(y + v) = e^{iK·v} Φ(y) for every lattice vector v.
    let fx = fixture();
    let n = 6;
    let g = grid(3, n, 1.0);
    let mut sp = Spectral::new(&g);
    let (phi, dropped) = synthesize_profile(&fx.profiles.phi[0], &fx.profiles.basis, &g, &mut sp.fft).unwrap();
    assert!(dropped < 1e-6);
    let lattice = LatticeBasis::honeycomb();
    let k = lattice.dual_vector([1, -1]);
    let k = (1.0 / 3.0) * k;
    let v1 = lattice.direct_vector([1.0, 0.0]);
    let shift = Complex64::from_polar(1.0, k.dot(v1));
    let side = g.side();
    for a in 0..side {
        for b in 0..side {
            let here = phi[a * side + b];
            let there = phi[((a + n) % side) * side + b];
            assert!((there - shift * here).norm() < 1e-9 * (1.0 + here.norm()));
        }
    }
}

fn leading_ansatz(g: &ObliqueGrid, kappa: Modulation, mu: f64, corrector: bool) -> Ansatz {
    let fx = fixture();
    Ansatz::new(&fx.profiles, g, fx.analysis.data.e_d, &kappa, mu, corrector).unwrap()
}

#[test]
fn zero_envelopes_give_zero_field() {
    let g = grid(6, 6, 0.5);
    let mut a = leading_ansatz(&g, Modulation::Constant { value: 1.0 }, 1.0, true);
    let env = EnvelopeState::zeros(&g);
    for order in [ApproximationOrder::Leading, ApproximationOrder::Corrected] {
        let psi = a.synthesize_wavepacket(&env, order).unwrap();
        assert_eq!(psi.max_abs(), 0.0);
    }
}

#[test]
fn constant_envelopes_have_no_corrector_without_forcing() {
    let g = grid(6, 6, 0.5);
    let mut a = leading_ansatz(&g, Modulation::Constant { value: 0.0 }, 0.0, true);
    let mut env = EnvelopeState::zeros(&g);
    env.alpha = [vec![Complex64::new(0.4, 0.3); g.len()], vec![Complex64::new(-0.2, 0.1); g.len()]];
    let u = a.corrector_u1(&env).unwrap();
    assert!(u.max_abs() < 1e-12);
}

#[test]
fn corrector_needs_profiles() {
    let fx = fixture();
    let g = grid(6, 6, 0.5);
    let leading = MicroProfiles::leading(&fx.analysis, LatticeBasis::honeycomb().cell_area);
    assert!(!leading.has_corrector());
    assert!(matches!(
        Ansatz::new(&leading, &g, 1.0, &Modulation::default(), 1.0, true),
        Err(Error::MissingProfiles)
    ));
    let mut a = Ansatz::new(&leading, &g, 1.0, &Modulation::default(), 1.0, false).unwrap();
    assert!(matches!(a.corrector_u1(&EnvelopeState::zeros(&g)), Err(Error::MissingProfiles)));
}

#[test]
fn leading_mass_approaches_envelope_charge_over_cell_area() {
    // Φ_j has unit norm on the cell Ω and the pair is orthogonal, so
    // ∫|α_jΦ_j(x/ε)|² → (∫|α1|² + |α2|²)/|Ω| as ε → 0.
    let eps = 0.05;
    let g = ObliqueGrid::from_box(&LatticeBasis::honeycomb(), 3.6, 4, eps).unwrap();
    let a = leading_ansatz(&g, Modulation::default(), 0.0, false);
    let packet = GaussianPacket {
        amplitude: [1.0, 0.0],
        center: [0.0, 0.0],
        width: 0.7,
    };
    let other = GaussianPacket {
        amplitude: [0.0, 0.6],
        center: [0.2, 0.0],
        width: 0.5,
    };
    let env = EnvelopeState::gaussian(&g, [&packet, &other]);
    let psi = a.leading(&env);
    let expected = env.charge() / LatticeBasis::honeycomb().cell_area;
    let rel = (psi.mass() - expected).abs() / expected;
    assert!(rel < 1e-2, "relative deviation {rel:e}");
}

#[test]
fn ansatz_is_gauge_covariant() {
    // Φ_j → e^{iθ_j}Φ_j with α_j → e^{−iθ_j}α_j leaves α_jΦ_j and u1 invariant
    // when P_j, Q_j rotate like Φ_j and R_jkl by e^{i(−θ_j+θ_k+θ_l)}.
    let fx = fixture();
    let theta = [0.7, -1.9];
    let rot = |t: f64| Complex64::from_polar(1.0, t);
    let mut gauged = fx.profiles.clone();
    for j in 0..2 {
        let r = rot(theta[j]);
        gauged.phi[j].iter_mut().for_each(|c| *c *= r);
        for c in 0..2 {
            gauged.p[j][c].iter_mut().for_each(|z| *z *= r);
        }
        gauged.q[j].iter_mut().for_each(|z| *z *= r);
        for k in 0..2 {
            for l in 0..2 {
                let r = rot(-theta[j] + theta[k] + theta[l]);
                gauged.r[j][k][l].iter_mut().for_each(|z| *z *= r);
            }
        }
    }
    let g = grid(24, 6, 0.25);
    let kappa = Modulation::Gaussian {
        amplitude: 1.0,
        center: [0.2, 0.0],
        width: 1.0,
    };
    let e_d = fx.analysis.data.e_d;
    let mut plain = Ansatz::new(&fx.profiles, &g, e_d, &kappa, 1.0, true).unwrap();
    let mut turned = Ansatz::new(&gauged, &g, e_d, &kappa, 1.0, true).unwrap();
    let p1 = GaussianPacket {
        amplitude: [1.0, 0.2],
        center: [0.0, 0.0],
        width: 1.0,
    };
    let p2 = GaussianPacket {
        amplitude: [0.3, -0.5],
        center: [0.3, 0.1],
        width: 0.8,
    };
    let env = EnvelopeState::gaussian(&g, [&p1, &p2]);
    let mut env_t = env.clone();
    for (alpha, th) in env_t.alpha.iter_mut().zip(theta) {
        let r = rot(-th);
        alpha.iter_mut().for_each(|z| *z *= r);
    }
    let a = plain.at_time(&env, ApproximationOrder::Corrected).unwrap();
    let b = turned.at_time(&env_t, ApproximationOrder::Corrected).unwrap();
    assert!(max_diff(&a.values, &b.values) < 1e-12 * a.max_abs().max(1.0));
}

#[test]
fn approximation_error_vanishes_on_the_ansatz_itself() {
    let g = grid(12, 6, 0.5);
    let mut a = leading_ansatz(&g, Modulation::Constant { value: 1.0 }, 1.0, true);
    let p = GaussianPacket {
        amplitude: [1.0, 0.0],
        center: [0.0, 0.0],
        width: 1.2,
    };
    let mut env = EnvelopeState::gaussian(&g, [&p, &GaussianPacket::zero()]);
    env.time = 0.3;
    for order in [ApproximationOrder::Leading, ApproximationOrder::Corrected] {
        let psi = a.at_time(&env, order).unwrap();
        let err = a.approximation_error(&psi, &env, order, 1).unwrap();
        assert!(err < 1e-12, "{order:?}: {err:e}");
    }
    let lead = a.at_time(&env, ApproximationOrder::Leading).unwrap();
    let corr = a.at_time(&env, ApproximationOrder::Corrected).unwrap();
    let u = a.corrector_u1(&env).unwrap();
    let gap = lead.difference(&corr).unwrap().l2_norm();
    assert!((gap - g.epsilon * u.l2_norm()).abs() < 1e-12);
}

#[test]
fn initial_synthesis_rejects_rough_envelopes() {
    let g = grid(12, 6, 0.5);
    let mut a = leading_ansatz(&g, Modulation::default(), 1.0, false);
    let mut env = EnvelopeState::zeros(&g);
    env.alpha[0] = plane_wave(&g, [5, 0], Complex64::new(1.0, 0.0)).values;
    assert!(matches!(
        a.synthesize_wavepacket(&env, ApproximationOrder::Leading),
        Err(Error::Nyquist { .. })
    ));
    assert!(a.at_time(&env, ApproximationOrder::Leading).is_ok());
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let g = grid(3, 4, 0.5);
    let f = gaussian_field(&g, 0.4);
    let sidecar = write_snapshot(&dir.path().join("psi_0001"), &f, 0.25, 1.6).unwrap();
    let (meta, values) = read_snapshot(&sidecar).unwrap();
    assert_eq!(values, f.values);
    assert_eq!((meta.cells, meta.n), (3, 4));
    assert_eq!((meta.epsilon, meta.t, meta.sigma), (0.5, 0.25, 1.6));
    assert_eq!(meta.byte_order, "LE");
    assert_eq!(meta.layout, "row-major-interleaved");
    let bytes = std::fs::read(dir.path().join("psi_0001.bin")).unwrap();
    assert_eq!(bytes.len(), g.len() * 16);
    assert_eq!(f64::from_le_bytes(bytes[..8].try_into().unwrap()), f.values[0].re);
    assert_eq!(f64::from_le_bytes(bytes[8..16].try_into().unwrap()), f.values[0].im);

    let text = std::fs::read_to_string(&sidecar).unwrap();
    std::fs::write(&sidecar, text.replace("\"schemaVersion\": 1", "\"schemaVersion\": 99")).unwrap();
    assert!(matches!(read_snapshot(&sidecar), Err(Error::InvalidInput(_))));
    std::fs::write(&sidecar, text).unwrap();
    std::fs::write(dir.path().join("psi_0001.bin"), &bytes[..32]).unwrap();
    assert!(matches!(read_snapshot(&sidecar), Err(Error::GridMismatch(_))));
}

fn small_config() -> SimConfig {
    let mut cfg = SimConfig::default();
    cfg.model.truncation = 10;
    cfg.dynamics.box_length = 7.2;
    cfg.dynamics.points_per_cell = 4;
    cfg.dynamics.epsilon = 0.2;
    cfg.dynamics.final_time = 0.1;
    cfg.dynamics.frames = 2;
    cfg
}

#[test]
fn config_defaults_and_validation() {
    let cfg = SimConfig::default();
    cfg.validate().unwrap();
    assert_eq!(cfg.model.sigma, 2.0);
    assert_eq!(cfg.dynamics.integrator, Integrator::BlochSplitStep);
    assert!((cfg.time_step() - 0.002).abs() < 1e-15);

    let field_of = |cfg: &SimConfig| match cfg.validate() {
        Err(Error::Config { field, .. }) => field,
        other => panic!("expected config error, got {other:?}"),
    };
    let mut bad = SimConfig::default();
    bad.dynamics.epsilon = 0.07;
    assert_eq!(field_of(&bad), "box_length");
    let mut bad = SimConfig::default();
    bad.dynamics.box_length = 8.0;
    assert_eq!(field_of(&bad), "box_length");
    let mut bad = SimConfig::default();
    bad.model.sigma = 2.5;
    assert_eq!(field_of(&bad), "sigma");
    let mut bad = SimConfig::default();
    bad.dynamics.alpha1.width = -1.0;
    assert_eq!(field_of(&bad), "alpha1");
    let mut bad = SimConfig::default();
    bad.dynamics.norm_order = 7;
    assert_eq!(field_of(&bad), "norm_order");

    let parsed: SimConfig = toml::from_str(
        "[model]\nsigma = 1.6\n[dynamics]\nepsilon = 0.2\nintegrator = \"split-step\"\norder = \"corrected\"\n\
         kappa = { kind = \"constant\", value = 0.5 }\n",
    )
    .unwrap();
    assert_eq!(parsed.model.sigma, 1.6);
    assert_eq!(parsed.dynamics.integrator, Integrator::SplitStep);
    assert_eq!(parsed.dynamics.order, ApproximationOrder::Corrected);
    assert!(toml::from_str::<SimConfig>("[dynamics]\nepsilonn = 0.1\n").is_err());
}

#[test]
fn simulation_records_conserved_quantities() {
    let fx = fixture();
    let cfg = small_config();
    let sim = fracdirac::dynamics::simulate(&cfg, &fx.profiles, &fx.analysis.data).unwrap();
    assert_eq!(sim.psi.len(), 3);
    assert_eq!(sim.errors.len(), 3);
    assert!(sim.errors[0] < 1e-12, "initial error {}", sim.errors[0]);
    assert!(sim.final_error().is_finite() && sim.final_error() > 0.0);
    assert!(sim.mass_drift() < 1e-10);
    assert!(sim.charge_drift() < 1e-10);
    let report = sim.report();
    assert_eq!(report.cells, 36);
    assert_eq!(report.steps, sim.times.total_steps());

    let mut wrong = cfg.clone();
    wrong.model.sigma = 1.6;
    assert!(matches!(
        fracdirac::dynamics::simulate(&wrong, &fx.profiles, &fx.analysis.data),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn error_is_stable_under_grid_refinement() {
    let fx = fixture();
    let measure = |n: usize| {
        let mut cfg = small_config();
        cfg.dynamics.points_per_cell = n;
        fracdirac::dynamics::simulate(&cfg, &fx.profiles, &fx.analysis.data)
            .unwrap()
            .final_error()
    };
    let (coarse, fine) = (measure(4), measure(6));
    assert!(((coarse - fine) / fine).abs() < 1e-2, "{coarse} vs {fine}");
}

#[test]
fn fitted_rate_recovers_a_power_law() {
    let case = |e: f64| CaseReport {
        epsilon: e,
        error: 3.0 * e.powf(1.5),
        runtime_sec: 0.0,
        order: ApproximationOrder::Leading,
        cells: 0,
        points_per_cell: 0,
        dt: 0.0,
        steps: 0,
        mass_drift: 0.0,
        charge_drift: 0.0,
        dropped_fraction: 0.0,
    };
    let rate = fitted_rate(&[case(0.2), case(0.1), case(0.05)]).unwrap();
    assert!((rate - 1.5).abs() < 1e-12);
}

#[test]
fn convergence_study_single_case_has_no_rate() {
    assert!(matches!(
        convergence_study(&small_config(), &[], None, &|_| {}),
        Err(Error::InvalidInput(_))
    ));
    let seen = std::sync::atomic::AtomicUsize::new(0);
    let report = convergence_study(&small_config(), &[0.2], None, &|_| {
        seen.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
    })
    .unwrap();
    assert_eq!(report.cases.len(), 1);
    assert!(report.fitted_rate.is_none());
    assert_eq!(seen.into_inner(), 1);
}

#[test]
fn plane_wave_period_matches_box() {
    // The FFT frequency f has wavevector f·k⃗/M; the box edge is M·ε cells.
    let g = grid(6, 4, 0.5);
    let xi = (1.0 / g.box_len()) * g.lattice.dual_vector([1, 0]);
    let edge = g.lattice.direct_vector([g.box_len(), 0.0]);
    assert!((xi.dot(edge) - 2.0 * PI).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn linear_flow_is_unitary(re in -1.0f64..1.0, im in -1.0f64..1.0, width in 0.2f64..0.8, dt in 0.001f64..0.05) {
        let g = grid(3, 4, 0.5);
        let prob = problem(1.6, 0.0, FourierPotential::builtin_v(), Modulation::default());
        let p = GaussianPacket { amplitude: [re, im], center: [0.0, 0.0], width };
        let psi0 = Field2D::new(&g, p.sample(&g)).unwrap();
        let mut solver = FnlsSolver::new(&g, &prob, Integrator::BlochSplitStep, dt).unwrap();
        let mut psi = psi0.clone();
        solver.advance(&mut psi, 5, 1, 0.0).unwrap();
        let m0 = psi0.mass();
        prop_assert!((psi.mass() - m0).abs() <= 1e-12 * m0.max(1e-300));
    }

    #[test]
    fn weighted_norm_is_homogeneous(scale in -3.0f64..3.0, s in 0u32..4) {
        let g = grid(3, 4, 0.5);
        let mut sp = Spectral::new(&g);
        let f = gaussian_field(&g, 0.4);
        let mut h = f.clone();
        h.scale(Complex64::new(scale, 0.0));
        let a = weighted_hs_norm(&f, s, &mut sp).unwrap();
        let b = weighted_hs_norm(&h, s, &mut sp).unwrap();
        prop_assert!((b - scale.abs() * a).abs() <= 1e-12 * a);
    }
}

