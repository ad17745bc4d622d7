//! Experiment orchestration: each runner reads a validated [`RunConfig`],
//! writes its files into the output directory and returns a short
//! human-readable summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use fracdirac::bloch::{band_sweep, band_table_csv};
use fracdirac::dirac::{
    analyze, cone_fit, find_degenerate_pair, gap_opening, log_radii, sample_cone, shallow_check, solve_at_k,
    ConeFit, DiracPointData, GapTable, ShallowReport, DEGENERACY_TOL,
};
use fracdirac::dynamics::{
    convergence_study, product_rule_check, simulate, write_snapshot, CaseReport, ConvergenceReport, Field2D,
    MicroProfiles, ProductRuleReport,
};
use fracdirac::grid::ObliqueGrid;
use fracdirac::{Error, LatticeBasis, Result, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{BandsMode, Experiment, RunConfig};
use crate::format::{float, to_json};

/// Name of the resolved configuration written next to every output.
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn text(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        self.text(name, &to_json(value)?)
    }

    fn snapshot(&mut self, stem: &str, field: &Field2D, t: f64, sigma: f64) -> Result<PathBuf> {
        let json = write_snapshot(&self.dir.join(stem), field, t, sigma)?;
        self.files.push(json.with_extension("bin"));
        self.files.push(json.clone());
        Ok(json)
    }
}

/// Validates `cfg`, writes the resolved configuration and runs the
/// selected experiment.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut out = Writer::new(&cfg.output_dir)?;
    out.text(RESOLVED_CONFIG, &cfg.resolved()?)?;
    let summary = match cfg.experiment {
        Experiment::Bands => run_bands(cfg, &mut out)?,
        Experiment::Dirac => run_dirac(cfg, &mut out)?,
        Experiment::Evolve => run_evolve(cfg, &mut out)?,
        Experiment::Validate => run_validate(cfg, &mut out)?,
        Experiment::ShallowCheck => run_shallow_check(cfg, &mut out)?,
        Experiment::ProductRule => run_product_rule(cfg, &mut out)?,
    };
    Ok(RunOutput {
        files: out.files,
        summary,
    })
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn sigma_label(sigma: f64) -> String {
    format!("{sigma}")
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BandCurve {
    sigma: f64,
    file: String,
    rows: usize,
    values_at_k: Vec<f64>,
    /// Degenerate energy at `K`, if the pair closes there.
    e_d: Option<f64>,
    min_gap: f64,
    min_gap_at: [f64; 2],
    min_gap_distance_from_k: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct BandsMeta {
    mode: BandsMode,
    truncation: usize,
    bands: usize,
    gap_band: usize,
    perturbation_scale: f64,
    k_point: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    offsets: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    curves: Vec<BandCurve>,
}

fn run_bands(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let b = &cfg.bands;
    let lattice = LatticeBasis::honeycomb();
    let v = cfg.model.potential.build("potential")?;
    let w = cfg.model.perturbation.build("perturbation")?;
    let pot = v.add_scaled(&w, b.perturbation_scale);
    let k = lattice.k_point;
    let (ks, lambda, offsets, seed) = match b.mode {
        BandsMode::Path => {
            let lambda = linspace(b.lambda_min, b.lambda_max, b.points);
            let ks = lambda.iter().map(|&l| k + l * lattice.k2).collect();
            (ks, Some(lambda), None, None)
        }
        BandsMode::Grid => {
            let offsets = linspace(-b.half_width, b.half_width, b.grid_points);
            let ks = offsets
                .iter()
                .flat_map(|&x| offsets.iter().map(move |&y| k + Vec2::new(x, y)))
                .collect();
            (ks, None, Some(offsets), None)
        }
        BandsMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let ks = (0..b.samples)
                .map(|_| lattice.brillouin_point([rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)]))
                .collect();
            (ks, None, None, Some(cfg.seed))
        }
    };
    let ks: Vec<Vec2> = ks;
    let mut curves = Vec::new();
    let mut summary = String::new();
    for sigma in cfg.band_sigmas() {
        let table = band_sweep(&lattice, &pot, sigma, b.truncation, &ks, b.bands)?;
        let file = format!("bands_sigma{}.csv", sigma_label(sigma));
        out.text(&file, &band_table_csv(&ks, &table))?;
        let (arg, min_gap) = table
            .iter()
            .map(|row| row[b.gap_band] - row[b.gap_band - 1])
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("at least one row");
        let at_k = solve_at_k(&lattice, &pot, sigma, b.truncation, b.bands + 1)?.eigenvalues;
        let e_d = find_degenerate_pair(&at_k, DEGENERACY_TOL).ok().map(|(_, e)| e);
        let kmin = ks[arg];
        let distance = (kmin - k).norm();
        let _ = writeln!(
            summary,
            "σ = {sigma}: {} rows → {file}; min E{}−E{} = {} at |k − K| = {}{}",
            ks.len(),
            b.gap_band + 1,
            b.gap_band,
            float(min_gap),
            float(distance),
            e_d.map(|e| format!("; E_D = {}", float(e))).unwrap_or_default()
        );
        curves.push(BandCurve {
            sigma,
            file,
            rows: ks.len(),
            values_at_k: at_k[..b.bands].to_vec(),
            e_d,
            min_gap,
            min_gap_at: [kmin.x, kmin.y],
            min_gap_distance_from_k: distance,
        });
    }
    out.json(
        "bands.json",
        &BandsMeta {
            mode: b.mode,
            truncation: b.truncation,
            bands: b.bands,
            gap_band: b.gap_band,
            perturbation_scale: b.perturbation_scale,
            k_point: [k.x, k.y],
            lambda,
            offsets,
            seed,
            curves,
        },
    )?;
    Ok(summary)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ConeReport {
    #[serde(flatten)]
    fit: ConeFit,
    mean_slope: f64,
    /// `|mean slope − vF| / vF`.
    velocity_relative_deviation: f64,
    truncation: usize,
    radii: Vec<f64>,
    directions: usize,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct GapReport {
    #[serde(flatten)]
    table: GapTable,
    two_abs_theta: f64,
    /// `|slope − 2|ϑ|| / 2|ϑ|`.
    slope_relative_deviation: f64,
}

#[derive(Serialize)]
struct DiracReport {
    sigma: f64,
    #[serde(rename = "N")]
    truncation: usize,
    #[serde(rename = "E_D")]
    e_d: f64,
    #[serde(rename = "vF")]
    v_f: f64,
    theta: f64,
    b1: f64,
    b2: f64,
    #[serde(rename = "coneFit")]
    cone_fit: ConeReport,
    #[serde(rename = "structureResiduals")]
    structure_residuals: BTreeMap<String, f64>,
    #[serde(rename = "gapTable")]
    gap_table: GapReport,
    details: DiracPointData,
}

fn run_dirac(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let d = &cfg.dirac;
    let m = &cfg.model;
    let lattice = LatticeBasis::honeycomb();
    let setup = m.dirac_setup(&lattice)?;
    let analysis = analyze(&setup)?;
    let data = analysis.data;
    let lower = data.band_pair.0 - 1;
    let radii = log_radii(d.cone_r_min, d.cone_r_max, d.cone_radii);
    let samples = sample_cone(
        &lattice,
        &setup.potential,
        m.sigma,
        d.cone_truncation,
        lower,
        &radii,
        d.directions,
    )?;
    let fit = cone_fit(&samples, data.e_d, d.isotropy_radius)?;
    let gaps = gap_opening(
        &lattice,
        &setup.potential,
        &setup.perturbation,
        m.sigma,
        m.truncation,
        lower,
        &d.gap_epsilons,
    )?;
    let two_theta = 2.0 * data.theta.abs();
    let report = DiracReport {
        sigma: data.sigma,
        truncation: data.truncation,
        e_d: data.e_d,
        v_f: data.v_f,
        theta: data.theta,
        b1: data.b1,
        b2: data.b2,
        cone_fit: ConeReport {
            mean_slope: fit.mean_slope(),
            velocity_relative_deviation: (fit.mean_slope() - data.v_f).abs() / data.v_f,
            fit,
            truncation: d.cone_truncation,
            radii,
            directions: d.directions,
        },
        structure_residuals: data.structure_residuals.clone(),
        gap_table: GapReport {
            slope_relative_deviation: (gaps.slope - two_theta).abs() / two_theta,
            two_abs_theta: two_theta,
            table: gaps,
        },
        details: data,
    };
    out.json("dirac.json", &report)?;
    let worst = report.structure_residuals.values().cloned().fold(0.0, f64::max);
    Ok(format!(
        "σ = {}, N = {}: E_D = {}, vF = {} (cone slope {}, deviation {}), ϑ = {}, b1 = {}, b2 = {}\n\
         gap slope {} vs 2|ϑ| = {}; worst structure residual {}\n",
        report.sigma,
        report.truncation,
        float(report.e_d),
        float(report.v_f),
        float(report.cone_fit.mean_slope),
        float(report.cone_fit.velocity_relative_deviation),
        float(report.theta),
        float(report.b1),
        float(report.b2),
        float(report.gap_table.table.slope),
        float(two_theta),
        float(worst)
    ))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct FrameRecord {
    t: f64,
    error: f64,
    mass: f64,
    charge: f64,
    psi: String,
    alpha1: String,
    alpha2: String,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct EvolutionReport {
    e_d: f64,
    v_f: f64,
    theta: f64,
    b1: f64,
    b2: f64,
    case: CaseReport,
    frames: Vec<FrameRecord>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn run_evolve(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let sim_cfg = cfg.sim();
    let lattice = LatticeBasis::honeycomb();
    let setup = cfg.model.dirac_setup(&lattice)?;
    let analysis = analyze(&setup)?;
    let profiles = MicroProfiles::compute(&analysis, &setup.perturbation, lattice.cell_area)?;
    let sim = simulate(&sim_cfg, &profiles, &analysis.data)?;
    let sigma = cfg.model.sigma;
    let mut frames = Vec::with_capacity(sim.psi.len());
    for (i, (psi, env)) in sim.psi.iter().zip(&sim.envelopes).enumerate() {
        let t = sim.times.time(i);
        let p = out.snapshot(&format!("psi_{i:04}"), psi, t, sigma)?;
        let mut names = Vec::with_capacity(2);
        for (j, a) in env.alpha.iter().enumerate() {
            let field = Field2D::new(&env.grid, a.clone())?;
            names.push(file_name(&out.snapshot(&format!("alpha{}_{i:04}", j + 1), &field, t, sigma)?));
        }
        frames.push(FrameRecord {
            t,
            error: sim.errors[i],
            mass: sim.mass[i],
            charge: sim.charge[i],
            psi: file_name(&p),
            alpha1: names[0].clone(),
            alpha2: names[1].clone(),
        });
    }
    let case = sim.report();
    let summary = format!(
        "ε = {}: {} frames to t = {}; final H^{}_ε error {}, mass drift {}, charge drift {}\n",
        case.epsilon,
        sim.times.frames,
        sim.times.final_time,
        cfg.dynamics.norm_order,
        float(case.error),
        float(case.mass_drift),
        float(case.charge_drift)
    );
    let data = &analysis.data;
    out.json(
        "evolution.json",
        &EvolutionReport {
            e_d: data.e_d,
            v_f: data.v_f,
            theta: data.theta,
            b1: data.b1,
            b2: data.b2,
            case,
            frames,
        },
    )?;
    Ok(summary)
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct PartialStudy<'a> {
    completed: &'a [CaseReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

const PARTIAL: &str = "convergence.partial.json";

fn validation_summary(r: &ConvergenceReport) -> String {
    let mut s = format!(
        "Convergence study: σ = {}, T = {}, H^{}_ε error of the leading-order ansatz\n",
        r.sigma, r.final_time, r.norm_order
    );
    let _ = writeln!(s, "{:>8}  {:>12}  {:>10}  {:>10}  {:>10}", "epsilon", "error", "runtime/s", "mass drift", "steps");
    for c in &r.cases {
        let _ = writeln!(
            s,
            "{:>8}  {:>12.6e}  {:>10.2}  {:>10.2e}  {:>10}",
            c.epsilon, c.error, c.runtime_sec, c.mass_drift, c.steps
        );
    }
    match r.fitted_rate {
        Some(rate) => {
            let _ = writeln!(s, "fitted rate: {rate:.4}");
        }
        None => s.push_str("fitted rate: n/a (single case)\n"),
    }
    if let Some(c) = &r.corrected_comparison {
        let _ = writeln!(
            s,
            "ε = {}: leading {:.6e}, corrected {:.6e} ({})",
            c.epsilon,
            c.leading_error,
            c.corrected_error,
            if c.corrected_error < c.leading_error {
                "corrected is smaller"
            } else {
                "corrected is NOT smaller"
            }
        );
    }
    s
}

fn run_validate(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let v = &cfg.validate;
    let partial_path = out.dir.join(PARTIAL);
    let done: Mutex<Vec<CaseReport>> = Mutex::new(Vec::new());
    let write_partial = |cases: &[CaseReport], error: Option<String>| -> Result<()> {
        let text = to_json(&PartialStudy {
            completed: cases,
            error,
        })?;
        fs::write(&partial_path, text).map_err(|e| Error::io(&partial_path, e))
    };
    let result = convergence_study(&cfg.sim(), &v.epsilons, v.corrected_at, &|case| {
        let mut cases = done.lock().expect("no panics while holding the lock");
        cases.push(case.clone());
        log::info!("ε = {} ({:?}) done: error {:.4e}", case.epsilon, case.order, case.error);
        if let Err(e) = write_partial(&cases, None) {
            log::warn!("could not save partial results: {e}");
        }
    });
    match result {
        Ok(report) => {
            if partial_path.exists() {
                fs::remove_file(&partial_path).map_err(|e| Error::io(&partial_path, e))?;
            }
            out.json("convergence.json", &report)?;
            let summary = validation_summary(&report);
            out.text("summary.txt", &summary)?;
            Ok(summary)
        }
        Err(e) => {
            let cases = done.into_inner().expect("no panics while holding the lock");
            write_partial(&cases, Some(e.to_string()))?;
            out.files.push(partial_path);
            Err(e)
        }
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ShallowOutput {
    #[serde(flatten)]
    report: ShallowReport,
    e_d_relative_deviation: f64,
    e_d_absolute_deviation: f64,
    splitting_relative_deviation: f64,
    splitting_absolute_deviation: f64,
    v_f_relative_deviation: f64,
}

fn run_shallow_check(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let m = &cfg.model;
    let lattice = LatticeBasis::honeycomb();
    let report = shallow_check(
        &lattice,
        &m.potential.build("potential")?,
        &m.perturbation.build("perturbation")?,
        cfg.shallow_check.eps_pot,
        m.sigma,
        m.truncation,
    )?;
    let output = ShallowOutput {
        e_d_relative_deviation: report.e_d_relative_deviation(),
        e_d_absolute_deviation: (report.e_d - report.e_d_predicted).abs(),
        splitting_relative_deviation: report.splitting_relative_deviation(),
        splitting_absolute_deviation: (report.splitting - report.splitting_predicted).abs(),
        v_f_relative_deviation: report.v_f_relative_deviation(),
        report,
    };
    out.json("shallow_check.json", &output)?;
    let r = &output.report;
    Ok(format!(
        "ε_pot = {}, σ = {}: E_D {} (predicted {}), splitting {} (predicted {}), vF {} (predicted {}, deviation {})\n",
        r.eps_pot,
        r.sigma,
        float(r.e_d),
        float(r.e_d_predicted),
        float(r.splitting),
        float(r.splitting_predicted),
        float(r.v_f),
        float(r.v_f_predicted),
        float(output.v_f_relative_deviation)
    ))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RemainderRatio {
    sigma: f64,
    epsilon_coarse: f64,
    epsilon_fine: f64,
    ratio: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ProductRuleOutput {
    box_length: f64,
    points_per_cell: usize,
    cases: Vec<ProductRuleReport>,
    ratios: Vec<RemainderRatio>,
}

fn run_product_rule(cfg: &RunConfig, out: &mut Writer) -> Result<String> {
    let p = &cfg.product_rule;
    let lattice = LatticeBasis::honeycomb();
    let mut cases = Vec::new();
    let mut ratios = Vec::new();
    let mut summary = String::new();
    for &sigma in &p.sigmas {
        let mut model = cfg.model.clone();
        model.sigma = sigma;
        let analysis = analyze(&model.dirac_setup(&lattice)?)?;
        let profiles = MicroProfiles::leading(&analysis, lattice.cell_area);
        let mut reports: Vec<ProductRuleReport> = Vec::new();
        for &eps in &p.epsilons {
            let grid = ObliqueGrid::from_box(&lattice, p.box_length, p.points_per_cell, eps)?;
            let r = product_rule_check(&profiles, sigma, &p.gamma, &grid, p.norm_order)?;
            let _ = writeln!(
                summary,
                "σ = {sigma}, ε = {eps}: ‖q‖ = {}{}",
                float(r.remainder_norm),
                r.leibniz_deviation
                    .map(|d| format!(", Leibniz deviation {}", float(d)))
                    .unwrap_or_default()
            );
            reports.push(r);
        }
        for pair in reports.windows(2) {
            let ratio = pair[0].remainder_norm / pair[1].remainder_norm;
            let _ = writeln!(summary, "σ = {sigma}: ratio ε = {} / {} → {ratio:.4}", pair[0].epsilon, pair[1].epsilon);
            ratios.push(RemainderRatio {
                sigma,
                epsilon_coarse: pair[0].epsilon,
                epsilon_fine: pair[1].epsilon,
                ratio,
            });
        }
        cases.extend(reports);
    }
    out.json(
        "product_rule.json",
        &ProductRuleOutput {
            box_length: p.box_length,
            points_per_cell: p.points_per_cell,
            cases,
            ratios,
        },
    )?;
    Ok(summary)
}
