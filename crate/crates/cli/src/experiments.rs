//! The experiment drivers behind each subcommand: figure data as CSV,
//! reports as JSON, deterministic for a fixed config and seed.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use rayon::prelude::*;

use ergokit::bounds::{coherent_ergotropy_max, qubit_coherent_bound};
use ergokit::hilbert::{SystemObservable, SystemState, SystemUnitary};
use ergokit::protocol::{
    control_marginal, ergotropy, oracle_two_point, ProtocolContext,
};
use ergokit::qubit_phase::{
    boundary, iterate_reduction, phase_space_from_states, PhaseSpacePoint, Provenance,
};
use ergokit::sampling;
use ergokit::verify::{run_suite, CheckResult, VerifyConfig, SUITE_NAMES};
use ergokit::weight::{cat_state, gaussian_packet, EnergyGrid, WeightState};
use ergokit::workdist::{
    qp_weight_atoms, tpm_distribution, work_operator_cyclic, work_operator_distribution,
};

use crate::config::ExperimentConfig;

pub struct Runner {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    hash: String,
}

impl Runner {
    pub fn new(config: ExperimentConfig, seed: u64, out_dir: PathBuf) -> Result<Self, String> {
        fs::create_dir_all(&out_dir)
            .map_err(|e| format!("cannot create {}: {e}", out_dir.display()))?;
        let hash = config.hash();
        let echo = out_dir.join("effective_config.toml");
        fs::write(&echo, config.canonical())
            .map_err(|e| format!("cannot write {}: {e}", echo.display()))?;
        Ok(Self {
            config,
            seed,
            out_dir,
            hash,
        })
    }

    fn write_csv(&self, name: &str, header: &str, rows: &[String]) -> Result<PathBuf, String> {
        let path = self.out_dir.join(name);
        let mut out = String::with_capacity(rows.len() * 32 + 64);
        out.push_str(&format!("# config {} seed {}\n", self.hash, self.seed));
        out.push_str(header);
        out.push('\n');
        for r in rows {
            out.push_str(r);
            out.push('\n');
        }
        fs::write(&path, out).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }

    fn write_json(&self, name: &str, value: &impl serde::Serialize) -> Result<PathBuf, String> {
        let path = self.out_dir.join(name);
        let text = serde_json::to_string_pretty(value).map_err(|e| e.to_string())?;
        fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
        Ok(path)
    }

    fn grid(&self) -> Result<EnergyGrid, String> {
        self.config.grid.build()
    }
}

fn sample_points(
    rho: &SystemState,
    weight: &WeightState,
    n: usize,
    seed: u64,
) -> Result<Vec<PhaseSpacePoint>, String> {
    let h = SystemObservable::qubit_hamiltonian();
    let ctx = ProtocolContext::new(rho, weight, &h).map_err(|e| e.to_string())?;
    let mut rng = sampling::rng_from_seed(seed);
    let unitaries: Vec<SystemUnitary> = (0..n).map(|_| sampling::haar_unitary(2, &mut rng)).collect();
    let mut points: Vec<PhaseSpacePoint> = unitaries
        .par_iter()
        .map(|v| {
            let (w, dvar) = ctx.closed_form(v).expect("closed form evaluates");
            PhaseSpacePoint {
                w,
                dvar,
                provenance: Provenance::Sampled,
            }
        })
        .collect();
    let (w0, v0) = ctx
        .closed_form(&SystemUnitary::identity(2))
        .map_err(|e| e.to_string())?;
    points.insert(
        0,
        PhaseSpacePoint {
            w: w0,
            dvar: v0,
            provenance: Provenance::Sampled,
        },
    );
    Ok(points)
}

fn boundary_rows(
    rho: &SystemState,
    weight: &WeightState,
    n_w: usize,
    prefix: &str,
) -> Result<Vec<String>, String> {
    let ps = phase_space_from_states(rho, weight).map_err(|e| e.to_string())?;
    let (lo_w, hi_w) = ps.work_range();
    let mut rows = Vec::with_capacity(n_w + 1);
    for k in 0..=n_w {
        let w = lo_w + (hi_w - lo_w) * k as f64 / n_w as f64;
        let (lo, hi) = boundary(&ps, w).map_err(|e| e.to_string())?;
        rows.push(if prefix.is_empty() {
            format!("{w},{lo},{hi}")
        } else {
            format!("{prefix},{w},{lo},{hi}")
        });
    }
    Ok(rows)
}

/// Work-variance phase space: boundary and sampled clouds for the Gaussian
/// reference and the cat state, plus boundary sweeps over σ and μ.
pub fn cmd_phase_space(runner: &Runner, samples_override: Option<usize>) -> Result<(), String> {
    let grid = runner.grid()?;
    let rho = runner.config.system.build()?;
    let pc = &runner.config.phase_space;
    let samples = samples_override.unwrap_or(runner.config.protocol.samples);

    // panel a: Gaussian reference
    let wg = WeightState::pure(
        gaussian_packet(0.0, 0.0, pc.sigma, &grid).map_err(|e| e.to_string())?,
    );
    let rows = boundary_rows(&rho, &wg, 400, "")?;
    runner.write_csv("gaussian_boundary.csv", "w,lower,upper", &rows)?;
    let pts = sample_points(&rho, &wg, samples, runner.seed)?;
    let rows: Vec<String> = pts
        .iter()
        .map(|p| format!("{},{},sampled", p.w, p.dvar))
        .collect();
    runner.write_csv("gaussian_points.csv", "w,dvar,provenance", &rows)?;

    // panel b: σ sweep of the boundary
    let mut rows = Vec::new();
    for &sigma in &pc.sigma_sweep {
        let w = WeightState::pure(
            gaussian_packet(0.0, 0.0, sigma, &grid).map_err(|e| e.to_string())?,
        );
        rows.extend(boundary_rows(&rho, &w, 200, &format!("{sigma}"))?);
    }
    runner.write_csv("gaussian_sweep.csv", "sigma,w,lower,upper", &rows)?;

    // panel c: cat reference
    let wc = WeightState::pure(cat_state(pc.mu, pc.nu, &grid).map_err(|e| e.to_string())?);
    let rows = boundary_rows(&rho, &wc, 400, "")?;
    runner.write_csv("cat_boundary.csv", "w,lower,upper", &rows)?;
    let pts = sample_points(&rho, &wc, samples, runner.seed ^ 0x5eed)?;
    let rows: Vec<String> = pts
        .iter()
        .map(|p| format!("{},{},sampled", p.w, p.dvar))
        .collect();
    runner.write_csv("cat_points.csv", "w,dvar,provenance", &rows)?;

    // panel d: μ sweep of the cat boundary
    let mut rows = Vec::new();
    for &mu in &pc.mu_sweep {
        let w = WeightState::pure(cat_state(mu, pc.nu, &grid).map_err(|e| e.to_string())?);
        rows.extend(boundary_rows(&rho, &w, 200, &format!("{mu}"))?);
    }
    runner.write_csv("cat_sweep.csv", "mu,w,lower,upper", &rows)?;
    println!(
        "phase-space: wrote 6 files to {} ({} samples per cloud)",
        runner.out_dir.display(),
        samples
    );
    Ok(())
}

/// Iterated variance reduction: energy distributions per step for the
/// coherent plus state and for the dephased input under the same protocol.
pub fn cmd_reduce_variance(runner: &Runner) -> Result<(), String> {
    let grid = runner.grid()?;
    let steps = runner.config.protocol.steps;
    let weight = WeightState::pure(cat_state(3.0, 1.0, &grid).map_err(|e| e.to_string())?);
    let plus = SystemState::plus();
    let mixed = SystemState::maximally_mixed(2);

    let coherent =
        iterate_reduction(&plus, &weight, steps, None).map_err(|e| e.to_string())?;
    let incoherent =
        iterate_reduction(&mixed, &weight, steps, Some(&plus)).map_err(|e| e.to_string())?;

    for (label, trace) in [("coherent", &coherent), ("incoherent", &incoherent)] {
        let mut rows = Vec::new();
        for (step, f) in trace.distributions.iter().enumerate() {
            for (k, fk) in f.iter().enumerate() {
                rows.push(format!("{step},{},{fk}", grid.energy(k)));
            }
        }
        runner.write_csv(&format!("{label}_fn.csv"), "step,E,f", &rows)?;
    }
    let rows: Vec<String> = (0..=steps)
        .map(|k| {
            format!(
                "{k},{},{}",
                coherent.sigma_e[k], incoherent.sigma_e[k]
            )
        })
        .collect();
    runner.write_csv("sigma_e.csv", "step,coherent,incoherent", &rows)?;
    println!(
        "reduce-variance: σ_E coherent {:.4} -> {:.4}, incoherent {:.4} -> {:.4} over {} steps",
        coherent.sigma_e[0],
        coherent.sigma_e[steps],
        incoherent.sigma_e[0],
        incoherent.sigma_e[steps],
        steps
    );
    Ok(())
}

/// Fluctuation-decoherence bound curve over the coherent ergotropy, with
/// evolution-oracle cross checks at sampled points.
pub fn cmd_bound_plot(runner: &Runner) -> Result<(), String> {
    let bp = &runner.config.bound_plot;
    let [x, y, z] = bp.bloch;
    let alpha = (x * x + y * y).sqrt();
    let r_max = coherent_ergotropy_max(z, alpha);
    let mut rows = Vec::with_capacity(bp.points);
    for k in 1..bp.points {
        let r_c = r_max * k as f64 / bp.points as f64;
        let bound = qubit_coherent_bound(r_c, z, alpha).map_err(|e| e.to_string())?;
        rows.push(format!("{r_c},{bound}"));
    }
    let header = format!("r_c,bound\n# asymptote r_c_max {r_max}");
    runner.write_csv("bound.csv", &header, &rows)?;

    // cross-check: realize each R_C with a Gaussian weight and compare the
    // oracle's final dispersion against the bound
    let h = SystemObservable::qubit_hamiltonian();
    let rho = SystemState::from_bloch(x, y, z).map_err(|e| e.to_string())?;
    // wide grid so that large-σ packets fit
    let wide = EnergyGrid::new(2048, 1.0 / 8.0, -128.0).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for &frac in &bp.crosscheck_fractions {
        let r_c = r_max * frac;
        // |γ(1)| needed so that the control marginal carries exactly R_C
        let gamma_target = ((2.0 * r_c + z.abs()).powi(2) - z * z).sqrt() / alpha;
        let sigma = (-(8.0 * gamma_target.ln())).recip().sqrt();
        let weight = WeightState::pure(
            gaussian_packet(0.0, 0.0, sigma, &wide).map_err(|e| e.to_string())?,
        );
        let sigma_s = control_marginal(&rho, &weight, &h).map_err(|e| e.to_string())?;
        let (_, v_opt) = ergotropy(&sigma_s, &h).map_err(|e| e.to_string())?;
        let stats = oracle_two_point(&rho, &weight, &h, &v_opt).map_err(|e| e.to_string())?;
        let bound = qubit_coherent_bound(r_c, z, alpha).map_err(|e| e.to_string())?;
        rows.push(format!(
            "{r_c},{bound},{},{}",
            stats.sigma_e_final,
            stats.sigma_e_final >= bound
        ));
    }
    runner.write_csv(
        "bound_crosscheck.csv",
        "r_c,bound,oracle_sigma_f,satisfied",
        &rows,
    )?;
    println!(
        "bound-plot: curve over R_C in (0, {r_max:.3}) with {} cross checks",
        bp.crosscheck_fractions.len()
    );
    Ok(())
}

/// Work-distribution atoms of the configured instance: the work-operator
/// spectral distribution, the TPM distribution, and the quasi-distribution
/// over the control-marginal state.
pub fn cmd_distributions(runner: &Runner) -> Result<(), String> {
    let grid = runner.grid()?;
    let rho = runner.config.system.build()?;
    let weight = runner.config.weight.build(&grid)?;
    let h = SystemObservable::qubit_hamiltonian();
    let v = build_unitary(&runner.config.protocol.unitary, runner.config.protocol.angle, runner.seed)?;

    let w_op = work_operator_cyclic(&h, &v).map_err(|e| e.to_string())?;
    let p_w = work_operator_distribution(&w_op, &rho).map_err(|e| e.to_string())?;
    let p_tpm = tpm_distribution(&h, &v, &rho).map_err(|e| e.to_string())?;
    let sigma_s = control_marginal(&rho, &weight, &h).map_err(|e| e.to_string())?;
    let p_qp = qp_weight_atoms(&h, &v, &sigma_s).map_err(|e| e.to_string())?;

    for (name, dist) in [
        ("work_operator.csv", &p_w),
        ("tpm.csv", &p_tpm),
        ("quasi.csv", &p_qp),
    ] {
        let rows: Vec<String> = dist
            .atoms()
            .unwrap_or(&[])
            .iter()
            .map(|(w, q)| format!("{w},{q}"))
            .collect();
        runner.write_csv(name, "w,q", &rows)?;
    }
    runner.write_json(
        "distributions.json",
        &serde_json::json!({
            "work_operator": p_w,
            "tpm": p_tpm,
            "quasi": p_qp,
            "means": {
                "work_operator": p_w.mean(),
                "tpm": p_tpm.mean(),
                "quasi": p_qp.mean(),
            },
        }),
    )?;
    println!(
        "distributions: ⟨w⟩_W = {:.6}, ⟨w⟩_TPM = {:.6}, ⟨w⟩_QP = {:.6}",
        p_w.mean(),
        p_tpm.mean(),
        p_qp.mean()
    );
    Ok(())
}

fn build_unitary(kind: &str, angle: f64, seed: u64) -> Result<SystemUnitary, String> {
    match kind {
        "identity" => Ok(SystemUnitary::identity(2)),
        "sigma_x" => Ok(SystemUnitary::sigma_x()),
        "rotation_y" => Ok(SystemUnitary::rotation_y(angle)),
        "haar" => {
            let mut rng = sampling::rng_from_seed(seed ^ 0x41a2);
            Ok(sampling::haar_unitary(2, &mut rng))
        }
        other => Err(format!(
            "unknown unitary {other:?}; expected identity|sigma_x|rotation_y|haar"
        )),
    }
}

/// Runs verification suites and writes a machine-readable report. Returns
/// false if any check failed.
pub fn cmd_verify(
    runner: &Runner,
    suite: Option<&str>,
    quick: bool,
    corrupt_gamma_sign: bool,
) -> Result<bool, String> {
    let cfg = VerifyConfig {
        seed: runner.seed,
        quick,
        corrupt_gamma_sign,
    };
    let names: Vec<&str> = match suite {
        Some(s) => {
            if !SUITE_NAMES.contains(&s) {
                return Err(format!(
                    "unknown suite {s:?}; available: {}",
                    SUITE_NAMES.join(", ")
                ));
            }
            vec![s]
        }
        None => SUITE_NAMES.to_vec(),
    };
    let mut results: Vec<CheckResult> = Vec::new();
    for name in names {
        let started = std::time::Instant::now();
        let r = run_suite(name, &cfg).map_err(|e| e.to_string())?;
        println!(
            "{:30} {}  residual {:.3e} (tol {:.1e}, {:.1}s)",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.residual,
            r.tolerance,
            started.elapsed().as_secs_f64()
        );
        results.push(r);
    }
    let passed = results.iter().all(|r| r.passed);
    runner.write_json(
        "verify.json",
        &serde_json::json!({
            "seed": runner.seed,
            "quick": quick,
            "corrupt_gamma_sign": corrupt_gamma_sign,
            "passed": passed,
            "checks": results,
        }),
    )?;
    let mut stdout = std::io::stdout();
    let _ = writeln!(stdout, "verify: {}", if passed { "all suites passed" } else { "FAILURES present" });
    Ok(passed)
}
