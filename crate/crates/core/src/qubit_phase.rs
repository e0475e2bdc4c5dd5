//! The exactly solved qubit work-variance phase space: boundary functions,
//! regime specializations (semi-classical, incoherent, reflection-symmetric,
//! cat, plus state), directed variance minimization, and the iterated
//! variance-reduction protocol.
//!
//! All quantities are reported in the frame where the weight is re-centered
//! to ⟨H_W⟩ = 0 (an exact grid-origin shift), with the qubit gap ω = 1.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, SystemObservable, SystemState, SystemUnitary};
use crate::protocol::{control_marginal, evolve, ProtocolContext, BRANCH_FLOOR};
use crate::sampling;
use crate::weight::WeightState;

/// |1 - 2p| below this makes the phase-space parametrization singular.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Parameters of the qubit phase space: the control-marginal spectrum
/// (p ≤ ½), the mean energies ε_i of its eigenvectors, and the weight
/// integrals (η, ξ, γ) entering the boundary functions, with the band
/// radius R = |1 - 2(1-2p)ξ|.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QubitPhaseSpace {
    pub p: f64,
    pub eps0: f64,
    pub eps1: f64,
    pub eta: f64,
    pub xi_re: f64,
    pub xi_im: f64,
    pub gamma_re: f64,
    pub gamma_im: f64,
    pub radius: f64,
    /// Energy shift applied to the grid origin to reach ⟨H_W⟩ = 0.
    pub recenter_shift: f64,
}

impl QubitPhaseSpace {
    pub fn xi(&self) -> C64 {
        C64::new(self.xi_re, self.xi_im)
    }

    pub fn gamma(&self) -> C64 {
        C64::new(self.gamma_re, self.gamma_im)
    }

    /// Admissible work range [-ε₀(1-2p), ε₁(1-2p)].
    pub fn work_range(&self) -> (f64, f64) {
        let gap = 1.0 - 2.0 * self.p;
        (-self.eps0 * gap, self.eps1 * gap)
    }
}

/// Where a phase-space point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Sampled,
    Boundary,
    Extremal,
}

/// One (work, variance-change) pair.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    pub w: f64,
    pub dvar: f64,
    pub provenance: Provenance,
}

/// Builds the phase-space parameters from a qubit state and a weight state:
/// diagonalizes the control-marginal state and evaluates η, ξ, γ by
/// quadrature over the Wigner grid of the re-centered weight.
pub fn phase_space_from_states(
    rho_s: &SystemState,
    rho_w: &WeightState,
) -> Result<QubitPhaseSpace> {
    if rho_s.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: rho_s.dim(),
        });
    }
    let h = SystemObservable::qubit_hamiltonian();
    // re-center so that ⟨H_W⟩ = 0, as the boundary derivation assumes
    let grid = rho_w.grid();
    let de = grid.spacing();
    let mean_hw: f64 = rho_w
        .energy_distribution()
        .iter()
        .enumerate()
        .map(|(k, p)| grid.energy(k) * p * de)
        .sum();
    let centered = rho_w.with_origin_shifted(-mean_hw);

    let sigma = control_marginal(rho_s, &centered, &h)?;
    let (p, eps0, eps1) = diagonalize_control_marginal(&sigma, &h)?;

    // Wigner-grid quadratures: I₁ = ∫∫ E W(E,t) e^{iωt}, γ = ∫∫ W e^{iωt}
    let wigner = centered.wigner();
    let cgrid = centered.grid();
    let dt = cgrid.time_spacing();
    let m1 = wigner.energy_moment_given_time();
    let g = wigner.marginal_time();
    let omega = 1.0;
    let mut i1 = C64::new(0.0, 0.0);
    let mut gamma = C64::new(0.0, 0.0);
    for j in 0..cgrid.n() {
        let phase = C64::from_polar(dt, omega * cgrid.time(j));
        i1 += phase * m1[j];
        gamma += phase * g[j];
    }
    let ratio = i1 / gamma;
    let eta = 2.0 * ratio.re;
    let xi = ratio * eps1 - ratio.conj() * eps0;
    let radius = (C64::new(1.0, 0.0) - xi * 2.0 * (1.0 - 2.0 * p)).norm();
    Ok(QubitPhaseSpace {
        p,
        eps0,
        eps1,
        eta,
        xi_re: xi.re,
        xi_im: xi.im,
        gamma_re: gamma.re,
        gamma_im: gamma.im,
        radius,
        recenter_shift: -mean_hw,
    })
}

/// Spectrum of the control-marginal state with p ≤ ½ and the mean energies
/// of its eigenvectors (eigenvector phases fixed so ⟨0|ψ₀⟩ ≥ 0).
fn diagonalize_control_marginal(
    sigma: &SystemState,
    h: &SystemObservable,
) -> Result<(f64, f64, f64)> {
    let (vals, mut vecs) = hilbert::hermitian_eigensystem(sigma.matrix());
    let p = vals[0].clamp(0.0, 1.0);
    if (1.0 - 2.0 * p).abs() < DEGENERACY_GAP {
        return Err(Error::DegenerateSigma {
            gap: (1.0 - 2.0 * p).abs(),
        });
    }
    for k in 0..2 {
        let head = vecs[(0, k)];
        if head.norm() > 1e-14 {
            let phase = (head / head.norm()).conj();
            for i in 0..2 {
                vecs[(i, k)] *= phase;
            }
        }
    }
    let mean_energy = |k: usize| -> f64 {
        let v = vecs.column(k);
        (v.adjoint() * h.matrix() * v)[(0, 0)].re
    };
    Ok((p, mean_energy(0), mean_energy(1)))
}

/// Boundary functions of the band: returns (f - h, f + h) at work value w.
pub fn boundary(ps: &QubitPhaseSpace, w: f64) -> Result<(f64, f64)> {
    let (lo, hi) = ps.work_range();
    if w < lo - 1e-12 || w > hi + 1e-12 {
        return Err(Error::WorkOutOfRange { w, lo, hi });
    }
    let gap = 1.0 - 2.0 * ps.p;
    let e0 = ps.eps0;
    let e1 = ps.eps1;
    let f = -w * w
        + ((e1 - e0) / gap + 4.0 * e0 * e1 * ps.eta) * w
        + 2.0 * e0 * e1 * (1.0 - gap * (e1 - e0) * ps.eta);
    let radicand = e0 * e1 * (e0 + w / gap) * (e1 - w / gap);
    let h = if radicand < -1e-12 {
        return Err(Error::Domain {
            what: format!("negative radicand {radicand:.3e} in the band half-width"),
        });
    } else {
        2.0 * ps.radius * radicand.max(0.0).sqrt()
    };
    Ok((f - h, f + h))
}

/// Work values with zero variance change, for semi-classical phase spaces
/// (R = 1, η = ξ = 0): {0} for p > 0 and {0, ε₁ - ε₀} for p = 0.
pub fn zero_variance_roots(ps: &QubitPhaseSpace) -> Vec<f64> {
    let mut roots = vec![0.0];
    if ps.p < 1e-10 {
        let second = ps.eps1 - ps.eps0;
        if second.abs() > 1e-10 {
            roots.push(second);
        }
    }
    roots
}

/// Closed-form band radius for a cat-state weight φ_{μ,ν} and
/// control-marginal spectrum p.
pub fn cat_radius(mu: f64, nu: f64, p: f64) -> f64 {
    let kappa = (nu * nu + mu * mu + mu).exp();
    let gap = 1.0 - 2.0 * p;
    let numerator = nu * (1.0 - (2.0 * mu).exp()) - 2.0 * mu * kappa * nu.sin();
    let denominator = 1.0 + (2.0 * mu).exp() + 2.0 * kappa * nu.cos();
    (1.0 + 4.0 * gap * gap * (numerator / denominator).powi(2)).sqrt()
}

/// Phase space of the coherent plus state |+⟩ for a given weight: forces
/// ε₀ = ε₁ = ½, with f(w) = -w² + ηw + ½ and h(w) = R√(¼ - w²/(1-2p)²).
pub fn plus_state_phase_space(rho_w: &WeightState) -> Result<QubitPhaseSpace> {
    phase_space_from_states(&SystemState::plus(), rho_w)
}

/// Boundary of the plus-state band at work value w.
pub fn plus_state_boundary(rho_w: &WeightState, w: f64) -> Result<(f64, f64)> {
    let ps = plus_state_phase_space(rho_w)?;
    boundary(&ps, w)
}

/// Haar-samples protocols and collects their (ΔE_W, Δσ²_W) pairs through
/// the closed-form statistics. The identity protocol is always included as
/// the first point.
pub fn sample_phase_space(
    rho_s: &SystemState,
    rho_w: &WeightState,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<PhaseSpacePoint>> {
    let h = SystemObservable::qubit_hamiltonian();
    let ctx = ProtocolContext::new(rho_s, rho_w, &h)?;
    let mut rng = sampling::rng_from_seed(seed);
    let mut points = Vec::with_capacity(n_samples + 1);
    let (w0, v0) = ctx.closed_form(&SystemUnitary::identity(2))?;
    points.push(PhaseSpacePoint {
        w: w0,
        dvar: v0,
        provenance: Provenance::Sampled,
    });
    for _ in 0..n_samples {
        let v = sampling::haar_unitary(2, &mut rng);
        let (w, dvar) = ctx.closed_form(&v)?;
        points.push(PhaseSpacePoint {
            w,
            dvar,
            provenance: Provenance::Sampled,
        });
    }
    Ok(points)
}

/// Builds the unitary whose final Hamiltonian column subspace is
/// |v(θ)⟩ = √(1-c)|ψ₀⟩ + √c e^{iθ}|ψ₁⟩ in the control-marginal eigenbasis.
fn unitary_for(c: f64, theta: f64, basis: &DMatrix<C64>) -> SystemUnitary {
    let a = (1.0 - c).max(0.0).sqrt();
    let b = C64::from_polar(c.max(0.0).sqrt(), theta);
    // v = a ψ₀ + b ψ₁, v⊥ = -b̄ ψ₀ + a ψ₁; V maps v → |1⟩ and v⊥ → |0⟩
    let psi0 = basis.column(0);
    let psi1 = basis.column(1);
    let v: Vec<C64> = (0..2).map(|i| psi0[i] * a + psi1[i] * b).collect();
    let vp: Vec<C64> = (0..2).map(|i| -psi0[i] * b.conj() + psi1[i] * a).collect();
    let m = DMatrix::from_fn(2, 2, |i, j| {
        // row 0 = ⟨v⊥|, row 1 = ⟨v|
        if i == 0 {
            vp[j].conj()
        } else {
            v[j].conj()
        }
    });
    SystemUnitary::new(m).expect("constructed from an orthonormal pair")
}

/// Minimizes the variance change at fixed extracted work `target_w` over
/// the unitary family that realizes it: the polar angle of the final
/// excited column is pinned by `target_w`, the relative phase θ sweeps the
/// band position cos φ. Errors if the best value found exceeds the lower
/// boundary by more than 1e-3.
pub fn minimize_variance(
    rho_s: &SystemState,
    rho_w: &WeightState,
    target_w: f64,
) -> Result<(SystemUnitary, f64)> {
    let h = SystemObservable::qubit_hamiltonian();
    let ctx = ProtocolContext::new(rho_s, rho_w, &h)?;
    let ps = phase_space_from_states(rho_s, rho_w)?;
    let (lo, hi) = ps.work_range();
    if target_w < lo - 1e-12 || target_w > hi + 1e-12 {
        return Err(Error::WorkOutOfRange {
            w: target_w,
            lo,
            hi,
        });
    }
    let gap = 1.0 - 2.0 * ps.p;
    let mean_h_sigma = ps.p * ps.eps0 + (1.0 - ps.p) * ps.eps1;
    let c = ((mean_h_sigma - target_w - ps.p) / gap).clamp(0.0, 1.0);
    let (_, basis) = hilbert::hermitian_eigensystem(ctx.sigma_s.matrix());

    let objective = |theta: f64| -> f64 {
        let v = unitary_for(c, theta, &basis);
        ctx.closed_form(&v).map(|(_, dv)| dv).unwrap_or(f64::INFINITY)
    };
    let n_coarse = 256;
    let mut best_theta = 0.0;
    let mut best = f64::INFINITY;
    for k in 0..n_coarse {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / n_coarse as f64;
        let v = objective(theta);
        if v < best {
            best = v;
            best_theta = theta;
        }
    }
    let cell = 2.0 * std::f64::consts::PI / n_coarse as f64;
    let (mut a, mut b) = (best_theta - cell, best_theta + cell);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..70 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if objective(x1) > objective(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    let theta_star = 0.5 * (a + b);
    let v_star = unitary_for(c, theta_star, &basis);
    let achieved = objective(theta_star);
    let (floor, _) = boundary(&ps, target_w)?;
    if achieved > floor + 1e-3 {
        return Err(Error::ConvergenceFailure {
            best: achieved,
            target: floor,
            tol: 1e-3,
        });
    }
    Ok((v_star, achieved))
}

/// Trace of an iterated variance-reduction run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    /// f_n(E) per step, index 0 = initial.
    pub distributions: Vec<Vec<f64>>,
    /// σ_E per step, index 0 = initial.
    pub sigma_e: Vec<f64>,
    /// Probability mass truncated by the branch re-decomposition per step.
    pub truncated: Vec<f64>,
}

/// Repeats the variance-minimizing protocol at w = 0: per step, recompute
/// the phase space, pick the minimizing unitary, evolve, reduce and
/// re-decompose the weight.
///
/// `protocol_reference` selects the state whose phase space drives the
/// choice of unitary; it defaults to `rho_s`. Passing a coherent reference
/// with an incoherent `rho_s` applies the same protocol to the dephased
/// input, which is the comparison that separates interference-driven peak
/// collapse from classical broadening. A degenerate control marginal
/// (maximally mixed σ_S) admits no phase-space parametrization, so then a
/// reference is required.
pub fn iterate_reduction(
    rho_s: &SystemState,
    rho_w0: &WeightState,
    n_steps: usize,
    protocol_reference: Option<&SystemState>,
) -> Result<IterationTrace> {
    let h = SystemObservable::qubit_hamiltonian();
    let reference = protocol_reference.unwrap_or(rho_s);
    let mut weight = rho_w0.clone();
    let sigma_of = |w: &WeightState| w.dispersion_stats().sigma_energy;

    let mut trace = IterationTrace {
        distributions: vec![weight.energy_distribution()],
        sigma_e: vec![sigma_of(&weight)],
        truncated: vec![0.0],
    };
    for step in 1..=n_steps {
        let (v, _) = minimize_variance(reference, &weight, 0.0)?;
        let evolved = evolve(rho_s, &weight, &h, &v).map_err(|e| match e {
            Error::GuardBandViolation { .. } => Error::GuardBandAtStep { step },
            other => other,
        })?;
        let (reduced, truncated) = evolved.reduced_weight_branches(BRANCH_FLOOR);
        weight = reduced;
        trace.distributions.push(weight.energy_distribution());
        trace.sigma_e.push(sigma_of(&weight));
        trace.truncated.push(truncated);
    }
    Ok(trace)
}

/// Closed-form qubit ergotropies for a Bloch vector (x, y, z) and a
/// dephasing magnitude |γ|: total R, incoherent R_I, coherent R_C, and the
/// coherent ergotropy left in the control-marginal state.
pub fn qubit_ergotropies(x: f64, y: f64, z: f64, gamma_abs: f64) -> Result<(f64, f64, f64, f64)> {
    let norm = (x * x + y * y + z * z).sqrt();
    if norm > 1.0 + 1e-10 {
        return Err(Error::Domain {
            what: format!("Bloch vector length {norm} exceeds 1"),
        });
    }
    let alpha_sq = x * x + y * y;
    let r = 0.5 * (norm - z);
    let r_i = 0.5 * (z.abs() - z);
    let r_c = 0.5 * (norm - z.abs());
    let r_c_sigma = 0.5 * ((gamma_abs * gamma_abs * alpha_sq + z * z).sqrt() - z.abs());
    Ok((r, r_i, r_c, r_c_sigma))
}

/// The Fig.-1 reference state (|0⟩ + 5|1⟩)/√26.
pub fn lopsided_state() -> SystemState {
    SystemState::pure(&[C64::new(1.0, 0.0), C64::new(5.0, 0.0)]).expect("valid amplitudes")
}
