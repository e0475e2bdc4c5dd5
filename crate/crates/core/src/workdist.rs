//! The three work distributions: the spectral distribution of the work
//! operator, the two-point-measurement (TPM) distribution, and the
//! convolution quasi-distribution, with moment and cumulant extraction.
//!
//! Sign convention: positive work is energy gained by the reservoir, so
//! TPM atoms sit at w = ε_initial - ε_final.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, SystemObservable, SystemState, SystemUnitary};

/// Atoms closer than this in energy are merged into one.
pub const MERGE_TOL: f64 = 1e-9;
/// Total weight must match 1 to within this.
pub const WEIGHT_SUM_TOL: f64 = 1e-8;
/// Residual imaginary part allowed on grouped quasi-distribution weights.
pub const IMAG_TOL: f64 = 1e-8;
/// Characteristic-function denominators below this are masked.
pub const DENOMINATOR_FLOOR: f64 = 1e-8;

/// Which of the three work statistics a distribution represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    WorkOperator,
    Tpm,
    Quasi,
}

/// Representation of the distribution over work values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Representation {
    /// Finite signed atomic measure: (work value, weight) pairs sorted by w.
    Atoms { atoms: Vec<(f64, f64)> },
    /// Signed density sampled on a work grid.
    Sampled { w_grid: Vec<f64>, values: Vec<f64> },
}

/// A work distribution: a signed atomic measure or sampled density with its
/// provenance kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkDistribution {
    pub kind: DistributionKind,
    #[serde(flatten)]
    pub representation: Representation,
}

impl WorkDistribution {
    /// Builds an atomic distribution: sorts, merges atoms within
    /// [`MERGE_TOL`], validates the weight sum, and for the two probability
    /// kinds rejects negative weights.
    pub fn from_atoms(kind: DistributionKind, raw: Vec<(f64, f64)>) -> Result<Self> {
        let atoms = merge_atoms(raw);
        let total: f64 = atoms.iter().map(|(_, q)| q).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::NotNormalized { norm: total });
        }
        if kind != DistributionKind::Quasi {
            if let Some(&(w, q)) = atoms.iter().find(|(_, q)| *q < -1e-10) {
                return Err(Error::Domain {
                    what: format!("negative weight {q:.3e} at w = {w} in a probability distribution"),
                });
            }
        }
        Ok(Self {
            kind,
            representation: Representation::Atoms { atoms },
        })
    }

    pub fn sampled(kind: DistributionKind, w_grid: Vec<f64>, values: Vec<f64>) -> Self {
        Self {
            kind,
            representation: Representation::Sampled { w_grid, values },
        }
    }

    pub fn atoms(&self) -> Option<&[(f64, f64)]> {
        match &self.representation {
            Representation::Atoms { atoms } => Some(atoms),
            Representation::Sampled { .. } => None,
        }
    }

    /// n-th raw moment Σ q wⁿ (atoms) or quadrature over the sample grid.
    pub fn moment(&self, n: u32) -> f64 {
        match &self.representation {
            Representation::Atoms { atoms } => {
                atoms.iter().map(|(w, q)| q * w.powi(n as i32)).sum()
            }
            Representation::Sampled { w_grid, values } => {
                if w_grid.len() < 2 {
                    return 0.0;
                }
                let dw = w_grid[1] - w_grid[0];
                w_grid
                    .iter()
                    .zip(values)
                    .map(|(w, v)| v * w.powi(n as i32) * dw)
                    .sum()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.moment(2) - m * m
    }

    /// Cumulants up to `order` (≤ 4) via exact moments and the
    /// moment-to-cumulant recursion.
    pub fn cumulants(&self, order: usize) -> Vec<f64> {
        let order = order.min(4);
        let m: Vec<f64> = (1..=order as u32).map(|n| self.moment(n)).collect();
        cumulants_from_moments(&m)
    }

    /// Characteristic function Σ q e^{iws}.
    pub fn characteristic(&self, s: f64) -> C64 {
        match &self.representation {
            Representation::Atoms { atoms } => atoms
                .iter()
                .map(|(w, q)| C64::from_polar(*q, w * s))
                .sum(),
            Representation::Sampled { w_grid, values } => {
                if w_grid.len() < 2 {
                    return C64::new(0.0, 0.0);
                }
                let dw = w_grid[1] - w_grid[0];
                w_grid
                    .iter()
                    .zip(values)
                    .map(|(w, v)| C64::from_polar(v * dw, w * s))
                    .sum()
            }
        }
    }

    /// Total-variation distance ½ Σ |q_a - q_b| between two atomic
    /// distributions, matching atoms within [`MERGE_TOL`].
    pub fn total_variation(&self, other: &WorkDistribution) -> Option<f64> {
        let a = self.atoms()?;
        let b = other.atoms()?;
        let mut signed: Vec<(f64, f64)> = a.to_vec();
        signed.extend(b.iter().map(|(w, q)| (*w, -q)));
        let merged = merge_atoms(signed);
        Some(merged.iter().map(|(_, q)| q.abs()).sum::<f64>() / 2.0)
    }

    /// Two-column CSV body `w,q`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("w,q\n");
        match &self.representation {
            Representation::Atoms { atoms } => {
                for (w, q) in atoms {
                    out.push_str(&format!("{w},{q}\n"));
                }
            }
            Representation::Sampled { w_grid, values } => {
                for (w, v) in w_grid.iter().zip(values) {
                    out.push_str(&format!("{w},{v}\n"));
                }
            }
        }
        out
    }
}

fn merge_atoms(mut raw: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    raw.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
    for (w, q) in raw {
        match merged.last_mut() {
            Some((w0, q0)) if (w - *w0).abs() < MERGE_TOL => {
                let total = *q0 + q;
                if total.abs() > 1e-300 {
                    *w0 = (*w0 * *q0 + w * q) / total;
                }
                *q0 = total;
            }
            _ => merged.push((w, q)),
        }
    }
    merged.retain(|(_, q)| q.abs() > 1e-15);
    merged
}

fn cumulants_from_moments(m: &[f64]) -> Vec<f64> {
    let mut k = Vec::with_capacity(m.len());
    if !m.is_empty() {
        k.push(m[0]);
    }
    if m.len() >= 2 {
        k.push(m[1] - m[0] * m[0]);
    }
    if m.len() >= 3 {
        k.push(m[2] - 3.0 * m[1] * m[0] + 2.0 * m[0].powi(3));
    }
    if m.len() >= 4 {
        k.push(
            m[3] - 4.0 * m[2] * m[0] - 3.0 * m[1] * m[1] + 12.0 * m[1] * m[0] * m[0]
                - 6.0 * m[0].powi(4),
        );
    }
    k
}

/// Work operator W = H_i - V† H_f V. In the cyclic case H_i = H_f its trace
/// vanishes.
pub fn work_operator(
    h_i: &SystemObservable,
    h_f: &SystemObservable,
    v: &SystemUnitary,
) -> Result<SystemObservable> {
    if h_i.dim() != h_f.dim() || h_i.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_i.dim(),
            got: v.dim(),
        });
    }
    let rotated = v.matrix().adjoint() * h_f.matrix() * v.matrix();
    SystemObservable::new(h_i.matrix() - rotated)
}

/// Cyclic work operator W_S = H_S - V† H_S V.
pub fn work_operator_cyclic(h: &SystemObservable, v: &SystemUnitary) -> Result<SystemObservable> {
    work_operator(h, h, v)
}

/// Spectral work distribution P_W: atoms at the eigenvalues of W with
/// weights ⟨w_i|ρ|w_i⟩.
pub fn work_operator_distribution(
    w: &SystemObservable,
    rho: &SystemState,
) -> Result<WorkDistribution> {
    if w.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            got: rho.dim(),
        });
    }
    let (values, vectors) = hilbert::eigensystem(w);
    let atoms = values
        .iter()
        .enumerate()
        .map(|(k, &wk)| {
            let v = vectors.column(k);
            let p = (v.adjoint() * rho.matrix() * v)[(0, 0)].re;
            (wk, p)
        })
        .collect();
    WorkDistribution::from_atoms(DistributionKind::WorkOperator, atoms)
}

/// Two-point-measurement distribution for the cyclic protocol: measure H,
/// apply V, measure H again; atoms at w = ε_n - ε_m with joint probability
/// p_{m|n} p_n. Degenerate spectra are measured projectively per eigenspace.
pub fn tpm_distribution(
    h: &SystemObservable,
    v: &SystemUnitary,
    rho: &SystemState,
) -> Result<WorkDistribution> {
    if h.dim() != rho.dim() || h.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: v.dim(),
        });
    }
    let (values, vectors) = hilbert::eigensystem(h);
    let d = h.dim();
    let mut groups: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &e) in values.iter().enumerate() {
        match groups.last_mut() {
            Some((e0, idx)) if (e - *e0).abs() <= 1e-9 => idx.push(k),
            _ => groups.push((e, vec![k])),
        }
    }
    let projector = |idx: &[usize]| -> DMatrix<C64> {
        let mut p = DMatrix::<C64>::zeros(d, d);
        for &k in idx {
            let col = vectors.column(k);
            for i in 0..d {
                for j in 0..d {
                    p[(i, j)] += col[i] * col[j].conj();
                }
            }
        }
        p
    };
    let mut atoms = Vec::new();
    for (e_n, idx_n) in &groups {
        let p_n = projector(idx_n);
        let collapsed = &p_n * rho.matrix() * &p_n;
        let evolved = v.matrix() * collapsed * v.matrix().adjoint();
        for (e_m, idx_m) in &groups {
            let p_m = projector(idx_m);
            let joint = hilbert::trace_product(&p_m, &evolved).re;
            atoms.push((e_n - e_m, joint));
        }
    }
    WorkDistribution::from_atoms(DistributionKind::Tpm, atoms)
}

/// Quasi-distribution of the weight model in the constant-ξ regime
/// (semi-classical weight or incoherent inputs): atoms of
/// Tr[M_S(s) ξ_S] with M_S(s) = e^{iAs/2} e^{-iBs} e^{iAs/2}, A = H and
/// B = V†HV, at frequencies w = (a_j + a_l)/2 - b_k.
pub fn qp_weight_atoms(
    h: &SystemObservable,
    v: &SystemUnitary,
    xi: &SystemState,
) -> Result<WorkDistribution> {
    if h.dim() != xi.dim() || h.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            got: v.dim(),
        });
    }
    let d = h.dim();
    let (a_vals, a_vecs) = hilbert::eigensystem(h);
    let b = v.matrix().adjoint() * h.matrix() * v.matrix();
    let (b_vals, b_vecs) = hilbert::hermitian_eigensystem(&b);

    let overlap = a_vecs.adjoint() * &b_vecs;
    let xi_a = a_vecs.adjoint() * xi.matrix() * &a_vecs;

    let mut complex_atoms: Vec<(f64, C64)> = Vec::with_capacity(d * d * d);
    for j in 0..d {
        for l in 0..d {
            for k in 0..d {
                let w = 0.5 * (a_vals[j] + a_vals[l]) - b_vals[k];
                let q = overlap[(j, k)] * overlap[(l, k)].conj() * xi_a[(l, j)];
                complex_atoms.push((w, q));
            }
        }
    }
    // group frequency collisions before the realness check
    complex_atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut grouped: Vec<(f64, C64)> = Vec::new();
    for (w, q) in complex_atoms {
        match grouped.last_mut() {
            Some((w0, q0)) if (w - *w0).abs() < MERGE_TOL => *q0 += q,
            _ => grouped.push((w, q)),
        }
    }
    let residue = grouped.iter().map(|(_, q)| q.im.abs()).fold(0.0, f64::max);
    if residue > IMAG_TOL {
        return Err(Error::ImaginaryResidue { residue });
    }
    WorkDistribution::from_atoms(
        DistributionKind::Quasi,
        grouped.into_iter().map(|(w, q)| (w, q.re)).collect(),
    )
}

/// Characteristic function samples of a quasi-distribution, with masked
/// entries where the denominator degenerated.
#[derive(Debug, Clone)]
pub struct CharacteristicFunction {
    pub s_grid: Vec<f64>,
    pub values: Vec<C64>,
    pub masked: Vec<bool>,
}

impl CharacteristicFunction {
    pub fn masked_fraction(&self) -> f64 {
        self.masked.iter().filter(|&&m| m).count() as f64 / self.masked.len() as f64
    }

    pub fn at_zero(&self) -> C64 {
        let idx = self
            .s_grid
            .iter()
            .position(|&s| s.abs() < 1e-15)
            .expect("grid contains s = 0");
        self.values[idx]
    }
}

/// Default s-grid for cumulant extraction: ±8 steps of h = 1e-3.
pub fn default_s_grid() -> Vec<f64> {
    (-8..=8).map(|j| j as f64 * 1e-3).collect()
}

/// General convolution quasi-distribution of two one-point measurements:
/// the ratio characteristic function
///
/// ```text
/// ⟨e^{iws}⟩ = Tr[e^{iH_i s} ρ_i] / Tr[e^{iH_f s} ρ_f]
/// ```
///
/// sampled on `s_grid`. Samples with |denominator| below
/// [`DENOMINATOR_FLOOR`] are masked rather than regularized.
pub fn qp_general(
    h_i: &SystemObservable,
    h_f: &SystemObservable,
    rho_i: &SystemState,
    rho_f: &SystemState,
    s_grid: &[f64],
) -> Result<CharacteristicFunction> {
    if h_i.dim() != rho_i.dim() || h_f.dim() != rho_f.dim() {
        return Err(Error::DimensionMismatch {
            expected: h_i.dim(),
            got: rho_i.dim(),
        });
    }
    let init = spectral_probabilities(h_i, rho_i);
    let fin = spectral_probabilities(h_f, rho_f);
    let cf = |atoms: &[(f64, f64)], s: f64| -> C64 {
        atoms.iter().map(|(e, p)| C64::from_polar(*p, e * s)).sum()
    };
    let mut values = Vec::with_capacity(s_grid.len());
    let mut masked = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let den = cf(&fin, s);
        if den.norm() < DENOMINATOR_FLOOR {
            values.push(C64::new(0.0, 0.0));
            masked.push(true);
        } else {
            values.push(cf(&init, s) / den);
            masked.push(false);
        }
    }
    Ok(CharacteristicFunction {
        s_grid: s_grid.to_vec(),
        values,
        masked,
    })
}

fn spectral_probabilities(h: &SystemObservable, rho: &SystemState) -> Vec<(f64, f64)> {
    let (values, vectors) = hilbert::eigensystem(h);
    values
        .iter()
        .enumerate()
        .map(|(k, &e)| {
            let v = vectors.column(k);
            (e, (v.adjoint() * rho.matrix() * v)[(0, 0)].re)
        })
        .collect()
}

/// One-point energy distribution of (H, ρ): atoms at the eigenvalues with
/// spectral weights. The building block of the convolution definition.
pub fn energy_distribution(h: &SystemObservable, rho: &SystemState) -> Result<WorkDistribution> {
    WorkDistribution::from_atoms(DistributionKind::WorkOperator, spectral_probabilities(h, rho))
}

/// Inverse transform of a sampled characteristic function to a signed
/// density on `w_grid`: P(w) = (1/2π) Σ_j δs e^{-i w s_j} CF(s_j), skipping
/// masked samples. Meaningful only when the s-grid is wide enough to
/// resolve the atoms; the general ratio formula admits no finite atom
/// decomposition, so this is the honest sampled representation.
pub fn qp_density_from_cf(cf: &CharacteristicFunction, w_grid: Vec<f64>) -> WorkDistribution {
    let n = cf.s_grid.len();
    let ds = if n > 1 { cf.s_grid[1] - cf.s_grid[0] } else { 1.0 };
    let values: Vec<f64> = w_grid
        .iter()
        .map(|&w| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                if cf.masked[j] {
                    continue;
                }
                acc += cf.values[j] * C64::from_polar(ds, -w * cf.s_grid[j]);
            }
            acc.re / (2.0 * std::f64::consts::PI)
        })
        .collect();
    WorkDistribution::sampled(DistributionKind::Quasi, w_grid, values)
}

/// Cumulants with per-order stability diagnostics.
#[derive(Debug, Clone)]
pub struct CumulantEstimate {
    pub values: Vec<f64>,
    /// True where the raw finite difference and its Richardson refinement
    /// disagree by more than 1e-4 relative.
    pub unstable: Vec<bool>,
}

/// Cumulants of a sampled characteristic function via log-derivatives at
/// s = 0: central finite differences on the native grid step with one
/// Richardson refinement. The complex logarithm is phase-unwrapped from
/// s = 0 outward.
pub fn cumulants_from_cf(cf: &CharacteristicFunction, order: usize) -> Result<CumulantEstimate> {
    let order = order.min(4);
    let n = cf.s_grid.len();
    let zero = cf
        .s_grid
        .iter()
        .position(|&s| s.abs() < 1e-15)
        .ok_or_else(|| Error::Domain {
            what: "s-grid must contain 0".into(),
        })?;
    if zero + 1 >= n {
        return Err(Error::Domain {
            what: "s-grid too short".into(),
        });
    }
    let h = cf.s_grid[zero + 1] - cf.s_grid[zero];
    let need = 4;
    if zero < need || zero + need >= n {
        return Err(Error::Domain {
            what: format!("s-grid must cover ±{need} steps around 0"),
        });
    }
    if cf.masked[zero - need..=zero + need].iter().any(|&m| m) {
        return Err(Error::DegenerateDenominator {
            masked: cf.masked.iter().filter(|&&m| m).count(),
            total: n,
            floor: DENOMINATOR_FLOOR,
        });
    }

    // unwrapped log along the grid, outward from s = 0
    let mut log_vals = vec![C64::new(0.0, 0.0); n];
    let mut phase = cf.values[zero].arg();
    log_vals[zero] = C64::new(cf.values[zero].norm().ln(), phase);
    let mut prev = phase;
    for j in zero + 1..n {
        phase = unwrap_phase(prev, cf.values[j].arg());
        log_vals[j] = C64::new(cf.values[j].norm().ln(), phase);
        prev = phase;
    }
    prev = cf.values[zero].arg();
    for j in (0..zero).rev() {
        phase = unwrap_phase(prev, cf.values[j].arg());
        log_vals[j] = C64::new(cf.values[j].norm().ln(), phase);
        prev = phase;
    }

    let l = |offset: i64| log_vals[(zero as i64 + offset) as usize];
    let derivative = |order: usize, step: i64| -> C64 {
        let hh = h * step as f64;
        match order {
            1 => (l(step) - l(-step)) / C64::new(2.0 * hh, 0.0),
            2 => (l(step) - l(0) * 2.0 + l(-step)) / C64::new(hh * hh, 0.0),
            3 => {
                (l(2 * step) - l(step) * 2.0 + l(-step) * 2.0 - l(-2 * step))
                    / C64::new(2.0 * hh * hh * hh, 0.0)
            }
            4 => {
                (l(2 * step) - l(step) * 4.0 + l(0) * 6.0 - l(-step) * 4.0 + l(-2 * step))
                    / C64::new(hh * hh * hh * hh, 0.0)
            }
            _ => unreachable!(),
        }
    };

    let mut values = Vec::with_capacity(order);
    let mut unstable = Vec::with_capacity(order);
    for k in 1..=order {
        let d_h = derivative(k, 1);
        let d_2h = derivative(k, 2);
        let refined = (d_h * 4.0 - d_2h) / C64::new(3.0, 0.0);
        // κ_n = (-i)^n L^(n)(0)
        let rot = C64::new(0.0, -1.0).powu(k as u32);
        let kappa = (rot * refined).re;
        let raw = (rot * d_h).re;
        let scale = kappa.abs().max(1.0);
        values.push(kappa);
        unstable.push((raw - kappa).abs() / scale > 1e-4);
    }
    Ok(CumulantEstimate { values, unstable })
}

fn unwrap_phase(prev: f64, raw: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = raw;
    while p - prev > std::f64::consts::PI {
        p -= two_pi;
    }
    while prev - p > std::f64::consts::PI {
        p += two_pi;
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::dephase;
    use crate::sampling;
    use approx::assert_abs_diff_eq;

    fn qubit_h() -> SystemObservable {
        SystemObservable::qubit_hamiltonian()
    }

    #[test]
    fn work_operator_of_sigma_x_is_minus_sigma_z() {
        let w = work_operator_cyclic(&qubit_h(), &SystemUnitary::sigma_x()).unwrap();
        assert_abs_diff_eq!(w.matrix()[(0, 0)].re, -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.matrix()[(1, 1)].re, 1.0, epsilon = 1e-14);
        assert!(w.matrix()[(0, 1)].norm() < 1e-14);

        let id = work_operator_cyclic(&qubit_h(), &SystemUnitary::identity(2)).unwrap();
        assert!(id.matrix().iter().all(|z| z.norm() < 1e-14));
    }

    #[test]
    fn cyclic_work_operator_is_traceless() {
        let mut rng = sampling::rng_from_seed(7);
        let h = SystemObservable::diagonal(&[0.0, 1.0, 2.0]);
        for _ in 0..10 {
            let v = sampling::haar_unitary(3, &mut rng);
            let w = work_operator_cyclic(&h, &v).unwrap();
            assert!(w.matrix().trace().norm() < 1e-12);
        }
    }

    #[test]
    fn work_operator_distribution_examples() {
        let w = work_operator_cyclic(&qubit_h(), &SystemUnitary::sigma_x()).unwrap();
        let d = work_operator_distribution(&w, &SystemState::plus()).unwrap();
        let atoms = d.atoms().unwrap();
        assert_eq!(atoms.len(), 2);
        assert_abs_diff_eq!(atoms[0].0, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(atoms[0].1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(atoms[1].1, 0.5, epsilon = 1e-12);

        let excited = SystemState::pure(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let d2 = work_operator_distribution(&w, &excited).unwrap();
        let atoms2 = d2.atoms().unwrap();
        assert_eq!(atoms2.len(), 1);
        assert_abs_diff_eq!(atoms2[0].0, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(atoms2[0].1, 1.0, epsilon = 1e-12);

        let z = SystemObservable::diagonal(&[0.0, 0.0]);
        let d3 = work_operator_distribution(&z, &SystemState::plus()).unwrap();
        let a3 = d3.atoms().unwrap();
        assert_eq!(a3.len(), 1);
        assert_abs_diff_eq!(a3[0].0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a3[0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tpm_examples() {
        let excited = SystemState::pure(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let d = tpm_distribution(&qubit_h(), &SystemUnitary::sigma_x(), &excited).unwrap();
        assert_eq!(d.atoms().unwrap().len(), 1);
        assert_abs_diff_eq!(d.atoms().unwrap()[0].0, 1.0, epsilon = 1e-12);

        let id = tpm_distribution(&qubit_h(), &SystemUnitary::identity(2), &excited).unwrap();
        let ia = id.atoms().unwrap();
        assert_eq!(ia.len(), 1);
        assert_abs_diff_eq!(ia[0].1, 1.0, epsilon = 1e-12);

        // measurement invasiveness: |+⟩ and its dephased version coincide
        let plus = SystemState::plus();
        let a = tpm_distribution(&qubit_h(), &SystemUnitary::sigma_x(), &plus).unwrap();
        let deph = dephase(&plus, &qubit_h()).unwrap();
        let b = tpm_distribution(&qubit_h(), &SystemUnitary::sigma_x(), &deph).unwrap();
        assert!(a.total_variation(&b).unwrap() < 1e-12);
        let atoms = a.atoms().unwrap();
        assert_abs_diff_eq!(atoms[0].1, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(atoms[1].1, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn tpm_first_moment_is_dephased_work_average() {
        let h = qubit_h();
        let v = SystemUnitary::rotation_y(std::f64::consts::FRAC_PI_2);
        let rho = SystemState::plus();
        let w = work_operator_cyclic(&h, &v).unwrap();
        let tpm = tpm_distribution(&h, &v, &rho).unwrap();
        let deph = dephase(&rho, &h).unwrap();
        assert_abs_diff_eq!(tpm.mean(), w.expectation(&deph), epsilon = 1e-10);
        // witnesses ⟨w⟩_TPM ≠ ⟨w⟩_W for coherent input
        assert!((tpm.mean() - w.expectation(&rho)).abs() > 1e-3);
    }

    #[test]
    fn qp_atoms_match_tpm_for_dephased_states() {
        let mut rng = sampling::rng_from_seed(11);
        for dim in [2usize, 3] {
            let h = if dim == 2 {
                qubit_h()
            } else {
                SystemObservable::diagonal(&[0.0, 1.0, 2.0])
            };
            for _ in 0..10 {
                let v = sampling::haar_unitary(dim, &mut rng);
                let rho = sampling::random_density(dim, &mut rng);
                let deph = dephase(&rho, &h).unwrap();
                let qp = qp_weight_atoms(&h, &v, &deph).unwrap();
                let tpm = tpm_distribution(&h, &v, &deph).unwrap();
                let tv = qp.total_variation(&tpm).unwrap();
                assert!(tv < 1e-8, "TV {tv} for dim {dim}");
            }
        }
    }

    #[test]
    fn qp_atoms_match_work_operator_for_incoherent_operators() {
        // incoherent work operator: V permutes energy levels
        let h = qubit_h();
        let v = SystemUnitary::sigma_x();
        let mut rng = sampling::rng_from_seed(13);
        for _ in 0..10 {
            let rho = sampling::random_density(2, &mut rng);
            let deph = dephase(&rho, &h).unwrap();
            let qp = qp_weight_atoms(&h, &v, &deph).unwrap();
            let w = work_operator_cyclic(&h, &v).unwrap();
            let pw = work_operator_distribution(&w, &deph).unwrap();
            let tpm = tpm_distribution(&h, &v, &deph).unwrap();
            assert!(qp.total_variation(&pw).unwrap() < 1e-8);
            assert!(qp.total_variation(&tpm).unwrap() < 1e-8);
        }
    }

    #[test]
    fn qp_identity_is_delta() {
        let qp = qp_weight_atoms(&qubit_h(), &SystemUnitary::identity(2), &SystemState::plus())
            .unwrap();
        let atoms = qp.atoms().unwrap();
        assert_eq!(atoms.len(), 1);
        assert_abs_diff_eq!(atoms[0].0, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(atoms[0].1, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn qp_moments_match_closed_forms() {
        // coherent case: first two moments equal Tr[Wξ] and Tr[W²ξ]
        let h = qubit_h();
        let v = SystemUnitary::rotation_y(std::f64::consts::FRAC_PI_2);
        let xi = SystemState::from_bloch(0.4, 0.1, -0.3).unwrap();
        let qp = qp_weight_atoms(&h, &v, &xi).unwrap();
        let w = work_operator_cyclic(&h, &v).unwrap();
        let w2 = SystemObservable::new(w.matrix() * w.matrix()).unwrap();
        assert_abs_diff_eq!(qp.moment(1), w.expectation(&xi), epsilon = 1e-10);
        assert_abs_diff_eq!(qp.moment(2), w2.expectation(&xi), epsilon = 1e-10);
    }

    #[test]
    fn atom_cumulants() {
        let d = WorkDistribution::from_atoms(
            DistributionKind::Quasi,
            vec![(-1.0, 0.5), (1.0, 0.5)],
        )
        .unwrap();
        let k = d.cumulants(4);
        assert_abs_diff_eq!(k[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(k[1], 1.0, epsilon = 1e-14);

        let delta =
            WorkDistribution::from_atoms(DistributionKind::Quasi, vec![(0.0, 1.0)]).unwrap();
        assert!(delta.cumulants(4).iter().all(|&x| x.abs() < 1e-14));
    }

    #[test]
    fn qp_general_trivial_and_eigenstate_cases() {
        let h = qubit_h();
        let rho = SystemState::from_bloch(0.3, 0.2, 0.1).unwrap();
        let cf = qp_general(&h, &h, &rho, &rho, &default_s_grid()).unwrap();
        assert!(cf
            .values
            .iter()
            .all(|v| (v - C64::new(1.0, 0.0)).norm() < 1e-12));

        // excited eigenstate flipped down: the ratio CF is e^{is}, matching
        // the single TPM atom at +1
        let excited = SystemState::pure(&[C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        let ground = SystemState::pure(&[C64::new(1.0, 0.0), C64::new(0.0, 0.0)]).unwrap();
        let cf2 = qp_general(&h, &h, &excited, &ground, &default_s_grid()).unwrap();
        let tpm = tpm_distribution(&h, &SystemUnitary::sigma_x(), &excited).unwrap();
        for (j, &s) in cf2.s_grid.iter().enumerate() {
            assert!((cf2.values[j] - tpm.characteristic(s)).norm() < 1e-12);
        }
    }

    #[test]
    fn qp_general_first_cumulant_is_work_average() {
        let mut rng = sampling::rng_from_seed(17);
        let h = qubit_h();
        for _ in 0..5 {
            let v = sampling::haar_unitary(2, &mut rng);
            let rho = sampling::random_density(2, &mut rng);
            let rho_f =
                SystemState::new(v.matrix() * rho.matrix() * v.matrix().adjoint()).unwrap();
            let cf = qp_general(&h, &h, &rho, &rho_f, &default_s_grid()).unwrap();
            let est = cumulants_from_cf(&cf, 2).unwrap();
            let w = work_operator_cyclic(&h, &v).unwrap();
            assert_abs_diff_eq!(est.values[0], w.expectation(&rho), epsilon = 1e-8);
        }
    }

    #[test]
    fn cumulant_difference_identity() {
        let mut rng = sampling::rng_from_seed(19);
        for dim in [2usize, 3] {
            let h_i = sampling::random_hermitian(dim, &mut rng);
            let h_f = sampling::random_hermitian(dim, &mut rng);
            for _ in 0..5 {
                let v = sampling::haar_unitary(dim, &mut rng);
                let rho_i = sampling::random_density(dim, &mut rng);
                let rho_f =
                    SystemState::new(v.matrix() * rho_i.matrix() * v.matrix().adjoint()).unwrap();
                let cf = qp_general(&h_i, &h_f, &rho_i, &rho_f, &default_s_grid()).unwrap();
                let est = cumulants_from_cf(&cf, 2).unwrap();
                let ki = energy_distribution(&h_i, &rho_i).unwrap().cumulants(2);
                let kf = energy_distribution(&h_f, &rho_f).unwrap().cumulants(2);
                assert_abs_diff_eq!(est.values[0], ki[0] - kf[0], epsilon = 1e-6);
                assert_abs_diff_eq!(est.values[1], ki[1] - kf[1], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_denominator_is_masked() {
        // maximally mixed on a symmetric spectrum: CF_f(s) = cos(s) vanishes
        // at s = π/2
        let h = SystemObservable::diagonal(&[-1.0, 1.0]);
        let rho = SystemState::maximally_mixed(2);
        let sgrid: Vec<f64> = vec![0.0, std::f64::consts::FRAC_PI_2];
        let cf = qp_general(&h, &h, &rho, &rho, &sgrid).unwrap();
        assert!(!cf.masked[0]);
        assert!(cf.masked[1]);
        assert!(cf.masked_fraction() > 0.4);
    }

    #[test]
    fn qp_density_recovers_trivial_delta() {
        // identical initial and final statistics: P_QP is a delta at 0,
        // resolved as a sinc kernel integrating to one
        let h = qubit_h();
        let rho = SystemState::from_bloch(0.2, 0.1, 0.3).unwrap();
        let s_grid: Vec<f64> = (-400..=400).map(|j| j as f64 * 0.02).collect();
        let cf = qp_general(&h, &h, &rho, &rho, &s_grid).unwrap();
        let w_grid: Vec<f64> = (-300..=300).map(|j| j as f64 * 0.01).collect();
        let dist = qp_density_from_cf(&cf, w_grid);
        assert_abs_diff_eq!(dist.moment(0), 1.0, epsilon = 2e-2);
        assert_abs_diff_eq!(dist.mean(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn json_shape() {
        let d = WorkDistribution::from_atoms(
            DistributionKind::Tpm,
            vec![(0.0, 0.25), (1.0, 0.75)],
        )
        .unwrap();
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains("\"kind\":\"tpm\""));
        assert!(s.contains("atoms"));
        let back: WorkDistribution = serde_json::from_str(&s).unwrap();
        assert!(d.total_variation(&back).unwrap() < 1e-15);
    }
}
