//! Finite-dimensional complex linear algebra for the system side: states,
//! observables, unitaries, dephasing and spectra.
//!
//! All values are immutable after construction and all operations are pure,
//! so everything here is safe to share across threads.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Construction symmetrizes Hermitian inputs when the deviation is below
/// this; beyond it the input is rejected.
pub const HERMITIZE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of a density matrix.
pub const PSD_TOL: f64 = -1e-10;
/// Trace-one tolerance for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Unitarity tolerance, max |U†U - 1|.
pub const UNITARY_TOL: f64 = 1e-10;
/// Eigenvalues closer than this are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Max elementwise deviation from Hermiticity.
fn hermiticity_deviation(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

fn symmetrize(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

fn check_square(m: &DMatrix<C64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// A Hermitian operator on the system, in energy units of the reference
/// gap ω = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemObservable {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl SystemObservable {
    /// Builds an observable, symmetrizing inputs Hermitian to within
    /// [`HERMITIZE_TOL`] and rejecting anything worse.
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = check_square(&matrix)?;
        let dev = hermiticity_deviation(&matrix);
        if dev > HERMITIZE_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(Self {
            dim,
            matrix: symmetrize(&matrix),
        })
    }

    /// Diagonal Hamiltonian with the given level energies.
    pub fn diagonal(energies: &[f64]) -> Self {
        let dim = energies.len();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                C64::new(energies[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self { dim, matrix }
    }

    /// The qubit Hamiltonian diag(0, ω) with ω = 1.
    pub fn qubit_hamiltonian() -> Self {
        Self::diagonal(&[0.0, 1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// `Tr[A ρ]`, real part (exact for Hermitian A and ρ).
    pub fn expectation(&self, state: &SystemState) -> f64 {
        trace_product(&self.matrix, state.matrix()).re
    }

    /// True iff `‖[A, H]‖_max ≤ tol`.
    pub fn is_incoherent(&self, hamiltonian: &SystemObservable, tol: f64) -> bool {
        commutator_max_norm(&self.matrix, &hamiltonian.matrix) <= tol
    }
}

/// A density matrix of the system: Hermitian, positive semidefinite, unit
/// trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl SystemState {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = check_square(&matrix)?;
        let dev = hermiticity_deviation(&matrix);
        if dev > HERMITIZE_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        let matrix = symmetrize(&matrix);
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::TraceNotOne { trace });
        }
        let eig = SymmetricEigen::new(matrix.clone());
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < PSD_TOL {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min,
            });
        }
        Ok(Self { dim, matrix })
    }

    /// Pure state |ψ⟩⟨ψ| from an unnormalized amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> Result<Self> {
        let v = DVector::from_column_slice(amplitudes);
        let norm = v.norm();
        if norm == 0.0 {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        let v = v.unscale(norm);
        let dim = v.len();
        let matrix = DMatrix::from_fn(dim, dim, |i, j| v[i] * v[j].conj());
        Ok(Self { dim, matrix })
    }

    /// Qubit state from a Bloch vector, basis {|0⟩ ground, |1⟩ excited},
    /// with z = +1 on the ground state.
    pub fn from_bloch(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if r > 1.0 + 1e-10 {
            return Err(Error::Domain {
                what: format!("Bloch vector length {r} exceeds 1"),
            });
        }
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::new((1.0 + z) / 2.0, 0.0),
                C64::new(x / 2.0, -y / 2.0),
                C64::new(x / 2.0, y / 2.0),
                C64::new((1.0 - z) / 2.0, 0.0),
            ],
        );
        Self::new(m)
    }

    /// The coherent |+⟩ = (|0⟩ + |1⟩)/√2 state.
    pub fn plus() -> Self {
        Self::pure(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).expect("valid")
    }

    /// Maximally mixed state 1/d.
    pub fn maximally_mixed(dim: usize) -> Self {
        let matrix = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                C64::new(1.0 / dim as f64, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Self { dim, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Bloch vector (x, y, z) of a qubit state.
    pub fn bloch(&self) -> (f64, f64, f64) {
        assert_eq!(self.dim, 2, "Bloch vector is defined for qubits");
        let x = 2.0 * self.matrix[(1, 0)].re;
        let y = 2.0 * self.matrix[(1, 0)].im;
        let z = (self.matrix[(0, 0)] - self.matrix[(1, 1)]).re;
        (x, y, z)
    }

    /// Spectral decomposition into pure branches with weights above `floor`,
    /// eigenvalues descending. Weights are renormalized to sum to one and the
    /// truncated mass is returned alongside.
    pub fn spectral_branches(&self, floor: f64) -> (Vec<(f64, DVector<C64>)>, f64) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut idx: Vec<usize> = (0..self.dim).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut branches = Vec::new();
        let mut kept = 0.0;
        for &k in &idx {
            let lam = eig.eigenvalues[k];
            if lam > floor {
                branches.push((lam, eig.eigenvectors.column(k).into_owned()));
                kept += lam;
            }
        }
        let truncated = 1.0 - kept;
        for (w, _) in &mut branches {
            *w /= kept;
        }
        (branches, truncated)
    }

    /// Purity Tr[ρ²].
    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }

    pub fn is_incoherent(&self, hamiltonian: &SystemObservable, tol: f64) -> bool {
        commutator_max_norm(&self.matrix, &hamiltonian.matrix) <= tol
    }
}

/// A unitary acting solely on the system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemUnitary {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl SystemUnitary {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        let dim = check_square(&matrix)?;
        let gram = matrix.adjoint() * &matrix;
        let mut dev: f64 = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                dev = dev.max((gram[(i, j)] - target).norm());
            }
        }
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary { deviation: dev });
        }
        Ok(Self { dim, matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    /// The qubit bit flip σ_x.
    pub fn sigma_x() -> Self {
        Self {
            dim: 2,
            matrix: DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(0.0, 0.0),
                    C64::new(1.0, 0.0),
                    C64::new(1.0, 0.0),
                    C64::new(0.0, 0.0),
                ],
            ),
        }
    }

    /// Rotation about the y axis by `theta`: exp(-i θ σ_y / 2).
    pub fn rotation_y(theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        Self {
            dim: 2,
            matrix: DMatrix::from_row_slice(
                2,
                2,
                &[
                    C64::new(c, 0.0),
                    C64::new(-s, 0.0),
                    C64::new(s, 0.0),
                    C64::new(c, 0.0),
                ],
            ),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            dim: self.dim,
            matrix: self.matrix.adjoint(),
        }
    }
}

/// Tr[A B].
pub fn trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 {
    let n = a.nrows();
    let mut t = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            t += a[(i, k)] * b[(k, i)];
        }
    }
    t
}

/// Max elementwise norm of [A, B].
pub fn commutator_max_norm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let c = a * b - b * a;
    c.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral decomposition of a Hermitian observable: eigenvalues ascending,
/// matching orthonormal eigenvectors as matrix columns.
///
/// The reconstruction `V Λ V†` agrees with the input to better than 1e-10.
pub fn eigensystem(a: &SystemObservable) -> (Vec<f64>, DMatrix<C64>) {
    hermitian_eigensystem(a.matrix())
}

/// Eigensystem of a raw Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigensystem(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = idx.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (col, &k) in idx.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

/// Projects a state onto the eigenbasis blocks of the Hamiltonian: matrix
/// elements between distinct eigenvalues are zeroed, blocks within a
/// degenerate eigenspace are kept.
///
/// For nondegenerate spectra this keeps exactly the diagonal in the energy
/// eigenbasis; it is idempotent and preserves `Tr[H ρ]`.
pub fn dephase(state: &SystemState, hamiltonian: &SystemObservable) -> Result<SystemState> {
    if state.dim() != hamiltonian.dim() {
        return Err(Error::DimensionMismatch {
            expected: hamiltonian.dim(),
            got: state.dim(),
        });
    }
    let (values, vectors) = eigensystem(hamiltonian);
    let rho_eig = vectors.adjoint() * state.matrix() * &vectors;
    let n = state.dim();
    let pinched = DMatrix::from_fn(n, n, |i, j| {
        if (values[i] - values[j]).abs() <= DEGENERACY_TOL {
            rho_eig[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let back = &vectors * pinched * vectors.adjoint();
    SystemState::new(back)
}

/// True iff `‖[A, H]‖_max ≤ tol` for a raw Hermitian matrix A.
pub fn is_incoherent(a: &DMatrix<C64>, h: &SystemObservable, tol: f64) -> bool {
    commutator_max_norm(a, h.matrix()) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn observable_rejects_non_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            SystemObservable::new(m),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn observable_symmetrizes_tiny_asymmetry() {
        let m = DMatrix::from_row_slice(
            2,
            2,
            &[c(0.0, 0.0), c(1.0, 1e-12), c(1.0, -2e-12), c(0.0, 0.0)],
        );
        let a = SystemObservable::new(m).unwrap();
        assert!(hermiticity_deviation(a.matrix()) < 1e-15);
    }

    #[test]
    fn eigensystem_sigma_z_is_minus_one_plus_one() {
        let sz = SystemObservable::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)],
        ))
        .unwrap();
        let (vals, _) = eigensystem(&sz);
        assert_abs_diff_eq!(vals[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigensystem_qubit_hamiltonian() {
        let h = SystemObservable::qubit_hamiltonian();
        let (vals, _) = eigensystem(&h);
        assert_abs_diff_eq!(vals[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn eigensystem_reconstructs_random_hermitian() {
        let mut m = DMatrix::<C64>::zeros(4, 4);
        let mut seed = 1.0_f64;
        for i in 0..4 {
            for j in i..4 {
                seed = (seed * 997.0 + 13.0) % 101.0;
                let re = seed / 101.0 - 0.5;
                seed = (seed * 997.0 + 13.0) % 101.0;
                let im = if i == j { 0.0 } else { seed / 101.0 - 0.5 };
                m[(i, j)] = c(re, im);
                m[(j, i)] = c(re, -im);
            }
        }
        let a = SystemObservable::new(m.clone()).unwrap();
        let (vals, vecs) = eigensystem(&a);
        let mut rec = DMatrix::<C64>::zeros(4, 4);
        for k in 0..4 {
            let v = vecs.column(k);
            for i in 0..4 {
                for j in 0..4 {
                    rec[(i, j)] += v[i] * v[j].conj() * c(vals[k], 0.0);
                }
            }
        }
        let err = (&m - &rec).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "reconstruction error {err}");
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dephase_keeps_incoherent_state() {
        let rho = SystemState::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(0.3, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.7, 0.0)],
        ))
        .unwrap();
        let h = SystemObservable::qubit_hamiltonian();
        let d = dephase(&rho, &h).unwrap();
        let err = (d.matrix() - rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn dephase_plus_state_gives_maximally_mixed() {
        let rho = SystemState::plus();
        let h = SystemObservable::qubit_hamiltonian();
        let d = dephase(&rho, &h).unwrap();
        assert_abs_diff_eq!(d.matrix()[(0, 0)].re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.matrix()[(0, 1)].norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn dephase_matches_elementwise_construction() {
        // Random 3x3 state with a nondegenerate diagonal H: off-diagonals go,
        // the diagonal stays.
        let h = SystemObservable::diagonal(&[0.0, 1.0, 2.5]);
        let v = [c(0.6, 0.1), c(0.3, -0.4), c(0.5, 0.2)];
        let rho = SystemState::pure(&v).unwrap();
        let d = dephase(&rho, &h).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    assert_abs_diff_eq!(
                        d.matrix()[(i, j)].re,
                        rho.matrix()[(i, j)].re,
                        epsilon = 1e-12
                    );
                } else {
                    assert!(d.matrix()[(i, j)].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn dephase_is_idempotent_and_energy_conserving() {
        let h = SystemObservable::diagonal(&[0.0, 1.0, 1.75]);
        let rho = SystemState::pure(&[c(0.2, 0.3), c(0.7, -0.1), c(0.4, 0.4)]).unwrap();
        let d1 = dephase(&rho, &h).unwrap();
        let d2 = dephase(&d1, &h).unwrap();
        let err = (d1.matrix() - d2.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert_abs_diff_eq!(h.expectation(&rho), h.expectation(&d1), epsilon = 1e-10);
        assert!(commutator_max_norm(d1.matrix(), h.matrix()) < 1e-10);
    }

    #[test]
    fn dephase_degenerate_keeps_intra_block()
    {
        let h = SystemObservable::diagonal(&[0.0, 0.0, 1.0]);
        let rho = SystemState::pure(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let d = dephase(&rho, &h).unwrap();
        // block {0,1} preserved, cross terms to level 2 removed
        assert_abs_diff_eq!(d.matrix()[(0, 1)].re, 1.0 / 3.0, epsilon = 1e-12);
        assert!(d.matrix()[(0, 2)].norm() < 1e-12);
    }

    #[test]
    fn incoherence_checks() {
        let h = SystemObservable::qubit_hamiltonian();
        let minus_sz = SystemObservable::new(DMatrix::from_row_slice(
            2,
            2,
            &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        ))
        .unwrap();
        assert!(minus_sz.is_incoherent(&h, 1e-12));
        let id = SystemObservable::diagonal(&[1.0, 1.0]);
        assert!(id.is_incoherent(&h, 1e-12));

        // work operator of a Hadamard-like rotation is coherent
        let v = SystemUnitary::rotation_y(std::f64::consts::FRAC_PI_2);
        let hp = v.matrix().adjoint() * h.matrix() * v.matrix();
        let w = SystemObservable::new(h.matrix() - hp).unwrap();
        assert!(!w.is_incoherent(&h, 1e-8));
    }

    #[test]
    fn bloch_round_trip() {
        let rho = SystemState::from_bloch(0.3, -0.2, 0.4).unwrap();
        let (x, y, z) = rho.bloch();
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-14);
        assert_abs_diff_eq!(y, -0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(z, 0.4, epsilon = 1e-14);
    }
}
