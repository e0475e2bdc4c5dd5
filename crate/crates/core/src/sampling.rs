//! Seeded random inputs for Monte-Carlo verification: Haar unitaries,
//! random density matrices and Hermitian observables.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::hilbert::{SystemObservable, SystemState, SystemUnitary};

/// The RNG used for all seeded sampling.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

fn ginibre(dim: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
/// of diag(R) divided out.
pub fn haar_unitary(dim: usize, rng: &mut impl Rng) -> SystemUnitary {
    let qr = ginibre(dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..dim {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, k)] *= phase;
        }
    }
    SystemUnitary::new(q).expect("QR produces a unitary")
}

/// Random density matrix ρ = G G† / Tr[G G†] with Ginibre G.
pub fn random_density(dim: usize, rng: &mut impl Rng) -> SystemState {
    let g = ginibre(dim, rng);
    let m = &g * g.adjoint();
    let trace = m.trace().re;
    SystemState::new(m.unscale(trace)).expect("Wishart matrices are valid states")
}

/// Random pure state |ψ⟩⟨ψ| with Haar-distributed |ψ⟩.
pub fn random_pure(dim: usize, rng: &mut impl Rng) -> SystemState {
    let amps: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    SystemState::pure(&amps).expect("nonzero Gaussian vector")
}

/// Random Hermitian observable with entries of order one.
pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> SystemObservable {
    let g = ginibre(dim, rng);
    SystemObservable::new((&g + g.adjoint()).scale(0.5)).expect("symmetrized")
}

/// Random incoherent (diagonal) density matrix.
pub fn random_diagonal_state(dim: usize, rng: &mut impl Rng) -> SystemState {
    let mut ps: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.01..1.0)).collect();
    let total: f64 = ps.iter().sum();
    for p in &mut ps {
        *p /= total;
    }
    let m = DMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            C64::new(ps[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    SystemState::new(m).expect("diagonal probabilities")
}
