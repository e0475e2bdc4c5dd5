//! Discretized continuous-variable weight: energy-grid states, energy/time
//! marginals, Wigner function, Gaussian and cat constructors, dispersion
//! statistics.
//!
//! The weight Hamiltonian is position-like, `H_W = E`, sampled on a uniform
//! grid of `n` points with spacing `δE`. The conjugate time grid has spacing
//! `δt = 2π/(n δE)` and the two are connected by the centered DFT
//!
//! ```text
//! ψ̃(t_j) = (δE/√2π) Σ_k ψ(E_k) e^{-i E_k t_j},   t_j = j δt, j ∈ {-n/2..n/2-1},
//! ```
//!
//! for which discrete Parseval holds exactly: grid states are normalized in
//! both domains simultaneously and the Fourier round trip is lossless.
//!
//! System energies coupled to this grid must be integer multiples of `δE`
//! so that the shift operator of the work-extraction protocol is an exact
//! circular index shift. A guard band of width 2 (in units of the reference
//! gap) near both grid edges must stay empty; constructors enforce this so
//! that later shifts cannot silently wrap probability mass around the grid.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the guard band at each grid edge, in energy units.
pub const GUARD_BAND: f64 = 2.0;
/// Maximum probability mass tolerated inside a guard band.
pub const GUARD_MASS_TOL: f64 = 1e-12;
/// Normalization tolerance for weight states.
pub const NORM_TOL: f64 = 1e-10;
/// Commensurability tolerance: |ε - m δE| must not exceed this.
pub const COMMENSURABILITY_TOL: f64 = 1e-9;

/// Uniform energy grid with `n` points spaced by `spacing`, starting at
/// `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    n: usize,
    spacing: f64,
    origin: f64,
}

impl EnergyGrid {
    pub fn new(n: usize, spacing: f64, origin: f64) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::GridSizeNotPowerOfTwo { n });
        }
        if spacing <= 0.0 {
            return Err(Error::InvalidGridSpacing { spacing });
        }
        Ok(Self { n, spacing, origin })
    }

    /// The default working grid: 1024 points, δE = 1/32, centered so the
    /// grid spans [-16, 16). The qubit gap ω = 1 is then an exact multiple
    /// of δE and the usable window leaves room for cat peaks at ±3.
    pub fn default_grid() -> Self {
        let n = 1024;
        let spacing = 1.0 / 32.0;
        Self {
            n,
            spacing,
            origin: -(n as f64) * spacing / 2.0,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Returns a copy with the origin shifted by `delta`. Amplitudes are
    /// untouched; only the energy labels move.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            n: self.n,
            spacing: self.spacing,
            origin: self.origin + delta,
        }
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.origin + k as f64 * self.spacing
    }

    pub fn energies(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.energy(k)).collect()
    }

    /// Conjugate time-grid spacing δt = 2π/(n δE).
    pub fn time_spacing(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.n as f64 * self.spacing)
    }

    /// Centered time sample t_j = (j - n/2) δt for storage index j.
    pub fn time(&self, j: usize) -> f64 {
        (j as f64 - self.n as f64 / 2.0) * self.time_spacing()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.time(j)).collect()
    }

    /// Nyquist frequency of the time grid, π/δt = n δE / 2. The dephasing
    /// factor computed from grid samples is periodic beyond it.
    pub fn nyquist_frequency(&self) -> f64 {
        std::f64::consts::PI / self.time_spacing()
    }

    /// Checks that `energy` is an integer multiple of the spacing and
    /// returns the signed bin count.
    pub fn commensurate_shift(&self, energy: f64) -> Result<i64> {
        let m = (energy / self.spacing).round();
        if (energy - m * self.spacing).abs() > COMMENSURABILITY_TOL {
            return Err(Error::Commensurability {
                energy,
                spacing: self.spacing,
            });
        }
        Ok(m as i64)
    }

    /// Half-width of the window usable by wave packets: grid half-width
    /// minus the guard band.
    pub fn usable_half_width(&self) -> f64 {
        self.n as f64 * self.spacing / 2.0 - GUARD_BAND
    }

    fn check_same(&self, other: &EnergyGrid) -> Result<()> {
        if self.n != other.n
            || (self.spacing - other.spacing).abs() > 1e-15
            || (self.origin - other.origin).abs() > 1e-12
        {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        Ok(())
    }
}

/// A pure weight wavefunction ψ(E_k) on an energy grid, normalized so that
/// Σ |ψ|² δE = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightWavefunction {
    grid: EnergyGrid,
    amplitudes: Vec<C64>,
}

impl WeightWavefunction {
    /// Validates normalization and the edge guard band.
    pub fn new(grid: EnergyGrid, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                got: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.spacing();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm });
        }
        let wf = Self { grid, amplitudes };
        wf.check_guard_band()?;
        Ok(wf)
    }

    /// Rescales arbitrary amplitudes to unit norm, then validates.
    pub fn normalized(grid: EnergyGrid, amplitudes: Vec<C64>) -> Result<Self> {
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * grid.spacing();
        if norm <= 0.0 {
            return Err(Error::NotNormalized { norm });
        }
        let s = norm.sqrt().recip();
        let amps = amplitudes.into_iter().map(|a| a * s).collect();
        Self::new(grid, amps)
    }

    fn check_guard_band(&self) -> Result<()> {
        let g = &self.grid;
        let lo = g.origin() + GUARD_BAND;
        let hi = g.energy(g.n() - 1) - GUARD_BAND;
        let mut mass = 0.0;
        for (k, a) in self.amplitudes.iter().enumerate() {
            let e = g.energy(k);
            if e < lo || e > hi {
                mass += a.norm_sqr() * g.spacing();
            }
        }
        if mass > GUARD_MASS_TOL {
            return Err(Error::GuardBandViolation {
                mass,
                limit: GUARD_MASS_TOL,
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Centered-DFT time-domain amplitudes ψ̃(t_j) at storage index j,
    /// t_j = (j - n/2) δt.
    pub fn time_amplitudes(&self) -> Vec<C64> {
        time_transform(&self.grid, &self.amplitudes)
    }
}

/// Gaussian wave packet with mean energy μ, time-shift phase ν and energy
/// width σ:  ψ(E) ∝ exp(-(E-μ)²/4σ² + iνE).
///
/// Requires σ ≥ 2δE (resolvable on the grid) and |μ| + 6σ inside the usable
/// window. The amplitudes are normalized by the discrete sum, so grid states
/// are exactly unit-norm.
pub fn gaussian_packet(mu: f64, nu: f64, sigma: f64, grid: &EnergyGrid) -> Result<WeightWavefunction> {
    let min_sigma = 2.0 * grid.spacing();
    if sigma < min_sigma {
        return Err(Error::PacketTooNarrow {
            sigma,
            min: min_sigma,
        });
    }
    let center = grid.origin() + grid.spacing() * grid.n() as f64 / 2.0;
    let reach = (mu - center).abs() + 6.0 * sigma;
    if reach > grid.usable_half_width() {
        return Err(Error::PacketOffGrid {
            center: mu,
            width: 6.0 * sigma,
            usable: grid.usable_half_width(),
        });
    }
    let amps: Vec<C64> = (0..grid.n())
        .map(|k| {
            let e = grid.energy(k);
            let envelope = (-(e - mu).powi(2) / (4.0 * sigma * sigma)).exp();
            C64::from_polar(envelope, nu * e)
        })
        .collect();
    WeightWavefunction::normalized(*grid, amps)
}

/// Cat state: equal superposition of Gaussian packets at (±μ, ±ν) with
/// σ = 1/√2, normalized on the grid (which reproduces the analytic overlap
/// factor √(2(1+e^{-μ²-ν²}))).
pub fn cat_state(mu: f64, nu: f64, grid: &EnergyGrid) -> Result<WeightWavefunction> {
    let sigma = std::f64::consts::FRAC_1_SQRT_2;
    let min_sigma = 2.0 * grid.spacing();
    if sigma < min_sigma {
        return Err(Error::PacketTooNarrow {
            sigma,
            min: min_sigma,
        });
    }
    let center = grid.origin() + grid.spacing() * grid.n() as f64 / 2.0;
    let reach = (mu.abs() + center.abs()) + 6.0 * sigma;
    if reach > grid.usable_half_width() {
        return Err(Error::PacketOffGrid {
            center: mu,
            width: 6.0 * sigma,
            usable: grid.usable_half_width(),
        });
    }
    let amps: Vec<C64> = (0..grid.n())
        .map(|k| {
            let e = grid.energy(k);
            let a = C64::from_polar((-(e - mu).powi(2) / (4.0 * sigma * sigma)).exp(), nu * e);
            let b = C64::from_polar((-(e + mu).powi(2) / (4.0 * sigma * sigma)).exp(), -nu * e);
            a + b
        })
        .collect();
    WeightWavefunction::normalized(*grid, amps)
}

/// Uniform wavefunction on the window |E - center| ≤ half_width, zero
/// elsewhere. A semi-classical reference state with a delta-like g(t).
pub fn uniform_window(center: f64, half_width: f64, grid: &EnergyGrid) -> Result<WeightWavefunction> {
    let c0 = grid.origin() + grid.spacing() * grid.n() as f64 / 2.0;
    if (center - c0).abs() + half_width > grid.usable_half_width() {
        return Err(Error::PacketOffGrid {
            center,
            width: half_width,
            usable: grid.usable_half_width(),
        });
    }
    let amps: Vec<C64> = (0..grid.n())
        .map(|k| {
            if (grid.energy(k) - center).abs() <= half_width {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    WeightWavefunction::normalized(*grid, amps)
}

/// Representation of a weight state: a convex mixture of pure wavefunction
/// branches, or a full grid density matrix (the output of a partial trace).
#[derive(Debug, Clone)]
pub enum WeightForm {
    PureBranches(Vec<(f64, WeightWavefunction)>),
    DensityMatrix(DMatrix<C64>),
}

/// State of the weight on an energy grid.
#[derive(Debug, Clone)]
pub struct WeightState {
    grid: EnergyGrid,
    form: WeightForm,
}

impl WeightState {
    pub fn pure(wf: WeightWavefunction) -> Self {
        let grid = *wf.grid();
        Self {
            grid,
            form: WeightForm::PureBranches(vec![(1.0, wf)]),
        }
    }

    /// Mixture of pure branches; weights must sum to one.
    pub fn mixture(branches: Vec<(f64, WeightWavefunction)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::NotNormalized { norm: 0.0 });
        }
        let grid = *branches[0].1.grid();
        for (_, wf) in &branches {
            grid.check_same(wf.grid())?;
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: total });
        }
        Ok(Self {
            grid,
            form: WeightForm::PureBranches(branches),
        })
    }

    /// Wraps an n×n density matrix with Tr[ρ]·δE = 1. Hermiticity, trace,
    /// diagonal positivity and the guard band are validated; full positive
    /// semidefiniteness is the provenance of the partial trace that built
    /// the matrix.
    pub fn from_density(grid: EnergyGrid, rho: DMatrix<C64>) -> Result<Self> {
        if rho.nrows() != grid.n() || rho.ncols() != grid.n() {
            return Err(Error::DimensionMismatch {
                expected: grid.n(),
                got: rho.nrows(),
            });
        }
        let mut herm_dev: f64 = 0.0;
        let mut min_diag: f64 = f64::INFINITY;
        for i in 0..grid.n() {
            min_diag = min_diag.min(rho[(i, i)].re);
            for j in i..grid.n() {
                herm_dev = herm_dev.max((rho[(i, j)] - rho[(j, i)].conj()).norm());
            }
        }
        if herm_dev > 1e-10 {
            return Err(Error::NotHermitian { deviation: herm_dev });
        }
        if min_diag < -1e-10 {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: min_diag,
            });
        }
        let trace = rho.trace().re * grid.spacing();
        if (trace - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: trace });
        }
        let state = Self {
            grid,
            form: WeightForm::DensityMatrix(rho),
        };
        let f = state.energy_distribution();
        let lo = grid.origin() + GUARD_BAND;
        let hi = grid.energy(grid.n() - 1) - GUARD_BAND;
        let mut mass = 0.0;
        for (k, &fk) in f.iter().enumerate() {
            let e = grid.energy(k);
            if e < lo || e > hi {
                mass += fk * grid.spacing();
            }
        }
        if mass > GUARD_MASS_TOL {
            return Err(Error::GuardBandViolation {
                mass,
                limit: GUARD_MASS_TOL,
            });
        }
        Ok(state)
    }

    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn form(&self) -> &WeightForm {
        &self.form
    }

    /// Shifts the grid origin by `delta` without touching amplitudes.
    pub fn with_origin_shifted(&self, delta: f64) -> Self {
        let grid = self.grid.shifted(delta);
        let form = match &self.form {
            WeightForm::PureBranches(bs) => WeightForm::PureBranches(
                bs.iter()
                    .map(|(w, wf)| {
                        (
                            *w,
                            WeightWavefunction {
                                grid,
                                amplitudes: wf.amplitudes.clone(),
                            },
                        )
                    })
                    .collect(),
            ),
            WeightForm::DensityMatrix(rho) => WeightForm::DensityMatrix(rho.clone()),
        };
        Self { grid, form }
    }

    /// Spectral pure branches of the state. Pure-branch states are returned
    /// as stored; density matrices are eigendecomposed, keeping eigenvalues
    /// above `floor` and renormalizing. Returns the branches and the
    /// truncated probability mass.
    pub fn to_branches(&self, floor: f64) -> (Vec<(f64, WeightWavefunction)>, f64) {
        match &self.form {
            WeightForm::PureBranches(bs) => (bs.clone(), 0.0),
            WeightForm::DensityMatrix(rho) => {
                let de = self.grid.spacing();
                let eig = nalgebra::SymmetricEigen::new(rho.clone() * C64::new(de, 0.0));
                let n = self.grid.n();
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
                let mut branches = Vec::new();
                let mut kept = 0.0;
                for &k in &idx {
                    let lam = eig.eigenvalues[k];
                    if lam > floor {
                        // eigenvector is unit in ℓ², rescale to the δE measure
                        let amps: Vec<C64> = eig
                            .eigenvectors
                            .column(k)
                            .iter()
                            .map(|z| z / C64::new(de.sqrt(), 0.0))
                            .collect();
                        branches.push((
                            lam,
                            WeightWavefunction {
                                grid: self.grid,
                                amplitudes: amps,
                            },
                        ));
                        kept += lam;
                    }
                }
                for (w, _) in &mut branches {
                    *w /= kept;
                }
                (branches, 1.0 - kept)
            }
        }
    }

    /// Energy probability density f(E_k) = ⟨E_k|ρ|E_k⟩.
    pub fn energy_distribution(&self) -> Vec<f64> {
        match &self.form {
            WeightForm::PureBranches(bs) => {
                let mut f = vec![0.0; self.grid.n()];
                for (w, wf) in bs {
                    for (k, a) in wf.amplitudes.iter().enumerate() {
                        f[k] += w * a.norm_sqr();
                    }
                }
                f
            }
            WeightForm::DensityMatrix(rho) => (0..self.grid.n()).map(|k| rho[(k, k)].re).collect(),
        }
    }

    /// Time probability density g(t_j) = ⟨t_j|ρ|t_j⟩, by DFT of the
    /// amplitudes (pure branches) or a double transform of the density
    /// matrix.
    pub fn time_distribution(&self) -> Vec<f64> {
        match &self.form {
            WeightForm::PureBranches(bs) => {
                let mut g = vec![0.0; self.grid.n()];
                for (w, wf) in bs {
                    let psi_t = wf.time_amplitudes();
                    for (j, a) in psi_t.iter().enumerate() {
                        g[j] += w * a.norm_sqr();
                    }
                }
                g
            }
            WeightForm::DensityMatrix(rho) => {
                // g(t_j) = (δE²/2π) Σ_{k,l} e^{-iE_k t_j} ρ_{kl} e^{iE_l t_j}:
                // one centered DFT per column, then the conjugate phase sum.
                let n = self.grid.n();
                let mut planner = FftPlanner::new();
                let fft = planner.plan_fft_forward(n);
                let cols: Vec<Vec<C64>> = (0..n)
                    .map(|l| {
                        let col: Vec<C64> = (0..n).map(|r| rho[(r, l)]).collect();
                        raw_centered_dft(&self.grid, col, &*fft)
                    })
                    .collect();
                let scale = self.grid.spacing() / (2.0 * std::f64::consts::PI).sqrt();
                (0..n)
                    .map(|j| {
                        let t = self.grid.time(j);
                        let mut acc = C64::new(0.0, 0.0);
                        for (l, col) in cols.iter().enumerate() {
                            acc += col[j] * C64::from_polar(scale, self.grid.energy(l) * t);
                        }
                        acc.re
                    })
                    .collect()
            }
        }
    }

    /// Mean and standard deviation of both marginals. The time moments are
    /// flagged unreliable when g(t) has noticeable mass at the wraparound
    /// edge of the time grid.
    pub fn dispersion_stats(&self) -> DispersionStats {
        let f = self.energy_distribution();
        let g = self.time_distribution();
        let de = self.grid.spacing();
        let dt = self.grid.time_spacing();
        let (mean_e, var_e) = weighted_moments(&self.grid.energies(), &f, de);
        let (mean_t, var_t) = weighted_moments(&self.grid.times(), &g, dt);
        let n = self.grid.n();
        let edge_mass: f64 = (g[0] + g[1] + g[n - 2] + g[n - 1]) * dt;
        DispersionStats {
            mean_energy: mean_e,
            sigma_energy: var_e.max(0.0).sqrt(),
            mean_time: mean_t,
            sigma_time: var_t.max(0.0).sqrt(),
            time_moments_reliable: edge_mass < 1e-9,
        }
    }

    /// Dephasing factor γ(ω) = ∫ dt g(t) e^{iωt}, the characteristic
    /// function of the time distribution.
    pub fn dephasing_factor(&self, omega: f64) -> C64 {
        TimeProfile::of(self).gamma(omega)
    }

    /// Characteristic function of the energy distribution,
    /// λ(ω) = ∫ dE f(E) e^{iωE}.
    pub fn energy_characteristic(&self, omega: f64) -> C64 {
        let f = self.energy_distribution();
        let de = self.grid.spacing();
        let mut acc = C64::new(0.0, 0.0);
        for (k, &fk) in f.iter().enumerate() {
            acc += C64::from_polar(fk * de, omega * self.grid.energy(k));
        }
        acc
    }

    /// Wigner function of the state on the half-step energy grid.
    pub fn wigner(&self) -> WignerFunction {
        let n = self.grid.n();
        let de = self.grid.spacing();
        let n_centers = 2 * n - 1;
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];

        // anti-diagonal slice u_a = ρ(E_a, E_{c-a}) per center index c
        let slice = |c: usize, buf: &mut Vec<C64>| {
            buf.clear();
            buf.resize(n, C64::new(0.0, 0.0));
            let a_min = c.saturating_sub(n - 1);
            let a_max = c.min(n - 1);
            match &self.form {
                WeightForm::PureBranches(bs) => {
                    for (w, wf) in bs {
                        for a in a_min..=a_max {
                            buf[a] += wf.amplitudes[a] * wf.amplitudes[c - a].conj() * *w;
                        }
                    }
                }
                WeightForm::DensityMatrix(rho) => {
                    for a in a_min..=a_max {
                        buf[a] = rho[(a, c - a)];
                    }
                }
            }
        };

        let mut values = vec![0.0; n_centers * n];
        let mut imag_residue: f64 = 0.0;
        let mut buf: Vec<C64> = Vec::with_capacity(n);
        let scale = de / std::f64::consts::PI;
        for c in 0..n_centers {
            slice(c, &mut buf);
            fft.process_with_scratch(&mut buf, &mut scratch);
            // W_c(t_j) = (δE/π) e^{2πi c J/n} û[(2J) mod n],  J = j - n/2
            for j in 0..n {
                let jj = j as i64 - (n as i64) / 2;
                let freq = (2 * jj).rem_euclid(n as i64) as usize;
                let phase = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * c as f64 * jj as f64 / n as f64);
                let w = phase * buf[freq] * scale;
                imag_residue = imag_residue.max(w.im.abs());
                values[c * n + j] = w.re;
            }
        }
        WignerFunction {
            grid: self.grid,
            values,
            imag_residue,
        }
    }
}

/// Mean/σ of both marginals of a weight state.
#[derive(Debug, Clone, Copy)]
pub struct DispersionStats {
    pub mean_energy: f64,
    pub sigma_energy: f64,
    pub mean_time: f64,
    pub sigma_time: f64,
    /// False when g(t) has mass at the edge of the time window, where
    /// variance estimates wrap around.
    pub time_moments_reliable: bool,
}

fn weighted_moments(xs: &[f64], density: &[f64], dx: f64) -> (f64, f64) {
    let mut m0 = 0.0;
    let mut m1 = 0.0;
    for (x, p) in xs.iter().zip(density) {
        m0 += p * dx;
        m1 += x * p * dx;
    }
    let mean = m1 / m0;
    let mut var = 0.0;
    for (x, p) in xs.iter().zip(density) {
        var += (x - mean) * (x - mean) * p * dx;
    }
    (mean, var / m0)
}

/// Precomputed time distribution of a weight state, for repeated γ(ω)
/// evaluation.
pub struct TimeProfile {
    times: Vec<f64>,
    g_dt: Vec<f64>,
}

impl TimeProfile {
    pub fn of(state: &WeightState) -> Self {
        let dt = state.grid().time_spacing();
        let g = state.time_distribution();
        Self {
            times: state.grid().times(),
            g_dt: g.iter().map(|&x| x * dt).collect(),
        }
    }

    /// γ(ω) = Σ_j g(t_j) e^{iω t_j} δt. At grid frequencies (multiples of
    /// δE) this equals the circular autocorrelation of the amplitudes
    /// exactly; in between it is the trigonometric interpolation.
    pub fn gamma(&self, omega: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (t, gdt) in self.times.iter().zip(&self.g_dt) {
            acc += C64::from_polar(*gdt, omega * t);
        }
        acc
    }
}

/// Wigner function W(E, t) sampled on half-step energy centers
/// (2n-1 points spaced δE/2) × the full time grid (n points spaced δt).
///
/// On this sampling both discrete marginals are exact: summing over t
/// recovers f(E) and summing over centers recovers g(t).
#[derive(Debug, Clone)]
pub struct WignerFunction {
    grid: EnergyGrid,
    /// Row-major [center c][time j], c in 0..2n-1, j in 0..n.
    values: Vec<f64>,
    imag_residue: f64,
}

impl WignerFunction {
    pub fn grid(&self) -> &EnergyGrid {
        &self.grid
    }

    pub fn n_centers(&self) -> usize {
        2 * self.grid.n() - 1
    }

    /// Energy of center row c: origin + c·δE/2.
    pub fn center_energy(&self, c: usize) -> f64 {
        self.grid.origin() + c as f64 * self.grid.spacing() / 2.0
    }

    pub fn value(&self, c: usize, j: usize) -> f64 {
        self.values[c * self.grid.n() + j]
    }

    /// Largest imaginary part discarded during construction.
    pub fn imag_residue(&self) -> f64 {
        self.imag_residue
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Marginal over time, reassembled on the original integer grid:
    /// f(E_k) = (δt/2) Σ_j W(E_k, t_j).
    pub fn marginal_energy(&self) -> Vec<f64> {
        let n = self.grid.n();
        let dt = self.grid.time_spacing();
        (0..n)
            .map(|k| {
                let c = 2 * k;
                (0..n).map(|j| self.value(c, j)).sum::<f64>() * dt / 2.0
            })
            .collect()
    }

    /// Marginal over energy: g(t_j) = (δE/2) Σ_c W(E_c, t_j).
    pub fn marginal_time(&self) -> Vec<f64> {
        let n = self.grid.n();
        let de = self.grid.spacing();
        (0..n)
            .map(|j| {
                (0..self.n_centers())
                    .map(|c| self.value(c, j))
                    .sum::<f64>()
                    * de
                    / 2.0
            })
            .collect()
    }

    /// First energy moment conditional on time:
    /// m₁(t_j) = (δE/2) Σ_c E_c W(E_c, t_j).
    pub fn energy_moment_given_time(&self) -> Vec<f64> {
        let n = self.grid.n();
        let de = self.grid.spacing();
        (0..n)
            .map(|j| {
                (0..self.n_centers())
                    .map(|c| self.center_energy(c) * self.value(c, j))
                    .sum::<f64>()
                    * de
                    / 2.0
            })
            .collect()
    }
}

/// Centered DFT used throughout:
/// out_j = (δE/√2π) e^{-i E₀ t_j} Σ_k x_k e^{-2πi J k / n}, J = j - n/2.
pub fn time_transform(grid: &EnergyGrid, amplitudes: &[C64]) -> Vec<C64> {
    let n = grid.n();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let mut buf = amplitudes.to_vec();
    fft.process(&mut buf);
    finish_centered(grid, buf)
}

fn raw_centered_dft(grid: &EnergyGrid, mut buf: Vec<C64>, fft: &dyn rustfft::Fft<f64>) -> Vec<C64> {
    fft.process(&mut buf);
    finish_centered(grid, buf)
}

pub(crate) fn finish_centered_pub(grid: &EnergyGrid, transformed: Vec<C64>) -> Vec<C64> {
    finish_centered(grid, transformed)
}

fn finish_centered(grid: &EnergyGrid, transformed: Vec<C64>) -> Vec<C64> {
    let n = grid.n();
    let de = grid.spacing();
    let scale = de / (2.0 * std::f64::consts::PI).sqrt();
    (0..n)
        .map(|j| {
            let jj = j as i64 - (n as i64) / 2;
            let src = jj.rem_euclid(n as i64) as usize;
            let t = grid.time(j);
            C64::from_polar(scale, -grid.origin() * t) * transformed[src]
        })
        .collect()
}

/// Inverse of [`time_transform`]: recovers energy-domain amplitudes from
/// time-domain ones. The round trip is exact to machine precision.
pub fn energy_transform(grid: &EnergyGrid, time_amplitudes: &[C64]) -> Vec<C64> {
    let n = grid.n();
    let dt = grid.time_spacing();
    let scale = dt / (2.0 * std::f64::consts::PI).sqrt();
    // undo the centered phases, then one inverse FFT
    let mut buf = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        let jj = j as i64 - (n as i64) / 2;
        let src = jj.rem_euclid(n as i64) as usize;
        let t = grid.time(j);
        buf[src] = time_amplitudes[j] * C64::from_polar(1.0, grid.origin() * t);
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_inverse(n);
    fft.process(&mut buf);
    buf.iter().map(|z| z * scale).collect()
}

// --- serialization -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct GridJson {
    n: usize,
    spacing: f64,
    origin: f64,
}

#[derive(Serialize, Deserialize)]
struct BranchJson {
    weight: f64,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct WeightStateJson {
    grid: GridJson,
    form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branches: Option<Vec<BranchJson>>,
}

fn interleave(zs: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(zs.len() * 2);
    for z in zs {
        out.push(z.re);
        out.push(z.im);
    }
    out
}

fn deinterleave(xs: &[f64]) -> Vec<C64> {
    xs.chunks(2).map(|c| C64::new(c[0], c[1])).collect()
}

impl WeightState {
    /// JSON form: `{grid: {n, spacing, origin}, form: "pure"|"density",
    /// data: [re, im, ...]}`; multi-branch mixtures carry a `branches`
    /// array of `{weight, data}` objects instead of `data`.
    pub fn to_json(&self) -> String {
        let grid = GridJson {
            n: self.grid.n(),
            spacing: self.grid.spacing(),
            origin: self.grid.origin(),
        };
        let json = match &self.form {
            WeightForm::PureBranches(bs) if bs.len() == 1 => WeightStateJson {
                grid,
                form: "pure".into(),
                data: Some(interleave(bs[0].1.amplitudes())),
                branches: None,
            },
            WeightForm::PureBranches(bs) => WeightStateJson {
                grid,
                form: "pure".into(),
                data: None,
                branches: Some(
                    bs.iter()
                        .map(|(w, wf)| BranchJson {
                            weight: *w,
                            data: interleave(wf.amplitudes()),
                        })
                        .collect(),
                ),
            },
            WeightForm::DensityMatrix(rho) => {
                let flat: Vec<C64> = rho.iter().cloned().collect();
                WeightStateJson {
                    grid,
                    form: "density".into(),
                    data: Some(interleave(&flat)),
                    branches: None,
                }
            }
        };
        serde_json::to_string(&json).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let json: WeightStateJson =
            serde_json::from_str(s).map_err(|e| Error::Domain { what: e.to_string() })?;
        let grid = EnergyGrid::new(json.grid.n, json.grid.spacing, json.grid.origin)?;
        match json.form.as_str() {
            "pure" => {
                if let Some(data) = json.data {
                    let wf = WeightWavefunction::new(grid, deinterleave(&data))?;
                    Ok(Self::pure(wf))
                } else if let Some(branches) = json.branches {
                    let bs = branches
                        .into_iter()
                        .map(|b| {
                            WeightWavefunction::new(grid, deinterleave(&b.data)).map(|wf| (b.weight, wf))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Self::mixture(bs)
                } else {
                    Err(Error::Domain {
                        what: "pure form carries neither data nor branches".into(),
                    })
                }
            }
            "density" => {
                let data = json.data.ok_or_else(|| Error::Domain {
                    what: "density form without data".into(),
                })?;
                let zs = deinterleave(&data);
                // column-major order, matching DMatrix::iter
                let rho = DMatrix::from_vec(grid.n(), grid.n(), zs);
                Self::from_density(grid, rho)
            }
            other => Err(Error::Domain {
                what: format!("unknown weight form {other:?}"),
            }),
        }
    }
}
