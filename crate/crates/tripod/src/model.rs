//! Tripod internal physics: Rabi fields, RWA Hamiltonian, dark states, and
//! the closed-form potential substep.
//!
//! Level scheme: one excited state |0⟩ coupled to three ground states
//! |1⟩,|2⟩,|3⟩ by three plane-wave beams — two counter-propagating along x,
//! one along z. The coupling matrix has rank 2, leaving a two-dimensional
//! dark subspace spanned by D₁, D₂ whose plane-wave content generates the
//! synthetic gauge structure exploited by the rest of the crate.
//!
//! Beam displacement d enters only through evaluation of the plane waves at
//! r − d, i.e. one global phase per beam.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::grid::{GridSpec, ScalarField, SpinorField};
use crate::{Error, Result, Vec2};

/// Model constants in natural units ħ = m = κ = 1 (unless built otherwise).
///
/// The mixing angle is fixed by cos ξ = √2 − 1; everything else follows:
/// κ = k_r cos ξ, κ′ = k_r (1 − cos ξ), V_s = ħ k_r² sin²ξ / 2m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Atom mass (1 in natural units).
    pub mass: f64,
    /// Laser wavevector.
    pub k_r: f64,
    /// Mixing angle ξ of the beam amplitudes, radians.
    pub xi: f64,
    /// Rabi magnitude Ω₀ (total coupling strength).
    pub omega0: f64,
    /// κ = k_r cos ξ — the recoil scale of the dark-subspace gauge field.
    pub kappa: f64,
    /// κ′ = k_r (1 − cos ξ).
    pub kappa_prime: f64,
    /// Detuning shift applied to |3⟩.
    pub v_s: f64,
}

impl PhysicalParams {
    /// Natural units with the standard mixing angle cos ξ = √2 − 1 and κ = 1.
    pub fn natural(omega0: f64) -> Self {
        Self::from_parts(1.0, std::f64::consts::SQRT_2 + 1.0, (std::f64::consts::SQRT_2 - 1.0).acos(), omega0)
    }

    /// Build from independent constants, deriving κ, κ′ and V_s.
    pub fn from_parts(mass: f64, k_r: f64, xi: f64, omega0: f64) -> Self {
        let kappa = k_r * xi.cos();
        let kappa_prime = k_r * (1.0 - xi.cos());
        let v_s = k_r * k_r * xi.sin().powi(2) / (2.0 * mass);
        PhysicalParams { mass, k_r, xi, omega0, kappa, kappa_prime, v_s }
    }
}

/// Four complex amplitudes on the internal levels |0⟩..|3⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor4(pub [C64; 4]);

impl Spinor4 {
    pub const ZERO: Spinor4 = Spinor4([C64::new(0.0, 0.0); 4]);

    pub fn basis(n: usize) -> Self {
        let mut s = Self::ZERO;
        s.0[n] = C64::new(1.0, 0.0);
        s
    }

    pub fn dot(&self, other: &Spinor4) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).re.sqrt()
    }

    pub fn scaled(&self, f: C64) -> Spinor4 {
        Spinor4([self.0[0] * f, self.0[1] * f, self.0[2] * f, self.0[3] * f])
    }

    pub fn add(&self, other: &Spinor4) -> Spinor4 {
        let mut out = *self;
        for (o, b) in out.0.iter_mut().zip(other.0.iter()) {
            *o += b;
        }
        out
    }
}

/// 4×4 complex matrix, row-major.
pub type Matrix4 = [[C64; 4]; 4];

pub fn mat_mul_vec(m: &Matrix4, v: &Spinor4) -> Spinor4 {
    let mut out = Spinor4::ZERO;
    for (i, row) in m.iter().enumerate() {
        out.0[i] = row.iter().zip(v.0.iter()).map(|(a, b)| a * b).sum();
    }
    out
}

/// The dark pair D₁(r, d), D₂(r, d): orthonormal, annihilated by the RWA
/// coupling at the same (r, d).
#[derive(Debug, Clone, Copy)]
pub struct DarkFrame {
    pub d1: Spinor4,
    pub d2: Spinor4,
}

impl DarkFrame {
    /// ⟨D₁|s⟩, ⟨D₂|s⟩.
    pub fn project(&self, s: &Spinor4) -> (C64, C64) {
        (self.d1.dot(s), self.d2.dot(s))
    }

    /// c₁ D₁ + c₂ D₂.
    pub fn embed(&self, c1: C64, c2: C64) -> Spinor4 {
        self.d1.scaled(c1).add(&self.d2.scaled(c2))
    }
}

fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Rabi couplings (Ω₁, Ω₂, Ω₃) of the three displaced beams at position `r`.
///
/// |Ω₁|² + |Ω₂|² + |Ω₃|² = Ω₀² identically.
pub fn rabi_vector(r: Vec2, d: Vec2, p: &PhysicalParams) -> (C64, C64, C64) {
    let u = r - d;
    let om_perp = p.omega0 * p.xi.sin() / std::f64::consts::SQRT_2;
    let om_par = p.omega0 * p.xi.cos();
    (
        om_perp * phase(-p.k_r * u.x),
        om_perp * phase(p.k_r * u.x),
        om_par * phase(p.k_r * u.z),
    )
}

/// RWA Hamiltonian Σₙ Ωₙ|0⟩⟨n| + h.c. plus the V_s shift on |3⟩.
pub fn internal_hamiltonian(r: Vec2, d: Vec2, p: &PhysicalParams) -> Matrix4 {
    let (o1, o2, o3) = rabi_vector(r, d, p);
    let zero = C64::new(0.0, 0.0);
    let mut h = [[zero; 4]; 4];
    h[0][1] = o1;
    h[0][2] = o2;
    h[0][3] = o3;
    h[1][0] = o1.conj();
    h[2][0] = o2.conj();
    h[3][0] = o3.conj();
    h[3][3] = C64::new(p.v_s, 0.0);
    h
}

/// Dark basis at (r, d).
///
/// D₁ = (|1̃⟩ − |2̃⟩) e^{−iκ′z̃} / √2,
/// D₂ = [cos ξ (|1̃⟩ + |2̃⟩)/√2 − sin ξ |3⟩] e^{−iκ′z̃},
/// with |1̃⟩ = |1⟩ e^{ik_r(x̃+z̃)}, |2̃⟩ = |2⟩ e^{−ik_r(x̃−z̃)} and all tildes
/// evaluated at r − d.
pub fn dark_states(r: Vec2, d: Vec2, p: &PhysicalParams) -> Result<DarkFrame> {
    if p.omega0 <= 0.0 {
        return Err(Error::DegenerateFrame);
    }
    let u = r - d;
    let e1 = phase(p.k_r * (u.x + u.z));
    let e2 = phase(-p.k_r * (u.x - u.z));
    let common = phase(-p.kappa_prime * u.z);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let zero = C64::new(0.0, 0.0);
    let d1 = Spinor4([zero, e1 * common * inv_sqrt2, -e2 * common * inv_sqrt2, zero]);
    let cx = p.xi.cos();
    let sx = p.xi.sin();
    let d2 = Spinor4([
        zero,
        e1 * common * (cx * inv_sqrt2),
        e2 * common * (cx * inv_sqrt2),
        common * (-sx),
    ]);
    Ok(DarkFrame { d1, d2 })
}

/// One potential substep of duration `dt`: V_s half, exact RWA rotation, V_s
/// half. The rotation uses the rank-2 structure of the coupling — a rotation
/// at frequency Ω₀ inside span{|0⟩, |χ̃⟩} and the identity on its complement —
/// so the step is unitary to rounding.
pub fn internal_step(s: &Spinor4, r: Vec2, d: Vec2, dt: f64, p: &PhysicalParams) -> Spinor4 {
    let mut out = *s;
    let half_vs = phase(-p.v_s * dt / 2.0);
    out.0[3] *= half_vs;
    if p.omega0 > 0.0 {
        let (o1, o2, o3) = rabi_vector(r, d, p);
        let inv = 1.0 / p.omega0;
        // b = ⟨χ̃|s⟩ with |χ̃⟩ = Σ (Ωₙ*/Ω₀)|n⟩
        let b = (o1 * out.0[1] + o2 * out.0[2] + o3 * out.0[3]) * inv;
        let a = out.0[0];
        let (sin_t, cos_t) = (p.omega0 * dt).sin_cos();
        let i = C64::new(0.0, 1.0);
        out.0[0] = a * cos_t - i * b * sin_t;
        let g = b * (cos_t - 1.0) - i * a * sin_t;
        out.0[1] += g * o1.conj() * inv;
        out.0[2] += g * o2.conj() * inv;
        out.0[3] += g * o3.conj() * inv;
    }
    out.0[3] *= half_vs;
    out
}

/// Per-point dark amplitudes of a field plus the total bright population
/// 1 − Σ(|c₁|² + |c₂|²) dA / ‖ψ‖².
pub fn dark_projection(
    field: &SpinorField,
    d: Vec2,
    p: &PhysicalParams,
) -> Result<(ScalarField, ScalarField, f64)> {
    let grid = field.grid();
    let n = grid.len();
    let mut c1 = vec![C64::new(0.0, 0.0); n];
    let mut c2 = vec![C64::new(0.0, 0.0); n];
    let mut dark_sum = 0.0;
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            let r = Vec2::new(x, grid.z(iz));
            let frame = dark_states(r, d, p)?;
            let s = field.spinor_at(ix, iz);
            let (a1, a2) = frame.project(&s);
            let idx = ix * grid.nz + iz;
            c1[idx] = a1;
            c2[idx] = a2;
            dark_sum += a1.norm_sqr() + a2.norm_sqr();
        }
    }
    let norm_sq = field.norm_sq();
    if norm_sq <= 0.0 {
        return Err(Error::ZeroNorm);
    }
    let bright = 1.0 - dark_sum * grid.cell_area() / norm_sq;
    Ok((
        ScalarField::new(grid.clone(), c1),
        ScalarField::new(grid.clone(), c2),
        bright.clamp(-1.0, 1.0),
    ))
}

/// Build the four-component field c₁(r) D₁(r, d) + c₂(r) D₂(r, d).
pub fn embed_dark(
    grid: &GridSpec,
    d: Vec2,
    p: &PhysicalParams,
    c1: &[C64],
    c2: &[C64],
) -> Result<SpinorField> {
    assert_eq!(c1.len(), grid.len());
    assert_eq!(c2.len(), grid.len());
    let mut field = SpinorField::zeros(grid.clone());
    for ix in 0..grid.nx {
        let x = grid.x(ix);
        for iz in 0..grid.nz {
            let r = Vec2::new(x, grid.z(iz));
            let frame = dark_states(r, d, p)?;
            let idx = ix * grid.nz + iz;
            field.set_spinor(ix, iz, frame.embed(c1[idx], c2[idx]));
        }
    }
    Ok(field)
}

/// Normalized Gaussian wavepacket in the dark subspace:
/// envelope(r) · e^{ik₀·r} · (c₁ D₁(r, d) + c₂ D₂(r, d)).
/// Rejects packets placed closer than 5σ to the boundary, like
/// [`crate::grid::gaussian_packet`].
pub fn dark_gaussian_packet(
    grid: &GridSpec,
    center: Vec2,
    sigma: f64,
    k0: Vec2,
    c1: C64,
    c2: C64,
    d: Vec2,
    p: &PhysicalParams,
) -> Result<SpinorField> {
    crate::grid::gaussian_packet(grid, center, sigma, k0, &Spinor4::basis(1))?; // bounds check
    let env = crate::grid::gaussian_envelope(grid, center, C64::new(sigma, 0.0), sigma, k0);
    let a1: Vec<C64> = env.iter().map(|e| e * c1).collect();
    let a2: Vec<C64> = env.iter().map(|e| e * c2).collect();
    let mut field = embed_dark(grid, d, p, &a1, &a2)?;
    field.normalize()?;
    Ok(field)
}

/// Display-only conversions to SI for the paper's nominal atom
/// (m = 10⁻²⁵ kg, κ ≈ 10⁶ m⁻¹).
pub mod si {
    pub const HBAR: f64 = 1.054_571_817e-34;
    pub const NOMINAL_MASS_KG: f64 = 1e-25;
    pub const NOMINAL_KAPPA_PER_M: f64 = 1e6;

    /// One natural time unit m/(ħκ²), in seconds.
    pub fn time_unit_s(mass_kg: f64, kappa_per_m: f64) -> f64 {
        mass_kg / (HBAR * kappa_per_m * kappa_per_m)
    }

    /// One natural length unit 1/κ, in metres.
    pub fn length_unit_m(kappa_per_m: f64) -> f64 {
        1.0 / kappa_per_m
    }

    /// One natural velocity unit ħκ/m, in m/s.
    pub fn velocity_unit_mps(mass_kg: f64, kappa_per_m: f64) -> f64 {
        HBAR * kappa_per_m / mass_kg
    }
}
