//! Dark-subspace analytics in natural units (ħ = m = κ = 1).
//!
//! Displacing the beams along a unit direction n̂ evolves the dark amplitudes
//! by exp(i Ĝ_n̂ ℓ) with Ĝ_n̂ = κ(n̂ₓσₓ + n̂_zσ_z) and ℓ the displacement
//! arclength. The ±1 eigenvectors of σ·n̂ travel at group velocities
//! ±(ħκ/m) n̂, so each straight segment splits a branch in two; a polygon
//! builds a coherent lattice of sub-packets. A circular displacement turns
//! the same generator into a slowly rotating two-level problem whose
//! adiabatic limit carries an Abelian geometric phase.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::paths::{BeamPath, Segment};
use crate::{Error, Result, Vec2};

/// Two-component amplitude (c₁, c₂) in the dark-state representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DarkState2(pub [C64; 2]);

impl DarkState2 {
    pub fn new(c1: C64, c2: C64) -> Self {
        DarkState2([c1, c2])
    }

    pub fn from_re(c1: f64, c2: f64) -> Self {
        DarkState2([C64::new(c1, 0.0), C64::new(c2, 0.0)])
    }

    pub fn dot(&self, other: &DarkState2) -> C64 {
        self.0[0].conj() * other.0[0] + self.0[1].conj() * other.0[1]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).re.sqrt()
    }

    pub fn scaled(&self, f: C64) -> DarkState2 {
        DarkState2([self.0[0] * f, self.0[1] * f])
    }

    pub fn normalized(&self) -> DarkState2 {
        self.scaled(C64::new(1.0 / self.norm(), 0.0))
    }
}

/// 2×2 complex matrix, row-major.
pub type Mat2 = [[C64; 2]; 2];

pub fn mat2_mul_vec(m: &Mat2, v: &DarkState2) -> DarkState2 {
    DarkState2([
        m[0][0] * v.0[0] + m[0][1] * v.0[1],
        m[1][0] * v.0[0] + m[1][1] * v.0[1],
    ])
}

pub fn mat2_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut out = [[C64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

/// Wrap a phase to the fixed branch cut (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut p = phi.rem_euclid(two_pi);
    if p > std::f64::consts::PI {
        p -= two_pi;
    }
    p
}

/// Gauge matrix Ĝ_n̂ = κ(n̂ₓσₓ + n̂_zσ_z) for a unit displacement direction,
/// in units κ = 1. Eigenvalues ±1.
pub fn gauge_matrix(n: Vec2) -> Result<Mat2> {
    if (n.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!(
            "gauge direction must be unit length, |n| = {}",
            n.norm()
        )));
    }
    let zero = C64::new(0.0, 0.0);
    let mut m = [[zero; 2]; 2];
    m[0][0] = C64::new(n.z, 0.0);
    m[0][1] = C64::new(n.x, 0.0);
    m[1][0] = C64::new(n.x, 0.0);
    m[1][1] = C64::new(-n.z, 0.0);
    Ok(m)
}

/// exp(i Ĝ_n̂ L) s — evolution of the dark amplitudes across a straight
/// displacement of length L. Since (σ·n̂)² = 1 the exponential is
/// cos(L) + i sin(L) σ·n̂, exactly unitary.
pub fn segment_evolve(s: &DarkState2, n: Vec2, length: f64) -> Result<DarkState2> {
    let g = gauge_matrix(n)?;
    let (sin_l, cos_l) = length.sin_cos();
    let i = C64::new(0.0, 1.0);
    let rotated = mat2_mul_vec(&g, s);
    Ok(DarkState2([
        s.0[0] * cos_l + i * sin_l * rotated.0[0],
        s.0[1] * cos_l + i * sin_l * rotated.0[1],
    ]))
}

/// Internal eigenvector g⁺(φ) = ½(1 − i e^{iφ}, −i + e^{iφ}) of σ·n̂(φ) with
/// eigenvalue +1; φ is the angle between the x-axis and n̂.
pub fn g_plus(phi: f64) -> DarkState2 {
    let e = C64::from_polar(1.0, phi);
    let i = C64::new(0.0, 1.0);
    DarkState2([(1.0 - i * e) * 0.5, (-i + e) * 0.5])
}

/// Eigenvector of σ·n̂(φ) with eigenvalue −1.
pub fn g_minus(phi: f64) -> DarkState2 {
    let e = C64::from_polar(1.0, phi);
    let i = C64::new(0.0, 1.0);
    DarkState2([(1.0 + i * e) * 0.5, (-i - e) * 0.5])
}

/// One sub-wavepacket of the analytic prediction. `amplitude` carries the
/// branch weight and accumulated phase, with the common dynamical phase
/// excluded; `velocity` is the group velocity in units ħκ/m.
#[derive(Debug, Clone)]
pub struct Branch {
    pub spinor: DarkState2,
    pub amplitude: C64,
    pub position: Vec2,
    pub velocity: Vec2,
}

impl Branch {
    pub fn weight(&self) -> f64 {
        self.amplitude.norm_sqr()
    }
}

/// Full analytic prediction: branch list, elapsed time, and the common
/// dynamical phase φ_d = −(ħκ²/2m) t.
#[derive(Debug, Clone)]
pub struct BranchSet {
    pub branches: Vec<Branch>,
    pub elapsed: f64,
    pub phi_d: f64,
}

impl BranchSet {
    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(Branch::weight).sum()
    }

    /// Branch positions grouped within `tol` (orthogonal co-located branches
    /// appear as one density cluster).
    pub fn position_groups(&self, tol: f64) -> Vec<(Vec2, f64)> {
        let mut groups: Vec<(Vec2, f64)> = Vec::new();
        for b in &self.branches {
            if let Some(g) = groups.iter_mut().find(|(p, _)| (*p - b.position).norm() < tol) {
                g.1 += b.weight();
            } else {
                groups.push((b.position, b.weight()));
            }
        }
        groups
    }
}

/// Decompose a branch onto the ±1 eigenvectors of σ·n̂_new. The eigenvalue-s
/// part moves at s·(ħκ/m)·n̂_new; amplitudes multiply by the overlaps. One
/// of the two returned branches has zero amplitude when the parent already
/// is an eigenvector.
pub fn branch_split(b: &Branch, n_new: Vec2) -> Result<(Branch, Branch)> {
    if (n_new.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid("split direction must be unit length".into()));
    }
    let phi = n_new.angle();
    let plus = g_plus(phi);
    let minus = g_minus(phi);
    let a_plus = plus.dot(&b.spinor);
    let a_minus = minus.dot(&b.spinor);
    Ok((
        Branch {
            spinor: plus,
            amplitude: b.amplitude * a_plus,
            position: b.position,
            velocity: n_new,
        },
        Branch {
            spinor: minus,
            amplitude: b.amplitude * a_minus,
            position: b.position,
            velocity: -n_new,
        },
    ))
}

const MERGE_TOL: f64 = 1e-9;
const AMP_EPS: f64 = 1e-12;

fn merge_branches(branches: Vec<Branch>) -> Vec<Branch> {
    let mut out: Vec<Branch> = Vec::new();
    for b in branches {
        if b.amplitude.norm() < AMP_EPS {
            continue;
        }
        let found = out.iter_mut().find(|o| {
            (o.position - b.position).norm() < MERGE_TOL
                && (o.spinor.0[0] - b.spinor.0[0]).norm() < MERGE_TOL
                && (o.spinor.0[1] - b.spinor.0[1]).norm() < MERGE_TOL
        });
        match found {
            Some(o) => o.amplitude += b.amplitude,
            None => out.push(b),
        }
    }
    out.retain(|b| b.amplitude.norm() >= AMP_EPS);
    out
}

/// Branch-tree prediction for a piecewise-linear path: split at every
/// direction change, advance each branch at its group velocity, accrue the
/// imprinted phase s·κ·(segment length), and coherently merge branches that
/// land on identical (position, spinor).
pub fn predict_lattice(path: &BeamPath, s0: &DarkState2) -> Result<BranchSet> {
    let mut branches = vec![Branch {
        spinor: *s0,
        amplitude: C64::new(1.0, 0.0),
        position: Vec2::ZERO,
        velocity: Vec2::ZERO,
    }];
    let mut elapsed = 0.0;
    for seg in path.segments() {
        let (dir, speed, tau) = match seg {
            Segment::Line { direction, speed, duration, .. } => (*direction, *speed, *duration),
            Segment::Arc { .. } => {
                return Err(Error::Invalid(
                    "lattice prediction needs a piecewise-linear path".into(),
                ))
            }
        };
        let length = speed * tau;
        let mut next = Vec::with_capacity(branches.len() * 2);
        for b in &branches {
            let (mut plus, mut minus) = branch_split(b, dir)?;
            // imprinted phase ±κL and free flight at ±(ħκ/m) over the segment
            plus.amplitude *= C64::from_polar(1.0, length);
            plus.position += plus.velocity * tau;
            minus.amplitude *= C64::from_polar(1.0, -length);
            minus.position += minus.velocity * tau;
            next.push(plus);
            next.push(minus);
        }
        branches = merge_branches(next);
        elapsed += tau;
    }
    Ok(BranchSet { branches, elapsed, phi_d: -0.5 * elapsed })
}

/// Result of integrating the circular-displacement dark dynamics.
#[derive(Debug, Clone)]
pub struct CircleReport {
    pub final_state: DarkState2,
    /// Smallest |⟨g⁺(φ(t))|c(t)⟩| seen along the sweep.
    pub min_following: f64,
    /// |⟨g⁺(φ_end)|c(T)⟩| at the end of the sweep.
    pub final_following: f64,
    /// Geometric phase: arg⟨g⁺(φ_end)|c(T)⟩ with the dynamical phase κv_d T
    /// removed, wrapped to (−π, π].
    pub beta: f64,
    /// Final direction angle φ(T) = π/2 − sweep.
    pub final_angle: f64,
}

/// Fixed-step RK4 integration of i ċ = −κ v_d (σₓ sin ωt + σ_z cos ωt) c
/// with ω = v_d/r_L — the dark dynamics of a clockwise circular displacement
/// that starts moving along +ẑ.
pub fn circle_evolve_ode(
    s0: &DarkState2,
    r_l: f64,
    v_d: f64,
    sweep: f64,
    steps: usize,
) -> Result<DarkState2> {
    Ok(circle_report(s0, r_l, v_d, sweep, steps)?.final_state)
}

pub fn circle_report(
    s0: &DarkState2,
    r_l: f64,
    v_d: f64,
    sweep: f64,
    steps: usize,
) -> Result<CircleReport> {
    if r_l <= 0.0 || v_d <= 0.0 || sweep < 0.0 {
        return Err(Error::Invalid("circle needs r_l > 0, v_d > 0, sweep >= 0".into()));
    }
    if steps == 0 {
        return Err(Error::Invalid("steps must be positive".into()));
    }
    let omega = v_d / r_l;
    let total_t = sweep / omega;
    let i = C64::new(0.0, 1.0);
    // dc/dt = i κ v_d (σ·n̂(t)) c
    let deriv = |t: f64, c: &DarkState2| -> DarkState2 {
        let (s, co) = (omega * t).sin_cos();
        let d0 = c.0[0] * co + c.0[1] * s;
        let d1 = c.0[0] * s - c.0[1] * co;
        DarkState2([i * v_d * d0, i * v_d * d1])
    };
    let mut c = *s0;
    let mut min_follow = f64::INFINITY;
    let dt = total_t / steps as f64;
    let track = |c: &DarkState2, t: f64, min_follow: &mut f64| {
        let phi = std::f64::consts::FRAC_PI_2 - omega * t;
        let f = g_plus(phi).dot(c).norm();
        if f < *min_follow {
            *min_follow = f;
        }
    };
    track(&c, 0.0, &mut min_follow);
    for k in 0..steps {
        let t = k as f64 * dt;
        let k1 = deriv(t, &c);
        let c2 = DarkState2([c.0[0] + k1.0[0] * (dt / 2.0), c.0[1] + k1.0[1] * (dt / 2.0)]);
        let k2 = deriv(t + dt / 2.0, &c2);
        let c3 = DarkState2([c.0[0] + k2.0[0] * (dt / 2.0), c.0[1] + k2.0[1] * (dt / 2.0)]);
        let k3 = deriv(t + dt / 2.0, &c3);
        let c4 = DarkState2([c.0[0] + k3.0[0] * dt, c.0[1] + k3.0[1] * dt]);
        let k4 = deriv(t + dt, &c4);
        c = DarkState2([
            c.0[0] + (k1.0[0] + (k2.0[0] + k3.0[0]) * 2.0 + k4.0[0]) * (dt / 6.0),
            c.0[1] + (k1.0[1] + (k2.0[1] + k3.0[1]) * 2.0 + k4.0[1]) * (dt / 6.0),
        ]);
        track(&c, (k + 1) as f64 * dt, &mut min_follow);
    }
    let final_angle = std::f64::consts::FRAC_PI_2 - sweep;
    let overlap = g_plus(final_angle).dot(&c);
    // remove the dynamical phase: E₊ = −ħκv_d so the accumulated phase is +κ v_d T
    let beta = wrap_phase(overlap.arg() - v_d * total_t);
    Ok(CircleReport {
        final_state: c,
        min_following: min_follow,
        final_following: overlap.norm(),
        beta,
        final_angle,
    })
}

/// [`circle_report`] with the step count refined by doubling until a
/// halving changes the final state by less than `tol`.
pub fn circle_report_auto(
    s0: &DarkState2,
    r_l: f64,
    v_d: f64,
    sweep: f64,
    tol: f64,
) -> Result<CircleReport> {
    let mut steps = (4.0 * sweep * r_l.max(1.0)).max(4096.0) as usize;
    let mut prev = circle_report(s0, r_l, v_d, sweep, steps)?;
    for _ in 0..12 {
        steps *= 2;
        let next = circle_report(s0, r_l, v_d, sweep, steps)?;
        let diff = (next.final_state.0[0] - prev.final_state.0[0]).norm()
            + (next.final_state.0[1] - prev.final_state.0[1]).norm();
        if diff < tol {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Numerics(format!(
        "circle ODE did not converge below {tol} by {steps} steps"
    )))
}

/// Adiabatic end state for a sweep of the displacement direction from
/// φ_start to φ_end: the instantaneous eigenstate g⁺(φ_end) and the
/// geometric phase β = ∫ i⟨g⁺|∂_φ g⁺⟩ dφ = −(φ_end − φ_start)/2.
pub fn adiabatic_solution(phi_start: f64, phi_end: f64) -> (DarkState2, f64) {
    (g_plus(phi_end), -(phi_end - phi_start) / 2.0)
}

/// Both group-velocity derivations evaluated numerically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupVelocityReport {
    /// ∂ω_{1,2}/∂k₀ computed in the laboratory frame through the co-moving
    /// displacement speed ṽ_d(k₀).
    pub lab: [f64; 2],
    /// ∂(E_±/ħ)/∂k + v_d computed in the laser frame at k = −m v_d/ħ.
    pub laser: [f64; 2],
    /// max |lab − laser| over the two branches.
    pub max_deviation: f64,
}

/// Evaluates the two routes to the splitting velocities ±ħκ/m and reports
/// their agreement. `k0` shifts the evaluation point of the lab-frame
/// derivative (the result is k₀-independent). Derivatives are evaluated in
/// closed form; a central finite difference cross-checks each at 1e−6.
pub fn group_velocity_identities(v_d: f64, k0: f64) -> GroupVelocityReport {
    let h = 1e-4;
    // lab frame: ω_{1,2} = ∓ ṽ_d κ with ṽ_d(k₀) = v_d − ħk₀/m, so
    // ∂ω/∂k₀ = ∓κ · dṽ_d/dk₀ = ±κ
    let omega = |sign: f64, k: f64| -sign * (v_d - k); // κ = 1
    let mut lab = [0.0; 2];
    // laser frame: E_± = (k ± κ)²ħ²/2m at k = −m v_d/ħ, then add v_d
    let e = |sign: f64, k: f64| (k + sign).powi(2) / 2.0;
    let k_laser = -v_d;
    let mut laser = [0.0; 2];
    for (i, sign) in [1.0f64, -1.0].into_iter().enumerate() {
        lab[i] = sign; // ±κ, κ = 1
        let lab_fd = (omega(sign, k0 + h) - omega(sign, k0 - h)) / (2.0 * h);
        debug_assert!((lab_fd - lab[i]).abs() < 1e-6);
        laser[i] = (k_laser + sign) + v_d;
        let laser_fd = (e(sign, k_laser + h) - e(sign, k_laser - h)) / (2.0 * h) + v_d;
        debug_assert!((laser_fd - laser[i]).abs() < 1e-6);
    }
    let max_deviation = lab
        .iter()
        .zip(laser.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    GroupVelocityReport { lab, laser, max_deviation }
}

/// Wavepacket dance radius r_A = r_L (ħκ/m) / v_d.
pub fn dance_radius(r_l: f64, v_d: f64) -> f64 {
    r_l / v_d
}

/// Serializable view of a BranchSet (the JSON export schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchSetExport {
    pub branches: Vec<BranchExport>,
    pub time: f64,
    pub phi_d: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchExport {
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub amplitude_re: f64,
    pub amplitude_im: f64,
    pub x: f64,
    pub z: f64,
    pub vx: f64,
    pub vz: f64,
}

impl From<&BranchSet> for BranchSetExport {
    fn from(set: &BranchSet) -> Self {
        BranchSetExport {
            branches: set
                .branches
                .iter()
                .map(|b| BranchExport {
                    c1: [b.spinor.0[0].re, b.spinor.0[0].im],
                    c2: [b.spinor.0[1].re, b.spinor.0[1].im],
                    amplitude_re: b.amplitude.re,
                    amplitude_im: b.amplitude.im,
                    x: b.position.x,
                    z: b.position.z,
                    vx: b.velocity.x,
                    vz: b.velocity.z,
                })
                .collect(),
            time: set.elapsed,
            phi_d: set.phi_d,
        }
    }
}

impl From<&BranchSetExport> for BranchSet {
    fn from(e: &BranchSetExport) -> Self {
        BranchSet {
            branches: e
                .branches
                .iter()
                .map(|b| Branch {
                    spinor: DarkState2([
                        C64::new(b.c1[0], b.c1[1]),
                        C64::new(b.c2[0], b.c2[1]),
                    ]),
                    amplitude: C64::new(b.amplitude_re, b.amplitude_im),
                    position: Vec2::new(b.x, b.z),
                    velocity: Vec2::new(b.vx, b.vz),
                })
                .collect(),
            elapsed: e.time,
            phi_d: e.phi_d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PI: f64 = std::f64::consts::PI;

    fn mat2_expi(g: &Mat2, l: f64) -> Mat2 {
        // exp(iGL) for G with G² = 1: cos(L) + i sin(L) G
        let i = C64::new(0.0, 1.0);
        let (s, c) = l.sin_cos();
        let mut out = [[C64::new(0.0, 0.0); 2]; 2];
        for r in 0..2 {
            for q in 0..2 {
                out[r][q] = g[r][q] * i * s;
                if r == q {
                    out[r][q] += c;
                }
            }
        }
        out
    }

    #[test]
    fn gauge_matrix_axes() {
        let gx = gauge_matrix(Vec2::new(1.0, 0.0)).unwrap();
        assert_eq!(gx[0][1], C64::new(1.0, 0.0));
        assert_eq!(gx[1][0], C64::new(1.0, 0.0));
        assert_eq!(gx[0][0], C64::new(0.0, 0.0));
        let gz = gauge_matrix(Vec2::new(0.0, 1.0)).unwrap();
        assert_eq!(gz[0][0], C64::new(1.0, 0.0));
        assert_eq!(gz[1][1], C64::new(-1.0, 0.0));
        assert_eq!(gz[0][1], C64::new(0.0, 0.0));
        // diagonal direction: κ(σx+σz)/√2, eigenvalues ±1 via G² = 1
        let gd = gauge_matrix(Vec2::new(1.0, 1.0).normalized().unwrap()).unwrap();
        let sq = mat2_mul(&gd, &gd);
        assert!((sq[0][0] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((sq[1][1] - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(sq[0][1].norm() < 1e-12);
        assert!(gauge_matrix(Vec2::new(0.5, 0.0)).is_err());
    }

    #[test]
    fn g_vectors_are_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let phi = rng.gen_range(-PI..PI);
            let n = Vec2::from_angle(phi);
            let g = gauge_matrix(n).unwrap();
            for (vec, val) in [(g_plus(phi), 1.0), (g_minus(phi), -1.0)] {
                assert!((vec.norm() - 1.0).abs() < 1e-12);
                let gv = mat2_mul_vec(&g, &vec);
                let diff = (gv.0[0] - vec.0[0] * val).norm() + (gv.0[1] - vec.0[1] * val).norm();
                assert!(diff < 1e-12);
            }
        }
    }

    #[test]
    fn segment_evolve_axis_examples() {
        // (1,0) along x̂: rotation into (cos L, i sin L)
        let s = DarkState2::from_re(1.0, 0.0);
        let l = 0.7;
        let out = segment_evolve(&s, Vec2::new(1.0, 0.0), l).unwrap();
        assert!((out.0[0] - C64::new(l.cos(), 0.0)).norm() < 1e-12);
        assert!((out.0[1] - C64::new(0.0, l.sin())).norm() < 1e-12);
        // σx eigenvector picks up the phase e^{iκL}
        let inv = std::f64::consts::FRAC_1_SQRT_2;
        let sym = DarkState2::from_re(inv, inv);
        let out = segment_evolve(&sym, Vec2::new(1.0, 0.0), l).unwrap();
        let want = sym.scaled(C64::from_polar(1.0, l));
        assert!((out.0[0] - want.0[0]).norm() + (out.0[1] - want.0[1]).norm() < 1e-12);
        // (1,0) along −ẑ: no split, phase e^{−iκL}
        let out = segment_evolve(&s, Vec2::new(0.0, -1.0), l).unwrap();
        let want = s.scaled(C64::from_polar(1.0, -l));
        assert!((out.0[0] - want.0[0]).norm() + (out.0[1] - want.0[1]).norm() < 1e-12);
    }

    #[test]
    fn segment_evolve_is_unitary_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let phi = rng.gen_range(-PI..PI);
            let n = Vec2::from_angle(phi);
            let l = rng.gen_range(0.0..30.0);
            let s = DarkState2::new(
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
            )
            .normalized();
            let whole = segment_evolve(&s, n, l).unwrap();
            assert!((whole.norm() - 1.0).abs() < 1e-12);
            // subdivision composes to the same evolution
            let parts = 7;
            let mut acc = s;
            for _ in 0..parts {
                acc = segment_evolve(&acc, n, l / parts as f64).unwrap();
            }
            let diff = (acc.0[0] - whole.0[0]).norm() + (acc.0[1] - whole.0[1]).norm();
            assert!(diff < 1e-12);
        }
    }

    #[test]
    fn split_weights_are_half_for_initial_state_onto_x() {
        let b = Branch {
            spinor: DarkState2::from_re(1.0, 0.0),
            amplitude: C64::new(1.0, 0.0),
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
        };
        let (p, m) = branch_split(&b, Vec2::new(1.0, 0.0)).unwrap();
        assert!((p.weight() - 0.5).abs() < 1e-12);
        assert!((m.weight() - 0.5).abs() < 1e-12);
        assert!((p.velocity - Vec2::new(1.0, 0.0)).norm() < 1e-12);
        assert!((m.velocity - Vec2::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn split_of_eigenvector_is_trivial() {
        let b = Branch {
            spinor: g_plus(1.1),
            amplitude: C64::new(0.6, 0.2),
            position: Vec2::ZERO,
            velocity: Vec2::ZERO,
        };
        let (p, m) = branch_split(&b, Vec2::from_angle(1.1)).unwrap();
        assert!((p.weight() - b.weight()).abs() < 1e-12);
        assert!(m.weight() < 1e-24);
    }

    #[test]
    fn overlap_law_cos_sin_half_angle() {
        // |⟨g±(φ₂)|g⁺(φ₁)⟩|² = cos²/sin²(Δφ/2), checked over a φ grid
        for i in 0..24 {
            for j in 0..24 {
                let p1 = -PI + 2.0 * PI * i as f64 / 24.0;
                let p2 = -PI + 2.0 * PI * j as f64 / 24.0;
                let d = (p1 - p2) / 2.0;
                let same = g_plus(p2).dot(&g_plus(p1)).norm_sqr();
                let flip = g_minus(p2).dot(&g_plus(p1)).norm_sqr();
                assert!((same - d.cos().powi(2)).abs() < 1e-12);
                assert!((flip - d.sin().powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lattice_square_cw_to_c() {
        // two sides of the clockwise square: 4 branches on the corners of a
        // square, weights 1/4, with dark vectors frozen from the gauge
        // algebra: UR ½(1,0), LR ½e^{2iκa}(0,1), UL ½e^{−2iκa}(1,0),
        // LL −½(0,1).
        let v = 5.0;
        let tau = 8.0;
        let a = v * tau;
        let path = crate::paths::PathBuilder::new()
            .line(Vec2::new(1.0, 0.0), v, tau)
            .line(Vec2::new(0.0, -1.0), v, tau)
            .build();
        let set = predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).unwrap();
        assert_eq!(set.branches.len(), 4);
        assert!((set.total_weight() - 1.0).abs() < 1e-12);
        let expect = [
            (Vec2::new(tau, tau), C64::new(0.5, 0.0), [1.0, 0.0]),
            (Vec2::new(tau, -tau), C64::from_polar(0.5, 2.0 * a), [0.0, 1.0]),
            (Vec2::new(-tau, tau), C64::from_polar(0.5, -2.0 * a), [1.0, 0.0]),
            (Vec2::new(-tau, -tau), C64::new(-0.5, 0.0), [0.0, 1.0]),
        ];
        for (pos, amp, basis) in expect {
            let b = set
                .branches
                .iter()
                .find(|b| (b.position - pos).norm() < 1e-9)
                .unwrap_or_else(|| panic!("missing branch at ({}, {})", pos.x, pos.z));
            assert!((b.weight() - 0.25).abs() < 1e-12);
            // compare the physical product amplitude × spinor
            let got = [b.spinor.0[0] * b.amplitude, b.spinor.0[1] * b.amplitude];
            let want = [amp * basis[0], amp * basis[1]];
            let diff = (got[0] - want[0]).norm() + (got[1] - want[1]).norm();
            assert!(diff < 1e-9, "branch at ({}, {}): diff {diff:.2e}", pos.x, pos.z);
        }
    }

    #[test]
    fn lattice_square_ccw_to_c_has_two_branches() {
        let v = 5.0;
        let tau = 8.0;
        let path = crate::paths::PathBuilder::new()
            .line(Vec2::new(0.0, -1.0), v, tau)
            .line(Vec2::new(1.0, 0.0), v, tau)
            .build();
        let set = predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).unwrap();
        assert_eq!(set.branches.len(), 2);
        for b in &set.branches {
            assert!((b.weight() - 0.5).abs() < 1e-12);
            // both split along x after the non-splitting A–D leg
            assert!((b.position.z - tau).abs() < 1e-9);
        }
    }

    #[test]
    fn lattice_full_square_cw() {
        let path = paths::square_cw(40.0, 5.0, 2.5);
        let set = predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).unwrap();
        assert_eq!(set.branches.len(), 16);
        assert!((set.total_weight() - 1.0).abs() < 1e-12);
        // x, z ∈ {±τ₁ ± τ₂} with τ₁ = 8, τ₂ = 16
        for b in &set.branches {
            assert!((b.weight() - 1.0 / 16.0).abs() < 1e-12);
            for c in [b.position.x, b.position.z] {
                let ok = [8.0, 24.0].iter().any(|v| (c.abs() - v).abs() < 1e-9);
                assert!(ok, "unexpected coordinate {c}");
            }
        }
        assert!((set.phi_d + 0.5 * set.elapsed).abs() < 1e-12);
    }

    #[test]
    fn lattice_triangle_weights() {
        // weights are products of the 50% initial split and cos²60°/sin²60°
        // turn factors: {1,3,9,3,3,9,3,1}/32 over the 8 sign histories
        let path = paths::triangle_cw(40.0, 5.0);
        let set = predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).unwrap();
        assert_eq!(set.branches.len(), 8);
        assert!((set.total_weight() - 1.0).abs() < 1e-12);
        let mut weights: Vec<f64> = set.branches.iter().map(Branch::weight).collect();
        weights.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want = [1.0, 1.0, 3.0, 3.0, 3.0, 3.0, 9.0, 9.0].map(|w| w / 32.0);
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in weights.iter().zip(want.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        // two branches co-located at the origin with orthogonal spinors
        let groups = set.position_groups(1e-6);
        assert_eq!(groups.len(), 7);
        let origin = groups.iter().find(|(p, _)| p.norm() < 1e-6).unwrap();
        assert!((origin.1 - 2.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn lattice_rejects_arcs() {
        let path = paths::circle(30.0, 1.5, 1.0);
        assert!(predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).is_err());
    }

    #[test]
    fn gauge_matrices_do_not_commute() {
        let gx = gauge_matrix(Vec2::new(1.0, 0.0)).unwrap();
        let gz = gauge_matrix(Vec2::new(0.0, 1.0)).unwrap();
        for &l in &[0.3, 1.0, 2.0, 40.0] {
            let ab = mat2_mul(&mat2_expi(&gx, l), &mat2_expi(&gz, l));
            let ba = mat2_mul(&mat2_expi(&gz, l), &mat2_expi(&gx, l));
            let mut diff = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    diff += (ab[i][j] - ba[i][j]).norm_sqr();
                }
            }
            assert!(diff.sqrt() > 1e-6, "commutator too small at L = {l}");
        }
        // and at κL = π they do commute (both are −1)
        let ab = mat2_mul(&mat2_expi(&gx, PI), &mat2_expi(&gz, PI));
        let ba = mat2_mul(&mat2_expi(&gz, PI), &mat2_expi(&gx, PI));
        let mut diff = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                diff += (ab[i][j] - ba[i][j]).norm_sqr();
            }
        }
        assert!(diff.sqrt() < 1e-12);
    }

    #[test]
    fn noncommutativity_witness_branch_counts() {
        // same endpoints, different paths: A–B–C splits into 4, A–D–C into 2
        let v = 5.0;
        let tau = 8.0;
        let abc = crate::paths::PathBuilder::new()
            .line(Vec2::new(1.0, 0.0), v, tau)
            .line(Vec2::new(0.0, -1.0), v, tau)
            .build();
        let adc = crate::paths::PathBuilder::new()
            .line(Vec2::new(0.0, -1.0), v, tau)
            .line(Vec2::new(1.0, 0.0), v, tau)
            .build();
        let s0 = DarkState2::from_re(1.0, 0.0);
        assert_eq!(predict_lattice(&abc, &s0).unwrap().branches.len(), 4);
        assert_eq!(predict_lattice(&adc, &s0).unwrap().branches.len(), 2);
    }

    // Independent closed-form solution via the rotating frame: with
    // U(t) = exp(−i σ_y ω t / 2), the generator becomes the constant
    // H̃ = −κ v_d σ_z − (ω/2) σ_y, so c(t) = U(t) exp(−i H̃ t) c(0).
    fn circle_exact(s0: &DarkState2, r_l: f64, v_d: f64, t: f64) -> DarkState2 {
        let omega = v_d / r_l;
        let i = C64::new(0.0, 1.0);
        let zero = C64::new(0.0, 0.0);
        // H̃ = −κ v_d σ_z − (ω/2) σ_y
        let h = [
            [C64::new(-v_d, 0.0), i * (omega / 2.0)],
            [-i * (omega / 2.0), C64::new(v_d, 0.0)],
        ];
        let mag = (v_d * v_d + omega * omega / 4.0).sqrt();
        let (s, c) = (mag * t).sin_cos();
        let mut exph = [[zero; 2]; 2];
        for r in 0..2 {
            for q in 0..2 {
                exph[r][q] = h[r][q] * (-i * s / mag);
                if r == q {
                    exph[r][q] += c;
                }
            }
        }
        let (sy, cy) = (omega * t / 2.0).sin_cos();
        let u = [
            [C64::new(cy, 0.0), C64::new(-sy, 0.0)],
            [C64::new(sy, 0.0), C64::new(cy, 0.0)],
        ];
        mat2_mul_vec(&u, &mat2_mul_vec(&exph, s0))
    }

    #[test]
    fn circle_ode_matches_rotating_frame_solution() {
        let s0 = DarkState2::from_re(1.0, 0.0);
        for &(r_l, v_d, sweep) in &[(5.0, 1.5, 2.0), (30.0, 1.5, PI), (2.0, 0.7, 4.0)] {
            let got = circle_evolve_ode(&s0, r_l, v_d, sweep, 40_000).unwrap();
            let t = sweep * r_l / v_d;
            let want = circle_exact(&s0, r_l, v_d, t);
            let diff = (got.0[0] - want.0[0]).norm() + (got.0[1] - want.0[1]).norm();
            assert!(diff < 1e-9, "r_l={r_l}: diff {diff:.2e}");
            assert!((got.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn circle_ode_zero_sweep_is_identity() {
        let s0 = DarkState2::new(C64::new(0.6, 0.1), C64::new(0.2, -0.77)).normalized();
        let got = circle_evolve_ode(&s0, 10.0, 1.0, 0.0, 100).unwrap();
        assert!((got.0[0] - s0.0[0]).norm() + (got.0[1] - s0.0[1]).norm() < 1e-14);
    }

    #[test]
    fn circle_ode_step_halving_converges() {
        let s0 = DarkState2::from_re(1.0, 0.0);
        let fine = circle_evolve_ode(&s0, 75.0, 1.5, 2.0 * PI, 2_000_000).unwrap();
        let half = circle_evolve_ode(&s0, 75.0, 1.5, 2.0 * PI, 1_000_000).unwrap();
        let diff = (fine.0[0] - half.0[0]).norm() + (fine.0[1] - half.0[1]).norm();
        assert!(diff < 1e-10, "step halving changes result by {diff:.2e}");
    }

    #[test]
    fn adiabatic_following_thresholds() {
        let s0 = DarkState2::from_re(1.0, 0.0);
        // paper-scale circle: essentially perfect following
        let good = circle_report(&s0, 75.0, 1.5, 2.0 * PI, 200_000).unwrap();
        assert!(good.min_following >= 0.999, "min following {}", good.min_following);
        assert!(good.final_following >= 0.999);
        // r_L κ = 1 violates the adiabatic condition
        let bad = circle_report(&s0, 1.0, 1.5, 2.0 * PI, 50_000).unwrap();
        assert!(bad.min_following < 0.9, "min following {}", bad.min_following);
    }

    #[test]
    fn berry_phase_full_loop_and_quarter_turn() {
        // the residual non-adiabatic phase scales as π/(4κr_L); r_L = 300
        // keeps it well inside the ±0.01 window
        let s0 = DarkState2::from_re(1.0, 0.0);
        let full = circle_report_auto(&s0, 300.0, 1.5, 2.0 * PI, 1e-10).unwrap();
        assert!(
            wrap_phase(full.beta - PI).abs() < 0.01,
            "full-loop beta {}",
            full.beta
        );
        let quarter = circle_report_auto(&s0, 300.0, 1.5, PI / 2.0, 1e-10).unwrap();
        let (_, beta_ad) = adiabatic_solution(PI / 2.0, quarter.final_angle);
        assert!((beta_ad - PI / 4.0).abs() < 1e-12);
        assert!((quarter.beta - PI / 4.0).abs() < 0.01, "quarter beta {}", quarter.beta);
    }

    #[test]
    fn adiabatic_solution_examples() {
        let (_, beta) = adiabatic_solution(1.3, 1.3);
        assert_eq!(beta, 0.0);
        let (state, beta) = adiabatic_solution(PI / 2.0, PI / 2.0 - 2.0 * PI);
        assert!((beta - PI).abs() < 1e-12);
        let g = g_plus(PI / 2.0 - 2.0 * PI);
        assert!((state.0[0] - g.0[0]).norm() + (state.0[1] - g.0[1]).norm() < 1e-12);
    }

    #[test]
    fn group_velocities_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let v_d = rng.gen_range(0.0..10.0);
            let k0 = rng.gen_range(-3.0..3.0);
            let rep = group_velocity_identities(v_d, k0);
            assert!(rep.max_deviation < 1e-12);
            assert!((rep.lab[0] - 1.0).abs() < 1e-9);
            assert!((rep.lab[1] + 1.0).abs() < 1e-9);
        }
        // v_d = 0 limit
        let rep = group_velocity_identities(0.0, 0.0);
        assert!(rep.max_deviation < 1e-12);
        // dance radius example: r_L = 75/κ at v_d = 1.5 gives 50/κ
        assert!((dance_radius(75.0, 1.5) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn branch_set_export_round_trip() {
        let path = paths::triangle_cw(40.0, 5.0);
        let set = predict_lattice(&path, &DarkState2::from_re(1.0, 0.0)).unwrap();
        let export = BranchSetExport::from(&set);
        let json = serde_json::to_string(&export).unwrap();
        let back: BranchSetExport = serde_json::from_str(&json).unwrap();
        let set2 = BranchSet::from(&back);
        assert_eq!(set.branches.len(), set2.branches.len());
        assert!((set.phi_d - set2.phi_d).abs() < 1e-15);
        for (a, b) in set.branches.iter().zip(set2.branches.iter()) {
            assert!((a.amplitude - b.amplitude).norm() < 1e-14);
            assert!((a.position - b.position).norm() < 1e-12);
        }
    }
}
