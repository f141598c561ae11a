//! Turns simulated fields into the observables the oracle predicts:
//! sub-wavepacket clusters, weights, relative phases, trajectory fits, and
//! quantitative oracle comparisons.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::grid::{dispersed_width, gaussian_envelope, GridSpec, SpinorField};
use crate::model::{embed_dark, PhysicalParams};
use crate::oracle::{wrap_phase, BranchSet};
use crate::{Error, Result, Vec2};

/// One detected sub-wavepacket.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: Vec2,
    /// Integrated density of the component relative to the total norm².
    pub weight_raw: f64,
    /// Weight renormalized over all surviving components.
    pub weight: f64,
}

/// Connected-component cluster detection on the density mask
/// ρ ≥ threshold_frac · max(ρ) with 4-neighborhood labeling. Components
/// lighter than 0.005 (raw) are discarded and the remaining weights
/// renormalized.
pub fn detect_subpackets(
    density: &[f64],
    grid: &GridSpec,
    threshold_frac: f64,
) -> Result<Vec<Cluster>> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(Error::Invalid(format!(
            "threshold_frac = {threshold_frac} must lie in (0, 1)"
        )));
    }
    assert_eq!(density.len(), grid.len());
    let max = density.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(Vec::new());
    }
    let threshold = threshold_frac * max;
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return Ok(Vec::new());
    }

    let nx = grid.nx;
    let nz = grid.nz;
    let mut label = vec![u32::MAX; density.len()];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for start in 0..density.len() {
        if label[start] != u32::MAX || density[start] < threshold {
            continue;
        }
        let id = clusters.len() as u32;
        let mut mass = 0.0;
        let mut cx = 0.0;
        let mut cz = 0.0;
        stack.push(start);
        label[start] = id;
        while let Some(idx) = stack.pop() {
            let (ix, iz) = (idx / nz, idx % nz);
            let w = density[idx];
            mass += w;
            cx += w * grid.x(ix);
            cz += w * grid.z(iz);
            let mut push = |jx: usize, jz: usize| {
                let j = jx * nz + jz;
                if label[j] == u32::MAX && density[j] >= threshold {
                    label[j] = id;
                    stack.push(j);
                }
            };
            if ix > 0 {
                push(ix - 1, iz);
            }
            if ix + 1 < nx {
                push(ix + 1, iz);
            }
            if iz > 0 {
                push(ix, iz - 1);
            }
            if iz + 1 < nz {
                push(ix, iz + 1);
            }
        }
        clusters.push(Cluster {
            centroid: Vec2::new(cx / mass, cz / mass),
            weight_raw: mass / total,
            weight: 0.0,
        });
    }
    clusters.retain(|c| c.weight_raw >= 0.005);
    let surviving: f64 = clusters.iter().map(|c| c.weight_raw).sum();
    for c in clusters.iter_mut() {
        c.weight = c.weight_raw / surviving;
    }
    clusters.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    Ok(clusters)
}

/// Unit-norm matched filter for one branch: a Gaussian at the branch
/// position (complex width for the free-dispersion chirp after
/// `chirp_time`) carrying the branch dark spinor embedded at displacement d.
pub fn branch_template(
    grid: &GridSpec,
    position: Vec2,
    spinor: &crate::oracle::DarkState2,
    sigma: f64,
    chirp_time: f64,
    d: Vec2,
    p: &PhysicalParams,
) -> Result<SpinorField> {
    let s = dispersed_width(sigma, chirp_time, p.mass);
    let env = gaussian_envelope(grid, position, s, sigma, Vec2::ZERO);
    let c1: Vec<C64> = env.iter().map(|e| e * spinor.0[0]).collect();
    let c2: Vec<C64> = env.iter().map(|e| e * spinor.0[1]).collect();
    let mut t = embed_dark(grid, d, p, &c1, &c2)?;
    t.normalize()?;
    Ok(t)
}

/// Coherent oracle-synthesized field Σ_b amplitude_b · template_b,
/// normalized.
pub fn synthesize_oracle_field(
    grid: &GridSpec,
    prediction: &BranchSet,
    sigma: f64,
    chirp_time: f64,
    d: Vec2,
    p: &PhysicalParams,
) -> Result<SpinorField> {
    let mut out = SpinorField::zeros(grid.clone());
    for b in &prediction.branches {
        let t = branch_template(grid, b.position, &b.spinor, sigma, chirp_time, d, p)?;
        for (o, v) in out.raw_mut().iter_mut().zip(t.raw().iter()) {
            *o += b.amplitude * v;
        }
    }
    out.normalize()?;
    Ok(out)
}

/// Per-branch phase measurement.
#[derive(Debug, Clone, Serialize)]
pub struct BranchPhase {
    /// Raw projection ⟨template|ψ⟩.
    pub overlap: C64,
    /// Amplitude from the joint least-squares fit over all branch templates
    /// (removes cross-talk between overlapping packets).
    pub fitted: C64,
    /// arg(fitted) relative to the reference branch, wrapped to (−π, π].
    pub phase_rel: f64,
    /// False when the raw overlap magnitude is below 0.1 × expected weight.
    pub reliable: bool,
}

/// Solve the small complex least-squares system M a = o by Gaussian
/// elimination with partial pivoting (M is the Hermitian template Gram
/// matrix, well conditioned for distinct branch positions).
fn solve_complex(mut m: Vec<Vec<C64>>, mut rhs: Vec<C64>) -> Result<Vec<C64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&a, &b| m[a][col].norm().partial_cmp(&m[b][col].norm()).unwrap())
            .unwrap();
        if m[pivot][col].norm() < 1e-12 {
            return Err(Error::Numerics("singular template Gram matrix".into()));
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        let inv = m[col][col].inv();
        for row in (col + 1)..n {
            let f = m[row][col] * inv;
            for k in col..n {
                let sub = f * m[col][k];
                m[row][k] -= sub;
            }
            let sub = f * rhs[col];
            rhs[row] -= sub;
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); n];
    for row in (0..n).rev() {
        let mut acc = rhs[row];
        for k in (row + 1)..n {
            let sub = m[row][k] * x[k];
            acc -= sub;
        }
        x[row] = acc * m[row][row].inv();
    }
    Ok(x)
}

/// Project the field onto every branch template and report per-branch
/// phases relative to the largest-weight branch. Templates of overlapping
/// packets are disentangled through a joint least-squares fit; the raw
/// projections are also reported.
pub fn relative_phases(
    field: &SpinorField,
    prediction: &BranchSet,
    sigma: f64,
    chirp_time: f64,
    d: Vec2,
    p: &PhysicalParams,
) -> Result<Vec<BranchPhase>> {
    if prediction.branches.is_empty() {
        return Ok(Vec::new());
    }
    let grid = field.grid();
    let templates: Vec<SpinorField> = prediction
        .branches
        .iter()
        .map(|b| branch_template(grid, b.position, &b.spinor, sigma, chirp_time, d, p))
        .collect::<Result<_>>()?;
    let n = templates.len();
    let overlaps: Vec<C64> = templates.iter().map(|t| t.inner(field)).collect();
    let mut gram = vec![vec![C64::new(0.0, 0.0); n]; n];
    for a in 0..n {
        for b in a..n {
            let g = templates[a].inner(&templates[b]);
            gram[a][b] = g;
            gram[b][a] = g.conj();
        }
    }
    let fitted = solve_complex(gram, overlaps.clone())?;

    let reference = prediction
        .branches
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.weight().partial_cmp(&b.weight()).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let ref_arg = fitted[reference].arg();
    Ok((0..n)
        .map(|i| BranchPhase {
            overlap: overlaps[i],
            fitted: fitted[i],
            phase_rel: wrap_phase(fitted[i].arg() - ref_arg),
            reliable: overlaps[i].norm() >= 0.1 * prediction.branches[i].weight(),
        })
        .collect())
}

/// Algebraic least-squares circle fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CircleFit {
    pub center: Vec2,
    pub radius: f64,
    pub rms_residual: f64,
}

/// Fit a circle to ≥ 8 trajectory points (they should span at least a
/// quarter arc for a meaningful radius). Collinear points produce a
/// degenerate-fit error.
pub fn fit_circle(points: &[Vec2]) -> Result<CircleFit> {
    if points.len() < 8 {
        return Err(Error::Invalid(format!(
            "circle fit needs >= 8 points, got {}",
            points.len()
        )));
    }
    // center the data for conditioning and exact translation invariance
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::ZERO, |acc, p| acc + *p) * (1.0 / n);
    let pts: Vec<Vec2> = points.iter().map(|p| *p - mean).collect();

    // minimize Σ (x² + z² + D x + E z + F)²  => 3×3 normal equations
    let (mut sxx, mut sxz, mut szz, mut sx, mut sz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut sxr, mut szr, mut sr) = (0.0, 0.0, 0.0);
    for p in &pts {
        let r2 = p.x * p.x + p.z * p.z;
        sxx += p.x * p.x;
        sxz += p.x * p.z;
        szz += p.z * p.z;
        sx += p.x;
        sz += p.z;
        sxr += p.x * r2;
        szr += p.z * r2;
        sr += r2;
    }
    let a = [[sxx, sxz, sx], [sxz, szz, sz], [sx, sz, n]];
    let b = [-sxr, -szr, -sr];
    let det3 = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(&a);
    let scale = (sxx + szz).powi(2) * n + 1e-300;
    if det.abs() < 1e-12 * scale {
        return Err(Error::DegenerateFit(
            "points are collinear or too clustered".into(),
        ));
    }
    let mut cols = [[0.0; 3]; 3];
    for k in 0..3 {
        let mut m = a;
        for row in 0..3 {
            m[row][k] = b[row];
        }
        cols[k] = [0.0; 3];
        cols[k][k] = det3(&m) / det;
    }
    let (d, e, f) = (cols[0][0], cols[1][1], cols[2][2]);
    let center_local = Vec2::new(-d / 2.0, -e / 2.0);
    let radius_sq = center_local.dot(center_local) - f;
    if radius_sq <= 0.0 {
        return Err(Error::DegenerateFit("negative squared radius".into()));
    }
    let radius = radius_sq.sqrt();
    let mut ss = 0.0;
    for p in &pts {
        let dist = (*p - center_local).norm();
        ss += (dist - radius).powi(2);
    }
    Ok(CircleFit {
        center: center_local + mean,
        radius,
        rms_residual: (ss / n).sqrt(),
    })
}

/// Quantitative oracle comparison.
#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub cluster_count_match: bool,
    pub detected_count: usize,
    pub expected_count: usize,
    pub position_rms: f64,
    pub weight_rms: f64,
    pub phase_rms: f64,
    pub internal_fidelity: f64,
}

/// Compare a simulated field against a branch-set prediction: density
/// cluster count and positions, template-projected branch weights, relative
/// phases, and the coherent fidelity |⟨oracle field|ψ⟩|².
#[allow(clippy::too_many_arguments)]
pub fn compare_to_oracle(
    field: &SpinorField,
    prediction: &BranchSet,
    sigma: f64,
    chirp_time: f64,
    d: Vec2,
    p: &PhysicalParams,
    detect_threshold: f64,
) -> Result<OracleComparison> {
    let grid = field.grid();
    let clusters = detect_subpackets(&field.density(), grid, detect_threshold)?;
    let groups = prediction.position_groups(1e-6);
    let expected_count = groups.len();
    let detected_count = clusters.len();

    let mut position_sq = 0.0;
    for (pos, _) in &groups {
        let nearest = clusters
            .iter()
            .map(|c| (c.centroid - *pos).norm())
            .fold(f64::INFINITY, f64::min);
        if nearest.is_finite() {
            position_sq += nearest * nearest;
        }
    }
    let position_rms = (position_sq / expected_count.max(1) as f64).sqrt();

    let phases = relative_phases(field, prediction, sigma, chirp_time, d, p)?;
    let fit_total: f64 = phases.iter().map(|ph| ph.fitted.norm_sqr()).sum();
    let mut weight_sq = 0.0;
    let mut phase_sq = 0.0;
    let mut phase_n = 0usize;
    let reference = prediction
        .branches
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.weight().partial_cmp(&b.weight()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let ref_arg = prediction.branches[reference].amplitude.arg();
    for (b, ph) in prediction.branches.iter().zip(phases.iter()) {
        let w_fit = ph.fitted.norm_sqr() / fit_total;
        weight_sq += (w_fit - b.weight()).powi(2);
        if ph.reliable {
            let want = wrap_phase(b.amplitude.arg() - ref_arg);
            phase_sq += wrap_phase(ph.phase_rel - want).powi(2);
            phase_n += 1;
        }
    }
    let weight_rms = (weight_sq / prediction.branches.len().max(1) as f64).sqrt();
    let phase_rms = (phase_sq / phase_n.max(1) as f64).sqrt();

    let synth = synthesize_oracle_field(grid, prediction, sigma, chirp_time, d, p)?;
    let mut normalized = field.clone();
    normalized.normalize()?;
    let internal_fidelity = synth.inner(&normalized).norm_sqr();

    Ok(OracleComparison {
        cluster_count_match: detected_count == expected_count,
        detected_count,
        expected_count,
        position_rms,
        weight_rms,
        phase_rms,
        internal_fidelity,
    })
}

/// One record of the scenario summary JSON.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRecord {
    pub scenario: String,
    pub time: f64,
    pub clusters: Vec<SummaryCluster>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<CircleFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fidelity: Option<f64>,
    pub bright_population: f64,
    pub boundary_density: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryCluster {
    pub x: f64,
    pub z: f64,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}
