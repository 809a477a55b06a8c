//! Second-order theta functions, the Kummer map and rank tests for
//! `(m+2)`-secant configurations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{singular_values, CMatrix};
use crate::theta::{theta_eval, theta_jet_orders, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};
use crate::CVec;

/// Points closer than this (in reduced lattice coordinates) are equal on `X`.
pub const POINT_SEPARATION: f64 = 1e-8;
/// Default relative singular-value cutoff for rank decisions.
pub const DEFAULT_TOL_RANK: f64 = 1e-7;
const PROJECTIVE_COINCIDENCE: f64 = 1e-9;

/// `ε_j ∈ {0,1}^g` for basis index `j`, first coordinate most significant.
pub fn basis_bits(g: usize, j: usize) -> Vec<u8> {
    (0..g).map(|i| ((j >> (g - 1 - i)) & 1) as u8).collect()
}

fn doubled(z: &[Complex64]) -> CVec {
    z.iter().map(|c| c * 2.0).collect()
}

/// `θ_j(z) = θ[ε_j/2, 0](2z, 2Ω)` for `j = 0, …, 2^g − 1`.
pub fn second_order_basis(sm: &SiegelMatrix, z: &[Complex64], policy: &TruncationPolicy) -> Result<CVec> {
    let g = sm.genus();
    let z2 = doubled(z);
    (0..1usize << g)
        .map(|j| {
            theta_eval(
                sm.doubled(),
                &ThetaCharacteristic::half_integer(&basis_bits(g, j)),
                &z2,
                policy,
            )
        })
        .collect()
}

/// Basis values and their derivatives along `d` at `z`.
pub fn second_order_basis_with_derivative(
    sm: &SiegelMatrix,
    z: &[Complex64],
    d: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<(CVec, CVec)> {
    let g = sm.genus();
    let z2 = doubled(z);
    let d2 = [doubled(d)];
    let mut values = Vec::with_capacity(1 << g);
    let mut derivs = Vec::with_capacity(1 << g);
    for j in 0..1usize << g {
        let ch = ThetaCharacteristic::half_integer(&basis_bits(g, j));
        let jet = theta_jet_orders(sm.doubled(), &ch, &z2, &d2, &[vec![1]], policy)?;
        values.push(jet.value());
        derivs.push(jet.get(&[1]).expect("requested order"));
    }
    Ok((values, derivs))
}

/// `|θ(z+w)θ(z−w) − Σ_j θ_j(z)θ_j(w)| / (1 + |θ(z+w)θ(z−w)|)`.
pub fn addition_formula_residual(
    sm: &SiegelMatrix,
    z: &[Complex64],
    w: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<f64> {
    let g = sm.genus();
    let ch = ThetaCharacteristic::zero(g);
    let plus: CVec = z.iter().zip(w).map(|(a, b)| a + b).collect();
    let minus: CVec = z.iter().zip(w).map(|(a, b)| a - b).collect();
    let lhs = theta_eval(sm, &ch, &plus, policy)? * theta_eval(sm, &ch, &minus, policy)?;
    let bz = second_order_basis(sm, z, policy)?;
    let bw = second_order_basis(sm, w, policy)?;
    let rhs: Complex64 = bz.iter().zip(&bw).map(|(a, b)| a * b).sum();
    Ok((lhs - rhs).norm() / (1.0 + lhs.norm()))
}

/// Projective point `[θ_0(z) : ⋯ : θ_N(z)]`, scaled so that its
/// largest-magnitude coordinate equals one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KummerPoint {
    pub coords: CVec,
    pub source_z: CVec,
}

impl KummerPoint {
    /// Sine of the angle between the two coordinate lines.
    pub fn distance(&self, other: &KummerPoint) -> f64 {
        projective_distance(&self.coords, &other.coords)
    }
}

pub fn projective_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    let na: f64 = a.iter().map(|c| c.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|c| c.norm_sqr()).sum();
    let dot: Complex64 = a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    let proj = dot / na;
    let orth: f64 = a.iter().zip(b).map(|(x, y)| (y - proj * x).norm_sqr()).sum();
    (orth / nb).sqrt()
}

fn normalize_max(mut v: CVec) -> Result<CVec> {
    let pivot = v
        .iter()
        .copied()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .ok_or(Error::AllCoordinatesVanish)?;
    if !(pivot.norm() > 0.0) || !pivot.norm().is_finite() {
        return Err(Error::AllCoordinatesVanish);
    }
    for c in &mut v {
        *c /= pivot;
    }
    Ok(v)
}

pub fn kummer_map(sm: &SiegelMatrix, z: &[Complex64], policy: &TruncationPolicy) -> Result<KummerPoint> {
    let coords = normalize_max(second_order_basis(sm, z, policy)?)?;
    Ok(KummerPoint {
        coords,
        source_z: z.to_vec(),
    })
}

/// The points `a_1, …, a_{m+2}` of a secant configuration together with
/// the centred points `u = a_1 − ½(a_1+a_2)`, `b_j = a_{j+2} − ½(a_1+a_2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecantConfig {
    pub m: usize,
    pub points_a: Vec<CVec>,
    pub centered_u: CVec,
    pub centered_b: Vec<CVec>,
}

fn euclid(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Centres a list of at least three points.
pub fn center_config(points_a: &[CVec]) -> Result<SecantConfig> {
    if points_a.len() < 3 {
        return Err(Error::DegenerateInput(format!(
            "a secant configuration needs at least 3 points, got {}",
            points_a.len()
        )));
    }
    let g = points_a[0].len();
    if let Some(bad) = points_a.iter().find(|p| p.len() != g) {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: bad.len(),
        });
    }
    for i in 0..points_a.len() {
        for j in 0..i {
            if euclid(&points_a[i], &points_a[j]) < POINT_SEPARATION {
                return Err(Error::DuplicatePoints(format!("a_{} = a_{}", j + 1, i + 1)));
            }
        }
    }
    let mid: CVec = points_a[0]
        .iter()
        .zip(&points_a[1])
        .map(|(x, y)| (x + y) * 0.5)
        .collect();
    let shift = |p: &CVec| -> CVec { p.iter().zip(&mid).map(|(x, c)| x - c).collect() };
    Ok(SecantConfig {
        m: points_a.len() - 2,
        centered_u: shift(&points_a[0]),
        centered_b: points_a[2..].iter().map(shift).collect(),
        points_a: points_a.to_vec(),
    })
}

impl SecantConfig {
    /// Configuration with `a_1 = u`, `a_2 = −u`, `a_{j+2} = b_j`.
    pub fn from_centered(u: &[Complex64], b: &[CVec]) -> Result<Self> {
        let mut points = vec![u.to_vec(), u.iter().map(|c| -c).collect()];
        points.extend(b.iter().cloned());
        center_config(&points)
    }

    pub fn genus(&self) -> usize {
        self.centered_u.len()
    }

    /// Checks the points are distinct on `X` and `2u ≠ 0` on `X`.
    pub fn validate(&self, sm: &SiegelMatrix) -> Result<()> {
        let g = sm.genus();
        if self.genus() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                found: self.genus(),
            });
        }
        let pts = &self.points_a;
        for i in 0..pts.len() {
            for j in 0..i {
                if sm.lattice_distance(&pts[i], &pts[j]) < POINT_SEPARATION {
                    return Err(Error::DuplicatePoints(format!(
                        "a_{} ≡ a_{} modulo the lattice",
                        j + 1,
                        i + 1
                    )));
                }
            }
        }
        let two_u: CVec = self.centered_u.iter().map(|c| c * 2.0).collect();
        if sm.lattice_distance(&two_u, &vec![Complex64::new(0.0, 0.0); g]) < POINT_SEPARATION {
            return Err(Error::DuplicatePoints("2u ≡ 0 modulo the lattice".into()));
        }
        Ok(())
    }
}

/// Outcome of a rank test on the matrix of Kummer rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecantReport {
    pub m: usize,
    pub matrix_rows: usize,
    pub matrix_cols: usize,
    pub singular_values: Vec<f64>,
    pub rank_estimate: usize,
    pub is_secant: bool,
    /// `σ_{r+1}/σ_r` at the decision index `r`, zero when `r` is the full
    /// number of singular values.
    pub gap_ratio: f64,
}

fn check_tol_rank(tol_rank: f64) -> Result<()> {
    if !(tol_rank > 0.0 && tol_rank < 1.0) {
        return Err(Error::DegenerateInput(format!(
            "tol_rank must lie in (0, 1), got {tol_rank}"
        )));
    }
    Ok(())
}

/// Rank report for rows spanning at most an `m`-plane, computed on the
/// row-normalised matrix.
pub fn rank_report(rows: &[CVec], m: usize, tol_rank: f64) -> Result<SecantReport> {
    check_tol_rank(tol_rank)?;
    let cols = rows.first().map_or(0, Vec::len);
    let mut mat = CMatrix::zeros(rows.len(), cols);
    for (i, row) in rows.iter().enumerate() {
        let norm = row.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::AllCoordinatesVanish);
        }
        for (j, c) in row.iter().enumerate() {
            mat[(i, j)] = c / norm;
        }
    }
    let sv = singular_values(&mat);
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s >= tol_rank * smax).count();
    let gap_ratio = if rank < sv.len() && rank > 0 {
        sv[rank] / sv[rank - 1]
    } else {
        0.0
    };
    Ok(SecantReport {
        m,
        matrix_rows: rows.len(),
        matrix_cols: cols,
        singular_values: sv,
        rank_estimate: rank,
        is_secant: rank <= m + 1,
        gap_ratio,
    })
}

/// Rank test for `K(ζ+a_1) ∧ ⋯ ∧ K(ζ+a_{m+2}) = 0`.
pub fn honest_secant_test(
    sm: &SiegelMatrix,
    config: &SecantConfig,
    zeta: &[Complex64],
    tol_rank: f64,
    policy: &TruncationPolicy,
) -> Result<SecantReport> {
    check_tol_rank(tol_rank)?;
    config.validate(sm)?;
    let rows = config
        .points_a
        .iter()
        .map(|a| {
            let p: CVec = a.iter().zip(zeta).map(|(x, z)| x + z).collect();
            second_order_basis(sm, &p, policy)
        })
        .collect::<Result<Vec<CVec>>>()?;
    for i in 0..rows.len() {
        for j in 0..i {
            if projective_distance(&rows[i], &rows[j]) < PROJECTIVE_COINCIDENCE {
                return Err(Error::DegenerateInput(format!(
                    "K(ζ+a_{}) and K(ζ+a_{}) coincide",
                    j + 1,
                    i + 1
                )));
            }
        }
    }
    rank_report(&rows, config.m, tol_rank)
}

/// Rank test for `K(u), D_{d1}K(u), K(b_1), …, K(b_m)` lying on an
/// `m`-plane.
pub fn degenerate_secant_test(
    sm: &SiegelMatrix,
    u: &[Complex64],
    d1: &[Complex64],
    b: &[CVec],
    tol_rank: f64,
    policy: &TruncationPolicy,
) -> Result<SecantReport> {
    check_tol_rank(tol_rank)?;
    if d1.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::ZeroDirection);
    }
    if b.is_empty() {
        return Err(Error::DegenerateInput("at least one point b_j is required".into()));
    }
    let (value, deriv) = second_order_basis_with_derivative(sm, u, d1, policy)?;
    let mut rows = vec![value, deriv];
    for bj in b {
        rows.push(second_order_basis(sm, bj, policy)?);
    }
    rank_report(&rows, b.len(), tol_rank)
}
