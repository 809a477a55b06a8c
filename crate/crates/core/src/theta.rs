//! Riemann theta functions with characteristics and their directional jets.
//!
//! The series
//!
//! ```text
//! θ[a,b](z, Ω) = Σ_{n ∈ ℤ^g} exp(iπ (n+a)ᵀ Ω (n+a) + 2πi (n+a)ᵀ (z+b))
//! ```
//!
//! is summed over the lattice points of an ellipsoid in the norm induced by
//! `Y = Im Ω`, centred where the summand peaks. The ellipsoid radius is chosen
//! from an explicit tail bound so that the omitted terms sum to at most the
//! requested absolute tolerance.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CVec;

/// Highest total derivative order a jet may carry.
pub const MAX_JET_ORDER: usize = 12;

const SYMMETRY_RTOL: f64 = 1e-14;
const SHELL_WIDTH: f64 = 0.25;
const RADIUS_RESOLUTION: f64 = 1.0 / 64.0;
const CACHE_QUANTUM: f64 = 8.0;

/// Accuracy target and safety cap for the lattice sums.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    /// Absolute bound on the omitted tail.
    pub tol: f64,
    /// Largest admissible ellipsoid radius.
    pub max_radius: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_radius: 20.0,
        }
    }
}

impl TruncationPolicy {
    pub fn new(tol: f64, max_radius: f64) -> Result<Self> {
        let policy = Self { tol, max_radius };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidPolicy(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.max_radius >= 1.0 && self.max_radius.is_finite()) {
            return Err(Error::InvalidPolicy(format!(
                "max_radius must be at least 1, got {}",
                self.max_radius
            )));
        }
        Ok(())
    }
}

/// Real characteristic `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCharacteristic {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ThetaCharacteristic {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        if a.iter().chain(&b).any(|x| !x.is_finite()) {
            return Err(Error::DegenerateInput("characteristic entries must be finite".into()));
        }
        Ok(Self { a, b })
    }

    pub fn zero(g: usize) -> Self {
        Self {
            a: vec![0.0; g],
            b: vec![0.0; g],
        }
    }

    /// `[ε/2, 0]` for a bit vector `ε`.
    pub fn half_integer(bits: &[u8]) -> Self {
        Self {
            a: bits.iter().map(|&e| 0.5 * f64::from(e)).collect(),
            b: vec![0.0; bits.len()],
        }
    }

    pub fn genus(&self) -> usize {
        self.a.len()
    }
}

/// A validated period matrix in the Siegel upper half-space.
///
/// Cloning is cheap; clones share the lattice-point cache.
#[derive(Clone)]
pub struct SiegelMatrix {
    inner: Arc<SiegelInner>,
}

struct SiegelInner {
    g: usize,
    omega: DMatrix<Complex64>,
    im_inv: DMatrix<f64>,
    /// Upper-triangular `T` with `Y = Tᵀ T`.
    chol_upper: DMatrix<f64>,
    min_eig: f64,
    max_eig: f64,
    lattice: RwLock<HashMap<u64, Arc<Vec<i32>>>>,
    doubled: OnceLock<SiegelMatrix>,
}

impl fmt::Debug for SiegelMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SiegelMatrix")
            .field("g", &self.inner.g)
            .field("omega", &self.inner.omega)
            .finish()
    }
}

/// Checks symmetry and positivity of `Im Ω` and precomputes the data the
/// lattice sums need.
pub fn validate_siegel(omega: &DMatrix<Complex64>) -> Result<SiegelMatrix> {
    let (rows, cols) = omega.shape();
    if rows != cols || rows == 0 {
        return Err(Error::NotSquare { rows, cols });
    }
    let g = rows;
    let scale = omega.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut max_asymmetry: f64 = 0.0;
    for i in 0..g {
        for j in 0..i {
            max_asymmetry = max_asymmetry.max((omega[(i, j)] - omega[(j, i)]).norm());
        }
    }
    if !scale.is_finite() {
        return Err(Error::DegenerateInput("period matrix has non-finite entries".into()));
    }
    if max_asymmetry > SYMMETRY_RTOL * scale {
        return Err(Error::NotSymmetric { max_asymmetry });
    }
    let omega = (omega + omega.transpose()).map(|c| c * 0.5);
    let im = omega.map(|c| c.im);
    let eig = SymmetricEigen::new(im.clone());
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    if !(min_eig > 0.0) {
        return Err(Error::ImaginaryPartNotPositiveDefinite {
            smallest_eigenvalue: min_eig,
        });
    }
    let chol = Cholesky::new(im.clone()).ok_or(Error::ImaginaryPartNotPositiveDefinite {
        smallest_eigenvalue: min_eig,
    })?;
    let chol_upper = chol.l().transpose();
    let im_inv = chol.inverse();
    Ok(SiegelMatrix {
        inner: Arc::new(SiegelInner {
            g,
            omega,
            im_inv,
            chol_upper,
            min_eig,
            max_eig,
            lattice: RwLock::new(HashMap::new()),
            doubled: OnceLock::new(),
        }),
    })
}

impl SiegelMatrix {
    /// Builds from row-major entries.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let g = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != g) {
            return Err(Error::NotSquare {
                rows: g,
                cols: bad.len(),
            });
        }
        validate_siegel(&DMatrix::from_fn(g, g, |i, j| rows[i][j]))
    }

    pub fn genus(&self) -> usize {
        self.inner.g
    }

    pub fn omega(&self) -> &DMatrix<Complex64> {
        &self.inner.omega
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.inner.omega[(i, j)]
    }

    /// Smallest eigenvalue of `Im Ω`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eig
    }

    /// The matrix `2Ω`, used by the second-order theta functions.
    pub fn doubled(&self) -> &SiegelMatrix {
        self.inner.doubled.get_or_init(|| {
            validate_siegel(&self.inner.omega.map(|c| c * 2.0)).expect("2Ω of a valid period matrix is valid")
        })
    }

    /// `Ω q` for a real vector `q`.
    pub fn omega_times(&self, q: &[f64]) -> CVec {
        let g = self.inner.g;
        (0..g)
            .map(|i| (0..g).map(|j| self.inner.omega[(i, j)] * q[j]).sum())
            .collect()
    }

    /// Coordinates `(p, q)` with `z = p + Ω q`.
    pub fn lattice_coordinates(&self, z: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let g = self.inner.g;
        let q: Vec<f64> = (0..g)
            .map(|i| (0..g).map(|j| self.inner.im_inv[(i, j)] * z[j].im).sum())
            .collect();
        let p: Vec<f64> = (0..g)
            .map(|i| z[i].re - (0..g).map(|j| self.inner.omega[(i, j)].re * q[j]).sum::<f64>())
            .collect();
        (p, q)
    }

    /// Representative of `z` modulo `ℤ^g + Ωℤ^g` with lattice coordinates in
    /// `[-1/2, 1/2)`, together with those coordinates.
    pub fn reduce(&self, z: &[Complex64]) -> (CVec, Vec<f64>) {
        let (p, q) = self.lattice_coordinates(z);
        let shift_p: Vec<f64> = p.iter().map(|x| (x + 0.5).floor()).collect();
        let shift_q: Vec<f64> = q.iter().map(|x| (x + 0.5).floor()).collect();
        let omega_shift = self.omega_times(&shift_q);
        let reduced = z
            .iter()
            .zip(&shift_p)
            .zip(&omega_shift)
            .map(|((zi, sp), os)| zi - sp - os)
            .collect();
        let coords = p
            .iter()
            .zip(&shift_p)
            .map(|(x, s)| x - s)
            .chain(q.iter().zip(&shift_q).map(|(x, s)| x - s))
            .collect();
        (reduced, coords)
    }

    /// Euclidean length of the reduced lattice coordinates of `z - w`.
    pub fn lattice_distance(&self, z: &[Complex64], w: &[Complex64]) -> f64 {
        let diff: CVec = z.iter().zip(w).map(|(a, b)| a - b).collect();
        let (_, coords) = self.reduce(&diff);
        coords.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Bound on the sum of `|poly| · |term|` over lattice points outside the
    /// ellipsoid of the given radius, for derivative order `order` along unit
    /// directions and evaluation points with `‖Im z‖ ≤ z_bound`.
    ///
    /// With `r = ‖T(n+c)‖` each omitted term is at most
    /// `e^{π yᵀY⁻¹y} · max(1, 2π(κr+β))^order · e^{-πr²}` where
    /// `κ = λ_min^{-1/2}` and `β = z_bound/λ_min`. Points are counted shell by
    /// shell using disjoint balls of radius `√λ_min / 2`.
    pub fn tail_bound(&self, radius: f64, order: usize, z_bound: f64) -> f64 {
        let g = self.inner.g as i32;
        let lambda = self.inner.min_eig;
        let kappa = 1.0 / lambda.sqrt();
        let beta = z_bound / lambda;
        let half_gap = 0.5 * lambda.sqrt();
        let prefactor = (PI * z_bound * z_bound / lambda).exp();
        let n = order as f64;
        let weight = |r: f64| -> f64 {
            let poly = (2.0 * PI * (kappa * r + beta)).max(1.0);
            poly.powf(n) * (-PI * r * r).exp()
        };
        // the weight decreases beyond this radius
        let peak = if order == 0 {
            0.0
        } else {
            let a = 2.0 * PI * kappa;
            let b = 2.0 * PI * beta;
            (-b + (b * b + 4.0 * a * n * kappa).sqrt()) / (2.0 * a)
        };
        let shell_sup = |lo: f64| -> f64 {
            let hi = lo + SHELL_WIDTH;
            if hi <= peak {
                weight(hi)
            } else if lo >= peak {
                weight(lo)
            } else {
                weight(peak)
            }
        };
        let mut sum = 0.0;
        let mut k = 0usize;
        loop {
            let lo = radius + k as f64 * SHELL_WIDTH;
            let count = ((lo + SHELL_WIDTH + half_gap) / half_gap).powi(g);
            let term = count * shell_sup(lo);
            sum += term;
            k += 1;
            if (lo > peak && term <= 1e-18 * sum) || term == 0.0 || k > 100_000 {
                break;
            }
        }
        prefactor * sum
    }

    fn lattice_points(&self, radius: f64) -> Arc<Vec<i32>> {
        let key = (radius * CACHE_QUANTUM).ceil() as u64;
        if let Some(points) = self.inner.lattice.read().unwrap().get(&key) {
            return Arc::clone(points);
        }
        let g = self.inner.g;
        let r = key as f64 / CACHE_QUANTUM + 0.5 * (self.inner.max_eig * g as f64).sqrt();
        let bounds: Vec<i32> = (0..g)
            .map(|i| (r * self.inner.im_inv[(i, i)].sqrt()).floor() as i32)
            .collect();
        let mut points = Vec::new();
        let mut k: Vec<i32> = bounds.iter().map(|b| -b).collect();
        'outer: loop {
            let mut norm2 = 0.0;
            for i in 0..g {
                let row: f64 = (i..g).map(|j| self.inner.chol_upper[(i, j)] * f64::from(k[j])).sum();
                norm2 += row * row;
            }
            if norm2 <= r * r {
                points.extend_from_slice(&k);
            }
            for i in 0..g {
                if k[i] < bounds[i] {
                    k[i] += 1;
                    continue 'outer;
                }
                k[i] = -bounds[i];
            }
            break;
        }
        let points = Arc::new(points);
        self.inner
            .lattice
            .write()
            .unwrap()
            .entry(key)
            .or_insert_with(|| Arc::clone(&points));
        points
    }

    /// Calls `f(n + a, term)` for every summand inside the ellipsoid of the
    /// given radius around the peak of the series at `z`.
    fn for_each_term(
        &self,
        ch: &ThetaCharacteristic,
        z: &[Complex64],
        radius: f64,
        mut f: impl FnMut(&[f64], Complex64),
    ) {
        let g = self.inner.g;
        let omega = &self.inner.omega;
        let center: Vec<f64> = (0..g)
            .map(|i| ch.a[i] + (0..g).map(|j| self.inner.im_inv[(i, j)] * z[j].im).sum::<f64>())
            .collect();
        let base: Vec<f64> = center.iter().map(|c| (-c).round()).collect();
        let shifted: CVec = z.iter().zip(&ch.b).map(|(zi, bi)| zi + bi).collect();
        let points = self.lattice_points(radius);
        let mut na = vec![0.0; g];
        for k in points.chunks_exact(g) {
            for i in 0..g {
                na[i] = base[i] + f64::from(k[i]) + ch.a[i];
            }
            let mut quad = Complex64::new(0.0, 0.0);
            let mut lin = Complex64::new(0.0, 0.0);
            for i in 0..g {
                let mut row = Complex64::new(0.0, 0.0);
                for j in 0..g {
                    row += omega[(i, j)] * na[j];
                }
                quad += row * na[i];
                lin += shifted[i] * na[i];
            }
            let exponent = Complex64::i() * PI * (quad + 2.0 * lin);
            f(&na, exponent.exp());
        }
    }
}

fn check_dims(sm: &SiegelMatrix, ch: &ThetaCharacteristic, z: &[Complex64]) -> Result<()> {
    let g = sm.genus();
    if ch.genus() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: ch.genus(),
        });
    }
    if z.len() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: z.len(),
        });
    }
    if z.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(Error::DegenerateInput("evaluation point is not finite".into()));
    }
    Ok(())
}

fn im_norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.im * c.im).sum::<f64>().sqrt()
}

/// Smallest radius (to within 1/64) whose certified tail is below
/// `policy.tol`.
pub fn truncation_radius(
    sm: &SiegelMatrix,
    policy: &TruncationPolicy,
    deriv_order: usize,
    z_bound: f64,
) -> Result<f64> {
    policy.validate()?;
    let tail = |r: f64| sm.tail_bound(r, deriv_order, z_bound);
    if tail(1.0) <= policy.tol {
        return Ok(1.0);
    }
    let cap_tail = tail(policy.max_radius);
    if cap_tail > policy.tol {
        return Err(Error::RadiusCapExceeded {
            tail: cap_tail,
            max_radius: policy.max_radius,
        });
    }
    let (mut lo, mut hi) = (1.0, policy.max_radius);
    while hi - lo > RADIUS_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if tail(mid) <= policy.tol {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Value of `θ[a,b](z, Ω)` to absolute accuracy `policy.tol`.
pub fn theta_eval(
    sm: &SiegelMatrix,
    ch: &ThetaCharacteristic,
    z: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    check_dims(sm, ch, z)?;
    let radius = truncation_radius(sm, policy, 0, im_norm(z))?;
    Ok(theta_sum(sm, ch, z, radius))
}

/// Lattice sum at an explicit radius, without the tail certification.
pub fn theta_sum(sm: &SiegelMatrix, ch: &ThetaCharacteristic, z: &[Complex64], radius: f64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    sm.for_each_term(ch, z, radius, |_, term| total += term);
    total
}

/// Directional derivatives `D_{v_1}^{n_1}⋯D_{v_k}^{n_k} f` at a point.
///
/// Multi-orders are stored with trailing zeros removed, so a lookup with a
/// shorter multi-order refers to the leading directions only.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionalJet {
    pub point: CVec,
    pub directions: Vec<CVec>,
    pub max_order: usize,
    values: BTreeMap<Vec<u32>, Complex64>,
}

fn canonical(multi: &[u32]) -> Vec<u32> {
    let len = multi.iter().rposition(|&n| n != 0).map_or(0, |p| p + 1);
    multi[..len].to_vec()
}

impl DirectionalJet {
    pub fn from_entries(
        point: CVec,
        directions: Vec<CVec>,
        max_order: usize,
        entries: impl IntoIterator<Item = (Vec<u32>, Complex64)>,
    ) -> Self {
        let values = entries.into_iter().map(|(k, v)| (canonical(&k), v)).collect();
        Self {
            point,
            directions,
            max_order,
            values,
        }
    }

    pub fn get(&self, multi: &[u32]) -> Option<Complex64> {
        let key = canonical(multi);
        if key.len() > self.directions.len() {
            return None;
        }
        self.values.get(&key).copied()
    }

    /// The undifferentiated value.
    pub fn value(&self) -> Complex64 {
        self.values[&Vec::new()]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.values.iter().map(|(k, v)| (k.as_slice(), *v))
    }
}

/// All multi-orders of length `k` with total order at most `max_order`, in
/// lexicographic order.
pub fn multi_orders(k: usize, max_order: usize) -> Vec<Vec<u32>> {
    fn rec(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == k {
            out.push(prefix.clone());
            return;
        }
        for n in 0..=left {
            prefix.push(n);
            rec(k, left - n, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, max_order as u32, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Full jet: every multi-order with total order `≤ max_order`.
pub fn theta_jet(
    sm: &SiegelMatrix,
    ch: &ThetaCharacteristic,
    z: &[Complex64],
    directions: &[CVec],
    max_order: usize,
    policy: &TruncationPolicy,
) -> Result<DirectionalJet> {
    if directions.is_empty() && max_order > 0 {
        return Err(Error::NoDirections);
    }
    if max_order > MAX_JET_ORDER {
        return Err(Error::OrderCeilingExceeded {
            order: max_order,
            ceiling: MAX_JET_ORDER,
        });
    }
    let orders = multi_orders(directions.len(), max_order);
    theta_jet_orders(sm, ch, z, directions, &orders, policy)
}

/// Jet restricted to the listed multi-orders (plus the plain value).
pub fn theta_jet_orders(
    sm: &SiegelMatrix,
    ch: &ThetaCharacteristic,
    z: &[Complex64],
    directions: &[CVec],
    orders: &[Vec<u32>],
    policy: &TruncationPolicy,
) -> Result<DirectionalJet> {
    check_dims(sm, ch, z)?;
    let g = sm.genus();
    for v in directions {
        if v.len() != g {
            return Err(Error::DimensionMismatch {
                expected: g,
                found: v.len(),
            });
        }
    }
    let mut keys: Vec<Vec<u32>> = orders.iter().map(|o| canonical(o)).collect();
    keys.push(Vec::new());
    keys.sort();
    keys.dedup();
    let max_order = keys.iter().map(|k| k.iter().sum::<u32>() as usize).max().unwrap_or(0);
    if max_order > MAX_JET_ORDER {
        return Err(Error::OrderCeilingExceeded {
            order: max_order,
            ceiling: MAX_JET_ORDER,
        });
    }
    if let Some(bad) = keys.iter().find(|k| k.len() > directions.len()) {
        return Err(Error::JetTooShallow {
            multi_order: bad.clone(),
        });
    }
    let vmax = directions
        .iter()
        .map(|v| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .fold(1.0, f64::max);
    let scaled = TruncationPolicy {
        tol: policy.tol / vmax.powi(max_order as i32),
        max_radius: policy.max_radius,
    };
    let radius = truncation_radius(sm, &scaled, max_order, im_norm(z))?;

    let nd = directions.len();
    let mut values = vec![Complex64::new(0.0, 0.0); keys.len()];
    let mut powers = vec![vec![Complex64::new(1.0, 0.0); max_order + 1]; nd];
    let two_pi_i = Complex64::new(0.0, 2.0 * PI);
    sm.for_each_term(ch, z, radius, |na, term| {
        for (k, v) in directions.iter().enumerate() {
            let p: Complex64 = two_pi_i * v.iter().zip(na).map(|(vi, ni)| vi * ni).sum::<Complex64>();
            for j in 1..=max_order {
                powers[k][j] = powers[k][j - 1] * p;
            }
        }
        for (slot, key) in values.iter_mut().zip(&keys) {
            let mut factor = term;
            for (k, &n) in key.iter().enumerate() {
                factor *= powers[k][n as usize];
            }
            *slot += factor;
        }
    });
    Ok(DirectionalJet {
        point: z.to_vec(),
        directions: directions.to_vec(),
        max_order,
        values: keys.into_iter().zip(values).collect(),
    })
}

/// Gradient `(∂θ/∂z_1, …, ∂θ/∂z_g)` together with the value.
pub fn theta_gradient(
    sm: &SiegelMatrix,
    ch: &ThetaCharacteristic,
    z: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<(Complex64, CVec)> {
    let g = sm.genus();
    let dirs: Vec<CVec> = (0..g)
        .map(|i| {
            (0..g)
                .map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    let orders: Vec<Vec<u32>> = (0..g)
        .map(|i| {
            let mut o = vec![0; g];
            o[i] = 1;
            o
        })
        .collect();
    let jet = theta_jet_orders(sm, ch, z, &dirs, &orders, policy)?;
    let grad = orders.iter().map(|o| jet.get(o).unwrap()).collect();
    Ok((jet.value(), grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tau_i() -> SiegelMatrix {
        SiegelMatrix::from_rows(&[vec![c(0.0, 1.0)]]).unwrap()
    }

    fn omega_g2() -> SiegelMatrix {
        SiegelMatrix::from_rows(&[vec![c(0.0, 1.0), c(0.0, 0.5)], vec![c(0.0, 0.5), c(0.0, 2.0)]]).unwrap()
    }

    fn random_point(g: usize, rng: &mut ChaCha8Rng) -> CVec {
        (0..g)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5)))
            .collect()
    }

    #[test]
    fn validate_examples() {
        assert!(SiegelMatrix::from_rows(&[vec![c(0.0, 1.0)]]).is_ok());
        match SiegelMatrix::from_rows(&[vec![c(1.0, 0.0)]]) {
            Err(Error::ImaginaryPartNotPositiveDefinite { smallest_eigenvalue }) => {
                assert_eq!(smallest_eigenvalue, 0.0)
            }
            other => panic!("unexpected {other:?}"),
        }
        let sm = omega_g2();
        // eigenvalues of [[1, .5], [.5, 2]] are (3 ∓ √2)/2
        assert!((sm.min_eigenvalue() - (3.0 - 2f64.sqrt()) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let err =
            SiegelMatrix::from_rows(&[vec![c(0.0, 1.0), c(0.1, 0.0)], vec![c(0.2, 0.0), c(0.0, 1.0)]]).unwrap_err();
        assert!(matches!(err, Error::NotSymmetric { .. }));
        let err = validate_siegel(&DMatrix::from_element(2, 3, c(0.0, 1.0))).unwrap_err();
        assert_eq!(err, Error::NotSquare { rows: 2, cols: 3 });
    }

    #[test]
    fn tiny_asymmetry_is_symmetrized() {
        let sm =
            SiegelMatrix::from_rows(&[vec![c(0.0, 1.0), c(0.3, 0.1)], vec![c(0.3 + 1e-16, 0.1), c(0.0, 1.0)]]).unwrap();
        assert_eq!(sm.entry(0, 1), sm.entry(1, 0));
    }

    #[test]
    fn truncation_radius_certifies_tail() {
        let sm = tau_i();
        let policy = TruncationPolicy::new(1e-12, 20.0).unwrap();
        let r = truncation_radius(&sm, &policy, 0, 0.0).unwrap();
        // direct tail oracle: 2 Σ_{n > R} e^{-πn²}
        let tail: f64 = (1..50)
            .filter(|&n| f64::from(n) > r)
            .map(|n| 2.0 * (-PI * f64::from(n * n)).exp())
            .sum();
        assert!(tail <= 1e-12, "R = {r}, tail = {tail}");
        assert!(r >= 3.0 - 1e-9 || tail <= 1e-12);
    }

    #[test]
    fn radius_cap_is_reported() {
        let sm = tau_i();
        let policy = TruncationPolicy::new(1e-300, 2.0).unwrap();
        assert!(matches!(
            truncation_radius(&sm, &policy, 0, 0.0),
            Err(Error::RadiusCapExceeded { .. })
        ));
    }

    #[test]
    fn radius_is_monotone_in_order() {
        for sm in [tau_i(), omega_g2()] {
            let policy = TruncationPolicy::default();
            let mut last = 0.0;
            for order in 0..=MAX_JET_ORDER {
                let r = truncation_radius(&sm, &policy, order, 0.7).unwrap();
                assert!(r >= last, "order {order}: {r} < {last}");
                last = r;
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(TruncationPolicy::new(0.0, 10.0).is_err());
        assert!(TruncationPolicy::new(1e-12, 0.5).is_err());
    }

    #[test]
    fn genus_one_constants() {
        let sm = tau_i();
        let policy = TruncationPolicy::default();
        let ch = ThetaCharacteristic::zero(1);
        let t0 = theta_eval(&sm, &ch, &[c(0.0, 0.0)], &policy).unwrap();
        let t_half = theta_eval(&sm, &ch, &[c(0.5, 0.0)], &policy).unwrap();
        assert!((t0 - c(1.086_434_811_213_308, 0.0)).norm() < 1e-12);
        assert!((t_half - c(0.9135791381561168, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn genus_two_matches_frozen_oracle() {
        // brute-force box sum |n_i| ≤ 12 in 30-digit arithmetic
        let sm = omega_g2();
        let policy = TruncationPolicy::default();
        let ch = ThetaCharacteristic::zero(2);
        let z = [c(0.1, 0.2), c(-0.3, 0.05)];
        let value = theta_eval(&sm, &ch, &z, &policy).unwrap();
        assert!((value - c(1.1270974246632954, -0.08329789650237343)).norm() < 1e-12);
        let v = vec![c(1.0, 0.0), c(0.0, 0.5)];
        let jet = theta_jet(&sm, &ch, &z, &[v], 1, &policy).unwrap();
        let d = jet.get(&[1]).unwrap();
        assert!((d - c(-0.6176908021869212, -0.666_478_078_596_471)).norm() < 1e-11);
    }

    #[test]
    fn characteristic_and_doubled_matrix() {
        let sm = omega_g2();
        let policy = TruncationPolicy::default();
        let z = [c(0.2, 0.4), c(-0.6, 0.1)];
        let expected = [
            c(1.007_171_323_071_092, -0.021_763_307_648_316_87),
            c(-0.04503455960400363, 0.02628461689446822),
            c(0.6387514562683124, -0.3945519732739769),
            c(-0.10053738840335623, -0.04704925485447233),
        ];
        for (j, bits) in [[0u8, 0], [0, 1], [1, 0], [1, 1]].iter().enumerate() {
            let ch = ThetaCharacteristic::half_integer(bits);
            let value = theta_eval(sm.doubled(), &ch, &z, &policy).unwrap();
            assert!((value - expected[j]).norm() < 1e-12, "{j}: {value}");
        }
    }

    #[test]
    fn evenness_and_periodicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let policy = TruncationPolicy::default();
        for sm in [tau_i(), omega_g2()] {
            let g = sm.genus();
            let ch = ThetaCharacteristic::zero(g);
            for _ in 0..20 {
                let z = random_point(g, &mut rng);
                let t = theta_eval(&sm, &ch, &z, &policy).unwrap();
                let neg: CVec = z.iter().map(|x| -x).collect();
                assert!((theta_eval(&sm, &ch, &neg, &policy).unwrap() - t).norm() <= 2e-12);
                for k in 0..g {
                    let mut shifted = z.clone();
                    shifted[k] += 1.0;
                    let ts = theta_eval(&sm, &ch, &shifted, &policy).unwrap();
                    assert!((ts - t).norm() <= 2e-12);
                    let mut quasi = z.clone();
                    for i in 0..g {
                        quasi[i] += sm.entry(i, k);
                    }
                    let tq = theta_eval(&sm, &ch, &quasi, &policy).unwrap();
                    let factor = (Complex64::i() * PI * (-sm.entry(k, k) - 2.0 * z[k])).exp();
                    assert!((tq - factor * t).norm() <= 1e-9 * t.norm().max(1e-300) + 1e-11);
                }
            }
        }
    }

    #[test]
    fn doubling_radius_changes_little() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = TruncationPolicy::default();
        let sm = omega_g2();
        let ch = ThetaCharacteristic::zero(2);
        for _ in 0..10 {
            let z = random_point(2, &mut rng);
            let r = truncation_radius(&sm, &policy, 0, im_norm(&z)).unwrap();
            let a = theta_sum(&sm, &ch, &z, r);
            let b = theta_sum(&sm, &ch, &z, 2.0 * r);
            assert!((a - b).norm() <= policy.tol);
        }
    }

    #[test]
    fn zeroth_jet_and_even_derivative() {
        let sm = tau_i();
        let policy = TruncationPolicy::default();
        let ch = ThetaCharacteristic::zero(1);
        let z = [c(0.3, -0.2)];
        let jet = theta_jet(&sm, &ch, &z, &[], 0, &policy).unwrap();
        assert_eq!(jet.value(), theta_eval(&sm, &ch, &z, &policy).unwrap());
        let jet = theta_jet(&sm, &ch, &[c(0.0, 0.0)], &[vec![c(1.0, 0.0)]], 1, &policy).unwrap();
        assert!(jet.get(&[1]).unwrap().norm() < 1e-12);
    }

    #[test]
    fn jet_errors() {
        let sm = tau_i();
        let policy = TruncationPolicy::default();
        let ch = ThetaCharacteristic::zero(1);
        let z = [c(0.0, 0.0)];
        assert_eq!(theta_jet(&sm, &ch, &z, &[], 1, &policy), Err(Error::NoDirections));
        assert!(matches!(
            theta_jet(&sm, &ch, &z, &[vec![c(1.0, 0.0)]], 13, &policy),
            Err(Error::OrderCeilingExceeded { .. })
        ));
    }

    #[test]
    fn jet_symmetric_under_direction_swap() {
        let sm = omega_g2();
        let policy = TruncationPolicy::default();
        let ch = ThetaCharacteristic::zero(2);
        let z = [c(0.1, 0.1), c(0.4, -0.2)];
        let v = vec![c(1.0, 0.2), c(-0.3, 0.0)];
        let w = vec![c(0.0, 1.0), c(0.5, 0.5)];
        let a = theta_jet(&sm, &ch, &z, &[v.clone(), w.clone()], 3, &policy).unwrap();
        let b = theta_jet(&sm, &ch, &z, &[w, v], 3, &policy).unwrap();
        for (key, value) in a.entries() {
            let mut swapped = key.to_vec();
            swapped.resize(2, 0);
            swapped.swap(0, 1);
            assert!((b.get(&swapped).unwrap() - value).norm() < 1e-12 * value.norm().max(1.0));
        }
    }

    #[test]
    fn first_derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let policy = TruncationPolicy::default();
        let sm = omega_g2();
        let ch = ThetaCharacteristic::zero(2);
        let h = 1e-5;
        for _ in 0..10 {
            let z = random_point(2, &mut rng);
            let v: CVec = random_point(2, &mut rng);
            let jet = theta_jet(&sm, &ch, &z, std::slice::from_ref(&v), 1, &policy).unwrap();
            let plus: CVec = z.iter().zip(&v).map(|(a, b)| a + b * h).collect();
            let minus: CVec = z.iter().zip(&v).map(|(a, b)| a - b * h).collect();
            let fd = (theta_eval(&sm, &ch, &plus, &policy).unwrap() - theta_eval(&sm, &ch, &minus, &policy).unwrap())
                / (2.0 * h);
            let d = jet.get(&[1]).unwrap();
            assert!((d - fd).norm() <= 1e-7 * d.norm().max(1.0));
        }
    }

    #[test]
    fn reduction_is_lattice_invariant() {
        let sm = omega_g2();
        let z = vec![c(0.3, 0.2), c(-0.1, 0.4)];
        let mut w = z.clone();
        for i in 0..2 {
            w[i] += 2.0 + sm.entry(i, 0) * 3.0 - sm.entry(i, 1);
        }
        assert!(sm.lattice_distance(&z, &w) < 1e-12);
        let (_, coords) = sm.reduce(&w);
        assert!(coords.iter().all(|x| (-0.5..0.5).contains(x)));
    }

    #[test]
    fn cache_is_shared_between_clones() {
        let sm = omega_g2();
        let clone = sm.clone();
        let a = sm.lattice_points(3.0);
        let b = clone.lattice_points(3.0);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
