//! The order-by-order hierarchy.
//!
//! For a centred configuration `(u, b_1, …, b_m)` the section
//!
//! ```text
//! P(z, ε) = α_1(ε) θ(z+u+½C(ε)) θ(z−u−½C(ε))
//!         + α_2(ε) θ(z−u+½C(ε)) θ(z+u−½C(ε))
//!         + Σ_j α_{j+2}(ε) θ(z+b_j+½C(ε)) θ(z−b_j−½C(ε))
//! ```
//!
//! is expanded in `ε` with `α_1(0) = 1`, `α_2 ≡ −1` and `α_{m+2}(ε) = κε`
//! (`κ = 1` unless a different gauge is requested). The coefficient `P_s` is
//! affine in the order-`s` unknowns `α_{1,s}, α_{3,s}, …, α_{m+1,s}, D_s`:
//!
//! ```text
//! P_s = Q_s + α_{1,s} θ_u θ_{−u} + D_s θ_{−u}·θ_u − D_s θ_u·θ_{−u}
//!           + Σ_{j<m} α_{j+2,s} θ_{b_j} θ_{−b_j},
//! ```
//!
//! with `θ_x(z) = θ(z − x)`. Each order is solved by complex linear least
//! squares on a random sample grid and certified by the recomputed residual.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kummer::SecantConfig;
use crate::linalg::{least_squares, CMatrix};
use crate::par;
use crate::sampling::{random_torus_point, rng};
use crate::series::{delta_apply, delta_multi_orders, PowerSeries, Sign, VectorFieldSeq, MAX_SERIES_ORDER};
use crate::theta::{theta_eval, theta_gradient, theta_jet_orders, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};
use crate::CVec;

/// Singular values below this fraction of `σ_max` are structural zeros.
const STRUCTURAL_RCOND: f64 = 1e-14;
/// Largest admissible condition number of the retained least-squares block.
pub const MAX_CONDITION: f64 = 1e12;
/// Grid points closer than this to `Θ_{±u}` (in theta magnitude) are redrawn.
const GRID_THETA_FLOOR: f64 = 1e-4;
const ZERO_FIELD: f64 = 1e-12;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

fn add(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Coefficients `α_{j,i}` of the series `α_j(ε)`.
///
/// Only the free rows `j ∈ {1, 3, …, m+1}` are stored; `α_2 ≡ −1`,
/// `α_{m+2}(ε) = κε` and the constant terms are fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaTable {
    m: usize,
    gauge: Complex64,
    /// `rows[0]` holds `α_{1,·}`, `rows[k]` holds `α_{k+2,·}`; entry `i-1`
    /// is the coefficient of `ε^i`.
    rows: Vec<Vec<Complex64>>,
}

impl AlphaTable {
    pub fn new(m: usize) -> Self {
        Self::with_gauge(m, Complex64::new(1.0, 0.0))
    }

    pub fn with_gauge(m: usize, gauge: Complex64) -> Self {
        Self {
            m,
            gauge,
            rows: vec![Vec::new(); m],
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gauge(&self) -> Complex64 {
        self.gauge
    }

    /// Row labels `j` of the free series, in storage order.
    pub fn free_rows(&self) -> Vec<usize> {
        std::iter::once(1).chain(3..=self.m + 1).collect()
    }

    fn row_index(&self, j: usize) -> Option<usize> {
        match j {
            1 => Some(0),
            j if j >= 3 && j <= self.m + 1 => Some(j - 2),
            _ => None,
        }
    }

    /// `α_{j,i}`; unsolved free coefficients read as zero.
    pub fn get(&self, j: usize, i: usize) -> Complex64 {
        let one = Complex64::new(1.0, 0.0);
        match (j, i) {
            (1, 0) => one,
            (2, 0) => -one,
            (2, _) => zero(),
            (j, i) if j == self.m + 2 => {
                if i == 1 {
                    self.gauge
                } else {
                    zero()
                }
            }
            (_, 0) => zero(),
            (j, i) => self
                .row_index(j)
                .and_then(|r| self.rows[r].get(i - 1).copied())
                .unwrap_or_else(zero),
        }
    }

    /// Coefficients `α_{j,0}, …, α_{j,order}`.
    pub fn series(&self, j: usize, order: usize) -> CVec {
        (0..=order).map(|i| self.get(j, i)).collect()
    }

    /// Appends the order-`s` coefficients of the free rows, in the order of
    /// [`AlphaTable::free_rows`].
    fn push_order(&mut self, s: usize, values: &[Complex64]) {
        for (row, v) in self.rows.iter_mut().zip(values) {
            row.resize(s - 1, zero());
            row.push(*v);
        }
    }

    /// Number of orders stored for every free row.
    pub fn solved_order(&self) -> usize {
        self.rows.iter().map(Vec::len).min().unwrap_or(0)
    }

    pub fn truncated(&self, order: usize) -> Self {
        Self {
            m: self.m,
            gauge: self.gauge,
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().take(order).copied().collect())
                .collect(),
        }
    }
}

/// Where each theta factor is evaluated relative to `z`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shift {
    /// `P(z, ε)`.
    Centered,
    /// `R(z, ε) = P(z + ½C(ε), ε)`.
    Forward,
    /// `T(z, ε) = P(z − ½C(ε), ε)`.
    Backward,
}

/// Random evaluation points imposing the vanishing of sections of `2Θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleGrid {
    pub points: Vec<CVec>,
    pub seed: u64,
}

/// Grid size and seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub count: Option<usize>,
    pub seed: u64,
}

impl GridSpec {
    pub fn seeded(seed: u64) -> Self {
        Self { count: None, seed }
    }

    pub fn count_for(&self, g: usize) -> usize {
        self.count.unwrap_or_else(|| (4 << g).max(16))
    }
}

impl SampleGrid {
    /// Draws `x + Ω y`, `x ∈ [0,1)^g`, `y ∈ [−½,½)^g`, rejecting points where
    /// `|θ(z±u)|` falls below `1e−4`.
    pub fn generate(sm: &SiegelMatrix, u: &[Complex64], spec: GridSpec, policy: &TruncationPolicy) -> Result<Self> {
        let g = sm.genus();
        let count = spec.count_for(g);
        if count < 2 << g {
            return Err(Error::InvalidGrid(format!(
                "{count} points cannot over-determine the {}-dimensional space of sections",
                1 << g
            )));
        }
        let ch = ThetaCharacteristic::zero(g);
        let mut r = rng(spec.seed);
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0;
        while points.len() < count {
            attempts += 1;
            if attempts > 100 * count {
                return Err(Error::InvalidGrid("too many points near Θ_{±u}".into()));
            }
            let z = random_torus_point(sm, 0.5, &mut r);
            let plus = theta_eval(sm, &ch, &add(&z, u), policy)?;
            let minus = theta_eval(sm, &ch, &sub(&z, u), policy)?;
            if plus.norm() >= GRID_THETA_FLOOR && minus.norm() >= GRID_THETA_FLOOR {
                points.push(z);
            }
        }
        Ok(Self {
            points,
            seed: spec.seed,
        })
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }
}

/// Values of one coefficient section on the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSample {
    pub order: usize,
    pub values: CVec,
}

/// Everything solved so far: the certificate of a hierarchy run.
#[derive(Clone, Debug)]
pub struct HierarchyState {
    pub sm: SiegelMatrix,
    pub config: SecantConfig,
    pub seq: VectorFieldSeq,
    pub alphas: AlphaTable,
    /// `residuals[s-1]` is the certified residual of order `s`.
    pub residuals: Vec<f64>,
    pub tolerances: Vec<f64>,
    pub conditions: Vec<f64>,
    pub grid: SampleGrid,
}

impl HierarchyState {
    pub fn new(sm: SiegelMatrix, config: SecantConfig, grid: SampleGrid) -> Result<Self> {
        Self::with_gauge(sm, config, grid, Complex64::new(1.0, 0.0))
    }

    /// State whose last series is normalised to `α_{m+2}(ε) = gauge·ε`.
    pub fn with_gauge(sm: SiegelMatrix, config: SecantConfig, grid: SampleGrid, gauge: Complex64) -> Result<Self> {
        config.validate(&sm)?;
        if gauge.norm() == 0.0 {
            return Err(Error::DegenerateInput("gauge must be nonzero".into()));
        }
        if grid.count() < 2 << sm.genus() {
            return Err(Error::InvalidGrid(format!("{} points are too few", grid.count())));
        }
        let g = sm.genus();
        let m = config.m;
        Ok(Self {
            sm,
            config,
            seq: VectorFieldSeq::empty(g),
            alphas: AlphaTable::with_gauge(m, gauge),
            residuals: Vec::new(),
            tolerances: Vec::new(),
            conditions: Vec::new(),
            grid,
        })
    }

    pub fn solved_order(&self) -> usize {
        self.seq.len()
    }

    pub fn u(&self) -> &[Complex64] {
        &self.config.centered_u
    }

    pub fn b(&self) -> &[CVec] {
        &self.config.centered_b
    }

    /// Number of unknowns per order, `m + g`.
    pub fn unknown_count(&self) -> usize {
        self.config.m + self.sm.genus()
    }

    /// The state with only orders `1..=order` kept.
    pub fn truncated(&self, order: usize) -> Self {
        let order = order.min(self.solved_order());
        Self {
            sm: self.sm.clone(),
            config: self.config.clone(),
            seq: VectorFieldSeq::unchecked(self.sm.genus(), self.seq.fields()[..order].to_vec()),
            alphas: self.alphas.truncated(order),
            residuals: self.residuals[..order].to_vec(),
            tolerances: self.tolerances[..order].to_vec(),
            conditions: self.conditions[..order].to_vec(),
            grid: self.grid.clone(),
        }
    }

    /// Same data evaluated on another grid.
    pub fn with_grid(&self, grid: SampleGrid) -> Self {
        Self { grid, ..self.clone() }
    }

    /// Per-order unknowns and certificates.
    pub fn order_records(&self) -> Vec<OrderRecord> {
        (1..=self.solved_order())
            .map(|s| OrderRecord {
                order: s,
                alphas: self
                    .alphas
                    .free_rows()
                    .into_iter()
                    .map(|j| AlphaEntry {
                        j,
                        i: s,
                        value: self.alphas.get(j, s),
                    })
                    .collect(),
                d: self.seq.field(s).to_vec(),
                residual: self.residuals[s - 1],
                tolerance: self.tolerances[s - 1],
                condition: finite_or_none(self.conditions[s - 1]),
            })
            .collect()
    }

    fn view(&self, order: usize, unknowns_up_to: usize) -> View<'_> {
        let kept = unknowns_up_to.min(self.solved_order());
        let g = self.sm.genus();
        let mut fields: Vec<CVec> = self.seq.fields()[..kept.min(order)].to_vec();
        fields.resize(order, vec![zero(); g]);
        let alphas = self.alphas.truncated(kept);
        let u = self.u().to_vec();
        let minus_u: CVec = u.iter().map(|c| -c).collect();
        let mut terms = vec![(u, alphas.series(1, order)), (minus_u, alphas.series(2, order))];
        for (j, bj) in self.b().iter().enumerate() {
            terms.push((bj.clone(), alphas.series(j + 3, order)));
        }
        View {
            sm: &self.sm,
            fields: VectorFieldSeq::unchecked(g, fields),
            terms,
            order,
        }
    }
}

fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub j: usize,
    pub i: usize,
    pub value: Complex64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRecord {
    pub order: usize,
    pub alphas: Vec<AlphaEntry>,
    pub d: CVec,
    pub residual: f64,
    pub tolerance: f64,
    pub condition: Option<f64>,
}

/// Fixed data for one expansion: fields padded to `order`, and the
/// `(x, α-series)` pairs of the terms `α(ε) θ(z+x+·) θ(z−x−·)`.
struct View<'a> {
    sm: &'a SiegelMatrix,
    fields: VectorFieldSeq,
    terms: Vec<(CVec, CVec)>,
    order: usize,
}

struct JetCache<'a> {
    sm: &'a SiegelMatrix,
    ch: ThetaCharacteristic,
    seq: &'a VectorFieldSeq,
    orders: Vec<Vec<u32>>,
    order: usize,
    entries: Vec<(CVec, CVec, CVec)>,
    values: Vec<(CVec, Complex64)>,
}

impl<'a> JetCache<'a> {
    fn new(sm: &'a SiegelMatrix, seq: &'a VectorFieldSeq, order: usize) -> Result<Self> {
        Ok(Self {
            sm,
            ch: ThetaCharacteristic::zero(sm.genus()),
            seq,
            orders: delta_multi_orders(order)?,
            order,
            entries: Vec::new(),
            values: Vec::new(),
        })
    }

    /// `(Δ_s θ(p))_s` and `(Δ⁻_s θ(p))_s`.
    fn series(&mut self, p: &[Complex64], policy: &TruncationPolicy) -> Result<(CVec, CVec)> {
        if let Some((_, plus, minus)) = self.entries.iter().find(|(q, _, _)| q.as_slice() == p) {
            return Ok((plus.clone(), minus.clone()));
        }
        let dirs = &self.seq.fields()[..self.order];
        let jet = theta_jet_orders(self.sm, &self.ch, p, dirs, &self.orders, policy)?;
        let mut plus = Vec::with_capacity(self.order + 1);
        let mut minus = Vec::with_capacity(self.order + 1);
        for s in 0..=self.order {
            plus.push(delta_apply(s, self.seq, &jet, Sign::Plus)?);
            minus.push(delta_apply(s, self.seq, &jet, Sign::Minus)?);
        }
        self.entries.push((p.to_vec(), plus.clone(), minus.clone()));
        Ok((plus, minus))
    }

    fn value(&mut self, p: &[Complex64], policy: &TruncationPolicy) -> Result<Complex64> {
        if let Some((_, v)) = self.values.iter().find(|(q, _)| q.as_slice() == p) {
            return Ok(*v);
        }
        let v = theta_eval(self.sm, &self.ch, p, policy)?;
        self.values.push((p.to_vec(), v));
        Ok(v)
    }
}

fn constant_series(v: Complex64, order: usize) -> CVec {
    let mut s = vec![zero(); order + 1];
    s[0] = v;
    s
}

fn convolve(a: &[Complex64], b: &[Complex64]) -> CVec {
    let n = a.len().min(b.len());
    (0..n).map(|s| (0..=s).map(|i| a[i] * b[s - i]).sum()).collect()
}

impl View<'_> {
    fn coefficients(&self, z: &[Complex64], shift: Shift, policy: &TruncationPolicy) -> Result<CVec> {
        let order = self.order;
        let seq = match shift {
            Shift::Centered => self.fields.scaled(Complex64::new(0.5, 0.0)),
            _ => self.fields.clone(),
        };
        let mut cache = JetCache::new(self.sm, &seq, order)?;
        let mut total = vec![zero(); order + 1];
        for (x, alpha) in &self.terms {
            if alpha.iter().all(|a| a.norm() == 0.0) {
                continue;
            }
            let zp = add(z, x);
            let zm = sub(z, x);
            let a = match shift {
                Shift::Backward => constant_series(cache.value(&zp, policy)?, order),
                _ => cache.series(&zp, policy)?.0,
            };
            let b = match shift {
                Shift::Forward => constant_series(cache.value(&zm, policy)?, order),
                _ => cache.series(&zm, policy)?.1,
            };
            for (t, v) in total.iter_mut().zip(convolve(alpha, &convolve(&a, &b))) {
                *t += v;
            }
        }
        Ok(total)
    }
}

fn check_order(s: usize) -> Result<()> {
    if s > MAX_SERIES_ORDER {
        return Err(Error::OrderCeilingExceeded {
            order: s,
            ceiling: MAX_SERIES_ORDER,
        });
    }
    Ok(())
}

/// `(P_0(z), …, P_order(z))` with unsolved unknowns read as zero.
pub fn p_series_eval(
    state: &HierarchyState,
    z: &[Complex64],
    order: usize,
    policy: &TruncationPolicy,
) -> Result<PowerSeries> {
    check_order(order)?;
    let coeffs = state.view(order, order).coefficients(z, Shift::Centered, policy)?;
    Ok(PowerSeries::scalar(coeffs))
}

/// `R_s`-style or `T_s`-style coefficients: the expansion with the given
/// shift of the argument.
pub fn shifted_series_eval(
    state: &HierarchyState,
    z: &[Complex64],
    order: usize,
    shift: Shift,
    policy: &TruncationPolicy,
) -> Result<PowerSeries> {
    check_order(order)?;
    let coeffs = state.view(order, order).coefficients(z, shift, policy)?;
    Ok(PowerSeries::scalar(coeffs))
}

fn require_lower_orders(state: &HierarchyState, s: usize) -> Result<()> {
    if s == 0 || state.solved_order() + 1 < s {
        return Err(Error::LowerOrdersUnsolved {
            requested: s,
            solved: state.solved_order(),
        });
    }
    Ok(())
}

/// `Q_s(z)`: `P_s(z)` with `α_{1,s}, α_{3,s}, …, α_{m+1,s}` and `D_s` set to
/// zero, whatever the state holds for them.
pub fn q_s_eval(state: &HierarchyState, s: usize, z: &[Complex64], policy: &TruncationPolicy) -> Result<Complex64> {
    require_lower_orders(state, s)?;
    check_order(s)?;
    let coeffs = state.view(s, s - 1).coefficients(z, Shift::Centered, policy)?;
    Ok(coeffs[s])
}

/// Columns of the affine block at `z`, in unknown order
/// `α_{1,s}, α_{3,s}, …, α_{m+1,s}, D_s[0], …, D_s[g−1]`.
pub fn affine_block(state: &HierarchyState, z: &[Complex64], policy: &TruncationPolicy) -> Result<CVec> {
    let sm = &state.sm;
    let ch = ThetaCharacteristic::zero(sm.genus());
    let u = state.u();
    let (tp, gp) = theta_gradient(sm, &ch, &add(z, u), policy)?;
    let (tm, gm) = theta_gradient(sm, &ch, &sub(z, u), policy)?;
    let mut cols = vec![tp * tm];
    let m = state.config.m;
    for bj in &state.b()[..m - 1] {
        cols.push(theta_eval(sm, &ch, &add(z, bj), policy)? * theta_eval(sm, &ch, &sub(z, bj), policy)?);
    }
    for k in 0..sm.genus() {
        cols.push(gp[k] * tm - tp * gm[k]);
    }
    Ok(cols)
}

/// `P_s` on every grid point.
pub fn section_sample(state: &HierarchyState, s: usize, policy: &TruncationPolicy) -> Result<SectionSample> {
    check_order(s)?;
    let values = par::map(&state.grid.points, |z| {
        p_series_eval(state, z, s, policy).map(|p| p.at(s))
    })
    .into_iter()
    .collect::<Result<CVec>>()?;
    Ok(SectionSample { order: s, values })
}

/// `max_i |θ(z_i+u)θ(z_i−u)|` over the grid.
fn residual_scale(state: &HierarchyState, policy: &TruncationPolicy) -> Result<f64> {
    let ch = ThetaCharacteristic::zero(state.sm.genus());
    let u = state.u();
    let values = par::map(&state.grid.points, |z| -> Result<f64> {
        Ok((theta_eval(&state.sm, &ch, &add(z, u), policy)? * theta_eval(&state.sm, &ch, &sub(z, u), policy)?).norm())
    });
    let mut scale: f64 = 0.0;
    for v in values {
        scale = scale.max(v?);
    }
    Ok(scale)
}

/// The grid system `A x = −Q_s` for the order-`s` unknowns.
fn linear_system(state: &HierarchyState, s: usize, policy: &TruncationPolicy) -> Result<(CMatrix, CVec)> {
    let rows = par::map(&state.grid.points, |z| -> Result<(Complex64, CVec)> {
        Ok((q_s_eval(state, s, z, policy)?, affine_block(state, z, policy)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = rows.len();
    let k = state.unknown_count();
    let mut a = CMatrix::zeros(n, k);
    let mut rhs = Vec::with_capacity(n);
    for (i, (q, cols)) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            a[(i, j)] = *c;
        }
        rhs.push(-q);
    }
    Ok((a, rhs))
}

/// `max_i |Q_s(z_i) + A x|` at the least-squares optimum, normalised like
/// the solve residual. Does not modify the state.
pub fn projection_residual(state: &HierarchyState, s: usize, policy: &TruncationPolicy) -> Result<f64> {
    require_lower_orders(state, s)?;
    check_order(s)?;
    let trunc = state.truncated(s - 1);
    let (a, rhs) = linear_system(&trunc, s, policy)?;
    let ls = least_squares(&a, &rhs, STRUCTURAL_RCOND);
    let mut worst: f64 = 0.0;
    for (i, r) in rhs.iter().enumerate() {
        let ax: Complex64 = (0..a.ncols()).map(|j| a[(i, j)] * ls.x[j]).sum();
        worst = worst.max((ax - r).norm());
    }
    Ok(worst / residual_scale(&trunc, policy)?)
}

/// Solves order `s` given orders `1..s` and certifies the result.
pub fn solve_order(
    state: &HierarchyState,
    s: usize,
    tol_solve: f64,
    policy: &TruncationPolicy,
) -> Result<HierarchyState> {
    if s == 0 || state.solved_order() != s - 1 {
        return Err(Error::LowerOrdersUnsolved {
            requested: s,
            solved: state.solved_order(),
        });
    }
    check_order(s)?;
    let (a, rhs) = linear_system(state, s, policy)?;
    let ls = least_squares(&a, &rhs, STRUCTURAL_RCOND);
    let smax = ls.singular_values.first().copied().unwrap_or(0.0);
    let smin_kept = ls
        .singular_values
        .iter()
        .copied()
        .filter(|&x| x > STRUCTURAL_RCOND * smax)
        .fold(f64::INFINITY, f64::min);
    let condition = if smin_kept.is_finite() {
        smax / smin_kept
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { order: s, condition });
    }

    let m = state.config.m;
    let g = state.sm.genus();
    let d_s: CVec = ls.x[m..m + g].to_vec();
    let mut next = state.clone();
    next.alphas.push_order(s, &ls.x[..m]);
    if s == 1 {
        let norm = d_s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > ZERO_FIELD) {
            return Err(Error::ZeroLeadingField);
        }
        next.seq = VectorFieldSeq::new(g, vec![d_s])?;
    } else {
        next.seq.push(d_s);
    }

    let scale = residual_scale(&next, policy)?;
    let sample = section_sample(&next, s, policy)?;
    let residual = sample.values.iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
    next.residuals.push(residual);
    next.tolerances.push(tol_solve);
    next.conditions.push(condition);
    if !(residual <= tol_solve) {
        return Err(Error::OrderUnsolvable {
            order: s,
            residual,
            tolerance: tol_solve,
        });
    }
    Ok(next)
}

/// Why a run stopped before `s_max`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderFailure {
    pub order: usize,
    pub reason: String,
    pub residual: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

#[derive(Clone, Debug)]
pub struct HierarchyRun {
    pub state: HierarchyState,
    pub s_max: usize,
    pub failure: Option<OrderFailure>,
}

impl HierarchyRun {
    pub fn status(&self) -> RunStatus {
        match (&self.failure, self.state.solved_order()) {
            (None, _) => RunStatus::Success,
            (Some(_), 0) => RunStatus::Failed,
            (Some(_), _) => RunStatus::Partial,
        }
    }
}

/// Solves orders `state.solved_order()+1 ..= s_max` until the first failure.
pub fn continue_hierarchy(
    mut state: HierarchyState,
    s_max: usize,
    tol_solve: f64,
    policy: &TruncationPolicy,
) -> HierarchyRun {
    for s in state.solved_order() + 1..=s_max {
        match solve_order(&state, s, tol_solve, policy) {
            Ok(next) => state = next,
            Err(err) => {
                let residual = match &err {
                    Error::OrderUnsolvable { residual, .. } => Some(*residual),
                    _ => None,
                };
                return HierarchyRun {
                    state,
                    s_max,
                    failure: Some(OrderFailure {
                        order: s,
                        reason: err.to_string(),
                        residual,
                    }),
                };
            }
        }
    }
    HierarchyRun {
        state,
        s_max,
        failure: None,
    }
}

/// Builds the grid and state for `config` and solves orders `1..=s_max`.
pub fn run_hierarchy(
    sm: &SiegelMatrix,
    config: &SecantConfig,
    s_max: usize,
    tol_solve: f64,
    grid_spec: GridSpec,
    policy: &TruncationPolicy,
) -> Result<HierarchyRun> {
    let grid = SampleGrid::generate(sm, &config.centered_u, grid_spec, policy)?;
    let state = HierarchyState::new(sm.clone(), config.clone(), grid)?;
    Ok(continue_hierarchy(state, s_max, tol_solve, policy))
}

/// `R_s`, `T_s` and `P_s` at one point and the residuals of
/// `R_s = P_s`, `T_s = P_s` and `R_s² = R_s T_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub order: usize,
    pub p_s: Complex64,
    pub r_s: Complex64,
    pub t_s: Complex64,
    pub r_residual: f64,
    pub t_residual: f64,
    pub rsq_residual: f64,
}

/// Evaluates the cross-identities at order `s`. Unsolved unknowns read as
/// zero, so the values stay meaningful as diagnostics on partial states.
pub fn rt_cross_check(
    state: &HierarchyState,
    s: usize,
    z: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<CrossCheck> {
    check_order(s)?;
    let view = state.view(s, s);
    let p_s = view.coefficients(z, Shift::Centered, policy)?[s];
    let r_s = view.coefficients(z, Shift::Forward, policy)?[s];
    let t_s = view.coefficients(z, Shift::Backward, policy)?[s];
    Ok(CrossCheck {
        order: s,
        p_s,
        r_s,
        t_s,
        r_residual: (r_s - p_s).norm(),
        t_residual: (t_s - p_s).norm(),
        rsq_residual: (r_s * r_s - r_s * t_s).norm(),
    })
}
