//! Truncated power series in `ε` and the partition-weighted operators
//! `Δ_s`, the `ε^s` coefficients of `exp(Σ_j D_j ε^j)`.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::SeededRng;
use crate::theta::{multi_orders, DirectionalJet, MAX_JET_ORDER};
use crate::CVec;

/// Highest `ε` order handled anywhere in the crate.
pub const MAX_SERIES_ORDER: usize = MAX_JET_ORDER;

fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// Power series truncated at a declared order. Coefficients are complex
/// scalars (`dim == 1`) or complex vectors of length `dim`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerSeries {
    dim: usize,
    coeffs: Vec<Complex64>,
}

impl PowerSeries {
    pub fn zero(order: usize, dim: usize) -> Self {
        Self {
            dim,
            coeffs: vec![zero(); (order + 1) * dim],
        }
    }

    pub fn scalar(coeffs: Vec<Complex64>) -> Self {
        assert!(!coeffs.is_empty(), "a series has at least the constant term");
        Self { dim: 1, coeffs }
    }

    pub fn vector(coeffs: &[CVec]) -> Result<Self> {
        let dim = coeffs.first().map_or(1, Vec::len);
        if let Some(bad) = coeffs.iter().find(|c| c.len() != dim) {
            return Err(Error::ShapeMismatch {
                left: dim,
                right: bad.len(),
            });
        }
        Ok(Self {
            dim,
            coeffs: coeffs.iter().flatten().copied().collect(),
        })
    }

    pub fn constant(value: Complex64, order: usize) -> Self {
        let mut s = Self::zero(order, 1);
        s.coeffs[0] = value;
        s
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() / self.dim - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, s: usize) -> &[Complex64] {
        &self.coeffs[s * self.dim..(s + 1) * self.dim]
    }

    /// Coefficient of `ε^s` of a scalar series; zero beyond the order.
    pub fn at(&self, s: usize) -> Complex64 {
        debug_assert_eq!(self.dim, 1);
        if s > self.order() {
            zero()
        } else {
            self.coeffs[s]
        }
    }

    pub fn scalars(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Cauchy product truncated to the smaller order. A scalar series may
    /// multiply a vector series; two vector series may not.
    pub fn mul(&self, other: &PowerSeries) -> Result<PowerSeries> {
        let dim = match (self.dim, other.dim) {
            (1, d) | (d, 1) => d,
            (l, r) => return Err(Error::ShapeMismatch { left: l, right: r }),
        };
        let order = self.order().min(other.order());
        let mut out = PowerSeries::zero(order, dim);
        for s in 0..=order {
            for i in 0..=s {
                let a = self.coeff(i);
                let b = other.coeff(s - i);
                for d in 0..dim {
                    let x = a[if self.dim == 1 { 0 } else { d }];
                    let y = b[if other.dim == 1 { 0 } else { d }];
                    out.coeffs[s * dim + d] += x * y;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &PowerSeries) -> Result<PowerSeries> {
        if self.dim != other.dim {
            return Err(Error::ShapeMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        let order = self.order().min(other.order());
        let n = (order + 1) * self.dim;
        Ok(PowerSeries {
            dim: self.dim,
            coeffs: self.coeffs[..n]
                .iter()
                .zip(&other.coeffs[..n])
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn scale(&self, factor: Complex64) -> PowerSeries {
        PowerSeries {
            dim: self.dim,
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn truncate(&self, order: usize) -> PowerSeries {
        let order = order.min(self.order());
        PowerSeries {
            dim: self.dim,
            coeffs: self.coeffs[..(order + 1) * self.dim].to_vec(),
        }
    }
}

pub fn series_mul(a: &PowerSeries, b: &PowerSeries) -> Result<PowerSeries> {
    a.mul(b)
}

pub fn series_add(a: &PowerSeries, b: &PowerSeries) -> Result<PowerSeries> {
    a.add(b)
}

pub fn series_truncate(a: &PowerSeries, order: usize) -> PowerSeries {
    a.truncate(order)
}

/// Constant vector fields `D_j = Σ_i W^{(j)}_i ∂/∂z_i`, `j = 1, 2, …`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorFieldSeq {
    g: usize,
    w: Vec<CVec>,
}

impl VectorFieldSeq {
    /// Rejects a vanishing leading field `W^{(1)}`.
    pub fn new(g: usize, w: Vec<CVec>) -> Result<Self> {
        if let Some(bad) = w.iter().find(|v| v.len() != g) {
            return Err(Error::DimensionMismatch {
                expected: g,
                found: bad.len(),
            });
        }
        if let Some(first) = w.first() {
            if first.iter().all(|c| c.norm() == 0.0) {
                return Err(Error::ZeroDirection);
            }
        }
        Ok(Self { g, w })
    }

    /// Any list of fields, including a zero leading one. Used for the
    /// partially zeroed sequences the hierarchy evaluates.
    pub(crate) fn unchecked(g: usize, w: Vec<CVec>) -> Self {
        Self { g, w }
    }

    pub fn empty(g: usize) -> Self {
        Self { g, w: Vec::new() }
    }

    pub fn genus(&self) -> usize {
        self.g
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn fields(&self) -> &[CVec] {
        &self.w
    }

    /// `W^{(j)}` for `j ≥ 1`.
    pub fn field(&self, j: usize) -> &[Complex64] {
        &self.w[j - 1]
    }

    pub(crate) fn push(&mut self, field: CVec) {
        self.w.push(field);
    }

    /// All fields multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            g: self.g,
            w: self.w.iter().map(|v| v.iter().map(|c| c * factor).collect()).collect(),
        }
    }

    /// Exactly `len` fields: truncated, or extended with zero fields.
    pub fn padded(&self, len: usize) -> Self {
        let mut w: Vec<CVec> = self.w.iter().take(len).cloned().collect();
        w.resize(len, vec![zero(); self.g]);
        Self { g: self.g, w }
    }

    /// The curve germ `C(ε) = Σ_{j≥1} W^{(j)} ε^j` up to `order`.
    pub fn curve(&self, order: usize) -> PowerSeries {
        let mut coeffs = vec![vec![zero(); self.g]];
        for j in 1..=order {
            coeffs.push(self.w.get(j - 1).cloned().unwrap_or_else(|| vec![zero(); self.g]));
        }
        PowerSeries::vector(&coeffs).expect("fields share the genus")
    }
}

/// A term `D_1^{i_1}⋯D_s^{i_s} / (i_1!⋯i_s!)` of `Δ_s`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightedPartition {
    pub s: usize,
    /// `(i_1, …, i_s)` with `Σ k·i_k = s`.
    pub multiplicities: Vec<u32>,
    pub weight_num: u64,
    pub weight_den: u64,
}

impl WeightedPartition {
    pub fn weight(&self) -> f64 {
        self.weight_num as f64 / self.weight_den as f64
    }

    /// Number of operator factors `i_1 + ⋯ + i_s`.
    pub fn length(&self) -> u32 {
        self.multiplicities.iter().sum()
    }
}

fn factorial(n: u32) -> u64 {
    (1..=u64::from(n)).product()
}

fn enumerate_partitions(s: usize) -> Vec<WeightedPartition> {
    fn rec(left: usize, largest: usize, mult: &mut Vec<u32>, s: usize, out: &mut Vec<WeightedPartition>) {
        if left == 0 {
            out.push(WeightedPartition {
                s,
                multiplicities: mult.clone(),
                weight_num: 1,
                weight_den: mult.iter().map(|&i| factorial(i)).product(),
            });
            return;
        }
        if largest == 0 {
            return;
        }
        for count in (0..=left / largest).rev() {
            mult[largest - 1] = count as u32;
            rec(left - count * largest, largest - 1, mult, s, out);
        }
        mult[largest - 1] = 0;
    }
    let mut out = Vec::new();
    rec(s, s, &mut vec![0; s], s, &mut out);
    out
}

fn partition_table() -> &'static [Vec<WeightedPartition>] {
    static TABLE: OnceLock<Vec<Vec<WeightedPartition>>> = OnceLock::new();
    TABLE.get_or_init(|| (0..=MAX_SERIES_ORDER).map(enumerate_partitions).collect())
}

/// All weighted partitions of `s` (the single empty partition for `s = 0`).
pub fn partitions_weighted(s: usize) -> Result<Vec<WeightedPartition>> {
    partitions_ref(s).map(<[_]>::to_vec)
}

pub(crate) fn partitions_ref(s: usize) -> Result<&'static [WeightedPartition]> {
    if s > MAX_SERIES_ORDER {
        return Err(Error::OrderCeilingExceeded {
            order: s,
            ceiling: MAX_SERIES_ORDER,
        });
    }
    Ok(&partition_table()[s])
}

/// Multi-orders a jet needs so that `Δ_0, …, Δ_order` can be applied.
pub fn delta_multi_orders(order: usize) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    for s in 0..=order {
        out.extend(partitions_ref(s)?.iter().map(|p| p.multiplicities.clone()));
    }
    Ok(out)
}

/// `+1` selects `Δ_s` (coefficients of `e^{D(ε)}`), `-1` selects `Δ_s⁻`
/// (coefficients of `e^{-D(ε)}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn factor(self, length: u32) -> f64 {
        match self {
            Sign::Minus if length % 2 == 1 => -1.0,
            _ => 1.0,
        }
    }
}

/// `Δ_s f` (or `Δ_s⁻ f`) at the jet's base point, read off a jet whose
/// directions start with `W^{(1)}, …, W^{(s)}`.
pub fn delta_apply(s: usize, seq: &VectorFieldSeq, jet: &DirectionalJet, sign: Sign) -> Result<Complex64> {
    let parts = partitions_ref(s)?;
    if s > 0 && (seq.len() < s || jet.directions.len() < s) {
        let mut missing = vec![0; s];
        missing[s - 1] = 1;
        return Err(Error::JetTooShallow { multi_order: missing });
    }
    if seq.fields()[..s] != jet.directions[..s] {
        return Err(Error::DegenerateInput(
            "jet directions differ from the vector-field sequence".into(),
        ));
    }
    let mut total = zero();
    for p in parts {
        let value = jet.get(&p.multiplicities).ok_or_else(|| Error::JetTooShallow {
            multi_order: p.multiplicities.clone(),
        })?;
        total += value * (p.weight() * sign.factor(p.length()));
    }
    Ok(total)
}

/// Multivariate polynomial in `z_1, …, z_g` with complex coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    g: usize,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

impl Polynomial {
    pub fn new(g: usize, terms: impl IntoIterator<Item = (Vec<u32>, Complex64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (exps, c) in terms {
            if exps.len() != g {
                return Err(Error::DimensionMismatch {
                    expected: g,
                    found: exps.len(),
                });
            }
            *map.entry(exps).or_insert_with(zero) += c;
        }
        Ok(Self { g, terms: map })
    }

    pub fn constant(g: usize, c: Complex64) -> Self {
        Self::new(g, [(vec![0; g], c)]).expect("exponent length matches")
    }

    /// Random polynomial of total degree `≤ degree` with `n_terms` terms.
    pub fn random(g: usize, degree: u32, n_terms: usize, rng: &mut SeededRng) -> Self {
        let terms: Vec<(Vec<u32>, Complex64)> = (0..n_terms)
            .map(|_| {
                let mut exps = vec![0u32; g];
                let total = rng.gen_range(0..=degree);
                for _ in 0..total {
                    exps[rng.gen_range(0..g)] += 1;
                }
                let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (exps, c)
            })
            .collect();
        Self::new(g, terms).expect("exponent length matches")
    }

    pub fn genus(&self) -> usize {
        self.g
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    pub fn eval(&self, z: &[Complex64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(exps, c)| exps.iter().zip(z).fold(*c, |acc, (&e, zi)| acc * zi.powu(e)))
            .sum()
    }

    pub fn partial(&self, i: usize) -> Polynomial {
        let mut terms = BTreeMap::new();
        for (exps, c) in &self.terms {
            if exps[i] > 0 {
                let mut e = exps.clone();
                e[i] -= 1;
                *terms.entry(e).or_insert_with(zero) += c * f64::from(exps[i]);
            }
        }
        Polynomial { g: self.g, terms }
    }

    /// `Σ_i v_i ∂f/∂z_i`.
    pub fn directional(&self, v: &[Complex64]) -> Polynomial {
        let mut terms: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        for (i, vi) in v.iter().enumerate() {
            for (e, c) in self.partial(i).terms {
                *terms.entry(e).or_insert_with(zero) += c * vi;
            }
        }
        Polynomial { g: self.g, terms }
    }

    /// Jet of directional derivatives by explicit differentiation.
    pub fn jet(&self, point: &[Complex64], directions: &[CVec], max_order: usize) -> DirectionalJet {
        let mut derived: BTreeMap<Vec<u32>, Polynomial> = BTreeMap::new();
        let mut entries = Vec::new();
        for order in multi_orders(directions.len(), max_order) {
            let poly = match order.iter().rposition(|&n| n > 0) {
                None => self.clone(),
                Some(k) => {
                    let mut parent = order.clone();
                    parent[k] -= 1;
                    derived[&parent].directional(&directions[k])
                }
            };
            entries.push((order.clone(), poly.eval(point)));
            derived.insert(order, poly);
        }
        DirectionalJet::from_entries(point.to_vec(), directions.to_vec(), max_order, entries)
    }
}

/// `Δ_s f` (or `Δ_s⁻ f`) as a polynomial.
pub fn delta_poly(s: usize, seq: &VectorFieldSeq, f: &Polynomial, sign: Sign) -> Result<Polynomial> {
    if seq.len() < s {
        let mut missing = vec![0; s];
        missing[s - 1] = 1;
        return Err(Error::JetTooShallow { multi_order: missing });
    }
    let mut terms: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
    for p in partitions_ref(s)? {
        let mut poly = f.clone();
        for (k, &count) in p.multiplicities.iter().enumerate() {
            for _ in 0..count {
                poly = poly.directional(seq.field(k + 1));
            }
        }
        let w = p.weight() * sign.factor(p.length());
        for (e, c) in poly.terms {
            *terms.entry(e).or_insert_with(zero) += c * w;
        }
    }
    Ok(Polynomial { g: f.g, terms })
}

/// Taylor coefficients of `f(c0 + C(ε))` by substituting the curve germ
/// into the polynomial and multiplying truncated series.
pub fn exp_series_oracle(seq: &VectorFieldSeq, f: &Polynomial, c0: &[Complex64], order: usize) -> Result<PowerSeries> {
    if order > MAX_SERIES_ORDER {
        return Err(Error::OrderCeilingExceeded {
            order,
            ceiling: MAX_SERIES_ORDER,
        });
    }
    let g = f.genus();
    if c0.len() != g || seq.genus() != g {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: c0.len(),
        });
    }
    let coords: Vec<PowerSeries> = (0..g)
        .map(|i| {
            let mut c = vec![c0[i]];
            for j in 1..=order {
                c.push(seq.fields().get(j - 1).map_or(zero(), |w| w[i]));
            }
            PowerSeries::scalar(c)
        })
        .collect();
    let mut total = PowerSeries::zero(order, 1);
    for (exps, coeff) in f.terms() {
        let mut term = PowerSeries::constant(coeff, order);
        for (i, &e) in exps.iter().enumerate() {
            for _ in 0..e {
                term = term.mul(&coords[i])?;
            }
        }
        total = total.add(&term)?;
    }
    Ok(total)
}
