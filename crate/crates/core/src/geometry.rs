//! Degenerate secants, translated configurations and the intersection
//! `G = Θ_u ∩ Θ_{−u}` used for restriction checks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{
    affine_block, projection_residual, q_s_eval, shifted_series_eval, solve_order, GridSpec, HierarchyState,
    SampleGrid, Shift,
};
use crate::kummer::{center_config, SecantConfig};
use crate::linalg::{least_squares, CMatrix};
use crate::par;
use crate::sampling::{derive_seed, random_torus_point, rng};
use crate::series::{delta_apply, delta_multi_orders, Sign, VectorFieldSeq};
use crate::theta::{theta_eval, theta_gradient, theta_jet_orders, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};
use crate::CVec;

const FD_STEP: f64 = 1e-6;
const MAX_RESTARTS: usize = 5;
/// Iterates with `b_m` this close to `±u` (lattice coordinates) are degenerate.
const COLLISION: f64 = 1e-3;
const MIN_LEADING_FIELD: f64 = 1e-6;
const DEDUP: f64 = 1e-6;
const DIVISOR_SEED: u64 = 0x7E7A_D1F5;
const NEWTON_ITERS: usize = 80;

fn add(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// A degenerate `(m+2)`-secant certified by the order-1 solve.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SecantSearchResult {
    pub config: SecantConfig,
    /// `D_1 / ‖D_1‖`.
    pub d1: CVec,
    /// `‖D_1‖` in the gauge `α_{m+2}(ε) = ε`.
    pub d1_norm: f64,
    pub alpha1_1: Complex64,
    /// `α_{3,1}, …, α_{m+1,1}`.
    pub alpha_j_1: CVec,
    pub final_residual: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Solved order-1 state on the search grid.
    #[serde(skip)]
    pub state: Option<HierarchyState>,
}

/// Equality of the reported data; the attached state is ignored.
impl PartialEq for SecantSearchResult {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.d1 == other.d1
            && self.d1_norm == other.d1_norm
            && self.alpha1_1 == other.alpha1_1
            && self.alpha_j_1 == other.alpha_j_1
            && self.final_residual == other.final_residual
            && self.iterations == other.iterations
            && self.restarts == other.restarts
            && self.seed == other.seed
    }
}

struct Search<'a> {
    sm: &'a SiegelMatrix,
    u: CVec,
    m: usize,
    grid: SampleGrid,
    /// Fixed columns `θ_uθ_{−u}` and the `D` cross terms.
    fixed: Vec<CVec>,
    scale: f64,
    policy: &'a TruncationPolicy,
}

impl Search<'_> {
    fn points(&self, p: &[f64]) -> Vec<CVec> {
        let g = self.sm.genus();
        (0..self.m)
            .map(|j| {
                (0..g)
                    .map(|k| Complex64::new(p[2 * (j * g + k)], p[2 * (j * g + k) + 1]))
                    .collect()
            })
            .collect()
    }

    fn products(&self, b: &[Complex64]) -> Result<CVec> {
        let ch = ThetaCharacteristic::zero(self.sm.genus());
        par::map(&self.grid.points, |z| -> Result<Complex64> {
            Ok(theta_eval(self.sm, &ch, &add(z, b), self.policy)? * theta_eval(self.sm, &ch, &sub(z, b), self.policy)?)
        })
        .into_iter()
        .collect()
    }

    /// Residual of the order-1 system after eliminating the linear
    /// unknowns, stacked as real and imaginary parts.
    fn residual(&self, p: &[f64]) -> Result<Vec<f64>> {
        let b = self.points(p);
        let n = self.grid.count();
        let g = self.sm.genus();
        let q = self.products(&b[self.m - 1])?;
        let mut cols = Vec::with_capacity(self.m + g);
        cols.push(self.fixed[0].clone());
        for bj in &b[..self.m - 1] {
            cols.push(self.products(bj)?);
        }
        cols.extend(self.fixed[1..].iter().cloned());
        let a = CMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        let rhs: CVec = q.iter().map(|c| -c).collect();
        let ls = least_squares(&a, &rhs, 1e-14);
        let mut out = Vec::with_capacity(2 * n);
        for i in 0..n {
            let ax: Complex64 = (0..a.ncols()).map(|j| a[(i, j)] * ls.x[j]).sum();
            let r = (ax + q[i]) / self.scale;
            out.push(r.re);
            out.push(r.im);
        }
        Ok(out)
    }

    fn max_modulus(r: &[f64]) -> f64 {
        r.chunks(2).map(|c| c[0].hypot(c[1])).fold(0.0, f64::max)
    }

    /// Levenberg–Marquardt with a forward-difference Jacobian.
    fn minimize(&self, mut p: Vec<f64>, tol: f64, max_iters: usize) -> Result<(Vec<f64>, f64, usize)> {
        let mut r = self.residual(&p)?;
        let mut cost: f64 = r.iter().map(|x| x * x).sum();
        let mut lambda = 1e-3;
        let mut iters = 0;
        while iters < max_iters && Self::max_modulus(&r) > 1e-2 * tol {
            iters += 1;
            let k = p.len();
            let mut jac = DMatrix::<f64>::zeros(r.len(), k);
            for c in 0..k {
                let mut q = p.clone();
                let h = FD_STEP * p[c].abs().max(1.0);
                q[c] += h;
                let rq = self.residual(&q)?;
                for (i, (a, b)) in rq.iter().zip(&r).enumerate() {
                    jac[(i, c)] = (a - b) / h;
                }
            }
            let rv = DVector::from_column_slice(&r);
            let jtj = jac.transpose() * &jac;
            let grad = jac.transpose() * rv;
            let mut accepted = false;
            while lambda < 1e12 {
                let mut h = jtj.clone();
                for d in 0..k {
                    h[(d, d)] += lambda * (jtj[(d, d)] + 1e-12);
                }
                let Some(step) = h.cholesky().map(|ch| ch.solve(&(-&grad))) else {
                    lambda *= 4.0;
                    continue;
                };
                let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, d)| a + d).collect();
                let rt = self.residual(&trial)?;
                let ct: f64 = rt.iter().map(|x| x * x).sum();
                if ct < cost {
                    p = trial;
                    r = rt;
                    cost = ct;
                    lambda = (lambda / 3.0).max(1e-15);
                    accepted = true;
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                break;
            }
        }
        Ok((p, Self::max_modulus(&r), iters))
    }
}

enum Attempt {
    Found(Box<SecantSearchResult>),
    Degenerate(String),
    Failed { residual: f64, iterations: usize },
}

fn search_attempt(
    sm: &SiegelMatrix,
    m: usize,
    seed: u64,
    tol_search: f64,
    max_iters: usize,
    policy: &TruncationPolicy,
) -> Result<Attempt> {
    let g = sm.genus();
    let mut r = rng(seed);
    let zero: CVec = vec![Complex64::new(0.0, 0.0); g];
    let u = loop {
        let u = random_torus_point(sm, 0.5, &mut r);
        let two_u: CVec = u.iter().map(|c| c * 2.0).collect();
        if sm.lattice_distance(&two_u, &zero) > 0.1 {
            break u;
        }
    };
    let minus_u: CVec = u.iter().map(|c| -c).collect();
    let mut start = Vec::with_capacity(2 * m * g);
    let mut chosen: Vec<CVec> = vec![u.clone(), minus_u.clone()];
    for _ in 0..m {
        let b = loop {
            let b = random_torus_point(sm, 0.5, &mut r);
            if chosen.iter().all(|p| sm.lattice_distance(&b, p) > 0.2) {
                break b;
            }
        };
        for c in &b {
            start.push(c.re);
            start.push(c.im);
        }
        chosen.push(b);
    }

    let grid = SampleGrid::generate(sm, &u, GridSpec::seeded(derive_seed(seed, 1)), policy)?;
    let trivial = SecantConfig::from_centered(&u, &chosen[2..])?;
    let probe = HierarchyState::new(sm.clone(), trivial, grid.clone())?;
    let blocks = par::map(&grid.points, |z| affine_block(&probe, z, policy))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut fixed = vec![blocks.iter().map(|b| b[0]).collect::<CVec>()];
    for k in 0..g {
        fixed.push(blocks.iter().map(|b| b[m + k]).collect());
    }
    let scale = fixed[0].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let search = Search {
        sm,
        u: u.clone(),
        m,
        grid,
        fixed,
        scale,
        policy,
    };
    let (p, residual, iterations) = search.minimize(start, tol_search, max_iters)?;
    let b = search.points(&p);

    for (j, bj) in b.iter().enumerate() {
        for (label, x) in [("u", &search.u), ("-u", &minus_u)] {
            if sm.lattice_distance(bj, x) < COLLISION {
                return Ok(Attempt::Degenerate(format!("b_{} ≡ {label}", j + 1)));
            }
        }
    }
    let config = match SecantConfig::from_centered(&search.u, &b) {
        Ok(c) => c,
        Err(e) => return Ok(Attempt::Degenerate(e.to_string())),
    };
    let state = match HierarchyState::new(sm.clone(), config.clone(), search.grid.clone()) {
        Ok(s) => s,
        Err(e) => return Ok(Attempt::Degenerate(e.to_string())),
    };
    let solved = match solve_order(&state, 1, tol_search, policy) {
        Ok(s) => s,
        Err(Error::OrderUnsolvable {
            residual: certified, ..
        }) => {
            return Ok(Attempt::Failed {
                residual: certified.max(residual),
                iterations,
            })
        }
        Err(e @ (Error::ZeroLeadingField | Error::IllConditioned { .. })) => {
            return Ok(Attempt::Degenerate(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    let d1 = solved.seq.field(1).to_vec();
    let d1_norm = norm(&d1);
    if d1_norm < MIN_LEADING_FIELD {
        return Ok(Attempt::Degenerate(format!("‖D_1‖ = {d1_norm:e}")));
    }
    Ok(Attempt::Found(Box::new(SecantSearchResult {
        config,
        d1: d1.iter().map(|c| c / d1_norm).collect(),
        d1_norm,
        alpha1_1: solved.alphas.get(1, 1),
        alpha_j_1: (3..=m + 1).map(|j| solved.alphas.get(j, 1)).collect(),
        final_residual: solved.residuals[0],
        iterations,
        restarts: 0,
        seed,
        state: Some(solved),
    })))
}

/// Finds `u, b_1, …, b_m` with `P_1 = 0` on a seeded grid.
///
/// `u` is drawn from the seed and kept fixed; the points `b_j` are moved by
/// Levenberg–Marquardt on the residual left after eliminating the linear
/// unknowns `α_{·,1}` and `D_1` by least squares. Degenerate iterates
/// restart from a derived seed.
pub fn find_degenerate_secant(
    sm: &SiegelMatrix,
    m: usize,
    seed: u64,
    tol_search: f64,
    max_iters: usize,
    policy: &TruncationPolicy,
) -> Result<SecantSearchResult> {
    if m == 0 {
        return Err(Error::DegenerateInput("m must be at least 1".into()));
    }
    if !(tol_search > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "tol_search must be positive, got {tol_search}"
        )));
    }
    policy.validate()?;
    let mut last = String::new();
    for restart in 0..=MAX_RESTARTS {
        let attempt_seed = if restart == 0 {
            seed
        } else {
            derive_seed(seed, 100 + restart as u64)
        };
        match search_attempt(sm, m, attempt_seed, tol_search, max_iters, policy)? {
            Attempt::Found(mut result) => {
                result.restarts = restart;
                result.seed = seed;
                return Ok(*result);
            }
            Attempt::Failed { residual, iterations } => {
                return Err(Error::SearchFailed {
                    best_residual: residual,
                    iterations,
                })
            }
            Attempt::Degenerate(why) => last = why,
        }
    }
    Err(Error::DegenerateIterate(last))
}

/// The `m − 1` configurations obtained by shifting `(u, −u, b_1, …, b_m)` by
/// `−½(b_m + μ)` for `μ ∈ {−b_1, …, −b_{m−1}}`.
pub fn translated_configs(u: &[Complex64], b: &[CVec]) -> Result<Vec<SecantConfig>> {
    let Some((bm, rest)) = b.split_last() else {
        return Err(Error::DegenerateInput("at least one point b_j is required".into()));
    };
    let minus_u: CVec = u.iter().map(|c| -c).collect();
    rest.iter()
        .map(|bj| {
            let shift: CVec = bm.iter().zip(bj).map(|(x, y)| (x - y) * 0.5).collect();
            let points: Vec<CVec> = std::iter::once(u)
                .chain(std::iter::once(minus_u.as_slice()))
                .chain(b.iter().map(Vec::as_slice))
                .map(|p| sub(p, &shift))
                .collect();
            center_config(&points)
        })
        .collect()
}

/// Points of `Θ_u ∩ Θ_{−u}` modulo the lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorIntersection {
    pub u: CVec,
    pub points: Vec<CVec>,
    pub tol: f64,
    pub starts: usize,
}

fn newton_root(
    sm: &SiegelMatrix,
    u: &[Complex64],
    start: CVec,
    tol: f64,
    policy: &TruncationPolicy,
) -> Result<Option<CVec>> {
    let ch = ThetaCharacteristic::zero(2);
    let eval = |z: &[Complex64]| -> Result<[Complex64; 2]> {
        Ok([
            theta_eval(sm, &ch, &sub(z, u), policy)?,
            theta_eval(sm, &ch, &add(z, u), policy)?,
        ])
    };
    let size = |f: &[Complex64; 2]| f[0].norm().max(f[1].norm());
    let mut z = start;
    let mut f = eval(&z)?;
    for _ in 0..NEWTON_ITERS {
        if size(&f) <= 1e-3 * tol {
            break;
        }
        let (_, g0) = theta_gradient(sm, &ch, &sub(&z, u), policy)?;
        let (_, g1) = theta_gradient(sm, &ch, &add(&z, u), policy)?;
        let det = g0[0] * g1[1] - g0[1] * g1[0];
        if det.norm() < 1e-300 {
            return Ok(None);
        }
        let step = [
            -(g1[1] * f[0] - g0[1] * f[1]) / det,
            -(-g1[0] * f[0] + g0[0] * f[1]) / det,
        ];
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let trial: CVec = z.iter().zip(&step).map(|(a, d)| a + d * t).collect();
            let ft = eval(&trial)?;
            if size(&ft) < size(&f) {
                z = sm.reduce(&trial).0;
                f = eval(&z)?;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    Ok((size(&f) <= tol).then_some(z))
}

fn torus_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            let d = d - d.round();
            d * d
        })
        .sum::<f64>()
        .sqrt()
}

/// Multi-start damped Newton on `ζ ↦ (θ(ζ−u), θ(ζ+u))` for `g = 2`.
///
/// Starts are drawn from a fixed internal stream, so a larger `n_starts`
/// extends the start list without changing its prefix.
pub fn divisor_intersection_points(
    sm: &SiegelMatrix,
    u: &[Complex64],
    n_starts: usize,
    tol: f64,
    policy: &TruncationPolicy,
) -> Result<DivisorIntersection> {
    if sm.genus() != 2 {
        return Err(Error::Unsupported(format!(
            "divisor intersection is implemented for genus 2, got {}",
            sm.genus()
        )));
    }
    if u.len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: u.len(),
        });
    }
    let two_u: CVec = u.iter().map(|c| c * 2.0).collect();
    if sm.lattice_distance(&two_u, &[Complex64::new(0.0, 0.0); 2]) < 1e-8 {
        return Err(Error::DegenerateInput("2u ≡ 0 modulo the lattice".into()));
    }
    let starts: Vec<CVec> = (0..n_starts)
        .map(|k| random_torus_point(sm, 0.5, &mut rng(derive_seed(DIVISOR_SEED, k as u64))))
        .collect();
    let roots = par::map(&starts, |s| newton_root(sm, u, s.clone(), tol, policy))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut found: Vec<(CVec, Vec<f64>)> = Vec::new();
    for z in roots.into_iter().flatten() {
        let (z, coords) = sm.reduce(&z);
        if found.iter().all(|(_, c)| torus_gap(c, &coords) > DEDUP) {
            found.push((z, coords));
        }
    }
    if found.is_empty() {
        return Err(Error::NoPointsFound { starts: n_starts });
    }
    found.sort_by(|a, b| {
        a.1.iter()
            .zip(&b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(DivisorIntersection {
        u: u.to_vec(),
        points: found.into_iter().map(|(z, _)| z).collect(),
        tol,
        starts: n_starts,
    })
}

/// Whether two intersections agree as point sets modulo the lattice.
pub fn same_point_set(sm: &SiegelMatrix, a: &DivisorIntersection, b: &DivisorIntersection, tol: f64) -> bool {
    let covered = |x: &DivisorIntersection, y: &DivisorIntersection| {
        x.points
            .iter()
            .all(|p| y.points.iter().any(|q| sm.lattice_distance(p, q) <= tol))
    };
    a.points.len() == b.points.len() && covered(a, b) && covered(b, a)
}

fn check_restriction_setting(state: &HierarchyState, s: usize, points: &DivisorIntersection) -> Result<()> {
    if state.sm.genus() != 2 || state.config.m != 1 {
        return Err(Error::Unsupported("restriction checks need g = 2 and m = 1".into()));
    }
    if points.points.is_empty() {
        return Err(Error::NoPointsFound { starts: points.starts });
    }
    if s == 0 || state.solved_order() + 1 < s {
        return Err(Error::LowerOrdersUnsolved {
            requested: s,
            solved: state.solved_order(),
        });
    }
    Ok(())
}

/// `κ · Δ_{s−1}θ(ζ+b) · θ(ζ−b)`, the value `R_s` must take on `G`.
fn restricted_rhs(
    state: &HierarchyState,
    s: usize,
    zeta: &[Complex64],
    policy: &TruncationPolicy,
) -> Result<Complex64> {
    let sm = &state.sm;
    let ch = ThetaCharacteristic::zero(sm.genus());
    let b = &state.b()[0];
    let k = s - 1;
    let fields = state.seq.fields()[..k].to_vec();
    let seq = VectorFieldSeq::unchecked(sm.genus(), fields);
    let jet = theta_jet_orders(sm, &ch, &add(zeta, b), seq.fields(), &delta_multi_orders(k)?, policy)?;
    let delta = delta_apply(k, &seq, &jet, Sign::Plus)?;
    Ok(state.alphas.gauge() * delta * theta_eval(sm, &ch, &sub(zeta, b), policy)?)
}

/// `max_ζ |R_s(ζ) − Δ_{s−1}θ(ζ+b_1)·θ(ζ−b_1)| / (max(|R_s|, |rhs|) + 1)`
/// over the points of `G`.
pub fn restriction_check(
    state: &HierarchyState,
    s: usize,
    points: &DivisorIntersection,
    policy: &TruncationPolicy,
) -> Result<f64> {
    check_restriction_setting(state, s, points)?;
    let mut worst: f64 = 0.0;
    for zeta in &points.points {
        let r_s = shifted_series_eval(state, zeta, s, Shift::Forward, policy)?.at(s);
        let rhs = restricted_rhs(state, s, zeta, policy)?;
        worst = worst.max((r_s - rhs).norm() / (r_s.norm().max(rhs.norm()) + 1.0));
    }
    Ok(worst)
}

/// Solvability of order `s` next to the size of `Q_s` on `G`.
///
/// On `G` every unknown column vanishes, so `P_s|_G = Q_s|_G`; the order is
/// solvable exactly when `Q_s` restricts to zero there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestrictionSolvability {
    pub order: usize,
    /// `max_ζ |Q_s(ζ)|`, normalised like the solve residual.
    pub q_on_g: f64,
    pub projection_residual: f64,
}

impl RestrictionSolvability {
    /// Both quantities small, or both large, relative to `tol`.
    pub fn consistent(&self, tol: f64) -> bool {
        (self.q_on_g <= tol) == (self.projection_residual <= tol)
    }
}

pub fn restriction_solvability_check(
    state: &HierarchyState,
    s: usize,
    points: &DivisorIntersection,
    policy: &TruncationPolicy,
) -> Result<RestrictionSolvability> {
    check_restriction_setting(state, s, points)?;
    let lower = state.truncated(s - 1);
    let ch = ThetaCharacteristic::zero(2);
    let u = state.u();
    let mut scale: f64 = 0.0;
    for z in &state.grid.points {
        let v = theta_eval(&state.sm, &ch, &add(z, u), policy)? * theta_eval(&state.sm, &ch, &sub(z, u), policy)?;
        scale = scale.max(v.norm());
    }
    let mut q_on_g: f64 = 0.0;
    for zeta in &points.points {
        q_on_g = q_on_g.max(q_s_eval(&lower, s, zeta, policy)?.norm());
    }
    Ok(RestrictionSolvability {
        order: s,
        q_on_g: q_on_g / scale,
        projection_residual: projection_residual(&lower, s, policy)?,
    })
}
