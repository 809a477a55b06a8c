//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.
//! Expected values come from oracles written here: brute-force box
//! summation, closed forms, finite differences and direct series
//! composition.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use secantlab_core::geometry::{divisor_intersection_points, find_degenerate_secant, restriction_check};
use secantlab_core::hierarchy::{
    continue_hierarchy, rt_cross_check, run_hierarchy, solve_order, GridSpec, HierarchyState, SampleGrid,
};
use secantlab_core::kummer::{
    addition_formula_residual, center_config, degenerate_secant_test, honest_secant_test, SecantConfig,
    DEFAULT_TOL_RANK,
};
use secantlab_core::run::{dispatch, parse_config, DispatchOptions};
use secantlab_core::sampling::{random_cvec, random_siegel, random_torus_point, rng, SeededRng};
use secantlab_core::series::{delta_apply, delta_poly, exp_series_oracle, Polynomial, Sign, VectorFieldSeq};
use secantlab_core::theta::{theta_eval, theta_jet, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};
use secantlab_core::{CVec, Error};

const ADDITION_TOL: f64 = 1e-9;
const THETA_VALUE_TOL: f64 = 1e-10;
const THETA_IDENTITY_TOL: f64 = 1e-9;
const JET_FIRST_TOL: f64 = 1e-7;
const JET_SECOND_TOL: f64 = 1e-5;
const DELTA_TOL: f64 = 1e-10;
const BASE_CASE_TOL: f64 = 1e-8;
const BASE_CASE_BUDGET: Duration = Duration::from_secs(30);
const SEARCH_TOL: f64 = 1e-8;
const HIGHER_ORDER_TOL: f64 = 1e-6;
const INSTANTIATION_BUDGET: Duration = Duration::from_secs(600);
const CROSS_TOL: f64 = 1e-7;
const RESTRICTION_TOL: f64 = 1e-6;

/// Fixed seed for the genus-2 period matrix used by criteria 6 to 8.
const GENUS_TWO_SEED: u64 = 2024;

type Check = Result<String, String>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn add(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[Complex64], b: &[Complex64]) -> CVec {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: Error) -> String {
    e.to_string()
}

/// Direct sum over the box `|n_i| ≤ 12`, far beyond where terms matter for
/// `Im Ω ≥ 0.6 I` and bounded `Im z`.
fn theta_box(sm: &SiegelMatrix, z: &[Complex64]) -> Complex64 {
    let g = sm.genus();
    let n_max: i64 = if g <= 2 { 12 } else { 7 };
    let mut n = vec![-n_max; g];
    let mut total = c(0.0, 0.0);
    loop {
        let mut quad = c(0.0, 0.0);
        for i in 0..g {
            for j in 0..g {
                quad += sm.entry(i, j) * (n[i] * n[j]) as f64;
            }
        }
        let lin: Complex64 = (0..g).map(|i| z[i] * n[i] as f64).sum();
        total += (Complex64::i() * PI * quad + Complex64::i() * 2.0 * PI * lin).exp();
        let mut k = 0;
        loop {
            if k == g {
                return total;
            }
            n[k] += 1;
            if n[k] <= n_max {
                break;
            }
            n[k] = -n_max;
            k += 1;
        }
    }
}

fn criterion_1() -> Check {
    let policy = TruncationPolicy::default();
    let mut worst: f64 = 0.0;
    for g in 1..=3 {
        let mut r = rng(100 + g as u64);
        let sm = random_siegel(g, &mut r);
        for _ in 0..100 {
            let z = random_torus_point(&sm, 0.5, &mut r);
            let w = random_torus_point(&sm, 0.5, &mut r);
            worst = worst.max(addition_formula_residual(&sm, &z, &w, &policy).map_err(err)?);
        }
    }
    ensure(
        worst <= ADDITION_TOL,
        format!("addition formula, g=1..3, 300 pairs: max residual {worst:.2e} (tol {ADDITION_TOL:.0e})"),
    )
}

fn criterion_2() -> Check {
    let policy = TruncationPolicy::default();
    let tau_i = SiegelMatrix::from_rows(&[vec![c(0.0, 1.0)]]).map_err(err)?;
    let ch = ThetaCharacteristic::zero(1);
    // θ(0; i) = π^{1/4} / Γ(3/4) and θ(1/2; i) = 2^{-1/4} θ(0; i)
    let gamma_three_quarters = 1.225_416_702_465_177_6;
    let at_zero = PI.powf(0.25) / gamma_three_quarters;
    let at_half = at_zero * 2f64.powf(-0.25);
    let v0 = theta_eval(&tau_i, &ch, &[c(0.0, 0.0)], &policy).map_err(err)?;
    let vh = theta_eval(&tau_i, &ch, &[c(0.5, 0.0)], &policy).map_err(err)?;
    let value_err = (v0 - at_zero).norm().max((vh - at_half).norm());
    let box_err = (v0 - theta_box(&tau_i, &[c(0.0, 0.0)]))
        .norm()
        .max((vh - theta_box(&tau_i, &[c(0.5, 0.0)])).norm());

    let mut quasi: f64 = 0.0;
    let mut even: f64 = 0.0;
    let mut oracle: f64 = 0.0;
    for g in 1..=3 {
        let mut r = rng(200 + g as u64);
        let sm = random_siegel(g, &mut r);
        let chg = ThetaCharacteristic::zero(g);
        for _ in 0..50 {
            let z = random_torus_point(&sm, 0.5, &mut r);
            let th = theta_eval(&sm, &chg, &z, &policy).map_err(err)?;
            let scale = th.norm().max(1e-3);
            let k = r_index(&mut r, g);
            let mut e = vec![c(0.0, 0.0); g];
            e[k] = c(1.0, 0.0);
            let shifted = theta_eval(&sm, &chg, &add(&z, &e), &policy).map_err(err)?;
            let col: CVec = (0..g).map(|i| sm.entry(i, k)).collect();
            let factor = (-Complex64::i() * PI * sm.entry(k, k) - Complex64::i() * 2.0 * PI * z[k]).exp();
            let shifted_omega = theta_eval(&sm, &chg, &add(&z, &col), &policy).map_err(err)?;
            quasi = quasi
                .max((shifted - th).norm() / scale)
                .max((shifted_omega - factor * th).norm() / (factor * th).norm().max(1e-3));
            let neg: CVec = z.iter().map(|x| -x).collect();
            even = even.max((theta_eval(&sm, &chg, &neg, &policy).map_err(err)? - th).norm() / scale);
            oracle = oracle.max((th - theta_box(&sm, &z)).norm() / scale);
        }
    }
    let detail = format!(
        "theta values: |θ(0;i) − π^¼/Γ(¾)| and |θ(½;i) − 2^−¼·π^¼/Γ(¾)| ≤ {value_err:.1e}, \
         box oracle {box_err:.1e}; quasi-periodicity {quasi:.1e}, evenness {even:.1e}, \
         box oracle g≤3 {oracle:.1e}"
    );
    ensure(
        value_err <= THETA_VALUE_TOL
            && box_err <= THETA_VALUE_TOL
            && quasi <= THETA_IDENTITY_TOL
            && even <= THETA_IDENTITY_TOL
            && oracle <= THETA_IDENTITY_TOL,
        detail,
    )
}

fn r_index(r: &mut SeededRng, g: usize) -> usize {
    use rand::Rng;
    r.gen_range(0..g)
}

fn criterion_3() -> Check {
    let policy = TruncationPolicy::default();
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for g in 1..=3 {
        let mut r = rng(300 + g as u64);
        let sm = random_siegel(g, &mut r);
        let ch = ThetaCharacteristic::zero(g);
        for _ in 0..20 {
            let z = random_torus_point(&sm, 0.5, &mut r);
            let v = random_cvec(g, 1.0, &mut r);
            let jet = theta_jet(&sm, &ch, &z, std::slice::from_ref(&v), 2, &policy).map_err(err)?;
            let f = |t: f64| -> Result<Complex64, String> {
                let p: CVec = z.iter().zip(&v).map(|(a, b)| a + b * t).collect();
                theta_eval(&sm, &ch, &p, &policy).map_err(err)
            };
            // fourth-order stencils
            let h1 = 1e-3;
            let fd1 = (f(-2.0 * h1)? - 8.0 * f(-h1)? + 8.0 * f(h1)? - f(2.0 * h1)?) / (12.0 * h1);
            let h2 = 2e-3;
            let fd2 =
                (-f(-2.0 * h2)? + 16.0 * f(-h2)? - 30.0 * f(0.0)? + 16.0 * f(h2)? - f(2.0 * h2)?) / (12.0 * h2 * h2);
            let scale = jet.value().norm();
            let d1 = jet.get(&[1]).ok_or("missing first derivative")?;
            let d2 = jet.get(&[2]).ok_or("missing second derivative")?;
            first = first.max((d1 - fd1).norm() / d1.norm().max(scale));
            second = second.max((d2 - fd2).norm() / d2.norm().max(scale));
        }
    }
    ensure(
        first <= JET_FIRST_TOL && second <= JET_SECOND_TOL,
        format!(
            "jets vs five-point differences, g=1..3, 20 points each: first {first:.1e} (tol {JET_FIRST_TOL:.0e}), \
             second {second:.1e} (tol {JET_SECOND_TOL:.0e})"
        ),
    )
}

/// `f(c0 + Σ_j W^{(j)} ε^j)` up to `ε^order`, by direct series products.
fn compose(f: &Polynomial, c0: &[Complex64], fields: &[CVec], order: usize) -> CVec {
    let g = c0.len();
    let coord = |i: usize| -> CVec {
        let mut s = vec![c0[i]];
        s.extend((1..=order).map(|j| fields.get(j - 1).map_or(c(0.0, 0.0), |w| w[i])));
        s
    };
    let mul = |a: &CVec, b: &CVec| -> CVec { (0..=order).map(|s| (0..=s).map(|k| a[k] * b[s - k]).sum()).collect() };
    let mut total = vec![c(0.0, 0.0); order + 1];
    for (exps, coeff) in f.terms() {
        let mut term = vec![c(0.0, 0.0); order + 1];
        term[0] = coeff;
        for i in 0..g {
            for _ in 0..exps[i] {
                term = mul(&term, &coord(i));
            }
        }
        for (t, v) in total.iter_mut().zip(term) {
            *t += v;
        }
    }
    total
}

fn criterion_4() -> Check {
    let mut worst: f64 = 0.0;
    let mut cancel: f64 = 0.0;
    let mut r = rng(400);
    for draw in 0..20 {
        let g = 1 + draw % 3;
        let f = Polynomial::random(g, 6, 8, &mut r);
        let fields: Vec<CVec> = (0..6).map(|_| random_cvec(g, 0.8, &mut r)).collect();
        let seq = VectorFieldSeq::new(g, fields.clone()).map_err(err)?;
        let c0 = random_cvec(g, 0.7, &mut r);
        let expected = compose(&f, &c0, &fields, 6);
        let via_oracle = exp_series_oracle(&seq, &f, &c0, 6).map_err(err)?;
        let jet = f.jet(&c0, &fields, 6);
        let scale = expected.iter().map(|x| x.norm()).fold(1.0, f64::max);
        for (s, e) in expected.iter().enumerate() {
            let d = delta_apply(s, &seq, &jet, Sign::Plus).map_err(err)?;
            worst = worst
                .max((d - e).norm() / scale)
                .max((via_oracle.at(s) - e).norm() / scale);
        }
        for s in 1..=5 {
            let mut sum = c(0.0, 0.0);
            let mut size: f64 = 1.0;
            for k in 0..=s {
                let inner = delta_poly(s - k, &seq, &f, Sign::Minus).map_err(err)?;
                let v = delta_poly(k, &seq, &inner, Sign::Plus).map_err(err)?.eval(&c0);
                size = size.max(v.norm());
                sum += v;
            }
            cancel = cancel.max(sum.norm() / size);
        }
    }
    ensure(
        worst <= DELTA_TOL && cancel <= DELTA_TOL,
        format!(
            "Δ operators vs direct composition, s≤6, 20 draws: {worst:.1e}; e^D·e^−D cancellation s≤5: {cancel:.1e} \
             (tol {DELTA_TOL:.0e})"
        ),
    )
}

fn genus_one_run() -> Result<(HierarchyState, Duration), String> {
    let policy = TruncationPolicy::default();
    let sm = SiegelMatrix::from_rows(&[vec![c(0.15, 1.05)]]).map_err(err)?;
    let config = center_config(&[vec![c(0.31, 0.12)], vec![c(-0.05, -0.2)], vec![c(0.62, -0.31)]]).map_err(err)?;
    let start = Instant::now();
    let run = run_hierarchy(&sm, &config, 8, BASE_CASE_TOL, GridSpec::seeded(5), &policy).map_err(err)?;
    let elapsed = start.elapsed();
    if let Some(f) = run.failure {
        return Err(format!("order {} failed: {}", f.order, f.reason));
    }
    Ok((run.state, elapsed))
}

fn criterion_5() -> Check {
    let (state, elapsed) = genus_one_run()?;
    let worst = state.residuals.iter().copied().fold(0.0, f64::max);
    ensure(
        state.solved_order() == 8 && worst <= BASE_CASE_TOL && elapsed < BASE_CASE_BUDGET,
        format!(
            "hierarchy g=1, m=1: {} orders solved, max residual {worst:.1e} (tol {BASE_CASE_TOL:.0e}), {:.2} s",
            state.solved_order(),
            elapsed.as_secs_f64()
        ),
    )
}

fn genus_two() -> SiegelMatrix {
    random_siegel(2, &mut rng(GENUS_TWO_SEED))
}

fn genus_two_run() -> Result<(HierarchyState, f64, Duration), String> {
    let policy = TruncationPolicy::default();
    let sm = genus_two();
    let start = Instant::now();
    let found = find_degenerate_secant(&sm, 1, GENUS_TWO_SEED, SEARCH_TOL, 200, &policy).map_err(err)?;
    let rank = degenerate_secant_test(
        &sm,
        &found.config.centered_u,
        &found.d1,
        &found.config.centered_b,
        DEFAULT_TOL_RANK,
        &policy,
    )
    .map_err(err)?;
    if !rank.is_secant {
        return Err(format!(
            "rank test rejects the found secant: {:?}",
            rank.singular_values
        ));
    }
    let state = found.state.clone().ok_or("search returned no state")?;
    let run = continue_hierarchy(state, 5, HIGHER_ORDER_TOL, &policy);
    if let Some(f) = run.failure {
        return Err(format!("order {} failed: {}", f.order, f.reason));
    }
    Ok((run.state, found.final_residual, start.elapsed()))
}

fn criterion_6() -> Check {
    let (state, search_residual, elapsed) = genus_two_run()?;
    let higher = state.residuals[1..].iter().copied().fold(0.0, f64::max);
    ensure(
        search_residual <= SEARCH_TOL
            && state.solved_order() == 5
            && higher <= HIGHER_ORDER_TOL
            && elapsed < INSTANTIATION_BUDGET,
        format!(
            "g=2, m=1: degenerate trisecant found (P_1 residual {search_residual:.1e}, rank test true), \
             orders 2..5 max residual {higher:.1e} (tol {HIGHER_ORDER_TOL:.0e}), {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_7() -> Check {
    let policy = TruncationPolicy::default();
    let (one, _) = genus_one_run()?;
    let (two, _, _) = genus_two_run()?;
    let mut worst: f64 = 0.0;
    for (label, state) in [("g=1", &one), ("g=2", &two)] {
        let mut r = rng(700);
        for s in 1..=5 {
            // lower orders solved, order s itself left unknown
            let lower = state.truncated(s - 1);
            for _ in 0..10 {
                let z = random_torus_point(&state.sm, 0.5, &mut r);
                for st in [&lower, state] {
                    let cc = rt_cross_check(st, s, &z, &policy).map_err(|e| format!("{label}: {e}"))?;
                    let scale = cc.p_s.norm().max(1.0);
                    worst = worst
                        .max(cc.r_residual / scale)
                        .max(cc.t_residual / scale)
                        .max(cc.rsq_residual / (scale * scale));
                }
            }
        }
    }
    ensure(
        worst <= CROSS_TOL,
        format!(
            "R_s = P_s = T_s and R_s² = R_sT_s, g=1 and g=2, s≤5, 10 points: max {worst:.1e} (tol {CROSS_TOL:.0e})"
        ),
    )
}

fn criterion_8() -> Check {
    let policy = TruncationPolicy::default();
    let (state, _, _) = genus_two_run()?;
    let u = state.u().to_vec();
    let g = divisor_intersection_points(&state.sm, &u, 24, 1e-10, &policy).map_err(err)?;
    let mut vanish: f64 = 0.0;
    for p in &g.points {
        vanish = vanish
            .max(theta_box(&state.sm, &sub(p, &u)).norm())
            .max(theta_box(&state.sm, &add(p, &u)).norm());
    }
    let mut worst: f64 = 0.0;
    for s in 1..=2 {
        worst = worst.max(restriction_check(&state, s, &g, &policy).map_err(err)?);
    }
    ensure(
        g.points.len() == 2 && vanish <= 1e-9 && worst <= RESTRICTION_TOL,
        format!(
            "G = Θ_u ∩ Θ_−u has {} points (box-oracle |θ| ≤ {vanish:.1e}); restriction residual s=1,2: {worst:.1e} \
             (tol {RESTRICTION_TOL:.0e})",
            g.points.len()
        ),
    )
}

fn criterion_9() -> Check {
    let policy = TruncationPolicy::default();
    let sm = genus_two();
    let mut r = rng(900);
    let mut accepted = 0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..50 {
        let pts: Vec<CVec> = (0..3).map(|_| random_torus_point(&sm, 0.5, &mut r)).collect();
        let config = center_config(&pts).map_err(err)?;
        let zero = vec![c(0.0, 0.0); 2];
        let rep = honest_secant_test(&sm, &config, &zero, DEFAULT_TOL_RANK, &policy).map_err(err)?;
        if rep.is_secant {
            accepted += 1;
        }
        min_gap = min_gap.min(rep.singular_values[2] / rep.singular_values[0]);
    }
    let u = random_torus_point(&sm, 0.5, &mut r);
    let b = random_torus_point(&sm, 0.5, &mut r);
    let config = SecantConfig::from_centered(&u, std::slice::from_ref(&b)).map_err(err)?;
    let grid = SampleGrid::generate(&sm, &u, GridSpec::seeded(901), &policy).map_err(err)?;
    let state = HierarchyState::new(sm.clone(), config, grid).map_err(err)?;
    let outcome = solve_order(&state, 1, SEARCH_TOL, &policy);
    let d1 = random_cvec(2, 1.0, &mut r);
    let rank = degenerate_secant_test(&sm, &u, &d1, &[b], DEFAULT_TOL_RANK, &policy).map_err(err)?;
    let unsolvable = matches!(outcome, Err(Error::OrderUnsolvable { .. }));
    let residual = match &outcome {
        Err(Error::OrderUnsolvable { residual, .. }) => format!("{residual:.1e}"),
        other => format!("{other:?}"),
    };
    ensure(
        accepted == 0 && unsolvable && !rank.is_secant,
        format!(
            "negative controls: {accepted}/50 random triples accepted (smallest σ3/σ1 {min_gap:.1e}); \
             random order-1 solve unsolvable with residual {residual}; rank test false"
        ),
    )
}

fn criterion_10() -> Check {
    let configs = [
        "command = \"hierarchy-run\"\ngenus = 2\nseed = 17\nm = 1\ns_max = 3\ntol_solve = 1e-6\n",
        "command = \"addition-check\"\ngenus = 3\nseed = 5\nsamples = 20\n",
        "command = \"secant-check\"\ngenus = 2\nseed = 8\nrandom_points = 3\n",
    ];
    let mut bytes = 0;
    for text in configs {
        let cfg = parse_config(text.as_bytes()).map_err(|e| e.to_string())?;
        let a = dispatch(&cfg, DispatchOptions::default()).to_json();
        let b = dispatch(
            &parse_config(text.as_bytes()).map_err(|e| e.to_string())?,
            DispatchOptions::default(),
        )
        .to_json();
        if a != b {
            return Err(format!("reports differ for config:\n{text}"));
        }
        bytes += a.len();
    }
    Ok(format!(
        "three seeded configurations, two runs each: byte-identical reports ({bytes} bytes)"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("addition formula", criterion_1),
        ("theta correctness", criterion_2),
        ("jet correctness", criterion_3),
        ("Δ-operator equivalence", criterion_4),
        ("hierarchy base case", criterion_5),
        ("genus-2 instantiation", criterion_6),
        ("cross-identities", criterion_7),
        ("restriction identity", criterion_8),
        ("negative controls", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
