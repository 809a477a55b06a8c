//! Browser bindings. Every export returns a JSON string; failures come back
//! as `{"error": "..."}` so the page never has to catch exceptions.

use num_complex::Complex64;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use secantlab_core::geometry::find_degenerate_secant;
use secantlab_core::hierarchy::{run_hierarchy, GridSpec, RunStatus};
use secantlab_core::kummer::{center_config, degenerate_secant_test, honest_secant_test, DEFAULT_TOL_RANK};
use secantlab_core::sampling::{derive_seed, random_siegel, random_torus_point, rng};
use secantlab_core::theta::{theta_eval, SiegelMatrix, ThetaCharacteristic, TruncationPolicy};

const MAX_HEATMAP_SIDE: usize = 256;

fn to_json<T: Serialize>(result: Result<T, String>) -> String {
    match result {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e),
    }
}

fn error_json(message: &str) -> String {
    serde_json::json!({ "error": message }).to_string()
}

fn genus_one(tau_re: f64, tau_im: f64) -> Result<SiegelMatrix, String> {
    SiegelMatrix::from_rows(&[vec![Complex64::new(tau_re, tau_im)]]).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Heatmap {
    pub side: usize,
    /// Row-major `log10 |θ(x + τy)|` for `x, y ∈ [0, 1)`, `y` along rows.
    pub log_modulus: Vec<f64>,
    pub min: f64,
    pub max: f64,
}

pub fn heatmap(tau_re: f64, tau_im: f64, side: usize) -> Result<Heatmap, String> {
    if side == 0 || side > MAX_HEATMAP_SIDE {
        return Err(format!("side must lie in 1..={MAX_HEATMAP_SIDE}"));
    }
    let sm = genus_one(tau_re, tau_im)?;
    let tau = Complex64::new(tau_re, tau_im);
    let policy = TruncationPolicy::new(1e-10, 20.0).map_err(|e| e.to_string())?;
    let ch = ThetaCharacteristic::zero(1);
    let mut values = Vec::with_capacity(side * side);
    for row in 0..side {
        let y = row as f64 / side as f64;
        for col in 0..side {
            let x = col as f64 / side as f64;
            let v = theta_eval(&sm, &ch, &[tau * y + x], &policy).map_err(|e| e.to_string())?;
            values.push(v.norm().max(1e-300).log10());
        }
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Heatmap {
        side,
        log_modulus: values,
        min,
        max,
    })
}

/// `log10 |θ(x + τy; τ)|` on a `side × side` grid over the fundamental
/// parallelogram of a genus-1 lattice.
#[wasm_bindgen]
pub fn theta_heatmap(tau_re: f64, tau_im: f64, side: usize) -> String {
    to_json(heatmap(tau_re, tau_im, side))
}

#[derive(Debug, Serialize)]
pub struct OrderSummary {
    pub order: usize,
    pub residual: f64,
    pub d: [f64; 2],
    pub alpha: [f64; 2],
}

#[derive(Debug, Serialize)]
pub struct HierarchySummary {
    pub status: RunStatus,
    pub orders: Vec<OrderSummary>,
    pub failure: Option<String>,
}

/// Genus-1 hierarchy for the points `u`, `−u`, `b`.
pub fn hierarchy(tau: [f64; 2], u: [f64; 2], b: [f64; 2], s_max: usize) -> Result<HierarchySummary, String> {
    let sm = genus_one(tau[0], tau[1])?;
    let u = Complex64::new(u[0], u[1]);
    let b = Complex64::new(b[0], b[1]);
    let config = center_config(&[vec![u], vec![-u], vec![b]]).map_err(|e| e.to_string())?;
    let policy = TruncationPolicy::default();
    let run = run_hierarchy(&sm, &config, s_max, 1e-8, GridSpec::seeded(1), &policy).map_err(|e| e.to_string())?;
    let orders = run
        .state
        .order_records()
        .into_iter()
        .map(|r| OrderSummary {
            order: r.order,
            residual: r.residual,
            d: [r.d[0].re, r.d[0].im],
            alpha: [r.alphas[0].value.re, r.alphas[0].value.im],
        })
        .collect();
    Ok(HierarchySummary {
        status: run.status(),
        orders,
        failure: run.failure.map(|f| format!("order {}: {}", f.order, f.reason)),
    })
}

/// Solves orders `1..=s_max` for a genus-1 configuration and reports the
/// residual and unknowns of each order.
#[wasm_bindgen]
pub fn hierarchy_residuals(
    tau_re: f64,
    tau_im: f64,
    u_re: f64,
    u_im: f64,
    b_re: f64,
    b_im: f64,
    s_max: usize,
) -> String {
    to_json(hierarchy([tau_re, tau_im], [u_re, u_im], [b_re, b_im], s_max))
}

#[derive(Debug, Serialize)]
pub struct SecantComparison {
    /// Normalised singular values of `K(u), D_1K(u), K(b)` at a found
    /// degenerate trisecant.
    pub degenerate: Vec<f64>,
    pub search_residual: f64,
    pub degenerate_is_secant: bool,
    /// The same for three random points.
    pub random: Vec<f64>,
    pub random_is_secant: bool,
}

pub fn secant_comparison(seed: u64) -> Result<SecantComparison, String> {
    let policy = TruncationPolicy::default();
    let sm = random_siegel(2, &mut rng(seed));
    let found = find_degenerate_secant(&sm, 1, seed, 1e-8, 200, &policy).map_err(|e| e.to_string())?;
    let deg = degenerate_secant_test(
        &sm,
        &found.config.centered_u,
        &found.d1,
        &found.config.centered_b,
        DEFAULT_TOL_RANK,
        &policy,
    )
    .map_err(|e| e.to_string())?;
    let mut r = rng(derive_seed(seed, 7));
    let pts: Vec<_> = (0..3).map(|_| random_torus_point(&sm, 0.5, &mut r)).collect();
    let config = center_config(&pts).map_err(|e| e.to_string())?;
    let zero = vec![Complex64::new(0.0, 0.0); 2];
    let rand = honest_secant_test(&sm, &config, &zero, DEFAULT_TOL_RANK, &policy).map_err(|e| e.to_string())?;
    Ok(SecantComparison {
        degenerate: deg.singular_values,
        search_residual: found.final_residual,
        degenerate_is_secant: deg.is_secant,
        random: rand.singular_values,
        random_is_secant: rand.is_secant,
    })
}

/// Genus-2 Kummer rank test: a searched degenerate trisecant next to three
/// random points, both drawn from `seed`.
#[wasm_bindgen]
pub fn secant_singular_values(seed: u32) -> String {
    to_json(secant_comparison(u64::from(seed)))
}
