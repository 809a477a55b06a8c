use serde_json::Value;

use secantlab_wasm::{hierarchy_residuals, secant_singular_values, theta_heatmap};

fn parse(s: &str) -> Value {
    serde_json::from_str(s).expect("valid JSON")
}

#[test]
fn heatmap_has_the_zero_of_theta() {
    // θ(z; i) vanishes at (1 + i)/2, the centre of the square
    let v = parse(&theta_heatmap(0.0, 1.0, 8));
    let values = v["log_modulus"].as_array().unwrap();
    assert_eq!(values.len(), 64);
    let centre = values[4 * 8 + 4].as_f64().unwrap();
    assert!(centre < -10.0, "{centre}");
    assert_eq!(v["min"].as_f64().unwrap(), centre);
    let origin = values[0].as_f64().unwrap();
    assert!((origin - 1.086_434_811_213_308f64.log10()).abs() < 1e-10);
}

#[test]
fn heatmap_rejects_bad_input() {
    assert!(parse(&theta_heatmap(0.0, -1.0, 8))["error"].is_string());
    assert!(parse(&theta_heatmap(0.0, 1.0, 0))["error"].is_string());
}

#[test]
fn genus_one_residuals() {
    let v = parse(&hierarchy_residuals(0.1, 1.1, 0.21, 0.13, 0.43, -0.17, 6));
    assert_eq!(v["status"], "success");
    let orders = v["orders"].as_array().unwrap();
    assert_eq!(orders.len(), 6);
    assert!(orders.iter().all(|o| o["residual"].as_f64().unwrap() <= 1e-8));
}

#[test]
fn coincident_points_are_reported() {
    let v = parse(&hierarchy_residuals(0.1, 1.1, 0.2, 0.1, 0.2, 0.1, 3));
    assert!(v["error"].as_str().unwrap().contains("coincide"));
}

#[test]
fn searched_secant_has_rank_two() {
    let v = parse(&secant_singular_values(4));
    assert_eq!(v["degenerate_is_secant"], true);
    assert_eq!(v["random_is_secant"], false);
    let deg = v["degenerate"].as_array().unwrap();
    assert!(deg[2].as_f64().unwrap() < 1e-7 * deg[0].as_f64().unwrap());
}
