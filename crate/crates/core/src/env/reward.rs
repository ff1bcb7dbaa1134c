use crate::grid::{Action, GridModel};

/// Unnormalized step reward: `sum_l (1 - rho_l^2) - mu_line * c_k` where the
/// switch term applies only when `action` switches line `k`.
pub fn raw_reward(rho: &[f64], action: Action, mu_line: f64, grid: &GridModel) -> f64 {
    let margin: f64 = rho.iter().map(|r| 1.0 - r * r).sum();
    let switch = action
        .line()
        .map_or(0.0, |k| mu_line * grid.lines()[k].switch_cost);
    margin - switch
}

/// Scales by the line count and clamps into [-1, 1].
pub fn normalize_reward(raw: f64, n_lines: usize) -> f64 {
    (raw / n_lines.max(1) as f64).clamp(-1.0, 1.0)
}

/// Normalized reward as seen by the learner.
pub fn compute_reward(rho: &[f64], action: Action, mu_line: f64, grid: &GridModel) -> f64 {
    normalize_reward(raw_reward(rho, action, mu_line, grid), grid.n_lines())
}
