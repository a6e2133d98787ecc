use crate::error::{Result, RlError};

/// Generalised advantage estimation with a constant discount.
/// `values` carries one extra bootstrap entry; `terminals[t]` cuts the
/// recursion after step `t`.
pub fn gae(rewards: &[f64], values: &[f64], terminals: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let discounts = vec![gamma; rewards.len()];
    gae_with_discounts(rewards, values, terminals, &discounts, lambda)
}

/// GAE where step `t` discounts its successor by `discounts[t]`, e.g.
/// `γ^n` for a transition lasting `n` frames.
pub fn gae_with_discounts(
    rewards: &[f64],
    values: &[f64],
    terminals: &[bool],
    discounts: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || terminals.len() != n || discounts.len() != n {
        return Err(RlError::LengthMismatch(format!(
            "rewards {n}, values {}, terminals {}, discounts {}",
            values.len(),
            terminals.len(),
            discounts.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if terminals[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discounts[t] * values[t + 1] * live - values[t];
        running = delta + discounts[t] * lambda * live * running;
        adv[t] = running;
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}
