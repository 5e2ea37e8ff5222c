//! Decrease constants, backtracking caps and worst-case iteration counts.

/// `η/6 · min{(1+2L_H)^{−3/2}, [3θ²(1−ζ)/(4(L_H+η))]^{3/2}}`.
pub fn c_sol(eta: f64, theta: f64, zeta: f64, l_h: f64) -> f64 {
    let a = (1.0 + 2.0 * l_h).powf(-1.5);
    let b = (3.0 * theta * theta * (1.0 - zeta) / (4.0 * (l_h + eta))).powf(1.5);
    eta / 6.0 * a.min(b)
}

/// `η/6 · min{[3θ/(2(L_H+η))]³, 1}`.
pub fn c_nc(eta: f64, theta: f64, l_h: f64) -> f64 {
    eta / 6.0 * (3.0 * theta / (2.0 * (l_h + eta))).powi(3).min(1.0)
}

/// `η/6 · [3(1−ζ)/(4 L_H (L_H+η))]^{3/2}`.
pub fn c_bar_sol(eta: f64, zeta: f64, l_h: f64) -> f64 {
    eta / 6.0 * (3.0 * (1.0 - zeta) / (4.0 * l_h * (l_h + eta))).powf(1.5)
}

/// `η/6 · [3θ̃/(4(L_H+η))]³`.
pub fn c_bar_nc(eta: f64, theta_tilde: f64, l_h: f64) -> f64 {
    eta / 6.0 * (3.0 * theta_tilde / (4.0 * (l_h + eta))).powi(3)
}

/// `⌈½ log_θ(3(1−ζ)ε_H²/(4.4 U_g (L_H+η)))⌉`, floored at zero.
pub fn j_sol(theta: f64, zeta: f64, eps_h: f64, u_g: f64, l_h: f64, eta: f64) -> u64 {
    let arg = 3.0 * (1.0 - zeta) * eps_h * eps_h / (4.4 * u_g * (l_h + eta));
    to_count((0.5 * arg.ln() / theta.ln()).ceil())
}

/// `⌈log_θ(3/(2(L_H+η)))⌉`, floored at zero.
pub fn j_nc(theta: f64, l_h: f64, eta: f64) -> u64 {
    to_count(((3.0 / (2.0 * (l_h + eta))).ln() / theta.ln()).ceil())
}

/// Line-search iteration bound
/// `⌈3Δ / min(c_sol/(64 L_H^{3/2}), 8 L_H^{3/2} c_sol, L_H^{3/2} c_nc/8) · ε^{−3/2}⌉ + 5`
/// where `Δ = f(x₀) − f_low`.
pub fn k_bar(f0_minus_flow: f64, l_h: f64, c_sol: f64, c_nc: f64, eps: f64) -> u64 {
    let l32 = l_h.powf(1.5);
    let m = (c_sol / (64.0 * l32)).min(8.0 * l32 * c_sol).min(l32 * c_nc / 8.0);
    to_count((3.0 * f0_minus_flow.max(0.0) / m * eps.powf(-1.5)).ceil()).saturating_add(5)
}

/// Fixed-step iteration bound
/// `2⌈Δ / (min{c̄_sol, c̄_nc/8} L_H^{3/2}) · ε^{−3/2}⌉ + 3`.
pub fn k_bar2(f0_minus_flow: f64, l_h: f64, c_bar_sol: f64, c_bar_nc: f64, eps: f64) -> u64 {
    let m = c_bar_sol.min(c_bar_nc / 8.0) * l_h.powf(1.5);
    to_count((f0_minus_flow.max(0.0) / m * eps.powf(-1.5)).ceil())
        .saturating_mul(2)
        .saturating_add(3)
}

fn to_count(v: f64) -> u64 {
    if v.is_nan() || v <= 0.0 {
        0
    } else if v >= u64::MAX as f64 {
        u64::MAX
    } else {
        v as u64
    }
}
