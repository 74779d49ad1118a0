//! Per-round records and run summaries.

use serde::{Deserialize, Serialize};

/// Everything measured in one round. The first nine fields form the CSV
/// schema; the rest are diagnostics kept in memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// Episode index k(t) under which Rᵗ was emitted.
    pub k: usize,
    /// U(μ̄ᵗ).
    pub utility: f64,
    /// U(μ^{π*}) − U(μ̄ᵗ).
    pub gap_inc: f64,
    /// C(μ̄ᵗ, Rᵗ) = ⟨Rᵗ(μ̄ᵗ), μ̄ᵗ⟩.
    pub cost: f64,
    /// Cost minus the sandboxing comparator ⟨r_max·1 − r*(μ̄ᵗ), μ̄ᵗ⟩ for the
    /// strategies that learn r*; equal to `cost` otherwise.
    pub adj_cost: f64,
    /// ‖μ̄ᵗ − μ*‖₁ against the cached optimal density.
    pub l1_to_target: f64,
    /// Largest transition confidence radius in use.
    pub max_eps: f64,
    /// Largest reward width w(μ̄ᵗ) in use.
    pub max_width: f64,
    #[serde(skip)]
    pub diagnostics: RoundDiagnostics,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundDiagnostics {
    /// ⟨w(μ̄ᵗ), μ̄ᵗ⟩.
    pub width_mass: f64,
    /// Mean over agents of ⟨Rᵗ(μ̄ᵗ), μ^{πⁿ}⟩.
    pub avg_payment: f64,
    /// ‖Rᵗ(μ̄ᵗ)‖∞.
    pub reward_sup: f64,
    /// Smallest entry of Rᵗ(μ̄ᵗ).
    pub reward_min: f64,
    /// P* lies in the transition confidence set in use.
    pub p_star_covered: bool,
    /// r* lies in the reward confidence set in use (learned-reward strategies
    /// with a realizable class).
    pub r_star_covered: Option<bool>,
    /// r̄ − w ≤ r* ≤ r̄ + w at every cell under μ̄ᵗ.
    pub pessimism_ok: Option<bool>,
    /// ‖Rᵗ(μ̄ᵗ) − R_shadowᵗ(μ̄ᵗ)‖∞ against the known-utility shadow mediator.
    pub shadow_diff: Option<f64>,
    /// ‖θ̄_U − θ*_U‖∞ of the utility estimate in use.
    pub utility_err: Option<f64>,
}

/// Per-quartile averages of the per-round series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuartileAverages {
    pub gap_inc: [f64; 4],
    pub cost: [f64; 4],
    pub adj_cost: [f64; 4],
    pub l1_to_target: [f64; 4],
}

/// Log-log growth slopes of cumulative series against the prefix length;
/// `None` when a cumulative series is not positive on the fitting window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    #[serde(rename = "Delta_T")]
    pub delta_t: Option<f64>,
    #[serde(rename = "C_T")]
    pub c_t: Option<f64>,
    #[serde(rename = "adj_C_T")]
    pub adj_c_t: Option<f64>,
    #[serde(rename = "adj_C_T_clipped")]
    pub adj_c_t_clipped: Option<f64>,
    pub width_sum: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "T")]
    pub rounds: usize,
    #[serde(rename = "Delta_T")]
    pub delta_t: f64,
    #[serde(rename = "C_T")]
    pub c_t: f64,
    /// Signed cumulative comparator-adjusted cost.
    #[serde(rename = "adj_C_T")]
    pub adj_c_t: f64,
    /// Cumulative comparator-adjusted cost with each round clipped below at 0.
    #[serde(rename = "adj_C_T_clipped")]
    pub adj_c_t_clipped: f64,
    /// Σ_t ⟨w(μ̄ᵗ), μ̄ᵗ⟩.
    pub width_sum: f64,
    /// Number of episode switches.
    #[serde(rename = "K")]
    pub k: usize,
    pub slopes: Slopes,
    pub quartiles: QuartileAverages,
    pub final_l1_to_target: f64,
}

/// Number of log-spaced prefixes used for slope fits.
pub const SLOPE_POINTS: usize = 20;

/// Least-squares slope of ln(cum[t−1]) against ln t over about
/// [`SLOPE_POINTS`] log-spaced prefix lengths t in [T/10, T].
pub fn loglog_slope(cumulative: &[f64]) -> Option<f64> {
    let n = cumulative.len();
    if n < 2 {
        return None;
    }
    let lo = (n / 10).max(1) as f64;
    let hi = n as f64;
    let mut ts: Vec<usize> = (0..SLOPE_POINTS)
        .map(|i| {
            let f = i as f64 / (SLOPE_POINTS - 1) as f64;
            (lo * (hi / lo).powf(f)).round() as usize
        })
        .map(|t| t.clamp(1, n))
        .collect();
    ts.dedup();
    if ts.len() < 2 {
        return None;
    }
    let mut xs = Vec::with_capacity(ts.len());
    let mut ys = Vec::with_capacity(ts.len());
    for &t in &ts {
        let c = cumulative[t - 1];
        if !(c > 0.0 && c.is_finite()) {
            return None;
        }
        xs.push((t as f64).ln());
        ys.push(c.ln());
    }
    fit_slope(&xs, &ys)
}

/// Ordinary least-squares slope of y on x.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let m = xs.len() as f64;
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn cumulative(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

fn quartiles(values: &[f64]) -> [f64; 4] {
    let n = values.len();
    let mut out = [f64::NAN; 4];
    for (q, slot) in out.iter_mut().enumerate() {
        let a = q * n / 4;
        let b = (q + 1) * n / 4;
        if b > a {
            *slot = values[a..b].iter().sum::<f64>() / (b - a) as f64;
        }
    }
    out
}

/// Cumulative totals, quartile averages and growth slopes. `switches` is the
/// number of episode triggers K reported by the mediator.
pub fn compute_summary(records: &[RoundRecord], switches: usize) -> Summary {
    let col = |f: fn(&RoundRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let gap = col(|r| r.gap_inc);
    let cost = col(|r| r.cost);
    let adj = col(|r| r.adj_cost);
    let l1 = col(|r| r.l1_to_target);
    let width = col(|r| r.diagnostics.width_mass);
    let cum_gap = cumulative(gap.iter().copied());
    let cum_cost = cumulative(cost.iter().copied());
    let cum_adj = cumulative(adj.iter().copied());
    let cum_adj_clipped = cumulative(adj.iter().map(|x| x.max(0.0)));
    let cum_width = cumulative(width.iter().copied());
    let last = |v: &[f64]| v.last().copied().unwrap_or(0.0);
    Summary {
        rounds: records.len(),
        delta_t: last(&cum_gap),
        c_t: last(&cum_cost),
        adj_c_t: last(&cum_adj),
        adj_c_t_clipped: last(&cum_adj_clipped),
        width_sum: last(&cum_width),
        k: switches,
        slopes: Slopes {
            delta_t: loglog_slope(&cum_gap),
            c_t: loglog_slope(&cum_cost),
            adj_c_t: loglog_slope(&cum_adj),
            adj_c_t_clipped: loglog_slope(&cum_adj_clipped),
            width_sum: loglog_slope(&cum_width),
        },
        quartiles: QuartileAverages {
            gap_inc: quartiles(&gap),
            cost: quartiles(&cost),
            adj_cost: quartiles(&adj),
            l1_to_target: quartiles(&l1),
        },
        final_l1_to_target: last(&l1),
    }
}
