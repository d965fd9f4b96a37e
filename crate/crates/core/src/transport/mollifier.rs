//! Compactly supported inflow profile `φ_D(z₂) = c·exp(1/(ρ − 1))`,
//! `ρ = |z₂ − z₀|/L`, zero for `ρ ≥ 1`.

/// Value of the profile for control `x = (z₀, L, c)`.
pub fn mollifier(x: &[f64], z2: f64) -> f64 {
    let (z0, l, c) = (x[0], x[1], x[2]);
    let rho = (z2 - z0).abs() / l;
    if rho < 1.0 {
        c * (1.0 / (rho - 1.0)).exp()
    } else {
        0.0
    }
}

/// Gradient with respect to `(z₀, L, c)`.
///
/// The profile has a kink at `z₂ = z₀` (it depends on `|z₂ − z₀|`); the
/// `z₀` derivative there is taken as 0, the average of the one-sided ones.
pub fn mollifier_grad(x: &[f64], z2: f64) -> [f64; 3] {
    let (z0, l, c) = (x[0], x[1], x[2]);
    let r = z2 - z0;
    let rho = r.abs() / l;
    if rho >= 1.0 {
        return [0.0; 3];
    }
    let f = (1.0 / (rho - 1.0)).exp();
    let q = c * f / (l * (rho - 1.0) * (rho - 1.0));
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    [q * sign, q * rho, f]
}

/// How the inflow profile is transferred to the west nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InflowSampling {
    /// Profile value at each node.
    Nodal,
    /// Mean of the profile over the node's half-cell boundary segment, by
    /// composite Gauss-Legendre quadrature at fixed points. Smooth in the
    /// control even when the support spans few nodes.
    #[default]
    SegmentMean,
}

const GL4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];
const PANELS: usize = 8;

/// Boundary segment `[a, b]` owned by west node `j` of `ny + 1`.
fn segment(j: usize, ny: usize, dy: f64) -> (f64, f64) {
    let a = if j == 0 { 0.0 } else { (j as f64 - 0.5) * dy };
    let b = if j == ny { ny as f64 * dy } else { (j as f64 + 0.5) * dy };
    (a, b)
}

/// Quadrature points and weights (summing to the covered fraction of the
/// segment) over the part of `[a, b]` inside the support of the profile.
/// The segment is split at `z₀` and `z₀ ± L`, so each piece is smooth.
fn segment_rule(x: &[f64], a: f64, b: f64) -> Vec<(f64, f64)> {
    let (z0, l) = (x[0], x[1]);
    let mut cuts = vec![a, b];
    cuts.extend(
        [z0 - l, z0, z0 + l]
            .into_iter()
            .filter(|c| *c > a && *c < b),
    );
    cuts.sort_by(f64::total_cmp);
    let len = b - a;
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p || ((0.5 * (p + q) - z0).abs() / l) >= 1.0 {
            continue;
        }
        let h = (q - p) / PANELS as f64;
        for k in 0..PANELS {
            let mid = p + (k as f64 + 0.5) * h;
            for (t, wt) in GL4 {
                out.push((mid + 0.5 * h * t, wt * h / (2.0 * len)));
            }
        }
    }
    out
}

/// Inflow values at the `ny + 1` west nodes, spacing `dy`.
pub fn inflow_values(x: &[f64], ny: usize, dy: f64, sampling: InflowSampling) -> Vec<f64> {
    (0..=ny)
        .map(|j| match sampling {
            InflowSampling::Nodal => mollifier(x, j as f64 * dy),
            InflowSampling::SegmentMean => {
                let (a, b) = segment(j, ny, dy);
                segment_rule(x, a, b)
                    .into_iter()
                    .map(|(y, w)| w * mollifier(x, y))
                    .sum()
            }
        })
        .collect()
}

/// Derivatives of [`inflow_values`] with respect to `(z₀, L, c)`. For the
/// segment mean these are the segment means of the pointwise derivatives;
/// the moving cut points contribute nothing because the profile is
/// continuous across `z₀` and vanishes at `z₀ ± L`.
pub fn inflow_gradients(
    x: &[f64],
    ny: usize,
    dy: f64,
    sampling: InflowSampling,
) -> Vec<[f64; 3]> {
    (0..=ny)
        .map(|j| match sampling {
            InflowSampling::Nodal => mollifier_grad(x, j as f64 * dy),
            InflowSampling::SegmentMean => {
                let (a, b) = segment(j, ny, dy);
                let mut g = [0.0; 3];
                for (y, w) in segment_rule(x, a, b) {
                    let d = mollifier_grad(x, y);
                    for p in 0..3 {
                        g[p] += w * d[p];
                    }
                }
                g
            }
        })
        .collect()
}
