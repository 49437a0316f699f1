//! Shape descriptors of a centre-of-mass path.

use serde::Serialize;

use super::dynamics::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathSummary {
    /// Net displacement along the initial heading, m.
    pub forward_m: f64,
    /// Net displacement to the left of the initial heading, m.
    pub lateral_m: f64,
    /// `|lateral| / |forward|`.
    pub lateral_ratio: f64,
    /// Signed curvature of a quadratic fitted to the path, 1/m; positive turns left.
    pub curvature_per_m: f64,
}

/// Summarises a path that starts with heading `heading0`.
pub fn summarize_path(points: &[Vec2], heading0: f64) -> PathSummary {
    let Some(first) = points.first() else {
        return PathSummary {
            forward_m: 0.0,
            lateral_m: 0.0,
            lateral_ratio: 0.0,
            curvature_per_m: 0.0,
        };
    };
    let last = points.last().expect("non-empty");
    let (s, c) = heading0.sin_cos();
    let dx = last[0] - first[0];
    let dy = last[1] - first[1];
    let forward = c * dx + s * dy;
    let lateral = -s * dx + c * dy;
    PathSummary {
        forward_m: forward,
        lateral_m: lateral,
        lateral_ratio: if forward != 0.0 { (lateral / forward).abs() } else { f64::INFINITY },
        curvature_per_m: fitted_curvature(points),
    }
}

/// Least-squares fit of `y = a + b x + k x²` in the frame of the chord from the
/// first to the last point; returns the curvature `2k / (1 + b²)^{3/2}` at the start.
pub fn fitted_curvature(points: &[Vec2]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let first = points[0];
    let last = points[points.len() - 1];
    let (dx, dy) = (last[0] - first[0], last[1] - first[1]);
    let len = (dx * dx + dy * dy).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let (c, s) = (dx / len, dy / len);
    // normal equations of the quadratic fit
    let mut m = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for p in points {
        let (px, py) = (p[0] - first[0], p[1] - first[1]);
        let x = (c * px + s * py) / len;
        let y = (-s * px + c * py) / len;
        let basis = [1.0, x, x * x];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            rhs[i] += basis[i] * y;
        }
    }
    let Some([_, b, k]) = solve(m, rhs) else {
        return 0.0;
    };
    // undo the chord-length scaling
    2.0 * k / len / (1.0 + b * b).powf(1.5)
}

fn solve(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|i, j| m[*i][col].abs().total_cmp(&m[*j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / m[row][row];
    }
    Some(x)
}
