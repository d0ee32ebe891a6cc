//! Quadrature rules on triangles and segments.

/// Degree-5 rule with 7 points: barycentric coordinates and weights summing to 1.
const TRIANGLE_7: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_769_8;
    const B1: f64 = 0.470_142_064_105_115_1;
    const W1: f64 = 0.132_394_152_788_506_2;
    const A2: f64 = 0.797_426_985_353_087_3;
    const B2: f64 = 0.101_286_507_323_456_3;
    const W2: f64 = 0.125_939_180_544_827_1;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// Integral over the triangle `p` (exact for polynomials of degree 5).
pub fn integrate_triangle(p: [[f64; 2]; 3], mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
    let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1])).abs();
    let mut sum = 0.0;
    for (l, w) in TRIANGLE_7 {
        let x = [l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0], l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1]];
        sum += w * f(x);
    }
    area * sum
}

/// Integral over the segment `[a, b]` by 3-point Gauss (exact to degree 5).
pub fn integrate_segment(a: [f64; 2], b: [f64; 2], mut f: impl FnMut([f64; 2]) -> f64) -> f64 {
    let len = libm::hypot(b[0] - a[0], b[1] - a[1]);
    let r = libm::sqrt(0.6);
    let mut sum = 0.0;
    for (xi, w) in [(-r, 5.0 / 9.0), (0.0, 8.0 / 9.0), (r, 5.0 / 9.0)] {
        let s = 0.5 * (1.0 + xi);
        sum += w * f([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]);
    }
    0.5 * len * sum
}
