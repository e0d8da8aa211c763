//! Composite Simpson quadrature.

/// Composite Simpson rule on `[a, b]` with `panels` panels (rounded up to even).
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for i in 1..n {
        let x = a + i as f64 * h;
        if i % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    h / 3.0 * (f(a) + 4.0 * odd + 2.0 * even + f(b))
}

/// Simpson on a mesh graded towards both ends of `[a, b]`.
///
/// Breakpoints grow geometrically (×10) away from `a` up to the midpoint and
/// shrink geometrically (÷10) towards `b`, down to a gap of `(b−a)·1e-15`.
/// Each piece gets `panels_per_piece` uniform panels. Integrands that
/// concentrate near either end (power laws at `a`, exponentials at `b`) are
/// resolved without a huge uniform mesh.
pub fn simpson_graded<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels_per_piece: usize) -> f64 {
    let mid = a + 0.5 * (b - a);
    let mut breaks = vec![a];
    if a > 0.0 {
        let mut x = a * 10.0;
        while x < mid {
            breaks.push(x);
            x *= 10.0;
        }
    }
    breaks.push(mid);
    let mut gap = 0.5 * (b - a) / 10.0;
    while gap > (b - a) * 1e-15 {
        breaks.push(b - gap);
        gap /= 10.0;
    }
    breaks.push(b);
    breaks
        .windows(2)
        .map(|w| simpson(&f, w[0], w[1], panels_per_piece))
        .sum()
}
