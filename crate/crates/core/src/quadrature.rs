//! Adaptive Simpson quadrature for real and complex integrands.

use num_complex::Complex64;

const MAX_DEPTH: u32 = 48;

struct Panel {
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
}

fn simpson(a: f64, b: f64, fa: Complex64, fm: Complex64, fb: Complex64) -> Complex64 {
    (fa + fm * 4.0 + fb) * ((b - a) / 6.0)
}

fn refine<F: Fn(f64) -> Complex64>(f: &F, p: Panel, tol: f64, depth: u32) -> Complex64 {
    let m = 0.5 * (p.a + p.b);
    let (lm, rm) = (0.5 * (p.a + m), 0.5 * (m + p.b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(p.a, m, p.fa, flm, p.fm);
    let right = simpson(m, p.b, p.fm, frm, p.fb);
    let delta = left + right - p.whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(
        f,
        Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: flm,
            fb: p.fm,
            whole: left,
        },
        0.5 * tol,
        depth - 1,
    ) + refine(
        f,
        Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: frm,
            fb: p.fb,
            whole: right,
        },
        0.5 * tol,
        depth - 1,
    )
}

/// `∫_a^b f` to absolute tolerance `tol` (best effort once the recursion
/// depth is exhausted).
pub fn integrate_complex<F: Fn(f64) -> Complex64>(f: F, a: f64, b: f64, tol: f64) -> Complex64 {
    // Start from a few panels so that a peak between the first sample
    // points cannot be missed entirely.
    const START: usize = 16;
    let h = (b - a) / START as f64;
    (0..START)
        .map(|k| {
            let lo = a + h * k as f64;
            let hi = if k + 1 == START { b } else { lo + h };
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = simpson(lo, hi, fa, fm, fb);
            refine(
                &f,
                Panel {
                    a: lo,
                    b: hi,
                    fa,
                    fm,
                    fb,
                    whole,
                },
                tol / START as f64,
                MAX_DEPTH,
            )
        })
        .sum()
}

pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    integrate_complex(|x| Complex64::new(f(x), 0.0), a, b, tol).re
}
