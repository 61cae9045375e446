//! Adaptive Simpson integration.

use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_INTERVALS: usize = 10_000;

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`, splitting at most
/// `max_intervals` times. Uses the Richardson-corrected Simpson estimate.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, max_intervals: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("quadrature tolerance must be > 0, got {tol}")));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);

    struct Segment {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
    }

    let mut stack = vec![Segment {
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol,
    }];
    let mut total = 0.0;
    let mut splits = 0usize;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
        let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
        let delta = left + right - s.whole;
        if !delta.is_finite() {
            return Err(Error::Degenerate("integrand is not finite".into()));
        }
        if delta.abs() <= 15.0 * s.tol || m <= s.a || m >= s.b {
            total += left + right + delta / 15.0;
            continue;
        }
        splits += 1;
        if splits > max_intervals {
            return Err(Error::Degenerate(format!(
                "adaptive Simpson exceeded {max_intervals} subdivisions"
            )));
        }
        stack.push(Segment {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
            tol: 0.5 * s.tol,
        });
        stack.push(Segment {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
            tol: 0.5 * s.tol,
        });
    }
    Ok(total)
}
