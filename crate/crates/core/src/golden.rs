//! Golden-section search for the minimum of a unimodal function on a closed interval.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<S> {
    pub arg: S,
    pub value: S,
    pub iterations: usize,
}

/// Shrinks `[lo, hi]` until its width is below `tol`; returns the better of the final two probes
/// and the interval midpoint.
pub fn golden_section_min<S: Scalar>(f: impl Fn(S) -> S, lo: S, hi: S, tol: S) -> Minimum<S> {
    assert!(lo <= hi, "empty interval");
    let inv_phi = (S::lit(5.0).sqrt() - S::one()) / S::lit(2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iterations = 0;
    while (b - a) > tol && iterations < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }
    let mid = (a + b) / S::lit(2.0);
    let fm = f(mid);
    let (arg, value) = [(c, fc), (d, fd), (mid, fm)]
        .into_iter()
        .fold((mid, fm), |best, cand| if cand.1 < best.1 { cand } else { best });
    Minimum { arg, value, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_vertex() {
        let m = golden_section_min(|x: f64| (x - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((m.arg - 0.3).abs() < 1e-9);
        assert!(m.value < 1e-18);
    }

    #[test]
    fn monotone_function_goes_to_endpoint() {
        let m = golden_section_min(|x: f64| -x, 0.0, 1.0, 1e-10);
        assert!(m.arg > 1.0 - 1e-9);
        let m = golden_section_min(|x: f32| x * x, 0.25, 1.0, 1e-6);
        assert!((m.arg - 0.25).abs() < 1e-5);
    }
}
