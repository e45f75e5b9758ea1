//! One-dimensional convex minimization: derivative-sign bracketing followed by
//! golden-section search.

use crate::error::{Error, Result};

/// Bracket growth stops with an error once the width exceeds this.
pub const BRACKET_WIDTH_CAP: f64 = 1e6;

/// A doubling that lowers the objective by less than this is taken as the
/// asymptote of an infimum that is not attained.
pub const ASYMPTOTE_DECREASE: f64 = 1e-12;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
    /// `false` when the infimum is only approached as the argument diverges;
    /// `argmin` is then the bracket edge where the search stopped.
    pub attained: bool,
}

/// Golden-section search on `[lo, hi]` for a convex (or unimodal) function.
///
/// The endpoints are evaluated as well, so affine objectives return their
/// minimizing endpoint exactly.
pub fn golden_section<F>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Minimum>
where
    F: Fn(f64) -> Result<f64>,
{
    if !(lo <= hi) {
        return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
    }
    let mut best = Minimum {
        argmin: lo,
        value: f(lo)?,
        attained: true,
    };
    let f_hi = f(hi)?;
    if f_hi < best.value {
        best = Minimum {
            argmin: hi,
            value: f_hi,
            attained: true,
        };
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut iterations = 0;
    while b - a > tol * (1.0 + 0.5 * (a.abs() + b.abs())) && iterations < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
        iterations += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best.value {
            best = Minimum {
                argmin: x,
                value: v,
                attained: true,
            };
        }
    }
    Ok(best)
}

/// Minimizes a convex function over the real line.
///
/// Starts from `[-half_width, half_width]` and moves the bracket toward the
/// descent side, doubling its width each step, until the derivative changes sign. When a doubling lowers the
/// objective by less than [`ASYMPTOTE_DECREASE`] the infimum is reported at
/// the bracket edge with `attained = false`.
pub fn minimize_convex<F, D>(f: F, df: D, half_width: f64) -> Result<Minimum>
where
    F: Fn(f64) -> Result<f64>,
    D: Fn(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = (-half_width, half_width);
    let (mut d_lo, mut d_hi) = (df(lo)?, df(hi)?);
    loop {
        if d_lo <= 0.0 && d_hi >= 0.0 {
            return golden_section(&f, lo, hi, 1e-12);
        }
        let width = hi - lo;
        if 3.0 * width > BRACKET_WIDTH_CAP {
            return Err(Error::Numeric(format!(
                "no minimizer bracket within width {BRACKET_WIDTH_CAP:e}: \
                 [{lo}, {hi}], f' = ({d_lo:e}, {d_hi:e})"
            )));
        }
        let (edge, next) = if d_lo > 0.0 {
            (lo, lo - 2.0 * width)
        } else {
            (hi, hi + 2.0 * width)
        };
        let d_next = df(next)?;
        let still_descending = if d_lo > 0.0 { d_next > 0.0 } else { d_next < 0.0 };
        if still_descending {
            let (f_old, f_new) = (f(edge)?, f(next)?);
            if f_old - f_new < ASYMPTOTE_DECREASE {
                return Ok(Minimum {
                    argmin: next,
                    value: f_new.min(f_old),
                    attained: false,
                });
            }
        }
        if d_lo > 0.0 {
            hi = edge;
            d_hi = d_lo;
            lo = next;
            d_lo = d_next;
        } else {
            lo = edge;
            d_lo = d_hi;
            hi = next;
            d_hi = d_next;
        }
    }
}
