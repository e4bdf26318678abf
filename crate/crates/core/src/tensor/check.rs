//! Central-difference verification of tape gradients.

use super::{Scalar, Tape, TensorError, Var};

/// Floor on the relative-error denominator.
const DENOM_FLOOR: f64 = 1e-8;

/// Halvings tried when a probe straddles a ReLU kink.
const MAX_HALVINGS: u32 = 30;

/// Max over every element of `leaf` of
/// `|analytic − fd| / max(|analytic|, |fd|, 1e-8)`, where `fd` is the central
/// difference of `loss` with half-width `step`.
///
/// If either probe moves a ReLU input across zero, the difference quotient
/// measures a blend of two slopes. Such elements are retried with the step
/// halved until both probes stay on the recorded side of every kink.
pub fn grad_check<F: Scalar>(tape: &Tape<F>, loss: Var, leaf: Var, step: f64) -> Result<f64, TensorError> {
    let n = tape.value(leaf)?.numel();
    let all: Vec<usize> = (0..n).collect();
    grad_check_elements(tape, loss, leaf, step, &all)
}

/// [`grad_check`] restricted to the flat element indices in `elements`.
pub fn grad_check_elements<F: Scalar>(
    tape: &Tape<F>,
    loss: Var,
    leaf: Var,
    step: f64,
    elements: &[usize],
) -> Result<f64, TensorError> {
    Ok(grad_check_report(tape, loss, leaf, step, elements)?.max_rel_error)
}

/// Outcome of a finite-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub elements: usize,
    /// Elements whose step had to shrink to avoid a ReLU kink.
    pub reduced_steps: usize,
    /// Elements still straddling a kink at the smallest step tried.
    pub unresolved_kinks: usize,
}

/// [`grad_check_elements`] with kink bookkeeping.
pub fn grad_check_report<F: Scalar>(
    tape: &Tape<F>,
    loss: Var,
    leaf: Var,
    step: f64,
    elements: &[usize],
) -> Result<GradCheckReport, TensorError> {
    compare(tape, loss, leaf, step, elements, Scheme::Central)
}

/// As [`grad_check_report`], but each difference quotient is refined by
/// Ridders' polynomial extrapolation over a shrinking sequence of steps
/// starting at `step`. Much less sensitive to truncation error on strongly
/// curved losses, at roughly ten times the cost.
pub fn grad_check_extrapolated<F: Scalar>(
    tape: &Tape<F>,
    loss: Var,
    leaf: Var,
    step: f64,
    elements: &[usize],
) -> Result<GradCheckReport, TensorError> {
    compare(tape, loss, leaf, step, elements, Scheme::Ridders)
}

#[derive(Clone, Copy, PartialEq)]
enum Scheme {
    Central,
    Ridders,
}

const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_TABLE: usize = 10;

fn compare<F: Scalar>(
    tape: &Tape<F>,
    loss: Var,
    leaf: Var,
    step: f64,
    elements: &[usize],
    scheme: Scheme,
) -> Result<GradCheckReport, TensorError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(TensorError::InvalidArgument {
            op: "grad-check",
            reason: format!("step must be positive, got {step}"),
        });
    }
    if !tape.is_variable(leaf) {
        return Err(TensorError::NotALeaf);
    }
    let grads = tape.backward(loss)?;
    let base = tape.value(leaf)?.clone();
    let analytic = match grads.get(leaf) {
        Some(g) => g.clone(),
        // Unreachable leaf: the loss does not depend on it.
        None => super::Tensor::zeros(base.shape()),
    };
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        elements: elements.len(),
        reduced_steps: 0,
        unresolved_kinks: 0,
    };
    for &i in elements {
        if i >= base.numel() {
            return Err(TensorError::InvalidArgument {
                op: "grad-check",
                reason: format!("element {i} outside leaf of {} elements", base.numel()),
            });
        }
        // Central difference at half-width `h`, using the coordinates
        // actually represented in `F`, plus whether a kink was crossed.
        let quotient = |h: f64| -> Result<(f64, bool), TensorError> {
            let mut ends = [(0.0, 0.0, false); 2];
            for (end, delta) in ends.iter_mut().zip([h, -h]) {
                let mut moved = base.clone();
                let x = F::from_f64(moved.data()[i].as_f64() + delta);
                moved.data_mut()[i] = x;
                let (l, crossed) = tape.replay_value_kinks(&[(leaf, moved)], loss)?;
                *end = (l.item()?.as_f64(), x.as_f64(), crossed);
            }
            let [(hi, x_hi, k_hi), (lo, x_lo, k_lo)] = ends;
            let q = if x_hi == x_lo { 0.0 } else { (hi - lo) / (x_hi - x_lo) };
            Ok((q, k_hi || k_lo))
        };
        let mut h = step;
        let mut halvings = 0;
        let mut fd = loop {
            let (q, crossed) = quotient(h)?;
            if !crossed || halvings == MAX_HALVINGS {
                if halvings > 0 {
                    report.reduced_steps += 1;
                }
                if crossed {
                    report.unresolved_kinks += 1;
                }
                break q;
            }
            h *= 0.5;
            halvings += 1;
        };
        if scheme == Scheme::Ridders {
            fd = ridders(fd, h, |h| Ok(quotient(h)?.0))?;
        }
        let a = analytic.data()[i].as_f64();
        let denom = a.abs().max(fd.abs()).max(DENOM_FLOOR);
        report.max_rel_error = report.max_rel_error.max((a - fd).abs() / denom);
    }
    Ok(report)
}

/// Ridders' extrapolation of `quotient(h)` toward `h → 0`, given its value
/// `first` at `h`.
fn ridders(first: f64, mut h: f64, quotient: impl Fn(f64) -> Result<f64, TensorError>) -> Result<f64, TensorError> {
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut table = [[0f64; RIDDERS_TABLE]; RIDDERS_TABLE];
    table[0][0] = first;
    let mut best = first;
    let mut err = f64::INFINITY;
    for i in 1..RIDDERS_TABLE {
        h /= RIDDERS_SHRINK;
        table[0][i] = quotient(h)?;
        let mut fac = c2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * fac - table[j - 1][i - 1]) / (fac - 1.0);
            fac *= c2;
            let e = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            if e <= err {
                err = e;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= 2.0 * err {
            break;
        }
    }
    Ok(best)
}
