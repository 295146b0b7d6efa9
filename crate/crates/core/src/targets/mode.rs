//! Mode location by gradient ascent.

use super::{Target, TargetError};
use crate::math::add_scaled;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct ModeResult<S> {
    pub position: Vec<S>,
    pub log_density: S,
    pub iterations: usize,
}

/// Ascent failure; carries the last finite iterate so callers can inspect
/// or restart from it.
#[derive(Debug, thiserror::Error)]
#[error("gradient ascent stalled on non-finite values after {iterations} iterations")]
pub struct ModeDiverged<S: Scalar> {
    pub iterations: usize,
    pub last: ModeResult<S>,
}

/// Gradient ascent on the log-density with backtracking.
///
/// Each iteration proposes `x + h * score` and halves `h` until the move is
/// finite and uphill; `h` relaxes back toward `step_size` afterwards. The
/// evaluations are charged to `target`, so callers that treat mode finding
/// as setup should pass a fork and ledger it separately.
pub fn find_mode<S: Scalar>(
    target: &Target<S>,
    x_init: &[S],
    steps: usize,
    step_size: S,
) -> Result<ModeResult<S>, ModeDiverged<S>> {
    let mut current = target.eval(x_init);
    if !current.is_finite() {
        return Err(ModeDiverged {
            iterations: 0,
            last: ModeResult {
                position: x_init.to_vec(),
                log_density: current.log_density,
                iterations: 0,
            },
        });
    }
    let mut x = x_init.to_vec();
    let mut h = step_size;
    let two = S::lit(2.0);
    for it in 0..steps {
        let mut accepted = false;
        let mut saw_finite_candidate = false;
        for _ in 0..60 {
            let candidate = add_scaled(&x, h, &current.score);
            if candidate.iter().all(|c| c.is_finite()) {
                let e = target.eval(&candidate);
                if e.is_finite() {
                    saw_finite_candidate = true;
                    if e.log_density >= current.log_density {
                        x = candidate;
                        current = e;
                        accepted = true;
                        break;
                    }
                }
            }
            h = h / two;
        }
        if !accepted {
            if saw_finite_candidate {
                // no uphill move left at any scale: converged
                break;
            }
            return Err(ModeDiverged {
                iterations: it,
                last: ModeResult {
                    position: x,
                    log_density: current.log_density,
                    iterations: it,
                },
            });
        }
        h = (h * two).min(step_size);
    }
    Ok(ModeResult {
        position: x,
        log_density: current.log_density,
        iterations: steps,
    })
}

// Re-exported alongside TargetError for callers that want one error type.
impl<S: Scalar> From<ModeDiverged<S>> for TargetError {
    fn from(e: ModeDiverged<S>) -> Self {
        TargetError::Diverged {
            iterations: e.iterations,
        }
    }
}
