//! Nudged companion copy of the system: a secondary state driven by the same
//! noise path as the primary plus a feedback force that pushes its velocity
//! toward the primary's through finitely many modes, with the feedback
//! switched off once its accumulated squared strength exhausts a fixed
//! budget. Used to measure synchronization under partial observations.

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::noise;
use crate::norms;
use crate::state::SystemState;
use crate::step;

/// Feedback controller state for a nudged companion run.
#[derive(Debug)]
pub struct ShadowRunner {
    /// Orthonormal velocity modes the feedback acts through.
    pub basis: Vec<VectorField>,
    /// Feedback gain.
    pub lambda: f64,
    /// Cap on the time integral of the squared projected velocity gap.
    pub budget: f64,
    /// Integral of the squared projected gap accumulated so far.
    pub spent: f64,
    /// Latches true the first time `spent` reaches `budget`.
    pub fired: bool,
}

impl ShadowRunner {
    pub fn new(basis: Vec<VectorField>, lambda: f64, budget: f64) -> Result<ShadowRunner> {
        if basis.is_empty() {
            return Err(Error::InvalidArgument("feedback basis is empty".into()));
        }
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidArgument("feedback gain must be finite and >= 0".into()));
        }
        if !(budget > 0.0) {
            return Err(Error::InvalidArgument("feedback budget must be positive".into()));
        }
        Ok(ShadowRunner { basis, lambda, budget, spent: 0.0, fired: false })
    }

    /// True while the controller may still act on the next step.
    pub fn active(&self) -> bool {
        self.spent < self.budget
    }
}

/// Advances the companion state one step under shared increments. While the
/// budget lasts, the velocity equation carries the extra force
/// `lambda * P_n(u_primary - u_companion)` evaluated at the old time level,
/// and the budget is charged `||P_n(u_primary - u_companion)||^2 * dt` after
/// the step (left-endpoint rule, independent of the gain). The step during
/// which the budget is first exceeded still carries the control.
pub fn shadow_step(
    runner: &mut ShadowRunner,
    primary_u_old: &VectorField,
    companion: &mut SystemState,
    dt: f64,
    increments: &[f64],
) -> Result<()> {
    if runner.active() {
        let diff = primary_u_old.sub(&companion.u);
        let proj = noise::project_onto_basis(&diff, &runner.basis);
        let proj_sq = norms::l2_norm_vec(&proj).powi(2);
        let mut control = proj;
        control.scale(runner.lambda);
        step::step_with_forcing(companion, dt, increments, &control)?;
        runner.spent += proj_sq * dt;
        if runner.spent >= runner.budget {
            runner.fired = true;
        }
    } else {
        step::step_with_increments(companion, dt, increments)?;
    }
    Ok(())
}
