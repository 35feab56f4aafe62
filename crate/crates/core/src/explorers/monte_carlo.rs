use std::fmt;

use nalgebra::Vector3;

use super::{sample_control_ball, ExplorationResult, ExploreError, ExplorerConfig, Scored, Session};

/// Ground-truth baseline: spends the whole budget on uniform ball samples.
pub fn explore_monte_carlo<F, T, E>(eval_fn: &F, config: &ExplorerConfig) -> Result<ExplorationResult<T>, ExploreError>
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    config.validate()?;
    let mut rng = config.rng();
    let mut session = Session::new(eval_fn, config.budget);
    session.eval_batch(sample_control_ball(&mut rng, config.u_max, config.budget));
    session.finish()
}
