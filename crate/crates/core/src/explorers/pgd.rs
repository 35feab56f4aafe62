use std::fmt;

use nalgebra::Vector3;

use super::{ascend, top_k, ExplorationResult, ExploreError, ExplorerConfig, Scored, Session};

/// Sampling followed by independent projected gradient ascents from the best samples.
pub fn explore_pgd<F, T, E>(eval_fn: &F, config: &ExplorerConfig) -> Result<ExplorationResult<T>, ExploreError>
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    config.validate()?;
    let knobs = &config.pgd;
    if config.budget < knobs.n_samples_init {
        return Err(ExploreError::InvalidConfig("pgd: budget < n_samples_init".into()));
    }
    let mut rng = config.rng();
    let mut session = Session::new(eval_fn, config.budget);
    session.initial_sample(&mut rng, config.u_max, knobs.n_samples_init);

    for start in top_k(session.probes(), knobs.n_descents) {
        let (end, exhausted) = ascend(&mut session, start, knobs.max_steps, knobs, config.u_max);
        session.mark_local_optimum(&end);
        if exhausted {
            break;
        }
    }
    session.finish()
}
