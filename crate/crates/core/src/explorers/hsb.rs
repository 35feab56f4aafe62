use std::fmt;

use nalgebra::Vector3;

use super::{sample_control_ball, sample_neighborhood, top_k, ExplorationResult, ExploreError, ExplorerConfig, Scored, Session};

/// Heuristic sample-based search: a global sample followed by rounds of
/// resampling around the current leaders in balls that shrink every round.
pub fn explore_hsb<F, T, E>(eval_fn: &F, config: &ExplorerConfig) -> Result<ExplorationResult<T>, ExploreError>
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    config.validate()?;
    let knobs = &config.hsb;
    if config.budget < knobs.n_samples_init {
        return Err(ExploreError::InvalidConfig("hsb: budget < n_samples_init".into()));
    }
    let mut rng = config.rng();
    let mut session = Session::new(eval_fn, config.budget);
    session.initial_sample(&mut rng, config.u_max, knobs.n_samples_init);

    let rounds = knobs.n_refine_rounds;
    if rounds > 0 {
        let per_round = session.remaining().div_ceil(rounds);
        let mut radius = config.u_max;
        for _ in 0..rounds {
            if session.exhausted() {
                break;
            }
            radius *= knobs.shrink_factor;
            let leaders = top_k(session.probes(), knobs.top_k);
            if leaders.is_empty() {
                // Nothing succeeded yet; fall back to global sampling.
                session.eval_batch(sample_control_ball(&mut rng, config.u_max, per_round));
                continue;
            }
            let mut batch = Vec::with_capacity(per_round);
            for (leader, count) in leaders.iter().zip(rank_shares(per_round, leaders.len())) {
                batch.extend((0..count).map(|_| sample_neighborhood(&mut rng, &leader.u, radius, config.u_max)));
            }
            session.eval_batch(batch);
        }
    }
    session.finish()
}

/// Splits `n` samples over `k` ranked leaders with shares halving by rank;
/// the remainder goes to the best.
fn rank_shares(n: usize, k: usize) -> Vec<usize> {
    let total: f64 = (0..k).map(|i| 0.5f64.powi(i as i32)).sum();
    let mut shares: Vec<usize> = (0..k).map(|i| (n as f64 * 0.5f64.powi(i as i32) / total) as usize).collect();
    let assigned: usize = shares.iter().sum();
    if let Some(first) = shares.first_mut() {
        *first += n - assigned;
    }
    shares
}
