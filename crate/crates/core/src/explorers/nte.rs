use std::fmt;

use nalgebra::Vector3;

use super::{ascend, sample_neighborhood, top_k, ExplorationResult, ExploreError, ExplorerConfig, Scored, Session};

/// Neighbourhood tree exploration: a beam search whose nodes first take a
/// few projected-ascent steps and then branch into trust-region samples.
pub fn explore_nte<F, T, E>(eval_fn: &F, config: &ExplorerConfig) -> Result<ExplorationResult<T>, ExploreError>
where
    F: Fn(&Vector3<f64>) -> Result<T, E> + Sync,
    T: Scored + Send,
    E: Send + fmt::Display,
{
    config.validate()?;
    let knobs = &config.nte;
    if config.budget < knobs.branch_width {
        return Err(ExploreError::InvalidConfig("nte: budget < branch_width".into()));
    }
    let mut rng = config.rng();
    let mut session = Session::new(eval_fn, config.budget);
    let roots = session.initial_sample(&mut rng, config.u_max, knobs.branch_width);
    let mut beam = top_k(&roots, knobs.beam_width);

    let mut radius = knobs.trust_radius_init * config.u_max;
    for depth in 0..=knobs.max_depth {
        let mut arcs = Vec::with_capacity(beam.len());
        for node in &beam {
            if session.exhausted() {
                arcs.push(*node);
                continue;
            }
            let (end, _) = ascend(&mut session, *node, knobs.grad_steps_per_node, &config.pgd, config.u_max);
            arcs.push(end);
        }
        if depth == knobs.max_depth || session.exhausted() {
            for node in &arcs {
                session.mark_local_optimum(node);
            }
            break;
        }
        let children: Vec<Vector3<f64>> = arcs
            .iter()
            .flat_map(|node| (0..knobs.branch_width).map(|_| node.u).collect::<Vec<_>>())
            .map(|center| sample_neighborhood(&mut rng, &center, radius, config.u_max))
            .collect();
        let pool: Vec<_> = session.eval_batch(children).into_iter().flatten().collect();
        if pool.is_empty() {
            beam = arcs;
        } else {
            beam = top_k(&pool, knobs.beam_width);
        }
        radius *= knobs.trust_radius_shrink;
    }
    session.finish()
}
