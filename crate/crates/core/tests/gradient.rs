mod common;

use rand::Rng;
use svo_mapf::learner::{LossConfig, NetConfig, PolicyLayout, Sample};
use svo_mapf::rng::rng_from_seed;

#[test]
fn analytic_gradient_matches_five_point_stencil() {
    let layout = PolicyLayout::new(NetConfig {
        obs_len: 14,
        svo_bins: 5,
        hidden: 7,
    });
    let cfg = LossConfig::default();
    let mut worst: f64 = 0.0;
    for point in 0..20u64 {
        let mut rng = rng_from_seed(1000 + point);
        let mut params = layout.init_params(point);
        for p in params.iter_mut() {
            *p += rng.gen_range(-0.3..0.3);
        }
        let batch = common::random_batch(&layout, &params, 6, point);
        let refs: Vec<&Sample> = batch.iter().collect();
        let err = common::max_gradient_error(&layout, &params, &refs, &cfg, 1e-4, 1e-6);
        assert!(err < 1e-4, "point {point}: relative error {err:e}");
        worst = worst.max(err);
    }
    assert!(worst.is_finite());
}
