mod common;

use common::layers::all_layer_kinds;

#[test]
fn every_layer_kind_matches_finite_differences() {
    for (name, worst) in all_layer_kinds() {
        assert!(worst < 1e-4, "{name}: worst relative error {worst:e}");
    }
}
