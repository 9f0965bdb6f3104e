#[allow(dead_code)]
mod riccati_flows {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/riccati_flows.rs"));
}

#[test]
fn riccati_flows_example_runs() {
    riccati_flows::run_example().expect("riccati_flows example should run");
}

#[allow(dead_code)]
mod kalman_bucy {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/kalman_bucy.rs"));
}

#[test]
fn kalman_bucy_example_runs() {
    kalman_bucy::run_example().expect("kalman_bucy example should run");
}

#[allow(dead_code)]
mod particle_variants {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/particle_variants.rs"));
}

#[test]
fn particle_variants_example_runs() {
    particle_variants::run_example().expect("particle_variants example should run");
}

#[allow(dead_code)]
mod mean_field_exactness {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/mean_field_exactness.rs"));
}

#[test]
fn mean_field_exactness_example_runs() {
    mean_field_exactness::run_example().expect("mean_field_exactness example should run");
}

#[allow(dead_code)]
mod convergence_rate {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/convergence_rate.rs"));
}

#[test]
fn convergence_rate_example_runs() {
    convergence_rate::run_example().expect("convergence_rate example should run");
}

#[allow(dead_code)]
mod propagation_of_chaos {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/propagation_of_chaos.rs"));
}

#[test]
fn propagation_of_chaos_example_runs() {
    propagation_of_chaos::run_example().expect("propagation_of_chaos example should run");
}

#[allow(dead_code)]
mod wasserstein_stability {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/wasserstein_stability.rs"));
}

#[test]
fn wasserstein_stability_example_runs() {
    wasserstein_stability::run_example().expect("wasserstein_stability example should run");
}
