use blockreduce::netsim::{SimConfig, Engine};
fn main() {
    let text = std::fs::read_to_string("configs/base10x10.toml").unwrap();
    let mut config = SimConfig::from_toml(&text).unwrap();
    config.sim.duration_s = 120.0;
    config.demand.tps = 1000.0;
    let mut engine = Engine::new(config, 7);
    engine.run_to_end();
    engine.debug_forks();
}
