use blockreduce::netsim::{run, SimConfig};
fn main() {
    let text = std::fs::read_to_string("configs/base10x10.toml").unwrap();
    let mut config = SimConfig::from_toml(&text).unwrap();
    let args: Vec<String> = std::env::args().collect();
    config.sim.duration_s = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1000.0);
    let seed = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(7);
    let t0 = std::time::Instant::now();
    let m = run(&config, seed);
    println!("elapsed {:?}", t0.elapsed());
    print!("{}", m.summary_table());
    println!("admitted {} unserved {}", m.admitted, m.unserved);
}
