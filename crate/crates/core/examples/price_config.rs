//! Prices one JSON config and prints the report without the echoed config.

use qfdm::config::RunConfig;
use qfdm::pipeline::run_pricing;

fn main() {
    let path = std::env::args().nth(1).expect("config path");
    let cfg = RunConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
    let t = std::time::Instant::now();
    let rep = run_pricing(&cfg).unwrap();
    let mut v = serde_json::to_value(&rep).unwrap();
    v.as_object_mut().unwrap().remove("config");
    println!("{}", serde_json::to_string_pretty(&v).unwrap());
    eprintln!("elapsed {:?}", t.elapsed());
}
