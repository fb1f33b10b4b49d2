//! Scratch experiments (not shipped).
use das_index::model::ClientModel;
use das_index::pricing;

fn main() {
    let m1 = ClientModel::new(8, 3, vec![0.15, 0.4], vec![0.0, 0.8, 1.6],
        vec![vec![0.0, 0.35, 0.6], vec![0.0, 0.55, 0.8]], 2.0).unwrap();
    let m2 = ClientModel::new(6, 2, vec![0.2, 0.5], vec![0.0, 1.0],
        vec![vec![0.0, 0.5], vec![0.0, 0.75]], 1.0).unwrap();
    let models = vec![m1, m2];
    let u = |lam: f64| -> f64 {
        pricing::dual_value(&models, lam, 1.0, 1e-12).unwrap().per_client_power.iter().sum()
    };
    println!("usage(0.8) = {:.15}", u(0.8));
    println!("usage(0.7) = {:.15}", u(0.7));
    println!("usage(0.9) = {:.15}", u(0.9));
}
