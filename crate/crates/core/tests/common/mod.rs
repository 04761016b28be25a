#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use resfed_core::data::ClientDataset;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut Xoshiro256PlusPlus, rows: usize, cols: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Random input sequences, dealt round-robin to `n_clients` clients.
pub fn random_clients(
    rng: &mut Xoshiro256PlusPlus,
    n_input: usize,
    n_clients: usize,
    n_sequences: usize,
    max_len: usize,
) -> (Vec<DMatrix<f64>>, Vec<ClientDataset>) {
    let sequences: Vec<DMatrix<f64>> = (0..n_sequences)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            random_matrix(rng, n_input, len, 0.0, 1.0)
        })
        .collect();
    let mut clients: Vec<ClientDataset> = (0..n_clients)
        .map(|c| ClientDataset {
            client_id: c as u32,
            sequences: Vec::new(),
        })
        .collect();
    for (i, s) in sequences.iter().enumerate() {
        clients[i % n_clients].sequences.push(s.clone());
    }
    (sequences, clients)
}
