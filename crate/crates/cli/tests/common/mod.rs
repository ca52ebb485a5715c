use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random-walk price panel with blank cells; returns the blanked
/// `(row, column)` positions (0-based data coordinates, never row 0).
pub fn write_price_panel(path: &Path, rows: usize, cols: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::from("date");
    for c in 0..cols {
        write!(text, ",S{c}").unwrap();
    }
    text.push('\n');
    let mut level = vec![100.0_f64; cols];
    let mut missing = Vec::new();
    for r in 0..rows {
        write!(text, "d{r:05}").unwrap();
        for (c, p) in level.iter_mut().enumerate() {
            let shock: f64 = rng.sample(StandardNormal);
            *p *= (0.01 * shock).exp();
            if r > 0 && rng.random::<f64>() < 0.02 {
                missing.push((r, c));
                text.push(',');
            } else {
                write!(text, ",{p:.6}").unwrap();
            }
        }
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
    missing
}
