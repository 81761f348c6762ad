use crate::error::{ensure, Result};

/// Weight on the regression loss, rising linearly from 0.5 at the first
/// epoch to 1.0 at the last.
pub fn gamma_schedule(epoch: usize, total_epochs: usize) -> Result<f64> {
    ensure!(total_epochs >= 1, "total_epochs must be positive");
    ensure!(
        epoch < total_epochs,
        "epoch {epoch} outside 0..{total_epochs}"
    );
    if total_epochs == 1 {
        return Ok(1.0);
    }
    Ok(0.5 + 0.5 * epoch as f64 / (total_epochs - 1) as f64)
}

pub fn combined_loss(bce: f64, main: f64, gamma: f64) -> f64 {
    bce + gamma * main
}
