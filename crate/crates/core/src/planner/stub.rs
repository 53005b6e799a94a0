//! Closed-form planning models with known optima.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::numeric::DenseArray;
use crate::planner::PlanningModel;

/// Latent is the time index; reward is `-‖a − a*‖²` at `t = 0` and zero
/// afterwards, no termination, zero terminal value, zero policy prior.
#[derive(Clone, Debug)]
pub struct QuadraticStub {
    pub target: Vec<f64>,
}

impl PlanningModel for QuadraticStub {
    fn action_dim(&self) -> usize {
        self.target.len()
    }

    fn step(&self, z: &DenseArray, a: &DenseArray) -> Result<(DenseArray, Vec<f64>, Vec<f64>)> {
        let r = (0..z.rows())
            .map(|i| {
                if z.row_slice(i)[0] == 0.0 {
                    -a.row_slice(i).iter().zip(&self.target).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
                } else {
                    0.0
                }
            })
            .collect();
        Ok((z.map(|t| t + 1.0), r, vec![0.0; z.rows()]))
    }

    fn policy_action(&self, z: &DenseArray, _noise: Option<&DenseArray>) -> Result<DenseArray> {
        Ok(DenseArray::zeros(&[z.rows(), self.target.len()]))
    }

    fn terminal_value(&self, z: &DenseArray, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(vec![0.0; z.rows()])
    }
}

/// Latent is the time index; rewards and termination probabilities are read
/// from fixed per-step tables regardless of the action.
#[derive(Clone, Debug)]
pub struct TableStub {
    pub rewards: Vec<f64>,
    pub terminations: Vec<f64>,
    pub terminal_value: f64,
    pub action_dim: usize,
}

impl PlanningModel for TableStub {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn step(&self, z: &DenseArray, _a: &DenseArray) -> Result<(DenseArray, Vec<f64>, Vec<f64>)> {
        let t: Vec<usize> = (0..z.rows()).map(|i| z.row_slice(i)[0] as usize).collect();
        let r = t.iter().map(|&t| self.rewards[t]).collect();
        let d = t.iter().map(|&t| self.terminations[t]).collect();
        Ok((z.map(|t| t + 1.0), r, d))
    }

    fn policy_action(&self, z: &DenseArray, _noise: Option<&DenseArray>) -> Result<DenseArray> {
        Ok(DenseArray::zeros(&[z.rows(), self.action_dim]))
    }

    fn terminal_value(&self, z: &DenseArray, _rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        Ok(vec![self.terminal_value; z.rows()])
    }
}
