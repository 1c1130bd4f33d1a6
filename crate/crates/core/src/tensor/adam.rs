use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Adam hyperparameters.
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub m: Matrix,
    pub v: Matrix,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            config,
        }
    }

    pub fn for_param(param: &Matrix, config: AdamConfig) -> Self {
        Self::new(param.rows(), param.cols(), config)
    }
}

/// One bias-corrected Adam update, descending along `grad`.
///
/// A non-finite gradient aborts the step before any state is touched.
pub fn adam_step(name: &str, param: &mut Matrix, grad: &Matrix, state: &mut AdamState) -> Result<()> {
    param.check_same_shape(grad, "adam_step")?;
    param.check_same_shape(&state.m, "adam_step")?;
    if !grad.is_finite() {
        return Err(Error::NonFiniteGradient { param: name.to_string() });
    }
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over a fixed, ordered list of parameter matrices.
#[derive(Clone, Debug)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Matrix>, config: AdamConfig) -> Self {
        Adam {
            states: params.into_iter().map(|p| AdamState::for_param(p, config)).collect(),
        }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Updates every parameter. Gradients are validated first so a bad
    /// gradient leaves all parameters untouched.
    pub fn step(&mut self, params: Vec<(&str, &mut Matrix)>, grads: &[Matrix]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(Error::Contract(format!(
                "adam: {} states, {} params, {} grads",
                self.states.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((name, _), g) in params.iter().zip(grads) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { param: name.to_string() });
            }
        }
        for (((name, p), g), s) in params.into_iter().zip(grads).zip(&mut self.states) {
            adam_step(name, p, g, s)?;
        }
        Ok(())
    }
}
