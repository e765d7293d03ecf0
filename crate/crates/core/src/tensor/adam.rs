use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ParameterSet, Result, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for a fixed subset of a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    step: u64,
}

impl OptimizerState {
    /// Zero moments for each named parameter.
    pub fn new(config: AdamConfig, params: &ParameterSet, names: &[String]) -> Result<Self> {
        let mut first = BTreeMap::new();
        for name in names {
            let shape = params.get(name)?.shape().to_vec();
            first.insert(name.clone(), Tensor::zeros(&shape));
        }
        Ok(Self {
            config,
            second: first.clone(),
            first,
            step: 0,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.first.keys().map(String::as_str)
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }
}

/// One bias-corrected Adam update of every parameter tracked by `state`.
///
/// Nothing is modified unless every tracked parameter has a gradient of the
/// right shape.
pub fn adam_step(
    params: &mut ParameterSet,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimizerState,
) -> Result<()> {
    for (name, m) in &state.first {
        let g = grads
            .get(name)
            .ok_or_else(|| TensorError::MissingGradient(name.clone()))?;
        m.check_same_shape(g, name)?;
        params.get(name)?.check_same_shape(g, name)?;
    }
    state.step += 1;
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, m) in state.first.iter_mut() {
        let v = state.second.get_mut(name).expect("moments share keys");
        let g = &grads[name];
        let p = params.get_mut(name)?;
        let (m, v, p) = (m.data_mut(), v.data_mut(), p.data_mut());
        for i in 0..g.len() {
            let gi = g.data()[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("p", Tensor::scalar(value)).unwrap();
        p
    }

    fn grads(v: f64) -> BTreeMap<String, Tensor> {
        BTreeMap::from([("p".to_string(), Tensor::scalar(v))])
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = single(0.7);
        let mut s = OptimizerState::new(AdamConfig::default(), &p, &["p".into()]).unwrap();
        adam_step(&mut p, &grads(0.0), &mut s).unwrap();
        assert_eq!(p.get("p").unwrap().data(), &[0.7]);
        assert_eq!(s.step(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [1e-4, 0.3, -25.0, 1e6] {
            let mut p = single(1.0);
            let mut s = OptimizerState::new(AdamConfig::default(), &p, &["p".into()]).unwrap();
            adam_step(&mut p, &grads(g), &mut s).unwrap();
            let delta = 1.0 - p.get("p").unwrap().data()[0];
            assert!((delta.abs() - 1e-3).abs() < 1e-6, "g={g} delta={delta}");
            assert_eq!(delta.signum(), g.signum());
        }
    }

    #[test]
    fn ten_steps_on_square_match_reference_trace() {
        // reference: a direct transcription of the Adam recurrences on f(p) = p²
        let (lr, b1, b2, eps) = (1e-3, 0.9, 0.999, 1e-8);
        let (mut p_ref, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for t in 1..=10 {
            let g = 2.0 * p_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p_ref -= lr * mh / (vh.sqrt() + eps);
            trace.push(p_ref);
        }

        let mut p = single(1.0);
        let mut s = OptimizerState::new(AdamConfig::default(), &p, &["p".into()]).unwrap();
        for want in trace {
            let g = 2.0 * p.get("p").unwrap().data()[0];
            adam_step(&mut p, &grads(g), &mut s).unwrap();
            assert!((p.get("p").unwrap().data()[0] - want).abs() < 1e-15);
        }
        assert_eq!(s.step(), 10);
    }

    #[test]
    fn missing_gradient_is_an_error_and_changes_nothing() {
        let mut p = single(2.0);
        p.insert("q", Tensor::scalar(3.0)).unwrap();
        let names = vec!["p".to_string(), "q".to_string()];
        let mut s = OptimizerState::new(AdamConfig::default(), &p, &names).unwrap();
        let before = (p.clone(), s.clone());
        let err = adam_step(&mut p, &grads(1.0), &mut s).unwrap_err();
        assert!(matches!(err, TensorError::MissingGradient(n) if n == "q"));
        assert_eq!((p, s), before);
    }

    #[test]
    fn deterministic() {
        let run = || {
            let mut p = single(0.25);
            let mut s = OptimizerState::new(AdamConfig::default(), &p, &["p".into()]).unwrap();
            for i in 0..5 {
                adam_step(&mut p, &grads(0.1 * i as f64 - 0.2), &mut s).unwrap();
            }
            p.get("p").unwrap().data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }
}
