use super::params::Params;
use super::scalar::Scalar;
use super::NnError;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Params<S>,
    pub v: Params<S>,
    pub t: u64,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(like: &Params<S>) -> Self {
        Self {
            m: Params::zeros(like.blocks()),
            v: Params::zeros(like.blocks()),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<S: Scalar>(
    params: &mut Params<S>,
    grads: &Params<S>,
    state: &mut AdamState<S>,
    lr: f64,
) -> Result<(), NnError> {
    if !params.same_shape(grads) || !params.same_shape(&state.m) {
        return Err(NnError::ShapeMismatch {
            expected: params.len(),
            actual: grads.len(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = S::from_f64(BETA1);
    let b2 = S::from_f64(BETA2);
    let one_minus_b1 = S::from_f64(1.0 - BETA1);
    let one_minus_b2 = S::from_f64(1.0 - BETA2);
    let correction1 = S::from_f64(1.0 / (1.0 - BETA1.powi(t)));
    let correction2 = S::from_f64(1.0 / (1.0 - BETA2.powi(t)));
    let lr = S::from_f64(lr);
    let eps = S::from_f64(EPSILON);

    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), m), v) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = b1 * *m + one_minus_b1 * g;
        *v = b2 * *v + one_minus_b2 * g * g;
        let m_hat = *m * correction1;
        let v_hat = *v * correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::BlockSpec;

    static BLOCKS: [BlockSpec; 2] = [
        BlockSpec {
            name: "w",
            len: 3,
            fan_in: Some(3),
        },
        BlockSpec {
            name: "b",
            len: 1,
            fan_in: None,
        },
    ];
    static OTHER: [BlockSpec; 1] = [BlockSpec {
        name: "w",
        len: 4,
        fan_in: Some(4),
    }];

    fn params(values: [f64; 4]) -> Params<f64> {
        Params::from_vec(&BLOCKS, values.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = params([1.0, -2.0, 3.0, 0.5]);
        let before = p.clone();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &Params::zeros(&BLOCKS), &mut state, 1e-3).unwrap();
        assert_eq!(p, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut p = params([0.0; 4]);
        let g = params([0.5, -2.0, 1e-3, 7.0]);
        let mut state = AdamState::new(&p);
        let lr = 1e-3;
        adam_step(&mut p, &g, &mut state, lr).unwrap();
        for (&x, &gi) in p.as_slice().iter().zip(g.as_slice()) {
            // m_hat = g, v_hat = g^2 after one step
            let expected = -lr * gi / (gi.abs() + EPSILON);
            assert!((x - expected).abs() < 1e-15, "{x} vs {expected}");
        }
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let g = params([0.1, 0.2, -0.3, 0.4]);
        let run = || {
            let mut p = params([1.0, 1.0, 1.0, 1.0]);
            let mut state = AdamState::new(&p);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut state, 1e-2).unwrap();
            }
            (p, state)
        };
        assert_eq!(run(), run());

        let mut p = params([0.0; 4]);
        let mut state = AdamState::new(&p);
        let wrong = Params::<f64>::zeros(&OTHER);
        assert!(matches!(
            adam_step(&mut p, &wrong, &mut state, 1e-3),
            Err(NnError::ShapeMismatch { .. })
        ));
    }
}
