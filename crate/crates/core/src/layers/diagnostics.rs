use crate::autodiff::Activation;
use crate::tensor::Tensor;

/// Activation effect `g(a) = φ(a) / a`, so that `φ(a) = g(a) ⊙ a`.
///
/// At `a = 0` the ratio is undefined and takes the value `φ'(0)`.
pub fn activation_effect(phi: Activation, a: &Tensor) -> Tensor {
    a.map(|v| {
        if v == 0.0 {
            phi.derivative(0.0)
        } else {
            phi.apply(v) / v
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_effect_is_indicator() {
        let a = Tensor::vector(&[2.0, -3.0, 0.5, -1e-9, 0.0]);
        let g = activation_effect(Activation::Relu, &a);
        assert_eq!(g.data(), &[1.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn tanh_is_nearly_linear_near_zero() {
        let g = activation_effect(Activation::Tanh, &Tensor::vector(&[0.01, 0.0]));
        assert!((g.data()[0] - 0.01f64.tanh() / 0.01).abs() < 1e-16);
        assert!((g.data()[0] - 0.99997).abs() < 1e-5);
        assert_eq!(g.data()[1], 1.0);
    }

    #[test]
    fn effect_times_input_recovers_activation() {
        let a = Tensor::vector(&[-2.5, -0.3, 0.7, 4.0]);
        for phi in [
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Relu,
            Activation::Identity,
        ] {
            let g = activation_effect(phi, &a);
            for (gv, av) in g.data().iter().zip(a.data()) {
                assert!((gv * av - phi.apply(*av)).abs() < 1e-15);
            }
        }
    }
}
