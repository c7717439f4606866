//! Algebraic invariants of the losses, the distance matrix and the optimizer.

use proptest::prelude::*;
use reid_core::eval::l2_distance_matrix;
use reid_core::losses::{cross_entropy, entropy, kl_categorical, label_smoothing_loss, TargetDistribution};
use reid_core::numerics::softmax;
use reid_core::optim::{amsgrad_update, lr_schedule};
use reid_core::{Matrix, OptimizerState};

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0f64..20.0, 2..50)
}

proptest! {
    #[test]
    fn kl_to_uniform_plus_entropy_is_log_c(z in logits()) {
        let p = softmax(&z).unwrap();
        let u = TargetDistribution::uniform(z.len());
        let lhs = kl_categorical(&p, u.probs()).unwrap() + entropy(&p).unwrap();
        prop_assert!((lhs - (z.len() as f64).ln()).abs() <= 1e-10);
    }

    #[test]
    fn smoothing_decomposes_into_xent_and_kl(z in logits(), t in any::<prop::sample::Index>(), beta in 0.0f64..1.0) {
        let c = z.len();
        let t = t.index(c);
        let p = softmax(&z).unwrap();
        let u = TargetDistribution::uniform(c);
        let lhs = (1.0 - beta) * cross_entropy(&z, t, 1.0).unwrap().loss
            + beta * kl_categorical(u.probs(), &p).unwrap()
            - label_smoothing_loss(&z, t, 1.0, beta).unwrap().loss;
        prop_assert!((lhs + beta * (c as f64).ln()).abs() <= 1e-10, "{lhs}");
    }

    #[test]
    fn l2_distances_are_rotation_invariant(
        q in prop::collection::vec(-3.0f64..3.0, 12),
        g in prop::collection::vec(-3.0f64..3.0, 20),
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        // rotate the first two of four coordinates
        let (s, c) = angle.sin_cos();
        let rotate = |v: &[f64]| -> Vec<f64> {
            v.chunks(4).flat_map(|r| [c * r[0] - s * r[1], s * r[0] + c * r[1], r[2], r[3]]).collect()
        };
        let base = l2_distance_matrix(&Matrix::new(3, 4, q.clone()).unwrap(), &Matrix::new(5, 4, g.clone()).unwrap()).unwrap();
        let rot = l2_distance_matrix(&Matrix::new(3, 4, rotate(&q)).unwrap(), &Matrix::new(5, 4, rotate(&g)).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                prop_assert!((base.get(i, j) - rot.get(i, j)).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn amsgrad_second_moment_never_decreases(grads in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..100)) {
        let mut state = OptimizerState::new(3);
        let mut params = vec![0.5, -0.5, 1.0];
        let mut previous = state.v_max.clone();
        for g in &grads {
            amsgrad_update(&mut params, g, &mut state, 1e-3).unwrap();
            for (now, before) in state.v_max.iter().zip(&previous) {
                prop_assert!(now >= before);
            }
            prop_assert!(state.v_max.iter().zip(&state.v).all(|(m, v)| m >= v));
            previous = state.v_max.clone();
        }
    }

    #[test]
    fn schedule_is_piecewise_constant(epoch in 1usize..400, base in 1e-6f64..1.0) {
        let expected = if epoch < 20 { base } else if epoch < 40 { base / 10.0 } else { base / 100.0 };
        prop_assert_eq!(lr_schedule(epoch, base), expected);
    }
}
