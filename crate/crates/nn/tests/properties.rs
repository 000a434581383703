use proptest::prelude::*;
use texvib_nn::layers::*;
use texvib_nn::{Layer, Tensor};

proptest! {
    #[test]
    fn softmax_rows_lie_on_the_simplex(rows in 1usize..5, logits in prop::collection::vec(-60.0f32..60.0, 9 * 5)) {
        let x = Tensor::new(vec![rows, 9], logits[..rows * 9].to_vec()).unwrap();
        let y = softmax_rows(&x).unwrap();
        for row in y.data().chunks(9) {
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
            prop_assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn sigmoid_stays_inside_open_unit_interval(v in -15.0f32..15.0) {
        let s = sigmoid(v);
        prop_assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn pixel_shuffle_is_a_bijection(n in 1usize..3, c in 1usize..3, h in 1usize..4, w in 1usize..4, r in 1usize..4) {
        let len = n * c * r * r * h * w;
        let x = Tensor::new(vec![n, c * r * r, h, w], (0..len).map(|v| v as f32).collect()).unwrap();
        let y = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(y.shape(), &[n, c, h * r, w * r][..]);
        let mut seen: Vec<f32> = y.data().to_vec();
        seen.sort_by(f32::total_cmp);
        prop_assert!(seen.iter().enumerate().all(|(i, &v)| v == i as f32));
        prop_assert_eq!(pixel_unshuffle(&y, x.shape(), r).unwrap(), x);
    }

    #[test]
    fn conv_output_size_formula(h in 1usize..20, w in 1usize..20, k in 1usize..4, s in 1usize..4, p in 0usize..3) {
        prop_assume!(p < k);
        let cfg = Conv2dConfig { in_channels: 1, out_channels: 1, kernel: k, stride: s, pad: p, bias: false };
        match cfg.output_hw(h, w) {
            Ok((ho, wo)) => {
                prop_assert_eq!(ho, (h + 2 * p - k) / s + 1);
                prop_assert_eq!(wo, (w + 2 * p - k) / s + 1);
            }
            Err(_) => prop_assert!(h + 2 * p < k || w + 2 * p < k),
        }
    }

    #[test]
    fn inference_is_deterministic(seed in 0u64..1000) {
        let mut init = texvib_nn::Initializer::new(seed);
        let net: ResidualBlock = ResidualBlock::new(
            ResidualBlockConfig { in_channels: 2, out_channels: 3, stride: 2, branch_relu: true, output_relu: true },
            &mut init,
        ).unwrap();
        let x = texvib_nn::gradcheck::away_from_zero::<f32>(&[2, 2, 6, 6], 0.0, seed);
        prop_assert_eq!(net.infer(&x).unwrap(), net.infer(&x).unwrap());
    }
}
