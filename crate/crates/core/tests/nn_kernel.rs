use fspn_core::nn::{sequential, LayerSpec, ParamSet, Partition, Sgd, Tensor};
use fspn_core::Error;
use proptest::prelude::*;

fn dense(n: usize, m: usize) -> fspn_core::nn::Network {
    sequential(
        vec![n],
        vec![LayerSpec::Dense {
            inputs: n,
            units: m,
        }],
    )
    .unwrap()
}

#[test]
fn identity_dense_passes_input_through() {
    let net = dense(3, 3);
    let mut p: ParamSet<f64> = net.zero_params();
    for i in 0..3 {
        p.arrays[0].values[i * 3 + i] = 1.0;
    }
    let x = Tensor::from_vec(vec![0.5, -2.0, 7.0]);
    assert_eq!(net.predict(&p, vec![x.clone()]).unwrap().data, x.data);
}

#[test]
fn relu_clamps_negatives() {
    let net = sequential(vec![3], vec![LayerSpec::Relu]).unwrap();
    let y = net.predict(
        &net.zero_params::<f64>(),
        vec![Tensor::from_vec(vec![-1.0, 0.0, 2.0])],
    );
    assert_eq!(y.unwrap().data, vec![0.0, 0.0, 2.0]);
}

#[test]
fn one_hot_kernel_shifts() {
    let net = sequential(
        vec![1, 8],
        vec![LayerSpec::Conv1d {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            padding: 1,
        }],
    )
    .unwrap();
    let mut p: ParamSet<f64> = net.zero_params();
    p.arrays[0].values = vec![0.0, 0.0, 1.0];
    let x = Tensor::new(vec![1, 8], (1..=8).map(f64::from).collect()).unwrap();
    let y = net.predict(&p, vec![x]).unwrap();
    assert_eq!(y.data, vec![2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 0.0]);
}

#[test]
fn dense_gradient_is_outer_product() {
    let net = dense(3, 2);
    let p: ParamSet<f64> = net.init_params(1).cast();
    let x = vec![1.0, -2.0, 0.5];
    let g = vec![3.0, -1.0];
    let (_, cache) = net.forward(&p, vec![Tensor::from_vec(x.clone())]).unwrap();
    let grads = net
        .backward(&p, cache, &Tensor::from_vec(g.clone()))
        .unwrap();
    let outer: Vec<f64> = g
        .iter()
        .flat_map(|gi| x.iter().map(move |xj| gi * xj))
        .collect();
    assert_eq!(grads.arrays[0].values, outer);
    assert_eq!(grads.arrays[1].values, g);
}

#[test]
fn zero_output_gradient_gives_zero_gradients() {
    let net = sequential(
        vec![2, 6],
        vec![
            LayerSpec::Conv1d {
                in_ch: 2,
                out_ch: 2,
                kernel: 3,
                stride: 1,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten { keep_trailing: 0 },
            LayerSpec::Dense {
                inputs: 12,
                units: 2,
            },
            LayerSpec::Sigmoid,
        ],
    )
    .unwrap();
    let p: ParamSet<f64> = net.init_params(4).cast();
    let x = Tensor::new(vec![2, 6], (0..12).map(|v| v as f64 * 0.1 - 0.5).collect()).unwrap();
    let (_, cache) = net.forward(&p, vec![x]).unwrap();
    let g = net
        .backward(&p, cache, &Tensor::from_vec(vec![0.0, 0.0]))
        .unwrap();
    assert!(g.flatten().iter().all(|&v| v == 0.0));
}

#[test]
fn shape_mismatches_name_the_layer() {
    let err = sequential(
        vec![5],
        vec![LayerSpec::Dense {
            inputs: 4,
            units: 2,
        }],
    )
    .unwrap_err();
    match err {
        Error::Structural { layer, .. } => assert!(layer.contains("dense"), "{layer}"),
        other => panic!("unexpected {other:?}"),
    }
    let net = dense(4, 2);
    let p: ParamSet<f64> = net.zero_params();
    assert!(net
        .predict(&p, vec![Tensor::from_vec(vec![1.0; 5])])
        .is_err());
}

#[test]
fn cache_from_another_network_is_rejected() {
    let a = dense(3, 2);
    let b = dense(3, 2);
    let other = sequential(
        vec![3],
        vec![
            LayerSpec::Dense {
                inputs: 3,
                units: 2,
            },
            LayerSpec::Relu,
        ],
    )
    .unwrap();
    let p: ParamSet<f64> = a.init_params(0).cast();
    let (_, cache) = other
        .forward(&p, vec![Tensor::from_vec(vec![1.0, 2.0, 3.0])])
        .unwrap();
    let err = b
        .backward(&p, cache, &Tensor::from_vec(vec![1.0, 1.0]))
        .unwrap_err();
    assert!(matches!(err, Error::Usage(_)));
}

#[test]
fn forward_is_reproducible() {
    let net = dense(4, 3);
    let p = net.init_params(9);
    assert_eq!(p, net.init_params(9));
    let x = Tensor::from_vec(vec![0.1f32, 0.2, -0.3, 0.4]);
    let a = net.predict(&p, vec![x.clone()]).unwrap();
    let b = net.predict(&p, vec![x]).unwrap();
    assert_eq!(
        a.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut p = dense(5, 4).init_params(3);
    p.arrays[1].partition = Partition::Head(2);
    p.arrays[0].values[0] = f32::MIN_POSITIVE;
    p.arrays[0].values[1] = -0.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    p.save(&path).unwrap();
    let q = ParamSet::load(&path).unwrap();
    assert_eq!(p.to_checkpoint_bytes(), q.to_checkpoint_bytes());
    assert_eq!(q.arrays[1].partition, Partition::Head(2));
    assert_eq!(q.arrays[0].values[1].to_bits(), (-0.0f32).to_bits());

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"FSPNCKPT");
    std::fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
    assert!(matches!(ParamSet::load(&path), Err(Error::Format { .. })));
}

proptest! {
    #[test]
    fn flatten_unflatten_round_trips(seed in 0u64..1000, shift in -3.0f32..3.0) {
        let net = sequential(
            vec![1, 4, 4],
            vec![
                LayerSpec::Conv2d { in_ch: 1, out_ch: 2, kernel: [3, 3], stride: [1, 1], padding: [1, 1] },
                LayerSpec::Flatten { keep_trailing: 0 },
                LayerSpec::Dense { inputs: 32, units: 3 },
            ],
        ).unwrap();
        let p = net.init_params(seed);
        let flat: Vec<f32> = p.flatten().iter().map(|v| v + shift).collect();
        let mut q = p.clone();
        q.unflatten(&flat).unwrap();
        prop_assert_eq!(q.flatten(), flat);
        prop_assert!(q.same_structure(&p));
        prop_assert!(q.unflatten(&[0.0; 3]).is_err());
    }

    #[test]
    fn sgd_without_momentum_is_a_plain_step(p0 in -10.0f64..10.0, g in -10.0f64..10.0, lr in 0.0f64..1.0) {
        let mk = |v: f64| ParamSet {
            arrays: vec![fspn_core::nn::ParamArray { name: "w".into(), partition: Partition::Common, shape: vec![1], values: vec![v] }],
        };
        let mut p = mk(p0);
        Sgd::new(lr, 0.0).step(&mut p, &mk(g)).unwrap();
        prop_assert!((p.arrays[0].values[0] - (p0 - lr * g)).abs() < 1e-12);
    }
}
