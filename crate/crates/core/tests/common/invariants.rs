//! Property checks shared by the property suite and the acceptance run.
//!
//! Each check drives a deterministic proptest runner and returns the
//! shrunk counterexample as an error message on failure.

use hypersic::adaptation::{
    build_user_embedding, hypernet_adapt, hypernet_forward, hypernet_output, ls_estimate,
    HypernetParams, UserEmbedding,
};
use hypersic::autodiff::{adam_step, AdamState, Graph, Tensor};
use hypersic::channel::{
    generate_symbols, synthetic_channel, transmit, BlockGenerator, Constellation, LinkConfig,
};
use hypersic::deepsic::{
    detect, detect_batch, input_width, sic_forward, ModuleParams, ReceiverParams,
};
use hypersic::harness::{ser, ComplexityLedger, CostWeights};
use hypersic::rng::{stream, SimRng, Stream};
use hypersic::Exec;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Check = fn(u32) -> Result<(), String>;

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String> {
    runner(cases)
        .run(&strategy, test)
        .map_err(|e| e.to_string())
}

fn normal(rng: &mut SimRng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `(N, K)` with `1 <= K <= N <= max_n`.
fn sizes(max_n: usize) -> impl Strategy<Value = (usize, usize)> {
    (1..=max_n).prop_flat_map(|n| (Just(n), 1..=n))
}

/// `(N, K_max, K, k)` with `1 <= k <= K <= K_max <= N`.
fn embedding_sizes() -> impl Strategy<Value = (usize, usize, usize, usize)> {
    sizes(6)
        .prop_flat_map(|(n, k_max)| (Just(n), Just(k_max), 1..=k_max))
        .prop_flat_map(|(n, k_max, k)| (Just(n), Just(k_max), Just(k), 1..=k))
}

fn assert_prob_rows(t: &Tensor) -> Result<(), TestCaseError> {
    for r in 0..t.rows() {
        let row = t.row(r);
        prop_assert!(
            row.iter().all(|&p| p >= 0.0),
            "negative probability in {row:?}"
        );
        prop_assert!(
            (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            "row sums to {}",
            row.iter().sum::<f64>()
        );
    }
    Ok(())
}

pub fn softmax_is_normalized(cases: u32) -> Result<(), String> {
    let rows = prop::collection::vec(prop::collection::vec(-500.0..500.0f64, 2..6), 1..8)
        .prop_filter("rectangular", |r| r.iter().all(|x| x.len() == r[0].len()));
    run(cases, rows, |rows| {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&rows).unwrap());
        let p = g.softmax(x);
        assert_prob_rows(g.value(p))
    })
}

pub fn sic_outputs_are_probabilities(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes(6), 1..=4usize, 1..=16usize, any::<u64>()),
        |((n, k), q, b, seed)| {
            let mut rng = stream(seed, Stream::Init, 0);
            let params = ReceiverParams::init(n, k, &mut rng).unwrap();
            let y = normal(&mut rng, &[b, n]).map(|v| 5.0 * v);
            let est = sic_forward(&params, &y, q).unwrap();
            prop_assert_eq!(est.per_iteration.len(), q);
            for round in &est.per_iteration {
                prop_assert_eq!(round.len(), k);
                for p in round {
                    assert_prob_rows(p)?;
                }
            }
            Ok(())
        },
    )
}

/// Brute-force argmax of the product distribution; the first maximum in
/// lexicographic index order wins.
fn brute_force_joint(probs: &[Vec<f64>]) -> Vec<usize> {
    let k = probs.len();
    let mut best = vec![0; k];
    let mut best_p = f64::NEG_INFINITY;
    for code in 0..(1usize << k) {
        let idx: Vec<usize> = (0..k).map(|u| (code >> (k - 1 - u)) & 1).collect();
        let p: f64 = idx.iter().enumerate().map(|(u, &i)| probs[u][i]).product();
        if p > best_p {
            best_p = p;
            best = idx;
        }
    }
    best
}

pub fn factorized_argmax_matches_brute_force(cases: u32) -> Result<(), String> {
    // Half the draws come from a coarse grid so that exact ties are common.
    let p = prop_oneof![
        0.0..=1.0f64,
        prop::sample::select(vec![0.0, 0.25, 0.5, 0.75, 1.0])
    ];
    run(
        cases,
        prop::collection::vec(prop::collection::vec(p, 1..6), 1..=4),
        |users| {
            let c = Constellation::bpsk();
            let batch = users[0].len();
            let users: Vec<Vec<f64>> = users
                .into_iter()
                .map(|mut u| {
                    u.resize(batch, 0.5);
                    u
                })
                .collect();
            let tensors: Vec<Tensor> = users
                .iter()
                .map(|u| {
                    Tensor::matrix(batch, 2, u.iter().flat_map(|&p| [p, 1.0 - p]).collect())
                        .unwrap()
                })
                .collect();
            let decided = detect(&tensors, &c).unwrap();
            for row in 0..batch {
                let probs: Vec<Vec<f64>> =
                    users.iter().map(|u| vec![u[row], 1.0 - u[row]]).collect();
                let joint = brute_force_joint(&probs);
                let expected: Vec<f64> = joint.iter().map(|&i| c.point(i)).collect();
                prop_assert_eq!(
                    decided.row(row),
                    expected.as_slice(),
                    "probabilities {:?}",
                    probs
                );
            }
            Ok(())
        },
    )
}

pub fn embedding_length_is_invariant(cases: u32) -> Result<(), String> {
    run(
        cases,
        (embedding_sizes(), any::<u64>()),
        |((n, k_max, users, k), seed)| {
            let mut rng = stream(seed, Stream::Init, 0);
            let h_hat = normal(&mut rng, &[users, n]);
            let (e_self, e_pad) = (normal(&mut rng, &[n]), normal(&mut rng, &[n]));
            let u = build_user_embedding(&h_hat, k, users, k_max, &e_self, &e_pad).unwrap();
            prop_assert_eq!(u.len(), n * k_max);
            for l in 1..=k_max {
                let expected = if l == k {
                    e_self.data()
                } else if l <= users {
                    h_hat.row(l - 1)
                } else {
                    e_pad.data()
                };
                prop_assert_eq!(u.segment(l), expected);
            }
            Ok(())
        },
    )
}

pub fn embedding_permutation_is_consistent(cases: u32) -> Result<(), String> {
    let setup = (3..=6usize)
        .prop_flat_map(|n| (Just(n), 3..=n))
        .prop_flat_map(|(n, users)| {
            (
                Just(n),
                Just(users),
                users..=n,
                1..=users,
                1..=users,
                1..=users,
            )
        })
        .prop_filter("distinct users", |&(_, _, _, k, a, b)| {
            k != a && k != b && a != b
        });
    run(
        cases,
        (setup, any::<u64>()),
        |((n, users, k_max, k, a, b), seed)| {
            let mut rng = stream(seed, Stream::Init, 0);
            let h_hat = normal(&mut rng, &[users, n]);
            let (e_self, e_pad) = (normal(&mut rng, &[n]), normal(&mut rng, &[n]));
            let mut swapped_rows: Vec<Vec<f64>> =
                (0..users).map(|r| h_hat.row(r).to_vec()).collect();
            swapped_rows.swap(a - 1, b - 1);
            let swapped = Tensor::from_rows(&swapped_rows).unwrap();
            let build = |h: &Tensor| -> UserEmbedding {
                build_user_embedding(h, k, users, k_max, &e_self, &e_pad).unwrap()
            };
            let (u, v) = (build(&h_hat), build(&swapped));
            for l in 1..=k_max {
                let source = if l == a {
                    b
                } else if l == b {
                    a
                } else {
                    l
                };
                prop_assert_eq!(v.segment(l), u.segment(source), "segment {}", l);
            }
            Ok(())
        },
    )
}

fn small_link(n: usize, k_max: usize) -> LinkConfig {
    LinkConfig {
        n,
        k_max,
        pilot_len: 24,
        info_len: 8,
        ..LinkConfig::default()
    }
}

pub fn hypernet_adapt_is_pure(cases: u32) -> Result<(), String> {
    run(cases, (sizes(6), any::<u64>()), |((n, k_max), seed)| {
        let mut rng = stream(seed, Stream::Init, 0);
        let params = HypernetParams::init(n, k_max, &mut rng).unwrap();
        let before: Vec<u64> = params.flatten().iter().map(|v| v.to_bits()).collect();
        let gen = BlockGenerator::new(small_link(n, k_max)).unwrap();
        let k = rng.random_range(1..=k_max);
        let block = gen.make_block(1, k, &mut rng).unwrap();
        let mut ledger = ComplexityLedger::new(CostWeights::default());
        match hypernet_adapt(&params, &block, &mut ledger) {
            Ok(receiver) => prop_assert_eq!(receiver.modules.len(), k),
            Err(hypersic::Error::SingularPilots { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
        let after: Vec<u64> = params.flatten().iter().map(|v| v.to_bits()).collect();
        prop_assert_eq!(before, after);
        Ok(())
    })
}

/// Reference `s Hᵀ` by explicit summation.
fn reference_product(h: &Tensor, s: &Tensor) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.rows() * h.rows());
    for i in 0..s.rows() {
        for row in 0..h.rows() {
            out.push((0..h.cols()).map(|k| h.get(row, k) * s.get(i, k)).sum());
        }
    }
    out
}

pub fn noiseless_transmit_is_linear(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes(8), 1..=12usize, -3.0..3.0f64, any::<u64>()),
        |((n, k), b, scale, seed)| {
            let mut rng = stream(seed, Stream::Block, 0);
            let snr: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..50.0)).collect();
            let h = synthetic_channel(n, k, &snr).unwrap();
            let s1 = normal(&mut rng, &[b, k]);
            let s2 = generate_symbols(&mut rng, b, k, &Constellation::bpsk());
            let y1 = transmit(&h, &s1, 0.0, &mut rng).unwrap();
            let y2 = transmit(&h, &s2, 0.0, &mut rng).unwrap();
            for (got, want) in y1.data().iter().zip(reference_product(&h, &s1)) {
                prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
            let mut combo = s1.map(|v| scale * v);
            combo.add_assign(&s2);
            let y = transmit(&h, &combo, 0.0, &mut rng).unwrap();
            for ((&got, &a), &c) in y.data().iter().zip(y1.data()).zip(y2.data()) {
                let want = scale * a + c;
                prop_assert!(
                    (got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                    "{got} vs {want}"
                );
            }
            Ok(())
        },
    )
}

pub fn ls_recovers_noiseless_channel(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes(8), 4..=8usize, any::<u64>()),
        |((n, k), factor, seed)| {
            let mut rng = stream(seed, Stream::Block, 1);
            let snr: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..40.0)).collect();
            let h = synthetic_channel(n, k, &snr).unwrap();
            let s = generate_symbols(&mut rng, factor * k, k, &Constellation::bpsk());
            let y = transmit(&h, &s, 0.0, &mut rng).unwrap();
            match ls_estimate(&s, &y) {
                Ok(h_hat) => {
                    let err = h_hat.frobenius_distance(&h.transpose());
                    prop_assert!(err < 1e-8, "error {err:e}");
                }
                Err(hypersic::Error::SingularPilots { .. }) => {}
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            }
            Ok(())
        },
    )
}

pub fn hypernet_prefix_is_consistent(cases: u32) -> Result<(), String> {
    run(
        cases,
        (embedding_sizes(), any::<u64>()),
        |((n, k_max, users, k), seed)| {
            let mut rng = stream(seed, Stream::Init, 0);
            let params = HypernetParams::init(n, k_max, &mut rng).unwrap();
            let h_hat = normal(&mut rng, &[users, n]);
            let u = build_user_embedding(&h_hat, k, users, k_max, &params.e_self, &params.e_pad)
                .unwrap();
            let full = hypernet_output(&params, &u).unwrap();
            prop_assert_eq!(full.len(), params.output_dim());
            let module = hypernet_forward(&params, &u, n, users).unwrap();
            let prefix = ModuleParams::unflatten(n, users, &full[..module.scalar_count()]).unwrap();
            prop_assert_eq!(module, prefix);
            Ok(())
        },
    )
}

pub fn module_width_tracks_users(cases: u32) -> Result<(), String> {
    run(
        cases,
        (1..=10usize).prop_flat_map(|n| (Just(n), 1..n.max(2))),
        |(n, k)| {
            let (a, b) = (ModuleParams::zeros(n, k), ModuleParams::zeros(n, k + 1));
            prop_assert_eq!(a.input_width(), input_width(n, k));
            prop_assert_eq!(b.w1.rows(), a.w1.rows() + 1);
            prop_assert_eq!(b.scalar_count(), a.scalar_count() + 16);
            Ok(())
        },
    )
}

pub fn sic_forward_has_no_state(cases: u32) -> Result<(), String> {
    run(
        cases,
        (sizes(5), 2..=6usize, any::<u64>()),
        |((n, k), b, seed)| {
            let mut rng = stream(seed, Stream::Init, 0);
            let params = ReceiverParams::init(n, k, &mut rng).unwrap();
            let y = normal(&mut rng, &[b, n]);
            let batch = sic_forward(&params, &y, 3).unwrap();
            for row in (0..b).rev() {
                let single = sic_forward(&params, &y.row_range(row, row + 1), 3).unwrap();
                for (user, p) in single.final_probs().iter().enumerate() {
                    let expected = batch.final_probs()[user].row(row);
                    for (x, e) in p.data().iter().zip(expected) {
                        prop_assert!((x - e).abs() < 1e-12);
                    }
                }
            }
            Ok(())
        },
    )
}

pub fn block_shares_one_channel(cases: u32) -> Result<(), String> {
    run(cases, (sizes(6), any::<u64>()), |((n, k_max), seed)| {
        let link = LinkConfig {
            n,
            k_max,
            pilot_len: 8 * k_max,
            info_len: 8 * k_max,
            ..LinkConfig::default()
        };
        let gen = BlockGenerator::new(link).unwrap();
        let mut rng = stream(seed, Stream::Block, 2);
        let mut channel = gen.realization(1 + (seed % 50) as usize, k_max).unwrap();
        channel.noise_variance = 0.0;
        let block = gen.block_for(channel, &mut rng).unwrap();
        let (Ok(a), Ok(b)) = (
            ls_estimate(&block.pilot_s, &block.pilot_y),
            ls_estimate(&block.info_s, &block.info_y),
        ) else {
            return Ok(());
        };
        prop_assert!(a.frobenius_distance(&b) < 1e-8);
        prop_assert!(a.frobenius_distance(&block.channel.h.transpose()) < 1e-8);
        Ok(())
    })
}

pub fn column_norms_grow_with_snr(cases: u32) -> Result<(), String> {
    run(
        cases,
        (
            sizes(8),
            prop::collection::vec(0.01..100.0f64, 8),
            1.0..10.0f64,
        ),
        |((n, k), snr, factor)| {
            let snr = &snr[..k];
            let h = synthetic_channel(n, k, snr).unwrap();
            prop_assert_eq!(&h, &synthetic_channel(n, k, snr).unwrap());
            for user in 0..k {
                let mut louder = snr.to_vec();
                louder[user] *= factor;
                let g = synthetic_channel(n, k, &louder).unwrap();
                let norm = |m: &Tensor| m.column(user).iter().map(|v| v * v).sum::<f64>();
                prop_assert!(norm(&g) >= norm(&h));
            }
            Ok(())
        },
    )
}

pub fn adam_zero_gradient_is_fixed_point(cases: u32) -> Result<(), String> {
    run(
        cases,
        (
            prop::collection::vec(-10.0..10.0f64, 1..20),
            1..20usize,
            1e-5..1.0f64,
        ),
        |(w, steps, lr)| {
            let mut param = Tensor::vector(w.clone());
            let grad = Tensor::zeros(&[w.len()]);
            let mut state = AdamState::new(param.shape());
            for _ in 0..steps {
                adam_step(&mut param, &grad, &mut state, lr).unwrap();
            }
            prop_assert_eq!(param.data(), w.as_slice());
            Ok(())
        },
    )
}

/// Every invariant with the case count used by the property suite.
pub fn ser_ignores_detection_order(cases: u32) -> Result<(), String> {
    let case =
        (sizes(5), 1..=24usize, 1..=8usize, any::<u64>()).prop_flat_map(|(nk, b, chunk, seed)| {
            (
                Just(nk),
                Just(chunk),
                Just(seed),
                Just((0..b).collect::<Vec<_>>()).prop_shuffle(),
            )
        });
    run(cases, case, |((n, k), chunk, seed, order)| {
        let mut rng = stream(seed, Stream::Init, 0);
        let params = ReceiverParams::init(n, k, &mut rng).unwrap();
        let h = synthetic_channel(n, k, &vec![5.0; k]).unwrap();
        let s = generate_symbols(&mut rng, order.len(), k, &Constellation::bpsk());
        let y = transmit(&h, &s, 1.0, &mut rng).unwrap();
        let bpsk = Constellation::bpsk();
        let est = detect_batch(&params, &y, 3, &bpsk, Exec::Sequential, order.len()).unwrap();
        let shuffled = detect_batch(
            &params,
            &y.select_rows(&order),
            3,
            &bpsk,
            Exec::default(),
            chunk,
        )
        .unwrap();
        prop_assert_eq!(&shuffled, &est.select_rows(&order));
        prop_assert_eq!(
            ser(&shuffled, &s.select_rows(&order)).unwrap(),
            ser(&est, &s).unwrap()
        );
        Ok(())
    })
}

pub const ALL: &[(&str, Check)] = &[
    (
        "softmax rows are probability vectors",
        softmax_is_normalized,
    ),
    (
        "SIC outputs are probability vectors",
        sic_outputs_are_probabilities,
    ),
    (
        "factorized argmax equals brute force (K <= 4)",
        factorized_argmax_matches_brute_force,
    ),
    ("embedding length is N*K_max", embedding_length_is_invariant),
    (
        "swapping interferers swaps embedding segments",
        embedding_permutation_is_consistent,
    ),
    (
        "hypernet_adapt leaves weights bit-identical",
        hypernet_adapt_is_pure,
    ),
    ("noiseless transmit is linear", noiseless_transmit_is_linear),
    (
        "LS recovers a noiseless channel",
        ls_recovers_noiseless_channel,
    ),
    (
        "hypernetwork prefix matches generated module",
        hypernet_prefix_is_consistent,
    ),
    (
        "module width grows by one per user",
        module_width_tracks_users,
    ),
    (
        "sic_forward is stateless across symbols",
        sic_forward_has_no_state,
    ),
    (
        "pilots and information share one channel",
        block_shares_one_channel,
    ),
    (
        "channel column norms grow with SNR",
        column_norms_grow_with_snr,
    ),
    (
        "Adam with zero gradient is a fixed point",
        adam_zero_gradient_is_fixed_point,
    ),
    (
        "SER ignores detection order and chunking",
        ser_ignores_detection_order,
    ),
];
