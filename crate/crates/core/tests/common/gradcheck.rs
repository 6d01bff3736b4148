//! Central finite-difference checks of the reverse-mode gradients.

use hypersic::adaptation::{hypernet_loss_and_grads, HypernetNodes, HypernetParams};
use hypersic::autodiff::{Graph, NodeId, Tensor};
use hypersic::channel::Constellation;
use hypersic::deepsic::{module_forward_graph, sic_graph, ModuleNodes, ModuleParams};
use hypersic::rng::{stream, Stream};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Instances with a ReLU input closer than this to zero are redrawn.
const KINK_MARGIN: f64 = 1e-3;
/// Gradients below this magnitude are compared absolutely.
const GRAD_FLOOR: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

pub fn normal_tensor(rng: &mut impl Rng, shape: &[usize], scale: f64) -> Tensor {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * scale
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Max relative error over every scalar of `tensors`, perturbing in place.
fn check_all<P>(
    params: &mut P,
    analytic: &[Tensor],
    tensors_mut: impl Fn(&mut P) -> Vec<&mut Tensor>,
    loss: impl Fn(&P) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let count = tensors_mut(params).len();
    for (t, grad) in analytic.iter().enumerate().take(count) {
        let len = tensors_mut(params)[t].len();
        for i in 0..len {
            let orig = tensors_mut(params)[t].data()[i];
            tensors_mut(params)[t].data_mut()[i] = orig + H;
            let up = loss(params);
            tensors_mut(params)[t].data_mut()[i] = orig - H;
            let down = loss(params);
            tensors_mut(params)[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * H);
            worst = worst.max(rel_err(grad.data()[i], numeric));
        }
    }
    worst
}

struct ModuleCase {
    module: ModuleParams,
    y: Tensor,
    interference: Tensor,
    labels: Vec<usize>,
}

fn module_graph(case: &ModuleCase, module: &ModuleParams) -> (Graph, ModuleNodes, NodeId) {
    let mut g = Graph::new();
    let nodes = module.to_graph(&mut g, true);
    let y = g.constant(case.y.clone());
    let i = g.constant(case.interference.clone());
    let probs = module_forward_graph(&mut g, &nodes, y, Some(i)).unwrap();
    let loss = g.cross_entropy(probs, &case.labels).unwrap();
    (g, nodes, loss)
}

/// Worst relative error over `instances` standalone DeepSIC modules.
pub fn module_max_error(instances: usize) -> f64 {
    let (n, k, batch) = (4, 3, 6);
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    for draw in 0u64.. {
        if accepted == instances {
            break;
        }
        assert!(draw < 200, "too many instances rejected near ReLU kinks");
        let mut rng = stream(100, Stream::Init, draw);
        let mut module = ModuleParams::init(n, k, &mut rng);
        for b in [&mut module.b1, &mut module.b2] {
            *b = normal_tensor(&mut rng, b.shape(), 0.1);
        }
        let case = ModuleCase {
            module: module.clone(),
            y: normal_tensor(&mut rng, &[batch, n], 1.0),
            interference: Tensor::matrix(
                batch,
                k - 1,
                (0..batch * (k - 1)).map(|_| rng.random()).collect(),
            )
            .unwrap(),
            labels: (0..batch).map(|_| rng.random_range(0..2)).collect(),
        };
        let (g, nodes, loss) = module_graph(&case, &case.module);
        if g.min_relu_margin().unwrap() < KINK_MARGIN {
            continue;
        }
        accepted += 1;
        let mut grads = g.backward(loss).unwrap();
        let analytic: Vec<Tensor> = nodes
            .ids()
            .iter()
            .map(|&id| grads.take(id).unwrap())
            .collect();
        let mut params = case.module.clone();
        let err = check_all(
            &mut params,
            &analytic,
            |m| m.tensors_mut().into_iter().collect(),
            |m| {
                let (g, _, loss) = module_graph(&case, m);
                g.value(loss).item()
            },
        );
        worst = worst.max(err);
    }
    worst
}

struct HyperCase {
    h_hat: Tensor,
    y: Tensor,
    s: Tensor,
}

fn hyper_loss_graph(case: &HyperCase, params: &HypernetParams) -> (Graph, HypernetNodes, NodeId) {
    let c = Constellation::bpsk();
    let mut g = Graph::new();
    let nodes = params.to_graph(&mut g, true);
    let modules = nodes.generate(&mut g, &case.h_hat).unwrap();
    let y = g.constant(case.y.clone());
    let rounds = sic_graph(&mut g, &modules, y, 3).unwrap();
    let terms: Vec<NodeId> = rounds
        .last()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            g.cross_entropy(p, &c.indices(&case.s.column(k)).unwrap())
                .unwrap()
        })
        .collect();
    let loss = g.add_all(&terms).unwrap();
    (g, nodes, loss)
}

/// Worst relative error over `instances` hypernetwork-to-loss compositions,
/// every hypernetwork scalar and both embeddings included.
pub fn hypernet_max_error(instances: usize) -> f64 {
    let (n, k_max, batch) = (4, 3, 3);
    let c = Constellation::bpsk();
    let mut accepted = 0;
    let mut worst: f64 = 0.0;
    for draw in 0u64.. {
        if accepted == instances {
            break;
        }
        assert!(draw < 400, "too many instances rejected near ReLU kinks");
        let mut rng = stream(200, Stream::Init, draw);
        let k = rng.random_range(2..=k_max);
        let mut params = HypernetParams::init(n, k_max, &mut rng).unwrap();
        // Generated modules need weights of order one, or every ReLU input sits near zero.
        params.w3 = normal_tensor(&mut rng, params.w3.shape(), 0.3);
        params.b1 = normal_tensor(&mut rng, params.b1.shape(), 0.1);
        params.b2 = normal_tensor(&mut rng, params.b2.shape(), 0.1);
        params.b3 = normal_tensor(&mut rng, params.b3.shape(), 0.1);
        let s = Tensor::matrix(
            batch,
            k,
            (0..batch * k)
                .map(|_| if rng.random() { 1.0 } else { -1.0 })
                .collect(),
        )
        .unwrap();
        let case = HyperCase {
            h_hat: normal_tensor(&mut rng, &[k, n], 1.0),
            y: normal_tensor(&mut rng, &[batch, n], 1.0),
            s,
        };
        let (g, _, loss) = hyper_loss_graph(&case, &params);
        if g.min_relu_margin().unwrap() < KINK_MARGIN {
            continue;
        }
        accepted += 1;
        let (value, analytic) =
            hypernet_loss_and_grads(&params, &case.h_hat, &case.y, &case.s, &c, 3).unwrap();
        assert_eq!(value, g.value(loss).item());
        assert!(
            analytic[7].data().iter().any(|&v| v != 0.0) == (k < k_max),
            "padding gradient only when K < K_max"
        );
        let err = check_all(
            &mut params,
            &analytic,
            |p| p.tensors_mut().into_iter().collect(),
            |p| {
                let (g, _, loss) = hyper_loss_graph(&case, p);
                g.value(loss).item()
            },
        );
        worst = worst.max(err);
    }
    worst
}
