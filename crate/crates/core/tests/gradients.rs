mod common;

use common::relative_error;
use drnet::data::{OutcomeScale, Standardizer};
use drnet::model::{Batch, DosageRange, DrNet, DrNetConfig, StepHooks};
use drnet::nn::{mse_loss, Activation, Matrix, SideInput, Stack};
use drnet::regularizers::WassersteinPenalty;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOLERANCE: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn random_stack(rng: &mut ChaCha8Rng) -> (Stack, Matrix, Option<Matrix>, Vec<f64>) {
    let depth = rng.random_range(1..=3);
    let input = rng.random_range(1..=16);
    let mut layers: Vec<(usize, Activation)> = (0..depth - 1)
        .map(|_| (rng.random_range(1..=16), Activation::Relu))
        .collect();
    layers.push((1, Activation::Linear));
    let side = match rng.random_range(0..3) {
        0 => SideInput::None,
        1 => SideInput::First(1),
        _ => SideInput::Every(2),
    };
    let mut stack = Stack::new(input, &layers, side, rng).unwrap();
    // Zero biases put dead rows exactly on the ReLU kink.
    for (i, tensor) in stack.tensors_mut().into_iter().enumerate() {
        if i % 2 == 1 {
            tensor.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
    }
    let rows = rng.random_range(1..=8);
    let x = random_matrix(rows, input, rng);
    let side_m = match side {
        SideInput::None => None,
        SideInput::First(w) | SideInput::Every(w) => Some(random_matrix(rows, w, rng)),
    };
    let target = (0..rows).map(|_| rng.random_range(-2.0..2.0)).collect();
    (stack, x, side_m, target)
}

fn loss(stack: &Stack, x: &Matrix, side: Option<&Matrix>, target: &[f64]) -> f64 {
    mse_loss(&stack.predict(x, side).unwrap(), target).unwrap().0
}

/// Largest relative error between backward gradients and central finite
/// differences over every parameter of 25 random stacks.
#[test]
fn stack_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for _ in 0..25 {
        let (mut stack, x, side, target) = random_stack(&mut rng);
        let out = stack.forward(&x, side.as_ref()).unwrap();
        let (_, grad_out) = mse_loss(&out, &target).unwrap();
        let grads: Vec<Vec<f64>> = stack
            .backward(&grad_out)
            .unwrap()
            .tensors()
            .into_iter()
            .map(<[f64]>::to_vec)
            .collect();
        for (ti, analytic) in grads.iter().enumerate() {
            for j in 0..analytic.len() {
                let mut plus = stack.clone();
                plus.tensors_mut()[ti][j] += H;
                let mut minus = stack.clone();
                minus.tensors_mut()[ti][j] -= H;
                let fd = (loss(&plus, &x, side.as_ref(), &target) - loss(&minus, &x, side.as_ref(), &target)) / (2.0 * H);
                let e = relative_error(analytic[j], fd, 1e-6);
                worst = worst.max(e);
                checked += 1;
            }
        }
    }
    assert!(checked > 500);
    assert!(worst < TOLERANCE, "max relative error {worst:e}");
}

#[test]
fn doubling_the_loss_doubles_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut stack, x, side, target) = random_stack(&mut rng);
    let out = stack.forward(&x, side.as_ref()).unwrap();
    let (_, g) = mse_loss(&out, &target).unwrap();
    let single = stack.backward(&g).unwrap();
    let mut doubled = g.clone();
    doubled.scale(2.0);
    stack.forward(&x, side.as_ref()).unwrap();
    let twice = stack.backward(&doubled).unwrap();
    for (a, b) in single.tensors().iter().zip(twice.tensors()) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(2.0 * x, *y);
        }
    }
}

fn hierarchical(strata: usize, repeat: bool, rng: &mut ChaCha8Rng) -> DrNet {
    let config = DrNetConfig {
        num_features: 4,
        num_treatments: 3,
        num_strata: strata,
        base_depth: 2,
        base_width: 6,
        treatment_depth: 1,
        treatment_width: 5,
        head_depth: 2,
        head_width: 4,
        repeat_dosage: repeat,
        dosage_ranges: vec![DosageRange::UNIT; 3],
    };
    let mut net = DrNet::new(config, Standardizer::identity(4), OutcomeScale::IDENTITY, rng).unwrap();
    // Output layers start at zero; randomise them so every path carries gradient.
    for tensor in net.tensors_mut() {
        for v in tensor.iter_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    net
}

fn random_batch(n: usize, rng: &mut ChaCha8Rng) -> Batch {
    Batch {
        x: random_matrix(n, 4, rng),
        treatment: (0..n).map(|i| i % 3).collect(),
        dosage: (0..n).map(|_| rng.random_range(0.01..1.0)).collect(),
        outcome: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

fn check_full_model(hooks_penalty: Option<&WassersteinPenalty>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = hierarchical(3, true, &mut rng);
    let batch = random_batch(12, &mut rng);
    let hooks = StepHooks {
        dropout_rates: None,
        penalty: hooks_penalty.map(|p| p as _),
    };
    let objective = |n: &mut DrNet| {
        let (o, _) = n.gradients(&batch, &hooks, &mut rng.clone()).unwrap();
        o.loss + o.penalty
    };
    let (_, grads) = net.clone().gradients(&batch, &hooks, &mut rng.clone()).unwrap();
    let mut worst = 0.0_f64;
    for (ti, g) in grads.iter().enumerate() {
        let Some(g) = g else {
            let mut probe = net.clone();
            probe.tensors_mut()[ti][0] += 1e-3;
            assert_eq!(objective(&mut probe), objective(&mut net), "unreached tensor {ti} affects loss");
            continue;
        };
        for j in 0..g.len() {
            let mut plus = net.clone();
            plus.tensors_mut()[ti][j] += H;
            let mut minus = net.clone();
            minus.tensors_mut()[ti][j] -= H;
            let fd = (objective(&mut plus) - objective(&mut minus)) / (2.0 * H);
            worst = worst.max(relative_error(g[j], fd, 1e-6));
        }
    }
    assert!(worst < TOLERANCE, "max relative error {worst:e}");
}

#[test]
fn hierarchical_gradients_match_finite_differences() {
    check_full_model(None, 11);
}

#[test]
fn penalised_gradients_match_finite_differences() {
    // A large blur makes the transport plan converge to machine precision,
    // where the fixed-plan gradient is exact.
    let penalty = WassersteinPenalty {
        weight: 0.5,
        epsilon: 2.0,
        iters: 3000,
    };
    check_full_model(Some(&penalty), 12);
}
