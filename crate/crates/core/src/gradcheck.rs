//! Central finite-difference verification of the backward rules.
//!
//! All checks run in 64-bit mode. A coordinate passes when
//! `|analytic - fd| / max(|analytic|, |fd|, scale_floor) < tolerance`;
//! the scale floor turns the comparison absolute for near-zero
//! gradients, where the quotient would otherwise amplify quadrature
//! noise into false failures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Result;
use crate::model::{forward, init_params, NetworkSpec};
use crate::ops::conv::ConvDesc;
use crate::scheme::canonical_scheme_table;
use crate::tape::{forward_backward, Graph, NodeId, ParamStore};
use crate::tensor::{Shape, Tensor};

#[derive(Debug, Clone)]
pub struct CheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Scale below which the comparison becomes absolute.
    pub scale_floor: f64,
    /// Coordinates sampled per parameter; 0 checks every coordinate.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            scale_floor: 1e-3,
            max_coords_per_param: 0,
            seed: 0,
        }
    }
}

/// One checked coordinate.
#[derive(Debug, Clone)]
pub struct CoordReport {
    pub param: String,
    pub coord: usize,
    pub analytic: f64,
    pub fd: f64,
    pub rel_err: f64,
}

/// Outcome of checking one loss function's gradients.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordReport>,
    pub failures: Vec<CoordReport>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares the analytic gradients stored in `params` (in each entry's
/// `grad` field) against central finite differences of `eval` at the
/// stored values. Values are perturbed in place and restored.
pub fn check_gradients<F>(
    mut eval: F,
    params: &mut ParamStore<f64>,
    opts: &CheckOptions,
) -> Result<CheckReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<f64>,
{
    let names: Vec<String> = params.names().map(String::from).collect();
    let mut report = CheckReport {
        coords_checked: 0,
        max_rel_err: 0.0,
        worst: None,
        failures: Vec::new(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    for name in names {
        let len = params.get(&name).expect("listed name").value.len();
        let coords: Vec<usize> =
            if opts.max_coords_per_param == 0 || opts.max_coords_per_param >= len {
                (0..len).collect()
            } else {
                // distinct sample, order-stable for a given seed
                let mut picked: Vec<usize> = Vec::with_capacity(opts.max_coords_per_param);
                while picked.len() < opts.max_coords_per_param {
                    let c = rng.random_range(0..len);
                    if !picked.contains(&c) {
                        picked.push(c);
                    }
                }
                picked
            };
        for coord in coords {
            let original = params.get(&name).unwrap().value.as_slice()[coord];
            params.get_mut(&name).unwrap().value.as_mut_slice()[coord] = original + opts.step;
            let f_plus = eval(params)?;
            params.get_mut(&name).unwrap().value.as_mut_slice()[coord] = original - opts.step;
            let f_minus = eval(params)?;
            params.get_mut(&name).unwrap().value.as_mut_slice()[coord] = original;

            let fd = (f_plus - f_minus) / (2.0 * opts.step);
            let analytic = params.get(&name).unwrap().grad.as_slice()[coord];
            let denom = analytic.abs().max(fd.abs()).max(opts.scale_floor);
            let rel_err = (analytic - fd).abs() / denom;
            report.coords_checked += 1;
            let entry = CoordReport {
                param: name.clone(),
                coord,
                analytic,
                fd,
                rel_err,
            };
            if rel_err > report.max_rel_err {
                report.max_rel_err = rel_err;
                report.worst = Some(entry.clone());
            }
            if rel_err >= opts.tolerance {
                report.failures.push(entry);
            }
        }
    }
    Ok(report)
}

/// A named gradient check over one op or network.
pub struct OpCheck {
    pub op: String,
    pub report: CheckReport,
}

/// Builds a recorded loss for the current parameter values: returns
/// the graph, the scalar loss node, and the param-name bindings.
type Built = (Graph<f64>, NodeId, Vec<(String, NodeId)>);

fn run_case(
    name: &str,
    mut params: ParamStore<f64>,
    build: &dyn Fn(&ParamStore<f64>) -> Result<Built>,
    opts: &CheckOptions,
) -> Result<OpCheck> {
    {
        let (graph, loss, bindings) = build(&params)?;
        forward_backward(&graph, loss, &bindings, &mut params)?;
    }
    let eval = |p: &ParamStore<f64>| -> Result<f64> {
        let (graph, loss, _) = build(p)?;
        Ok(graph.value(loss).item())
    };
    let report = check_gradients(eval, &mut params, opts)?;
    Ok(OpCheck {
        op: name.to_string(),
        report,
    })
}

fn rand_tensor(rng: &mut ChaCha12Rng, shape: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
}

/// Random values bounded away from zero (ReLU kinks): magnitude in
/// [0.1, 1.0), random sign.
fn rand_away_from_kink(rng: &mut ChaCha12Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| {
        let mag = rng.random_range(0.1..1.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// Pushes every stored parameter as a graph leaf, in store order.
fn param_graph(params: &ParamStore<f64>) -> Result<(Graph<f64>, Vec<NodeId>, Vec<(String, NodeId)>)> {
    let mut g = Graph::new();
    let mut ids = Vec::new();
    let mut bindings = Vec::new();
    for (name, entry) in params.iter() {
        let id = g.param(name, entry.value.clone())?;
        ids.push(id);
        bindings.push((name.to_string(), id));
    }
    Ok((g, ids, bindings))
}

/// The standard verification suite: every differentiable op, the
/// factorized composition, and one full Logarithmic-8 network on a
/// 2-sample 16x16 input. Deterministic for a given seed.
pub fn standard_suite(seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng =
        ChaCha12Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1));
    let full = CheckOptions {
        seed,
        ..CheckOptions::default()
    };
    let mut checks = Vec::new();

    // add: loss = sum((a + b) * cot)
    {
        let shape = Shape::new(2, 3, 4, 4);
        let mut params = ParamStore::new();
        params.insert("a", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        params.insert("b", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        let cot = rand_tensor(&mut rng, shape, -1.0, 1.0);
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let s = g.add(ids[0], ids[1])?;
            let prod = g.mul(s, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("add", params, &build, &full)?);
    }

    // mul: loss = sum(a * b)
    {
        let shape = Shape::new(2, 2, 3, 3);
        let mut params = ParamStore::new();
        params.insert("a", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        params.insert("b", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let prod = g.mul(ids[0], ids[1])?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("mul", params, &build, &full)?);
    }

    // relu at points bounded away from the kink
    {
        let shape = Shape::new(2, 4, 6, 6);
        let mut params = ParamStore::new();
        params.insert("x", rand_away_from_kink(&mut rng, shape))?;
        let cot = rand_tensor(&mut rng, shape, -1.0, 1.0);
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let r = g.relu(ids[0])?;
            let prod = g.mul(r, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("relu", params, &build, &full)?);
    }

    // grouped convolutions across the kernel set, size-1 groups included
    for (label, desc, shape) in [
        (
            "grouped_conv_1x1",
            ConvDesc::new(1, 1, vec![2, 2], vec![1, 3])?,
            Shape::new(2, 4, 4, 4),
        ),
        (
            "grouped_conv_1x3",
            ConvDesc::square(1, 3, &[2, 1, 1])?,
            Shape::new(2, 4, 4, 5),
        ),
        (
            "grouped_conv_3x1",
            ConvDesc::square(3, 1, &[2, 2])?,
            Shape::new(2, 4, 5, 4),
        ),
        (
            "grouped_conv_5x5",
            ConvDesc::full(5, 5, 3, 2)?,
            Shape::new(1, 3, 6, 6),
        ),
    ] {
        let mut params = ParamStore::new();
        params.insert("x", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        for g in 0..desc.group_count() {
            params.insert(
                format!("w{g}"),
                rand_tensor(&mut rng, desc.weight_shape(g), -1.0, 1.0),
            )?;
        }
        let out_shape = Shape::new(shape.n, desc.out_channels(), shape.h, shape.w);
        let cot = rand_tensor(&mut rng, out_shape, -1.0, 1.0);
        let desc_c = desc.clone();
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let y = g.grouped_conv(desc_c.clone(), ids[0], &ids[1..])?;
            let prod = g.mul(y, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case(label, params, &build, &full)?);
    }

    // factorized pair with its interior ReLUs
    {
        let sizes = [2usize, 2];
        let first = ConvDesc::square(1, 3, &sizes)?;
        let second = ConvDesc::square(3, 1, &sizes)?;
        let shape = Shape::new(2, 4, 4, 4);
        let mut params = ParamStore::new();
        params.insert("x", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        for (tag, d) in [("w1", &first), ("w2", &second)] {
            for g in 0..d.group_count() {
                params.insert(
                    format!("{tag}_{g}"),
                    rand_tensor(&mut rng, d.weight_shape(g), -1.0, 1.0),
                )?;
            }
        }
        let cot = rand_tensor(&mut rng, shape, -1.0, 1.0);
        let (f1, f2) = (first.clone(), second.clone());
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let a = g.grouped_conv(f1.clone(), ids[0], &ids[1..3])?;
            let a = g.relu(a)?;
            let b = g.grouped_conv(f2.clone(), a, &ids[3..5])?;
            let b = g.relu(b)?;
            let prod = g.mul(b, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("factorized_1x3_3x1", params, &build, &full)?);
    }

    // max pooling (continuous random input: ties have measure zero)
    {
        let shape = Shape::new(1, 2, 6, 6);
        let mut params = ParamStore::new();
        params.insert("x", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        let cot = rand_tensor(&mut rng, Shape::new(1, 2, 3, 3), -1.0, 1.0);
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let y = g.max_pool2(ids[0])?;
            let prod = g.mul(y, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("max_pool2", params, &build, &full)?);
    }

    // global average pooling
    {
        let shape = Shape::new(2, 3, 4, 4);
        let mut params = ParamStore::new();
        params.insert("x", rand_tensor(&mut rng, shape, -1.0, 1.0))?;
        let cot = rand_tensor(&mut rng, Shape::new(2, 3, 1, 1), -1.0, 1.0);
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let c = g.input("cot", cot.clone())?;
            let y = g.global_avg_pool(ids[0])?;
            let prod = g.mul(y, c)?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("global_avg_pool", params, &build, &full)?);
    }

    // softmax cross-entropy
    {
        let shape = Shape::new(3, 5, 1, 1);
        let mut params = ParamStore::new();
        params.insert("logits", rand_tensor(&mut rng, shape, -2.0, 2.0))?;
        let labels = vec![4usize, 0, 2];
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let loss = g.softmax_cross_entropy(ids[0], labels.clone())?;
            Ok((g, loss, bindings))
        };
        checks.push(run_case("softmax_cross_entropy", params, &build, &full)?);
    }

    // one full network: Logarithmic-8, shortcut on, 2 samples of 3x16x16
    {
        let spec = NetworkSpec::new(canonical_scheme_table("Logarithmic-8")?, 10, (16, 16), true)?;
        let params: ParamStore<f64> = init_params(&spec, seed)?.cast();
        let x = rand_tensor(&mut rng, Shape::new(2, 3, 16, 16), -1.0, 1.0);
        let labels = vec![3usize, 7];
        let spec_c = spec.clone();
        let build = move |p: &ParamStore<f64>| -> Result<Built> {
            let mut g = Graph::new();
            let xid = g.input("x", x.clone())?;
            let pass = forward(&spec_c, p, &mut g, xid)?;
            let loss = g.softmax_cross_entropy(pass.logits, labels.clone())?;
            Ok((g, loss, pass.bindings))
        };
        let sampled = CheckOptions {
            max_coords_per_param: 3,
            seed,
            ..CheckOptions::default()
        };
        checks.push(run_case("full_network_log8", params, &build, &sampled)?);
    }

    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_passes() {
        let checks = standard_suite(0).unwrap();
        assert!(checks.len() >= 10);
        for c in &checks {
            assert!(
                c.report.passed(),
                "{} failed: worst {:?}",
                c.op,
                c.report.worst
            );
        }
        let net = checks.iter().find(|c| c.op == "full_network_log8").unwrap();
        assert!(net.report.coords_checked >= 50);
    }

    #[test]
    fn suite_is_deterministic() {
        let a = standard_suite(7).unwrap();
        let b = standard_suite(7).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.op, cb.op);
            assert_eq!(ca.report.max_rel_err, cb.report.max_rel_err);
            assert_eq!(ca.report.coords_checked, cb.report.coords_checked);
        }
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        // negative control: scale the analytic gradient of a*b by 1.01
        let shape = Shape::new(1, 1, 2, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut params = ParamStore::new();
        params.insert("a", rand_tensor(&mut rng, shape, 0.5, 1.5)).unwrap();
        params.insert("b", rand_tensor(&mut rng, shape, 0.5, 1.5)).unwrap();
        let build = |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let prod = g.mul(ids[0], ids[1])?;
            let loss = g.sum_all(prod)?;
            Ok((g, loss, bindings))
        };
        {
            let (graph, loss, bindings) = build(&params).unwrap();
            forward_backward(&graph, loss, &bindings, &mut params).unwrap();
            let corrupted = params.get("a").unwrap().grad.map(|v| v * 1.01);
            params.get_mut("a").unwrap().grad = corrupted;
        }
        let eval = |p: &ParamStore<f64>| -> Result<f64> {
            let (graph, loss, _) = build(p)?;
            Ok(graph.value(loss).item())
        };
        let report = check_gradients(eval, &mut params, &CheckOptions::default()).unwrap();
        assert!(!report.passed());
        assert!(report.failures.iter().all(|f| f.param == "a"));
        assert_eq!(report.failures.len(), 4);
    }

    #[test]
    fn sampled_coordinates_respect_budget() {
        let shape = Shape::new(1, 1, 10, 10);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let mut params = ParamStore::new();
        params.insert("a", rand_tensor(&mut rng, shape, -1.0, 1.0)).unwrap();
        let build = |p: &ParamStore<f64>| -> Result<Built> {
            let (mut g, ids, bindings) = param_graph(p)?;
            let sq = g.mul(ids[0], ids[0])?;
            let loss = g.sum_all(sq)?;
            Ok((g, loss, bindings))
        };
        {
            let (graph, loss, bindings) = build(&params).unwrap();
            forward_backward(&graph, loss, &bindings, &mut params).unwrap();
        }
        let eval = |p: &ParamStore<f64>| -> Result<f64> {
            let (graph, loss, _) = build(p)?;
            Ok(graph.value(loss).item())
        };
        let opts = CheckOptions {
            max_coords_per_param: 7,
            ..CheckOptions::default()
        };
        let report = check_gradients(eval, &mut params, &opts).unwrap();
        assert_eq!(report.coords_checked, 7);
        assert!(report.passed());
    }
}
