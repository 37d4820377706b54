//! Central finite-difference verification of reverse-mode gradients.

use crate::nn::graph::Arr;
use crate::nn::params::ParamStore;

/// Largest relative error between the analytic gradient of a scalar function
/// and central finite differences, over every entry of parameter `name`.
///
/// `f` must return (value, gradient array for `name`) when called on the
/// store. The relative error uses a floor so near-zero gradients are judged
/// on absolute terms.
pub fn max_rel_error(
    store: &mut ParamStore,
    name: &str,
    eps: f64,
    f: &dyn Fn(&ParamStore) -> (f64, Arr),
) -> f64 {
    let (_, analytic) = f(store);
    let idx = store.index_of(name).expect("unknown parameter");
    let n = store.value_at(idx).len();
    assert_eq!(analytic.len(), n, "gradient shape mismatch");
    let mut worst = 0.0f64;
    for i in 0..n {
        let orig = store.value_at(idx).as_slice().unwrap()[i];
        store.value_at_mut(idx).as_slice_mut().unwrap()[i] = orig + eps;
        let (fp, _) = f(store);
        store.value_at_mut(idx).as_slice_mut().unwrap()[i] = orig - eps;
        let (fm, _) = f(store);
        store.value_at_mut(idx).as_slice_mut().unwrap()[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic.as_slice().unwrap()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max((a - numeric).abs() / denom);
    }
    worst
}
