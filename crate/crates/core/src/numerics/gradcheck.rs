//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub h: f64,
    pub tol: f64,
    /// Relative errors are computed as `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Check at most this many randomly chosen entries per parameter.
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            tol: 1e-4,
            floor: 1e-3,
            max_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    /// Entries where the loss is not differentiable within ±h (the one-sided
    /// slopes disagree); they are excluded from `max_rel_err`.
    pub kinks: usize,
    pub passed: bool,
}

/// Evaluates the loss built by `f` and returns its value with the analytic
/// gradient of every parameter in `store` (zeros for unused ones).
pub fn analytic_gradients<F>(store: &ParamStore, f: &mut F) -> Result<(f64, Vec<Vec<f64>>)>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(store, &mut g)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    g.backward(loss)?;
    let mut grads: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
    for (id, v) in g.bound_params() {
        if let Some(gr) = g.grad(v) {
            grads[id.index()].iter_mut().zip(gr).for_each(|(a, b)| *a += b);
        }
    }
    Ok((value, grads))
}

fn eval<F>(store: &ParamStore, f: &mut F) -> Result<f64>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(store, &mut g)?;
    let value = g.value(loss).item();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss evaluated to {value}")));
    }
    Ok(value)
}

/// Compares `analytic` against central differences `(f(θ+h) - f(θ-h)) / 2h`.
/// `store` is restored exactly before returning.
pub fn compare_with_finite_differences<F>(
    store: &mut ParamStore,
    f: &mut F,
    analytic: &[Vec<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    if !(opts.h > 0.0) {
        return Err(Error::usage("finite_diff_check: h must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = eval(store, f)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        kinks: 0,
        passed: true,
    };
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let n = store.get(id).tensor.len();
        let entries: Vec<usize> = match opts.max_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for k in entries {
            let orig = store.get(id).tensor.data()[k];
            store.get_mut(id).tensor.data_mut()[k] = orig + opts.h;
            let plus = eval(store, f);
            store.get_mut(id).tensor.data_mut()[k] = orig - opts.h;
            let minus = eval(store, f);
            store.get_mut(id).tensor.data_mut()[k] = orig;
            let (plus, minus) = (plus?, minus?);

            let numeric = (plus - minus) / (2.0 * opts.h);
            let a = analytic[id.index()][k];
            let denom = a.abs().max(numeric.abs()).max(opts.floor);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > opts.tol {
                let fwd = (plus - base) / opts.h;
                let bwd = (base - minus) / opts.h;
                // Crossing a kink at distance d < h pulls the central
                // difference off the analytic slope by half the one-sided
                // gap times (1 - d/h); a wrong gradient leaves the two
                // one-sided slopes in agreement.
                if (fwd - bwd).abs() >= (a - numeric).abs() {
                    report.kinks += 1;
                    continue;
                }
            }
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = Some((store.get(id).name().to_string(), k));
            }
        }
    }
    report.passed = report.max_rel_err < opts.tol;
    Ok(report)
}

/// Full check: analytic gradients from one backward pass, compared against
/// central differences for every (or a sample of every) parameter entry.
pub fn finite_diff_check<F>(
    store: &mut ParamStore,
    opts: &GradCheckOptions,
    mut f: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Graph) -> Result<Var>,
{
    let (_, analytic) = analytic_gradients(store, &mut f)?;
    compare_with_finite_differences(store, &mut f, &analytic, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn square_at_three() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let mut f = |s: &ParamStore, g: &mut Graph| {
            let v = g.param(s, x);
            let sq = g.square(v);
            Ok(g.sum(sq))
        };
        let (value, grads) = analytic_gradients(&store, &mut f).unwrap();
        assert_eq!(value, 9.0);
        assert_eq!(grads[0][0], 6.0);
        let report = finite_diff_check(&mut store, &GradCheckOptions::default(), f).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(store.get(x).tensor.data()[0], 3.0);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::from_rows(&[[0.3, -1.2, 2.0]]).unwrap());
        let mut f = |s: &ParamStore, g: &mut Graph| {
            let v = g.param(s, x);
            let sq = g.square(v);
            Ok(g.sum(sq))
        };
        let (_, mut grads) = analytic_gradients(&store, &mut f).unwrap();
        grads[0][1] *= 1.01;
        let report =
            compare_with_finite_differences(&mut store, &mut f, &grads, &GradCheckOptions::default())
                .unwrap();
        assert!(!report.passed);
        assert_eq!(report.worst, Some(("x".to_string(), 1)));
    }

    #[test]
    fn non_finite_loss_is_diagnosed() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(f64::NAN));
        let res = finite_diff_check(&mut store, &GradCheckOptions::default(), |s, g| {
            let v = g.param(s, x);
            Ok(g.sum(v))
        });
        assert!(matches!(res, Err(Error::NonFinite(_))));
    }
}
