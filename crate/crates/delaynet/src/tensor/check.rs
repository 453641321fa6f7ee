//! Central finite-difference gradient verification.

use super::{Graph, ParamStore, TensorError, TensorId};

/// Compares the reverse-mode gradient of `build`'s scalar output against
/// central finite differences for every parameter coordinate, returning
/// the maximum relative error.
///
/// `build` must be a pure function of the store: it is re-evaluated with
/// perturbed parameters, so any internal randomness must be fixed.
pub fn grad_check<F>(
    store: &mut ParamStore,
    epsilon: f64,
    build: F,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph) -> Result<TensorId, TensorError>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };
    let eval = |store: &ParamStore| -> Result<f64, TensorError> {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        g.scalar_value(loss)
    };

    // Relative-error floor scaled to the largest gradient coordinate:
    // without it, coordinates whose true gradient is orders of magnitude
    // below the rest report pure finite-difference roundoff as error.
    let gmax = (0..store.len())
        .filter_map(|i| {
            let id = store.iter().nth(i).map(|(id, _)| id)?;
            analytic
                .get(id)
                .map(|g| g.iter().fold(0.0f64, |m, v| m.max(v.abs())))
        })
        .fold(0.0f64, f64::max);
    let floor = (gmax * 1e-4).max(1e-9);

    let mut max_rel = 0.0f64;
    for idx in 0..store.len() {
        let id = store
            .iter()
            .nth(idx)
            .map(|(id, _)| id)
            .expect("index in range");
        let coords = store.get(id).values.len();
        for j in 0..coords {
            let original = store.get(id).values[j];
            store.get_mut(id).values[j] = original + epsilon;
            let plus = eval(store)?;
            store.get_mut(id).values[j] = original - epsilon;
            let minus = eval(store)?;
            store.get_mut(id).values[j] = original;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let exact = analytic.get(id).map_or(0.0, |g| g[j]);
            let denom = numeric.abs().max(exact.abs()).max(floor);
            max_rel = max_rel.max((numeric - exact).abs() / denom);
        }
    }
    Ok(max_rel)
}
