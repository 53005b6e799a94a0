use crate::numeric::{Gradients, ParamId, ParamStore};

/// Gradients below this magnitude are compared on an absolute scale.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_block: Option<String>,
    pub worst_index: usize,
    pub checked: usize,
}

/// Compares analytic gradients against central differences of `loss` for
/// every entry of every block in `store`. Blocks absent from `grads` are
/// expected to have zero gradient.
pub fn check_gradients(
    store: &ParamStore,
    grads: &Gradients,
    h: f64,
    loss: impl Fn(&ParamStore) -> f64,
) -> GradCheckReport {
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_block: None,
        worst_index: 0,
        checked: 0,
    };
    for id in store.ids() {
        check_block(&mut probe, grads, id, h, &loss, &mut report);
    }
    report
}

/// Same as [`check_gradients`] restricted to the listed blocks.
pub fn check_blocks(
    store: &ParamStore,
    grads: &Gradients,
    ids: &[ParamId],
    h: f64,
    loss: impl Fn(&ParamStore) -> f64,
) -> GradCheckReport {
    let mut probe = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_block: None,
        worst_index: 0,
        checked: 0,
    };
    for &id in ids {
        check_block(&mut probe, grads, id, h, &loss, &mut report);
    }
    report
}

fn check_block(
    probe: &mut ParamStore,
    grads: &Gradients,
    id: ParamId,
    h: f64,
    loss: &impl Fn(&ParamStore) -> f64,
    report: &mut GradCheckReport,
) {
    let n = probe.get(id).len();
    for i in 0..n {
        let orig = probe.get(id).data()[i];
        probe.get_mut(id).data_mut()[i] = orig + h;
        let up = loss(probe);
        probe.get_mut(id).data_mut()[i] = orig - h;
        let down = loss(probe);
        probe.get_mut(id).data_mut()[i] = orig;

        let numeric = (up - down) / (2.0 * h);
        let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
        let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        let err = (analytic - numeric).abs() / denom;
        report.checked += 1;
        if err > report.max_rel_error || !err.is_finite() {
            report.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
            report.worst_block = Some(probe.name(id).to_string());
            report.worst_index = i;
        }
    }
}
