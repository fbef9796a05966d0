//! Change detection against what a client was last sent.

use std::collections::HashMap;

/// Last transmitted value per wire id.
pub type SentValues = HashMap<u32, f32>;

/// True when `cur` must be retransmitted: the id was never sent, or the
/// value moved by more than `epsilon`.
pub fn is_changed(last: Option<f32>, cur: f32, epsilon: f64) -> bool {
    match last {
        None => true,
        Some(prev) => ((cur as f64) - (prev as f64)).abs() > epsilon,
    }
}

/// Changed `(id, value)` records over all points, in input order.
pub fn changed_records(last_sent: &SentValues, ids: &[u32], values: &[f32], epsilon: f64) -> Vec<(u32, f32)> {
    ids.iter()
        .zip(values)
        .filter(|(id, v)| is_changed(last_sent.get(id).copied(), **v, epsilon))
        .map(|(&id, &v)| (id, v))
        .collect()
}

/// Records a transmitted batch.
pub fn commit(last_sent: &mut SentValues, records: impl IntoIterator<Item = (u32, f32)>) {
    last_sent.extend(records);
}
