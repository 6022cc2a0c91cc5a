//! Finite-difference verification of analytic gradients.

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckEntry {
    pub name: String,
    pub coord: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.rel_err <= self.tolerance)
    }

    /// The entry with the largest relative error, if any were checked.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }

    pub fn failures(&self) -> impl Iterator<Item = &GradCheckEntry> {
        self.entries.iter().filter(|e| e.rel_err > self.tolerance)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let failed = self.failures().count();
        writeln!(
            f,
            "gradcheck: {} coordinates, {} over tolerance {:.1e}",
            self.entries.len(),
            failed,
            self.tolerance
        )?;
        if let Some(w) = self.worst() {
            writeln!(
                f,
                "  worst {}[{},{}]: analytic {:.6e} vs numeric {:.6e} (rel {:.2e})",
                w.name, w.coord.0, w.coord.1, w.analytic, w.numeric, w.rel_err
            )?;
        }
        for e in self.failures() {
            writeln!(
                f,
                "  FAIL {}[{},{}]: analytic {:.6e} vs numeric {:.6e} (rel {:.2e})",
                e.name, e.coord.0, e.coord.1, e.analytic, e.numeric, e.rel_err
            )?;
        }
        Ok(())
    }
}

/// Compare analytic gradients against central differences.
///
/// `f(store, with_grads)` must evaluate the loss; when `with_grads` is true
/// it must also backpropagate into the store's gradient buffers. The loss
/// must be a deterministic function of the parameter values. For each
/// parameter up to `samples_per_param` coordinates are probed, chosen by a
/// seeded RNG so runs are reproducible.
pub fn gradcheck<F>(
    store: &mut ParamStore,
    mut f: F,
    tolerance: f64,
    samples_per_param: usize,
    seed: u64,
) -> GradCheckReport
where
    F: FnMut(&mut ParamStore, bool) -> f64,
{
    store.zero_grads();
    let _ = f(store, true);
    let names: Vec<String> = store.names().into_iter().map(str::to_string).collect();
    let mut analytic: BTreeMap<String, Tensor> = BTreeMap::new();
    for name in &names {
        let (rows, cols) = store.get(name).shape();
        let g = store.grad(name).cloned().unwrap_or_else(|| Tensor::zeros(rows, cols));
        analytic.insert(name.clone(), g);
    }
    store.zero_grads();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for name in &names {
        let len = store.get(name).len();
        let cols = store.get(name).cols();
        let take = samples_per_param.min(len);
        let picked = rand::seq::index::sample(&mut rng, len, take);
        for flat in picked {
            let theta = store.get(name).data()[flat];
            let h = 1e-6 * (1.0 + theta.abs());

            store.get_mut(name).data_mut()[flat] = theta + h;
            let up = f(store, false);
            store.get_mut(name).data_mut()[flat] = theta - h;
            let down = f(store, false);
            store.get_mut(name).data_mut()[flat] = theta;

            let numeric = (up - down) / (2.0 * h);
            let a = analytic[name].data()[flat];
            let rel_err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            entries.push(GradCheckEntry {
                name: name.clone(),
                coord: (flat / cols, flat % cols),
                analytic: a,
                numeric,
                rel_err,
            });
        }
    }
    GradCheckReport { entries, tolerance }
}
