//! One-dimensional Gaussian mixtures fitted by expectation-maximisation.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// One mixture component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl Component {
    #[inline]
    fn log_density(&self, x: f64) -> f64 {
        -0.5 * (LN_2PI + self.variance.ln() + (x - self.mean).powi(2) / self.variance)
    }
}

/// Gaussian mixture with components sorted by mean.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture1D {
    components: Vec<Component>,
}

impl Mixture1D {
    pub fn new(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        if components.iter().any(|c| !(c.variance > 0.0) || c.weight < 0.0 || !c.mean.is_finite()) {
            return Err(Error::InvalidArgument("component with invalid variance, weight or mean".into()));
        }
        components.sort_by(|a, b| a.mean.total_cmp(&b.mean));
        Ok(Self { components })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Log joint densities `ln(w_k) + ln N(x | k)` per component.
    fn log_joint(&self, x: f64, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.components) {
            *o = c.weight.ln() + c.log_density(x);
        }
    }

    /// Posterior membership probabilities of `x`.
    pub fn posteriors(&self, x: f64) -> Vec<f64> {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = lj.iter().map(|v| (v - m).exp()).sum();
        lj.iter().map(|v| (v - m).exp() / s).collect()
    }

    /// Index of the most probable component for `x`.
    pub fn classify(&self, x: f64) -> usize {
        let mut lj = vec![0.0; self.k()];
        self.log_joint(x, &mut lj);
        let mut best = 0;
        for i in 1..lj.len() {
            if lj[i] > lj[best] {
                best = i;
            }
        }
        best
    }

    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut lj = vec![0.0; self.k()];
        values
            .iter()
            .map(|&x| {
                self.log_joint(x, &mut lj);
                log_sum_exp(&lj)
            })
            .sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Stopping rule and optional random restarts.
#[derive(Clone, Debug, PartialEq)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Extra runs initialised from seeded, D²-weighted data points; the fit
    /// with the highest final log-likelihood wins.
    pub restarts: Vec<u64>,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self { max_iter: 200, tol: 1e-6, restarts: Vec::new() }
    }
}

/// Result of [`em_fit`].
#[derive(Clone, Debug)]
pub struct EmFit {
    pub mixture: Mixture1D,
    /// Log-likelihood of the initial parameters followed by one entry per
    /// EM iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Run {
    comps: Vec<Component>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Means of `k` equal-count rank groups of the expanded sample, pooled
/// within-group variance, uniform weights. `xs` is sorted and distinct.
fn quantile_init(xs: &[f64], ws: &[f64], k: usize, floor: f64) -> Vec<Component> {
    let n: f64 = ws.iter().sum();
    let total = n as u64;
    let bounds: Vec<u64> = (0..=k as u64).map(|g| g * total / k as u64).collect();
    // overlap of each distinct value's rank interval with each group
    let groups = |f: &mut dyn FnMut(usize, f64, f64)| {
        let mut start = 0u64;
        let mut g = 0;
        for (&x, &w) in xs.iter().zip(ws) {
            let end = start + w as u64;
            while g < k && bounds[g + 1] <= start {
                g += 1;
            }
            let mut h = g;
            while h < k && bounds[h] < end {
                let overlap = end.min(bounds[h + 1]) - start.max(bounds[h]);
                if overlap > 0 {
                    f(h, x, overlap as f64);
                }
                h += 1;
            }
            start = end;
        }
    };
    let mut sums = vec![0.0; k];
    let mut sizes = vec![0.0; k];
    groups(&mut |g, x, c| {
        sums[g] += c * x;
        sizes[g] += c;
    });
    let means: Vec<f64> = (0..k).map(|g| sums[g] / sizes[g]).collect();
    let mut within = 0.0;
    groups(&mut |g, x, c| within += c * (x - means[g]).powi(2));
    let pooled = (within / n).max(floor);
    means.into_iter().map(|mean| Component { weight: 1.0 / k as f64, mean, variance: pooled }).collect()
}

/// Seeded D²-weighted choice of `k` data points as initial means.
fn random_init(xs: &[f64], ws: &[f64], k: usize, floor: f64, seed: u64) -> Vec<Component> {
    let mut rng = rng_from_seed(seed);
    let n: f64 = ws.iter().sum();
    let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / n;
    let var = (xs.iter().zip(ws).map(|(x, w)| w * (x - mean).powi(2)).sum::<f64>() / n).max(floor);
    let first = WeightedIndex::new(ws).map(|d| d.sample(&mut rng)).unwrap_or(0);
    let mut centres = vec![xs[first]];
    let mut d2: Vec<f64> = xs.iter().zip(ws).map(|(v, w)| w * (v - centres[0]).powi(2)).collect();
    while centres.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => xs[dist.sample(&mut rng)],
            Err(_) => xs[WeightedIndex::new(ws).map(|d| d.sample(&mut rng)).unwrap_or(0)],
        };
        for ((d, v), w) in d2.iter_mut().zip(xs).zip(ws) {
            *d = d.min(w * (v - next).powi(2));
        }
        centres.push(next);
    }
    centres.into_iter().map(|m| Component { weight: 1.0 / k as f64, mean: m, variance: var }).collect()
}

/// Sorted distinct values with their summed counts.
fn compress(values: &[f64], counts: &[u64]) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, u64)> = values.iter().copied().zip(counts.iter().copied()).filter(|p| p.1 > 0).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut xs: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for (v, c) in pairs {
        match xs.last() {
            Some(&last) if last == v => *ws.last_mut().unwrap() += c as f64,
            _ => {
                xs.push(v);
                ws.push(c as f64);
            }
        }
    }
    (xs, ws)
}

/// E-step over weighted values: fills responsibilities (row-major, `k` per
/// value) and returns the log-likelihood of `comps`.
fn e_step(xs: &[f64], ws: &[f64], comps: &[Component], resp: &mut [f64]) -> f64 {
    let k = comps.len();
    let offset: Vec<f64> = comps.iter().map(|c| c.weight.ln() - 0.5 * (LN_2PI + c.variance.ln())).collect();
    let inv: Vec<f64> = comps.iter().map(|c| 0.5 / c.variance).collect();
    let mut ll = 0.0;
    for ((x, w), r) in xs.iter().zip(ws).zip(resp.chunks_exact_mut(k)) {
        let mut m = f64::NEG_INFINITY;
        for j in 0..k {
            let d = x - comps[j].mean;
            r[j] = offset[j] - d * d * inv[j];
            m = m.max(r[j]);
        }
        if m == f64::NEG_INFINITY {
            ll = f64::NEG_INFINITY;
            r.fill(1.0 / k as f64);
            continue;
        }
        let mut s = 0.0;
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in r.iter_mut() {
            *v /= s;
        }
        ll += w * (m + s.ln());
    }
    ll
}

fn m_step(xs: &[f64], ws: &[f64], resp: &[f64], comps: &mut [Component], floor: f64) {
    let k = comps.len();
    let n: f64 = ws.iter().sum();
    let mut nk = vec![0.0; k];
    let mut sx = vec![0.0; k];
    for ((x, w), r) in xs.iter().zip(ws).zip(resp.chunks_exact(k)) {
        for j in 0..k {
            let wr = w * r[j];
            nk[j] += wr;
            sx[j] += wr * x;
        }
    }
    let means: Vec<f64> =
        (0..k).map(|j| if nk[j] > f64::MIN_POSITIVE { sx[j] / nk[j] } else { comps[j].mean }).collect();
    let mut ss = vec![0.0; k];
    for ((x, w), r) in xs.iter().zip(ws).zip(resp.chunks_exact(k)) {
        for j in 0..k {
            let d = x - means[j];
            ss[j] += w * r[j] * d * d;
        }
    }
    for (j, c) in comps.iter_mut().enumerate() {
        c.weight = nk[j] / n;
        if nk[j] <= f64::MIN_POSITIVE {
            // empty component keeps its location
            c.variance = c.variance.max(floor);
            continue;
        }
        c.mean = means[j];
        c.variance = (ss[j] / nk[j]).max(floor);
    }
}

fn run(xs: &[f64], ws: &[f64], mut comps: Vec<Component>, opts: &EmOptions, floor: f64) -> Run {
    let k = comps.len();
    let mut resp = vec![0.0; xs.len() * k];
    let mut ll = e_step(xs, ws, &comps, &mut resp);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        m_step(xs, ws, &resp, &mut comps, floor);
        let next = e_step(xs, ws, &comps, &mut resp);
        trace.push(next);
        iterations += 1;
        if next - ll < opts.tol {
            converged = true;
            break;
        }
        ll = next;
    }
    Run { comps, trace, iterations, converged }
}

/// Fits a `k`-component mixture. Initialised from the means of `k`
/// equal-count quantile groups, their pooled within-group variance and
/// uniform weights. Variances are floored at `1e-8 * range^2`.
pub fn em_fit(values: &[f64], k: usize, opts: &EmOptions) -> Result<EmFit> {
    em_fit_counts(values, &vec![1; values.len()], k, opts)
}

/// [`em_fit`] on a sample given as values with multiplicities, such as a
/// histogram. Equivalent to fitting the expanded sample.
pub fn em_fit_counts(values: &[f64], counts: &[u64], k: usize, opts: &EmOptions) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if values.len() != counts.len() {
        return Err(Error::Length { expected: values.len(), found: counts.len() });
    }
    let n: u64 = counts.iter().sum();
    if n < k as u64 {
        return Err(Error::InvalidArgument(format!("{n} values cannot support {k} components")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value".into()));
    }
    let (xs, ws) = compress(values, counts);
    let range = xs[xs.len() - 1] - xs[0];
    if range <= 0.0 {
        return Err(Error::Degenerate("all values are equal".into()));
    }
    let floor = 1e-8 * range * range;

    let mut best = run(&xs, &ws, quantile_init(&xs, &ws, k, floor), opts, floor);
    for &seed in &opts.restarts {
        let candidate = run(&xs, &ws, random_init(&xs, &ws, k, floor, seed), opts, floor);
        if candidate.trace.last() > best.trace.last() {
            best = candidate;
        }
    }
    let mixture = Mixture1D::new(normalize_weights(best.comps))?;
    Ok(EmFit { mixture, log_likelihood: best.trace, iterations: best.iterations, converged: best.converged })
}

fn normalize_weights(mut comps: Vec<Component>) -> Vec<Component> {
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    comps
}

/// Minimum weight of the bright component for [`em_scar_segment`] to report scar.
pub const MIN_SCAR_COMPONENT_WEIGHT: f64 = 0.01;
/// Minimum Ashman's D between the two components for a bimodal call.
pub const MIN_BIMODAL_SEPARATION: f64 = 2.0;

/// Ashman's D of two components.
pub fn ashman_d(a: &Component, b: &Component) -> f64 {
    std::f64::consts::SQRT_2 * (a.mean - b.mean).abs() / (a.variance + b.variance).sqrt()
}

/// Scar as the pixels more likely to belong to the brighter of two
/// components. Returns an all-false mask when the bright component is
/// negligible or the two components are not separated.
pub fn em_scar_segment(myo_values: &[f64]) -> Result<Vec<bool>> {
    if myo_values.is_empty() {
        return Err(Error::Degenerate("empty myocardium".into()));
    }
    let fit = em_fit(myo_values, 2, &EmOptions::default())?;
    let comps = fit.mixture.components();
    let (dark, bright) = (&comps[0], &comps[1]);
    if bright.weight < MIN_SCAR_COMPONENT_WEIGHT || ashman_d(dark, bright) < MIN_BIMODAL_SEPARATION {
        return Ok(vec![false; myo_values.len()]);
    }
    Ok(myo_values.iter().map(|&v| fit.mixture.posteriors(v)[1] > 0.5).collect())
}
