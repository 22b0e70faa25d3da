//! Ensemble driver: strong and weak error studies over coupled Brownian
//! paths, and log-log order fits.
//!
//! Paths are independent work items. Path `p` draws its increments from
//! `(seed, path_index)` and results are reduced in path-index order, so
//! every table is bit-identical for any worker count.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::brownian::{Coarsener, IncrementStream};
use crate::error::{Error, Result};
use crate::integrator::{advance, drive_path};
use crate::matrix::HermitianMatrix;
use crate::model::FsdeModel;
use crate::scalar::Real;

/// Size, seed and parallelism of a path ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ensemble {
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Ensemble {
    pub fn new(paths: usize, seed: u64) -> Self {
        Self {
            paths,
            seed,
            workers: 1,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    /// Runs `job(p)` for every path and returns the results in path order.
    fn run<R: Send>(&self, job: impl Fn(usize) -> Result<R> + Sync + Send) -> Result<Vec<R>> {
        if self.paths == 0 {
            return Err(Error::EmptyEnsemble);
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        let results: Vec<Result<R>> = pool.install(|| (0..self.paths).into_par_iter().map(&job).collect());
        results.into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Strong,
    Weak,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub dt: f64,
    pub error: f64,
    pub stderr: f64,
    pub paths: usize,
}

impl ErrorRow {
    /// Above the Monte Carlo noise floor: `error > 0` and
    /// `stderr ≤ error / 3`.
    pub fn resolved(&self) -> bool {
        self.error > 0.0 && self.stderr <= self.error / 3.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderFit {
    pub order: f64,
    pub residual: f64,
    pub rows_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorTable {
    pub kind: ErrorKind,
    /// Sorted by strictly increasing `dt`.
    pub rows: Vec<ErrorRow>,
    /// Fit over the resolved rows, if there are enough of them.
    pub fit: Option<OrderFit>,
    /// Why the fit is missing.
    pub fit_failure: Option<String>,
    pub clamp_events: usize,
    /// Wall-clock seconds per row; strong rows share one pass and report
    /// its total.
    pub row_seconds: Vec<f64>,
}

impl ErrorTable {
    fn new(kind: ErrorKind, rows: Vec<ErrorRow>, clamp_events: usize, row_seconds: Vec<f64>) -> Self {
        let usable: Vec<(f64, f64)> = rows.iter().filter(|r| r.resolved()).map(|r| (r.dt, r.error)).collect();
        let (fit, fit_failure) = match fit_order(&usable) {
            Ok((order, residual)) => (
                Some(OrderFit {
                    order,
                    residual,
                    rows_used: usable.len(),
                }),
                None,
            ),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            kind,
            rows,
            fit,
            fit_failure,
            clamp_events,
            row_seconds,
        }
    }

    pub fn fitted_order(&self) -> Option<f64> {
        self.fit.map(|f| f.order)
    }

    /// `dt,error,stderr,paths` rows and a trailing fit comment.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "{line}")?;
        }
        writeln!(w, "dt,error,stderr,paths")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.dt, r.error, r.stderr, r.paths)?;
        }
        match (&self.fit, &self.fit_failure) {
            (Some(f), _) => writeln!(
                w,
                "# fitted_order={},fit_residual={},rows_used={}",
                f.order, f.residual, f.rows_used
            )?,
            (None, reason) => writeln!(
                w,
                "# fitted_order=NaN,fit_residual=NaN,rows_used=0,reason={}",
                reason.as_deref().unwrap_or("unknown")
            )?,
        }
        w.flush()?;
        Ok(())
    }
}

/// Least-squares slope of `ln error` against `ln dt`, and the RMS residual
/// in log space.
pub fn fit_order(rows: &[(f64, f64)]) -> Result<(f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::DegenerateFit(format!("need at least 2 rows, got {}", rows.len())));
    }
    if let Some((dt, e)) = rows.iter().find(|(dt, e)| !(*e > 0.0 && *dt > 0.0) || !e.is_finite() || !dt.is_finite())
    {
        return Err(Error::DegenerateFit(format!("row (dt = {dt}, error = {e}) is not positive")));
    }
    let xs: Vec<f64> = rows.iter().map(|(dt, _)| dt.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, e)| e.ln()).collect();
    let k = rows.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all step sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok((slope, (rss / k).sqrt()))
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

fn check_dt<T: Real>(dt: T) -> Result<()> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    Ok(())
}

/// Strong error `E φ|X̄_{L/R} − X̄_L|` for every factor `R`.
///
/// Each path integrates the fine grid (`dt_min`, `steps` steps) once; every
/// coarse run consumes on-the-fly block sums of the very same increments.
/// A factor that is a multiple of a smaller one sums that level's blocks.
pub fn strong_error_study<T: Real>(
    model: &FsdeModel<T>,
    n: usize,
    dt_min: T,
    steps: usize,
    factors: &[usize],
    ensemble: &Ensemble,
) -> Result<ErrorTable> {
    check_dt(dt_min)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("L must be at least 1".into()));
    }
    if ensemble.paths < 2 {
        return Err(Error::InvalidArgument(format!("need M >= 2 paths, got {}", ensemble.paths)));
    }
    let mut factors = factors.to_vec();
    factors.sort_unstable();
    if factors.is_empty() || factors.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("R list must be nonempty without duplicates".into()));
    }
    if let Some(r) = factors.iter().find(|&&r| r == 0 || steps % r != 0) {
        return Err(Error::InvalidArgument(format!("R = {r} does not divide L = {steps}")));
    }
    // Each coarse level sums the blocks of the largest smaller factor that
    // divides it, or the fine increments if there is none.
    let sources: Vec<Option<usize>> = (0..factors.len())
        .map(|j| (0..j).rev().find(|&i| factors[j] % factors[i] == 0))
        .collect();
    let start = Instant::now();
    let per_path = ensemble.run(|p| {
        let path_index = p as u64;
        let mut stream = IncrementStream::new(n, dt_min, ensemble.seed, path_index)?;
        let x0 = model.initial_condition(n);
        let mut fine = x0.clone();
        let mut coarse: Vec<(Coarsener<T>, HermitianMatrix<T>, T)> = factors
            .iter()
            .zip(&sources)
            .map(|(&r, source)| {
                let dt = T::from_usize(r).expect("factor representable") * dt_min;
                let below = source.map_or(1, |i| factors[i]);
                Ok((Coarsener::new(r / below)?, x0.clone(), dt))
            })
            .collect::<Result<_>>()?;
        let mut blocks: Vec<Option<HermitianMatrix<T>>> = vec![None; factors.len()];
        let mut clamps = 0;
        for k in 0..steps {
            let dw = stream.next_increment();
            clamps += advance(model, &mut fine, &dw, dt_min).map_err(|e| e.at_step(path_index, k))?;
            for j in 0..factors.len() {
                let block = match sources[j] {
                    None => coarse[j].0.push(&dw),
                    Some(i) => match &blocks[i] {
                        Some(b) => coarse[j].0.push(b),
                        None => None,
                    },
                };
                if let Some(block) = &block {
                    let (_, state, dt) = &mut coarse[j];
                    let coarse_step = (k + 1) / factors[j] - 1;
                    clamps += advance(model, state, block, *dt).map_err(|e| e.at_step(path_index, coarse_step))?;
                }
                blocks[j] = block;
            }
        }
        let errors = coarse
            .iter()
            .map(|(_, state, _)| Ok(state.sub(&fine)?.abs_trace()?.to_f64_lossy()))
            .collect::<Result<Vec<f64>>>()?;
        Ok((errors, clamps))
    })?;
    let elapsed = start.elapsed().as_secs_f64();
    let clamp_events = per_path.iter().map(|(_, c)| c).sum();
    let rows = factors
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let samples: Vec<f64> = per_path.iter().map(|(e, _)| e[j]).collect();
            let (error, stderr) = mean_and_stderr(&samples);
            ErrorRow {
                dt: (T::from_usize(r).expect("factor representable") * dt_min).to_f64_lossy(),
                error,
                stderr,
                paths: ensemble.paths,
            }
        })
        .collect();
    Ok(ErrorTable::new(
        ErrorKind::Strong,
        rows,
        clamp_events,
        vec![elapsed; factors.len()],
    ))
}

/// Number of steps of size `dt` covering `[0, horizon]`, if it is an
/// integer.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("need T > 0 and dt > 0, got T = {horizon}, dt = {dt}")));
    }
    let ratio = horizon / dt;
    let steps = ratio.round();
    if steps < 1.0 || (ratio - steps).abs() > 1e-9 * steps {
        return Err(Error::InvalidArgument(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(steps as usize)
}

/// Weak error `|E φ(X̄_T) − φ(X_T)|` for every step size, on fresh paths
/// per row (row `i` uses path indices `i·M .. (i+1)·M`).
pub fn weak_error_study<T: Real>(
    model: &FsdeModel<T>,
    n: usize,
    dts: &[f64],
    horizon: f64,
    ensemble: &Ensemble,
) -> Result<ErrorTable> {
    let reference = model
        .reference()
        .mean_at(horizon)
        .ok_or_else(|| Error::MissingReference(model.name().to_string()))?;
    let mut dts = dts.to_vec();
    dts.sort_by(f64::total_cmp);
    if dts.is_empty() || dts.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("dt list must be nonempty without duplicates".into()));
    }
    let grid = dts
        .iter()
        .map(|&dt| steps_for(horizon, dt).map(|l| (dt, l)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(grid.len());
    let mut row_seconds = Vec::with_capacity(grid.len());
    let mut clamp_events = 0;
    for (row, &(dt, steps)) in grid.iter().enumerate() {
        let start = Instant::now();
        let offset = (row * ensemble.paths) as u64;
        let dt_t = T::from_f64_lossy(dt);
        let per_path = ensemble.run(|p| {
            let path_index = offset + p as u64;
            let stream = IncrementStream::new(n, dt_t, ensemble.seed, path_index)?;
            let (x, clamps) = drive_path(model, n, dt_t, steps, stream, path_index, |_, _, _| Ok(()))?;
            Ok((x.normalized_trace().to_f64_lossy(), clamps))
        })?;
        let values: Vec<f64> = per_path.iter().map(|(v, _)| *v).collect();
        clamp_events += per_path.iter().map(|(_, c)| c).sum::<usize>();
        let (mean, stderr) = mean_and_stderr(&values);
        rows.push(ErrorRow {
            dt,
            error: (mean - reference).abs(),
            stderr,
            paths: ensemble.paths,
        });
        row_seconds.push(start.elapsed().as_secs_f64());
    }
    Ok(ErrorTable::new(ErrorKind::Weak, rows, clamp_events, row_seconds))
}

/// Runs every path of the ensemble on a `dt` grid of `steps` steps and
/// evaluates `observe` on `X̄_k` at each requested step `k`.
///
/// Returns `out[p][j] = observe(X̄_{snapshots[j]})` for path `p`, and the
/// total clamp count.
pub fn observe_ensemble<T, R, F>(
    model: &FsdeModel<T>,
    n: usize,
    dt: T,
    steps: usize,
    snapshots: &[usize],
    ensemble: &Ensemble,
    observe: F,
) -> Result<(Vec<Vec<R>>, usize)>
where
    T: Real,
    R: Send,
    F: Fn(&HermitianMatrix<T>) -> Result<R> + Sync + Send,
{
    check_dt(dt)?;
    if let Some(k) = snapshots.iter().find(|&&k| k > steps) {
        return Err(Error::InvalidArgument(format!("snapshot step {k} is beyond L = {steps}")));
    }
    let per_path = ensemble.run(|p| {
        let path_index = p as u64;
        let stream = IncrementStream::new(n, dt, ensemble.seed, path_index)?;
        let mut out: Vec<Option<R>> = snapshots.iter().map(|_| None).collect();
        let (_, clamps) = drive_path(model, n, dt, steps, stream, path_index, |k, x, _| {
            for (j, &s) in snapshots.iter().enumerate() {
                if s == k {
                    out[j] = Some(observe(x)?);
                }
            }
            Ok(())
        })?;
        let out = out.into_iter().map(|o| o.expect("every snapshot visited")).collect();
        Ok((out, clamps))
    })?;
    let clamps = per_path.iter().map(|(_, c)| c).sum();
    Ok((per_path.into_iter().map(|(o, _)| o).collect(), clamps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{coarsen, sample_path};
    use crate::integrator::terminal_state;
    use crate::model::{cir_model, gbm1_model, ou_model, Drift};

    #[test]
    fn two_point_slope() {
        let (p, res) = fit_order(&[(0.01, 0.1), (0.04, 0.2)]).unwrap();
        assert!((p - 2f64.ln() / 4f64.ln()).abs() < 1e-15);
        assert!(res < 1e-15);
    }

    #[test]
    fn exact_power_laws() {
        for p in [0.5, 1.0, 1.5, 2.0] {
            let rows: Vec<(f64, f64)> = (0..5).map(|k| 2f64.powi(-4 - k)).map(|dt| (dt, 3.0 * dt.powf(p))).collect();
            let (fit, res) = fit_order(&rows).unwrap();
            assert!((fit - p).abs() < 1e-12);
            assert!(res < 1e-12);
        }
    }

    #[test]
    fn degenerate_fits() {
        assert!(matches!(fit_order(&[(0.1, 1.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_order(&[(0.1, 1.0), (0.2, 0.0)]), Err(Error::DegenerateFit(_))));
        assert!(matches!(fit_order(&[(0.1, 1.0), (0.1, 2.0)]), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn strong_study_argument_checks() {
        let model = ou_model(1.0, 1.0);
        let e = Ensemble::new(4, 1);
        assert!(strong_error_study(&model, 2, 0.01, 16, &[3], &e).is_err());
        assert!(strong_error_study(&model, 2, 0.01, 16, &[2, 2], &e).is_err());
        assert!(strong_error_study(&model, 2, 0.01, 16, &[2], &Ensemble::new(1, 1)).is_err());
    }

    #[test]
    fn unit_factor_row_is_exactly_zero() {
        for model in [ou_model(1.0, 1.0), gbm1_model(1.0), cir_model(2.0, 1.0, 1.0).unwrap()] {
            let t = strong_error_study(&model, 4, 1.0 / 64.0, 64, &[1, 4], &Ensemble::new(8, 3)).unwrap();
            assert_eq!(t.rows[0].error, 0.0);
            assert_eq!(t.rows[0].stderr, 0.0);
            assert!(t.rows[1].error > 0.0);
        }
    }

    /// The streamed coupling reproduces an explicit coarsen-then-integrate.
    #[test]
    fn streaming_coupling_matches_stored_coarsening() {
        let model = gbm1_model(0.5);
        let (n, dt, steps, seed) = (3, 1.0 / 32.0, 32, 17);
        let t = strong_error_study(&model, n, dt, steps, &[4, 8], &Ensemble::new(5, seed)).unwrap();
        for (j, r) in [4, 8].into_iter().enumerate() {
            let samples: Vec<f64> = (0..5)
                .map(|p| {
                    let seq = sample_path(n, dt, steps, seed, p).unwrap();
                    let fine = terminal_state(&model, &seq).unwrap().0;
                    // R = 8 is built from the R = 4 blocks.
                    let coarse_seq = match r {
                        4 => coarsen(&seq, 4).unwrap(),
                        _ => coarsen(&coarsen(&seq, 4).unwrap(), 2).unwrap(),
                    };
                    let coarse = terminal_state(&model, &coarse_seq).unwrap().0;
                    coarse.sub(&fine).unwrap().abs_trace().unwrap()
                })
                .collect();
            let (mean, se) = mean_and_stderr(&samples);
            assert_eq!(t.rows[j].error, mean);
            assert_eq!(t.rows[j].stderr, se);
        }
    }

    /// Noise-free OU: the strong error is the gap between two deterministic
    /// Euler recursions, `(1+θRh)^{L/R} − (1+θh)^L ≈ C(R − 1)h`. Large `R`
    /// keeps the `(R − 1)/R` factor from bending the slope.
    #[test]
    fn deterministic_ou_strong_error() {
        let theta = 1.0f64;
        let model = ou_model(theta, 0.0).with_initial_scale(1.0);
        let (h, steps) = (1.0 / 16384.0, 16384usize);
        let factors = [16, 32, 64, 128];
        let t = strong_error_study(&model, 2, h, steps, &factors, &Ensemble::new(2, 0)).unwrap();
        let fine = (1.0 + theta * h).powi(steps as i32);
        for (row, r) in t.rows.iter().zip(factors) {
            let coarse = (1.0f64 + theta * r as f64 * h).powi((steps / r) as i32);
            assert!((row.error - (coarse - fine).abs()).abs() < 1e-11);
            assert_eq!(row.stderr, 0.0);
        }
        let p = fit_order(&t.rows.iter().map(|r| (r.dt, r.error)).collect::<Vec<_>>()).unwrap().0;
        assert!((p - 1.0).abs() < 0.1, "p = {p}");
    }

    #[test]
    fn zero_noise_ou_weak_error_vanishes() {
        let model = ou_model(1.5, 0.0);
        let t = weak_error_study(&model, 3, &[0.5, 0.25, 0.125], 1.0, &Ensemble::new(4, 9)).unwrap();
        assert!(t.rows.iter().all(|r| r.error == 0.0));
        assert!(t.fit.is_none());
    }

    #[test]
    fn ou_weak_error_is_absolute_ensemble_mean() {
        let model = ou_model(1.0, 1.0);
        let ens = Ensemble::new(50, 2);
        let t = weak_error_study(&model, 3, &[0.25], 1.0, &ens).unwrap();
        let values: Vec<f64> = (0..50)
            .map(|p| {
                let seq = sample_path(3, 0.25, 4, 2, p).unwrap();
                terminal_state(&model, &seq).unwrap().0.normalized_trace()
            })
            .collect();
        let (mean, se) = mean_and_stderr(&values);
        assert_eq!(t.rows[0].error, mean.abs());
        assert_eq!(t.rows[0].stderr, se);
    }

    #[test]
    fn gbm_weak_study_uses_exponential_mean() {
        // In expectation fEMM reproduces the Euler recursion (1+θΔt)^L.
        let model = gbm1_model(1.0);
        assert!((model.reference().mean_at(1.0).unwrap() - std::f64::consts::E).abs() < 1e-15);
        let t = weak_error_study(&model, 10, &[1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0], 1.0, &Ensemble::new(400, 5)).unwrap();
        for r in &t.rows {
            let bias = std::f64::consts::E - (1.0 + r.dt).powf(1.0 / r.dt);
            assert!((r.error - bias).abs() < 4.0 * r.stderr + 1e-12, "{r:?} vs {bias}");
        }
    }

    #[test]
    fn weak_study_errors() {
        let custom = FsdeModel::custom(
            "custom",
            Drift::Affine {
                constant: 0.0,
                slope: 1.0,
            },
            vec![],
            1.0,
        );
        let e = Ensemble::new(2, 0);
        assert!(matches!(
            weak_error_study(&custom, 2, &[0.1], 1.0, &e),
            Err(Error::MissingReference(_))
        ));
        assert!(weak_error_study(&ou_model(1.0, 1.0), 2, &[0.3], 1.0, &e).is_err());
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let model = cir_model(2.0, 1.0, 1.0).unwrap();
        let one = strong_error_study(&model, 4, 1.0 / 64.0, 64, &[2, 4], &Ensemble::new(12, 8)).unwrap();
        let four = strong_error_study(&model, 4, 1.0 / 64.0, 64, &[2, 4], &Ensemble::new(12, 8).with_workers(4)).unwrap();
        assert_eq!(one.rows, four.rows);
        let one = weak_error_study(&model, 4, &[0.25, 0.125], 1.0, &Ensemble::new(12, 8)).unwrap();
        let four = weak_error_study(&model, 4, &[0.25, 0.125], 1.0, &Ensemble::new(12, 8).with_workers(3)).unwrap();
        assert_eq!(one.rows, four.rows);
    }

    #[test]
    fn stderr_scales_with_inverse_root_paths() {
        let model = ou_model(1.0, 1.0);
        let small = weak_error_study(&model, 2, &[0.125], 1.0, &Ensemble::new(500, 1)).unwrap();
        let large = weak_error_study(&model, 2, &[0.125], 1.0, &Ensemble::new(2000, 2)).unwrap();
        let ratio = small.rows[0].stderr / large.rows[0].stderr;
        assert!((ratio - 2.0).abs() < 0.3, "ratio {ratio}");
    }

    #[test]
    fn csv_has_trailing_fit_line() {
        let rows = vec![
            ErrorRow {
                dt: 0.01,
                error: 0.1,
                stderr: 0.001,
                paths: 10,
            },
            ErrorRow {
                dt: 0.04,
                error: 0.2,
                stderr: 0.001,
                paths: 10,
            },
        ];
        let t = ErrorTable::new(ErrorKind::Strong, rows, 0, vec![0.0; 2]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf, &["# kind=strong".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "dt,error,stderr,paths");
        assert_eq!(lines[2], "0.01,0.1,0.001,10");
        assert!(lines[4].starts_with("# fitted_order=0.5"));
    }

    #[test]
    fn noisy_rows_are_left_out_of_the_fit() {
        let rows = vec![
            ErrorRow {
                dt: 0.01,
                error: 0.001,
                stderr: 0.001,
                paths: 10,
            },
            ErrorRow {
                dt: 0.02,
                error: 0.02,
                stderr: 0.001,
                paths: 10,
            },
            ErrorRow {
                dt: 0.04,
                error: 0.04,
                stderr: 0.001,
                paths: 10,
            },
        ];
        let t = ErrorTable::new(ErrorKind::Weak, rows, 0, vec![0.0; 3]);
        let fit = t.fit.unwrap();
        assert_eq!(fit.rows_used, 2);
        assert!((fit.order - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snapshots_follow_the_path() {
        let model = ou_model(1.0, 1.0);
        let (obs, _) = observe_ensemble(&model, 3, 0.125, 8, &[0, 4, 8], &Ensemble::new(3, 4), |x| {
            Ok(x.normalized_trace())
        })
        .unwrap();
        for (p, row) in obs.iter().enumerate() {
            let seq = sample_path(3, 0.125, 8, 4, p as u64).unwrap();
            let traj = crate::integrator::integrate(&model, &seq).unwrap();
            assert_eq!(row[0], 0.0);
            assert_eq!(row[1], traj.states[4].normalized_trace());
            assert_eq!(row[2], traj.states[8].normalized_trace());
        }
        assert!(observe_ensemble(&model, 3, 0.125, 8, &[9], &Ensemble::new(1, 0), |_| Ok(())).is_err());
    }
}
