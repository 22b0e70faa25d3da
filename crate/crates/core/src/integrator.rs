//! Free Euler–Maruyama:
//! `X̄_{k+1} = X̄_k + a(X̄_k) Δt + Σᵢ bⁱ(X̄_k) ΔW_k cⁱ(X̄_k)`.
//!
//! The integrator never draws randomness; it consumes increments produced
//! elsewhere. That is what keeps coupled multi-resolution runs and
//! ensembles reproducible.

use std::io::Write;

use crate::brownian::{write_matrices, IncrementSequence};
use crate::error::{Error, Result};
use crate::matrix::HermitianMatrix;
use crate::model::FsdeModel;
use crate::scalar::Real;

/// One fEMM step and the eigenvalue clamps it needed.
#[derive(Clone, Debug, PartialEq)]
pub struct Step<T> {
    pub state: HermitianMatrix<T>,
    pub clamped: usize,
}

pub fn femm_step<T: Real>(
    model: &FsdeModel<T>,
    x: &HermitianMatrix<T>,
    dw: &HermitianMatrix<T>,
    dt: T,
) -> Result<Step<T>> {
    let mut state = x.clone();
    let clamped = advance(model, &mut state, dw, dt)?;
    Ok(Step { state, clamped })
}

/// [`femm_step`] in place; returns the clamp count.
pub fn advance<T: Real>(model: &FsdeModel<T>, x: &mut HermitianMatrix<T>, dw: &HermitianMatrix<T>, dt: T) -> Result<usize> {
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {dt}")));
    }
    if x.n() != dw.n() {
        return Err(Error::DimensionMismatch {
            expected: x.n(),
            got: dw.n(),
        });
    }
    let n = x.n();
    // Affine drift with additive noise: the same arithmetic as the general
    // path, entry by entry, without the intermediate matrices.
    if let (Some((constant, slope)), Some(coefficient)) = (model.affine_drift(), model.additive_coefficient()) {
        let mut finite = true;
        let mut next_diagonal = 0;
        for (k, (xk, w)) in x.data_mut().iter_mut().zip(dw.as_slice()).enumerate() {
            let mut drift = slope * *xk;
            if k == next_diagonal {
                next_diagonal += n + 1;
                if constant != T::zero() {
                    drift = drift + constant;
                }
            }
            *xk = *xk + drift * dt + coefficient * *w;
            finite &= xk.is_finite();
        }
        return if finite { Ok(0) } else { Err(Error::NonFinite) };
    }
    let drift = model.drift(x)?;
    let diffusion = model.diffusion(x, dw)?;
    let (xs, ds, gs) = (x.as_slice(), drift.as_slice(), diffusion.value.as_slice());
    let state = HermitianMatrix::from_upper_fn(n, |i, j| {
        let k = i * n + j;
        xs[k] + ds[k] * dt + gs[k]
    });
    if state.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    *x = state;
    Ok(diffusion.clamped)
}

/// Drives one path through `steps` increments, calling `visit(k, X̄_k,
/// clamps so far)` for `k = 0..=steps`. Returns the terminal state and the
/// total clamp count.
pub fn drive_path<T, I, V>(
    model: &FsdeModel<T>,
    n: usize,
    dt: T,
    steps: usize,
    increments: I,
    path_index: u64,
    mut visit: V,
) -> Result<(HermitianMatrix<T>, usize)>
where
    T: Real,
    I: IntoIterator<Item = HermitianMatrix<T>>,
    V: FnMut(usize, &HermitianMatrix<T>, usize) -> Result<()>,
{
    if steps == 0 {
        return Err(Error::InvalidArgument("at least one step (L >= 1) is required".into()));
    }
    let mut state = model.initial_condition(n);
    let mut clamps = 0;
    visit(0, &state, clamps)?;
    let mut increments = increments.into_iter();
    for k in 0..steps {
        let dw = increments.next().ok_or_else(|| {
            Error::InvalidArgument(format!("increment source ran out after {k} of {steps} steps"))
        })?;
        if dw.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: dw.n(),
            });
        }
        clamps += advance(model, &mut state, &dw, dt).map_err(|e| e.at_step(path_index, k))?;
        visit(k + 1, &state, clamps)?;
    }
    Ok((state, clamps))
}

/// A full fEMM trajectory `X̄_0 … X̄_L` with run metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<HermitianMatrix<T>>,
    /// Cumulative clamp count after each state.
    pub clamp_events_so_far: Vec<usize>,
    pub clamp_events: usize,
    pub model_name: String,
    pub params: Vec<(String, f64)>,
    pub dt: T,
    pub seed: u64,
    pub path_index: u64,
}

fn time_at<T: Real>(k: usize, dt: T) -> T {
    T::from_usize(k).expect("step index representable") * dt
}

pub fn integrate<T: Real>(model: &FsdeModel<T>, increments: &IncrementSequence<T>) -> Result<Trajectory<T>> {
    let steps = increments.len();
    let mut states = Vec::with_capacity(steps + 1);
    let mut so_far = Vec::with_capacity(steps + 1);
    let (_, clamp_events) = drive_path(
        model,
        increments.n,
        increments.dt,
        steps,
        increments.increments.iter().cloned(),
        increments.path_index,
        |_, x, clamps| {
            states.push(x.clone());
            so_far.push(clamps);
            Ok(())
        },
    )?;
    Ok(Trajectory {
        times: (0..=steps).map(|k| time_at(k, increments.dt)).collect(),
        states,
        clamp_events_so_far: so_far,
        clamp_events,
        model_name: model.name().to_string(),
        params: model.params().to_vec(),
        dt: increments.dt,
        seed: increments.seed,
        path_index: increments.path_index,
    })
}

/// `X̄_L` only, bit-identical to `integrate(..).states[L]`.
pub fn terminal_state<T: Real>(
    model: &FsdeModel<T>,
    increments: &IncrementSequence<T>,
) -> Result<(HermitianMatrix<T>, usize)> {
    drive_path(
        model,
        increments.n,
        increments.dt,
        increments.len(),
        increments.increments.iter().cloned(),
        increments.path_index,
        |_, _, _| Ok(()),
    )
}

/// Column header of the trajectory CSV.
pub const TRAJECTORY_COLUMNS: &str = "k,t,phi_X,min_eig,max_eig,clamp_events_so_far";

/// One trajectory CSV row for state `X̄_k`.
pub fn trajectory_row<T: Real>(k: usize, t: T, x: &HermitianMatrix<T>, clamps: usize) -> Result<String> {
    let eig = x.eigenvalues()?;
    Ok(format!(
        "{k},{},{},{},{},{clamps}",
        t.to_f64_lossy(),
        x.normalized_trace().to_f64_lossy(),
        eig[0].to_f64_lossy(),
        eig[eig.len() - 1].to_f64_lossy(),
    ))
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn terminal(&self) -> &HermitianMatrix<T> {
        self.states.last().expect("a trajectory holds at least X̄_0")
    }

    /// Writes `header` lines (already `#`-prefixed) followed by the CSV.
    pub fn write_csv<W: Write>(&self, mut w: W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "{line}")?;
        }
        writeln!(w, "{TRAJECTORY_COLUMNS}")?;
        for (k, ((t, x), clamps)) in self
            .times
            .iter()
            .zip(&self.states)
            .zip(&self.clamp_events_so_far)
            .enumerate()
        {
            writeln!(w, "{}", trajectory_row(k, *t, x, *clamps)?)?;
        }
        w.flush()?;
        Ok(())
    }

    /// All states in the increment dump format.
    pub fn write_states_binary<W: Write>(&self, w: W) -> Result<()> {
        let states: Vec<HermitianMatrix<f64>> = self
            .states
            .iter()
            .map(|m| {
                HermitianMatrix::new_exact(m.n(), m.as_slice().iter().map(|x| x.to_f64_lossy()).collect())
            })
            .collect::<Result<_>>()?;
        let n = states[0].n();
        write_matrices(w, n, self.dt.to_f64_lossy(), self.seed, self.path_index, &states)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::{coarsen, read_matrices, sample_path};
    use crate::model::{cir_model, gbm1_model, ou_model, DiffusionTerm, Drift, Factor, PsdPolicy};

    fn still_model() -> FsdeModel<f64> {
        FsdeModel::custom(
            "still",
            Drift::Affine {
                constant: 0.0,
                slope: 0.0,
            },
            vec![DiffusionTerm::new(Factor::Constant(0.0), Factor::Identity)],
            0.0,
        )
    }

    #[test]
    fn zero_coefficients_leave_state_unchanged() {
        let seq = sample_path::<f64>(4, 0.1, 1, 3, 0).unwrap();
        let x = HermitianMatrix::from_upper_fn(4, |i, j| (i + j) as f64 * 0.5);
        let step = femm_step(&still_model(), &x, &seq.increments[0], 0.1).unwrap();
        assert_eq!(step.state, x);
    }

    #[test]
    fn deterministic_ou_step() {
        let model = ou_model(0.7, 1.3);
        let x = HermitianMatrix::from_upper_fn(3, |i, j| 1.0 + (i * 3 + j) as f64);
        let step = femm_step(&model, &x, &HermitianMatrix::zeros(3), 0.25).unwrap();
        let want = x.scaled(&(1.0 + 0.7 * 0.25));
        assert!(step.state.sub(&want).unwrap().frobenius_norm() < 1e-13);
        assert!(femm_step(&model, &x, &HermitianMatrix::zeros(3), 0.0).is_err());
    }

    /// Scalar Euler–Maruyama on the same increments, bit for bit.
    #[test]
    fn one_by_one_ou_is_scalar_euler_maruyama() {
        let (theta, sigma, dt) = (0.8, 1.1, 1.0 / 64.0);
        let model = ou_model(theta, sigma).with_initial_scale(0.3);
        let seq = sample_path(1, dt, 64, 21, 5).unwrap();
        let traj = integrate(&model, &seq).unwrap();
        let mut x = 0.3f64;
        for (k, dw) in seq.increments.iter().enumerate() {
            let w = *dw.get(0, 0);
            x = x + theta * x * dt + sigma * w;
            assert_eq!(traj.states[k + 1].get(0, 0).to_bits(), x.to_bits(), "step {k}");
        }
    }

    /// The additive-noise shortcut and the general route agree bit for bit.
    #[test]
    fn fast_path_matches_general_path() {
        use std::sync::Arc;
        for (constant, slope, sigma) in [(0.0, 1.0, 1.0), (2.0, -1.0, 0.7), (-0.5, 0.3, 0.0)] {
            let fast = FsdeModel::custom(
                "fast",
                Drift::Affine { constant, slope },
                vec![DiffusionTerm::new(Factor::Constant(sigma), Factor::Identity)],
                0.5,
            );
            let general = FsdeModel::custom(
                "general",
                Drift::Map(Arc::new(move |x: &HermitianMatrix<f64>| {
                    let mut out = x.scaled(&slope);
                    if constant != 0.0 {
                        out.add_assign(&HermitianMatrix::scaled_identity(x.n(), constant))?;
                    }
                    Ok(out)
                })),
                vec![DiffusionTerm::new(Factor::Constant(sigma), Factor::Identity)],
                0.5,
            );
            let seq = sample_path(5, 1.0 / 64.0, 64, 12, 3).unwrap();
            assert_eq!(integrate(&fast, &seq).unwrap().states, integrate(&general, &seq).unwrap().states);
        }
    }

    #[test]
    fn single_step_trajectory_unrolls() {
        let model = gbm1_model(0.5);
        let seq = sample_path(3, 0.01, 1, 8, 1).unwrap();
        let traj = integrate(&model, &seq).unwrap();
        assert_eq!(traj.len(), 2);
        assert_eq!(traj.states[0], HermitianMatrix::identity(3));
        let step = femm_step(&model, &traj.states[0], &seq.increments[0], 0.01).unwrap();
        assert_eq!(traj.states[1], step.state);
        assert_eq!(traj.times, vec![0.0, 0.01]);
    }

    #[test]
    fn noiseless_ou_is_geometric_recursion() {
        let model = ou_model(1.0, 0.0);
        let seq = sample_path(3, 0.1, 10, 4, 0).unwrap();
        let traj = integrate(&model, &seq).unwrap();
        assert!(traj.states.iter().all(|s| *s == HermitianMatrix::zeros(3)));

        let from_one = model.with_initial_scale(1.0);
        let terminal = terminal_state(&from_one, &seq).unwrap().0;
        let want = 1.1f64.powi(10);
        for i in 0..3 {
            assert!((terminal.get(i, i) - want).abs() < 1e-13);
        }
        let seq = sample_path(2, 0.5, 2, 4, 0).unwrap();
        let terminal = terminal_state(&ou_model(1.0, 0.0).with_initial_scale(1.0), &seq).unwrap().0;
        assert_eq!(terminal, HermitianMatrix::scaled_identity(2, 2.25));
    }

    #[test]
    fn terminal_state_matches_full_trajectory() {
        let models: [FsdeModel<f64>; 3] = [ou_model(1.0, 1.0), gbm1_model(1.0), cir_model(2.0, 1.0, 1.0).unwrap()];
        for run in 0..10u64 {
            let model = &models[run as usize % 3];
            let seq = sample_path(5, 1.0 / 32.0, 32, 1234, run).unwrap();
            let traj = integrate(model, &seq).unwrap();
            let (terminal, clamps) = terminal_state(model, &seq).unwrap();
            assert_eq!(&terminal, traj.terminal());
            assert_eq!(clamps, traj.clamp_events);
        }
    }

    #[test]
    fn empty_sequence_is_rejected() {
        let seq = IncrementSequence::<f64> {
            n: 2,
            dt: 0.1,
            increments: vec![],
            seed: 0,
            path_index: 0,
        };
        assert!(matches!(terminal_state(&ou_model(1.0, 1.0), &seq), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn coarse_run_visits_fewer_steps_on_same_noise() {
        let seq = sample_path(4, 1.0 / 64.0, 64, 9, 2).unwrap();
        let coarse = coarsen(&seq, 8).unwrap();
        let traj = integrate(&gbm1_model(1.0), &coarse).unwrap();
        assert_eq!(traj.len(), 9);
        let diff = coarse.total().sub(&seq.total()).unwrap().frobenius_norm();
        assert!(diff < 1e-14);
    }

    #[test]
    fn states_stay_symmetric() {
        let models: [FsdeModel<f64>; 3] = [ou_model(1.0, 1.0), gbm1_model(1.0), cir_model(2.0, 1.0, 1.0).unwrap()];
        for p in 0..100u64 {
            let model = &models[p as usize % 3];
            let seq = sample_path(6, 1.0 / 16.0, 16, 77, p).unwrap();
            for s in integrate(model, &seq).unwrap().states {
                let d = s.to_dense();
                let scale: f64 = d.frobenius_norm().max(1.0);
                assert!(d.max_asymmetry() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn ou_mean_stays_zero_statistically() {
        let model = ou_model(1.0, 1.0);
        let m = 1000;
        let xs: Vec<f64> = (0..m)
            .map(|p| {
                let seq = sample_path(8, 1.0 / 16.0, 16, 5, p).unwrap();
                terminal_state(&model, &seq).unwrap().0.normalized_trace()
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / m as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
        assert!(mean.abs() < 3.0 * (var / m as f64).sqrt());
    }

    #[test]
    fn strict_mode_names_the_step() {
        // Large steps push GBM out of the PSD cone quickly.
        let model = gbm1_model(0.0).with_psd_policy(PsdPolicy::Strict);
        let seq = sample_path(20, 4.0, 50, 1, 7).unwrap();
        match terminal_state(&model, &seq) {
            Err(Error::AtStep { path_index, step, source }) => {
                assert_eq!(path_index, 7);
                assert!(step > 0);
                assert!(matches!(*source, Error::StrictModeViolation { .. }));
            }
            other => panic!("expected strict violation, got {other:?}"),
        }
        let lenient = gbm1_model(0.0);
        let traj = integrate(&lenient, &seq).unwrap();
        assert!(traj.clamp_events > 0);
        assert!(traj.clamp_events_so_far.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn csv_and_binary_export() {
        let seq = sample_path(3, 0.5, 2, 1, 0).unwrap();
        let traj = integrate(&ou_model(1.0, 0.0), &seq).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, &["# model=ou".to_string()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# model=ou");
        assert_eq!(lines[1], TRAJECTORY_COLUMNS);
        assert_eq!(lines[2], "0,0,0,0,0,0");
        assert_eq!(lines[4], "2,1,0,0,0,0");

        let mut bin = Vec::new();
        traj.write_states_binary(&mut bin).unwrap();
        let dump = read_matrices(bin.as_slice()).unwrap();
        assert_eq!(dump.matrices, traj.states);
        assert_eq!(dump.dt, 0.5);
    }

    #[test]
    fn works_in_single_precision() {
        let seq = sample_path::<f32>(4, 0.01, 20, 3, 0).unwrap();
        let traj = integrate(&cir_model(2.0f32, 1.0, 1.0).unwrap(), &seq).unwrap();
        // E φ(X_t) = 2 − e^{−t} at t = 0.2
        assert!((traj.terminal().normalized_trace() - 1.18).abs() < 0.5);
    }
}
