//! MVDR delay spectra across subcarriers and the Doppler–range heatmap.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DelayGrid, DopplerGrid};
use crate::preprocess::DopplerSpectrum;
use crate::propagation_phasor;

/// Largest accepted condition estimate of a loaded covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Default diagonal loading relative to `tr(R)/M`.
pub const DEFAULT_LOADING_DB: f64 = -20.0;

/// `a(Δτ)_j = e^{-J2π Δf j Δτ}`, `j = 0..M`.
pub fn steering_vector(
    delay_s: f64,
    num_subcarriers: usize,
    subcarrier_spacing_hz: f64,
) -> DVector<Complex64> {
    DVector::from_fn(num_subcarriers, |j, _| {
        propagation_phasor(2.0 * PI * subcarrier_spacing_hz * j as f64 * delay_s)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceMode {
    MultiAntennaSnapshots,
    SingleAntennaOuter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    /// Smoothed and loaded `M × M` Hermitian matrix.
    pub matrix: DMatrix<Complex64>,
    /// Value added to the diagonal.
    pub loading: f64,
    pub mode: CovarianceMode,
}

impl CovarianceEstimate {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Cholesky factor plus inverse, rejecting ill-conditioned matrices.
    pub fn inverse(&self) -> Result<DMatrix<Complex64>> {
        let chol = self.factor()?;
        Ok(chol.inverse())
    }

    fn factor(&self) -> Result<Cholesky<Complex64, Dyn>> {
        let ill = |condition| Error::IllConditioned {
            condition,
            doppler_bin: None,
        };
        let chol = Cholesky::new(self.matrix.clone()).ok_or(ill(f64::INFINITY))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| {
            (lo.min(d.re), hi.max(d.re))
        });
        let condition = (hi / lo).powi(2);
        if !(condition <= MAX_CONDITION) {
            return Err(ill(condition));
        }
        Ok(chol)
    }

    /// `R⁻¹ a` through the Cholesky factor.
    pub fn solve(&self, a: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        Ok(self.factor()?.solve(a))
    }
}

/// Loading factor `ε = 10^(dB/10)`; `-∞` disables loading.
pub fn loading_factor(loading_db: f64) -> f64 {
    if loading_db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(loading_db / 10.0)
    }
}

/// `R = ΛΛᴴ/N`, forward-backward averaged `(R + J R* J)/2`, plus `ε tr(R)/M · I`.
pub fn estimate_covariance(
    slice: &DMatrix<Complex64>,
    loading_db: f64,
) -> Result<CovarianceEstimate> {
    let (m, n) = slice.shape();
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("empty observation slice".into()));
    }
    if slice.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
        return Err(Error::DegenerateCovariance);
    }
    let r = slice * slice.adjoint() / Complex64::new(n as f64, 0.0);
    let mut fb = DMatrix::from_fn(m, m, |a, b| {
        0.5 * (r[(a, b)] + r[(m - 1 - a, m - 1 - b)].conj())
    });
    let trace: f64 = (0..m).map(|k| fb[(k, k)].re).sum();
    let loading = loading_factor(loading_db) * trace / m as f64;
    for k in 0..m {
        // Exact Hermitian diagonal.
        fb[(k, k)] = Complex64::new(fb[(k, k)].re + loading, 0.0);
    }
    Ok(CovarianceEstimate {
        matrix: fb,
        loading,
        mode: if n == 1 {
            CovarianceMode::SingleAntennaOuter
        } else {
            CovarianceMode::MultiAntennaSnapshots
        },
    })
}

/// `aᴴ Q a` for every delay, using the diagonal sums of `Q` so that each
/// delay costs `O(M)` instead of `O(M²)`.
fn quadratic_forms(q: &DMatrix<Complex64>, delays: &DelayGrid) -> Vec<Complex64> {
    let m = q.nrows();
    // s[d + M - 1] = Σ_{l - j = d} Q[j, l]
    let mut s = vec![Complex64::new(0.0, 0.0); 2 * m - 1];
    for j in 0..m {
        for l in 0..m {
            s[l + m - 1 - j] += q[(j, l)];
        }
    }
    let df = delays.subcarrier_spacing_hz();
    delays
        .bins()
        .iter()
        .map(|&tau| {
            let z = propagation_phasor(2.0 * PI * df * tau);
            let mut acc = Complex64::new(0.0, 0.0);
            // Horner over z^d, d = -(M-1)..=(M-1).
            for c in s.iter().rev() {
                acc = acc * z + c;
            }
            acc * z.powi(-(m as i32 - 1))
        })
        .collect()
}

/// `P(Δτ) = 1 / |aᴴ R⁻¹ a|` over the delay grid.
pub fn mvdr_spectrum(cov: &CovarianceEstimate, delays: &DelayGrid) -> Result<Vec<f64>> {
    let q = cov.inverse()?;
    Ok(quadratic_forms(&q, delays)
        .into_iter()
        .map(|v| 1.0 / v.norm())
        .collect())
}

/// Power over (Doppler row × delay column). The 0 Hz bin has no row.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerRangeHeatmap {
    power: Vec<f64>,
    /// Doppler-grid index of each row.
    rows: Vec<usize>,
    doppler_grid: DopplerGrid,
    delay_grid: DelayGrid,
    degenerate_rows: usize,
}

impl DopplerRangeHeatmap {
    /// Builds a heatmap from explicit values (rows follow `doppler_grid`
    /// with the 0 Hz bin skipped).
    pub fn from_rows(
        doppler_grid: DopplerGrid,
        delay_grid: DelayGrid,
        power: Vec<f64>,
    ) -> Result<Self> {
        let rows: Vec<usize> = (0..doppler_grid.len())
            .filter(|&b| b != doppler_grid.zero_index())
            .collect();
        if power.len() != rows.len() * delay_grid.len() {
            return Err(Error::InvalidInput(format!(
                "heatmap needs {}×{} values, got {}",
                rows.len(),
                delay_grid.len(),
                power.len()
            )));
        }
        if power.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidInput(
                "heatmap power must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            power,
            rows,
            doppler_grid,
            delay_grid,
            degenerate_rows: 0,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
    pub fn n_cols(&self) -> usize {
        self.delay_grid.len()
    }
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.power[row * self.n_cols() + col]
    }
    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.n_cols();
        &self.power[row * c..(row + 1) * c]
    }
    pub fn power(&self) -> &[f64] {
        &self.power
    }
    /// Doppler-grid index of a row.
    pub fn doppler_index(&self, row: usize) -> usize {
        self.rows[row]
    }
    /// Row holding a Doppler-grid index, `None` for 0 Hz.
    pub fn row_of(&self, doppler_index: usize) -> Option<usize> {
        self.rows.binary_search(&doppler_index).ok()
    }
    pub fn doppler_hz(&self, row: usize) -> f64 {
        self.doppler_grid.bins()[self.rows[row]]
    }
    pub fn doppler_grid(&self) -> &DopplerGrid {
        &self.doppler_grid
    }
    pub fn delay_grid(&self) -> &DelayGrid {
        &self.delay_grid
    }
    /// Rows zeroed because their covariance was degenerate or ill-conditioned.
    pub fn degenerate_rows(&self) -> usize {
        self.degenerate_rows
    }

    /// `(row, col)` of the largest cell; the first one wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, p) in self.power.iter().enumerate() {
            if *p > self.power[best] {
                best = k;
            }
        }
        (best / self.n_cols(), best % self.n_cols())
    }

    /// CSV with a header row of ranges (m) and a first column of Doppler bins (Hz).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["doppler_hz".to_string()];
        header.extend(self.delay_grid.ranges_m().iter().map(|r| format!("{r}")));
        w.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut rec = vec![format!("{}", self.doppler_hz(row))];
            rec.extend(self.row(row).iter().map(|p| format!("{p}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs MVDR for every nonzero Doppler bin. Degenerate or ill-conditioned
/// bins become zero rows and are counted.
pub fn build_heatmap(
    spectrum: &DopplerSpectrum,
    delays: &DelayGrid,
    loading_db: f64,
) -> Result<DopplerRangeHeatmap> {
    let grid = spectrum.grid().clone();
    let zero = grid.zero_index();
    let rows: Vec<usize> = (0..grid.len()).filter(|&b| b != zero).collect();
    let cols = delays.len();
    let results: Vec<std::result::Result<Vec<f64>, Error>> = rows
        .par_iter()
        .map(|&b| {
            let cov = estimate_covariance(&spectrum.slice(b), loading_db)?;
            mvdr_spectrum(&cov, delays).map_err(|e| match e {
                Error::IllConditioned { condition, .. } => Error::IllConditioned {
                    condition,
                    doppler_bin: Some(b),
                },
                other => other,
            })
        })
        .collect();
    let mut power = Vec::with_capacity(rows.len() * cols);
    let mut degenerate = 0;
    for (b, r) in rows.iter().zip(results) {
        match r {
            Ok(row) => power.extend(row),
            Err(e @ (Error::DegenerateCovariance | Error::IllConditioned { .. })) => {
                log::debug!("Doppler bin {b}: {e}");
                degenerate += 1;
                power.extend(std::iter::repeat_n(0.0, cols));
            }
            Err(e) => return Err(e),
        }
    }
    if degenerate > 0 {
        log::warn!(
            "{degenerate} of {} Doppler rows were degenerate and zeroed",
            rows.len()
        );
    }
    let mut map = DopplerRangeHeatmap::from_rows(grid, delays.clone(), power)?;
    map.degenerate_rows = degenerate;
    Ok(map)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    const DF: f64 = 1e6;

    fn grid(m: usize) -> DelayGrid {
        DelayGrid::for_band(m, DF, 4).unwrap()
    }

    fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(m, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn steering_vector_properties() {
        let m = 16;
        assert!(steering_vector(0.0, m, DF)
            .iter()
            .all(|z| *z == Complex64::new(1.0, 0.0)));
        let a = steering_vector(123e-9, m, DF);
        assert_abs_diff_eq!(a.norm_squared(), m as f64, epsilon = 1e-12);
        let b = steering_vector(123e-9 + 1.0 / (m as f64 * DF), m, DF);
        assert!(a.dotc(&b).norm() < 1e-12);
    }

    #[test]
    fn covariance_is_persymmetric_and_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 8, 3);
        let cov = estimate_covariance(&x, -20.0).unwrap();
        let r = &cov.matrix;
        let m = 8;
        for a in 0..m {
            for b in 0..m {
                assert!((r[(a, b)] - r[(b, a)].conj()).norm() < 1e-12);
                assert!((r[(a, b)] - r[(m - 1 - a, m - 1 - b)].conj()).norm() < 1e-12);
            }
        }
        assert_eq!(cov.mode, CovarianceMode::MultiAntennaSnapshots);
    }

    #[test]
    fn covariance_trace_without_loading() {
        let x = DMatrix::from_fn(4, 2, |j, i| {
            if j == i {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let cov = estimate_covariance(&x, f64::NEG_INFINITY).unwrap();
        let trace: f64 = (0..4).map(|k| cov.matrix[(k, k)].re).sum();
        assert_abs_diff_eq!(trace, x.norm_squared() / 2.0, epsilon = 1e-15);
        assert_eq!(cov.loading, 0.0);
    }

    #[test]
    fn single_antenna_outer_product() {
        let x = DMatrix::from_column_slice(
            3,
            1,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 2.0),
                Complex64::new(-1.0, 1.0),
            ],
        );
        let cov = estimate_covariance(&x, -20.0).unwrap();
        assert_eq!(cov.mode, CovarianceMode::SingleAntennaOuter);
        let outer = &x * x.adjoint();
        let trace = outer.trace().re;
        let expected_loading = 0.01 * trace / 3.0;
        assert_abs_diff_eq!(cov.loading, expected_loading, epsilon = 1e-12);
        for a in 0..3 {
            for b in 0..3 {
                let fb = 0.5 * (outer[(a, b)] + outer[(2 - a, 2 - b)].conj());
                let loaded = if a == b { fb + expected_loading } else { fb };
                assert!((cov.matrix[(a, b)] - loaded).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_slice_is_degenerate() {
        let x = DMatrix::from_element(4, 2, Complex64::new(0.0, 0.0));
        assert!(matches!(
            estimate_covariance(&x, -20.0),
            Err(Error::DegenerateCovariance)
        ));
    }

    #[test]
    fn identity_gives_flat_spectrum() {
        let m = 12;
        let cov = CovarianceEstimate {
            matrix: DMatrix::identity(m, m),
            loading: 0.0,
            mode: CovarianceMode::MultiAntennaSnapshots,
        };
        for p in mvdr_spectrum(&cov, &grid(m)).unwrap() {
            assert_abs_diff_eq!(p, 1.0 / m as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_sums_match_direct_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = 10;
        let x = random_matrix(&mut rng, m, 4);
        let cov = estimate_covariance(&x, -20.0).unwrap();
        let q = cov.inverse().unwrap();
        let delays = grid(m);
        let fast = quadratic_forms(&q, &delays);
        for (tau, f) in delays.bins().iter().zip(fast) {
            let a = steering_vector(*tau, m, DF);
            let direct = a.dotc(&(&q * &a));
            assert!((direct - f).norm() < 1e-9 * direct.norm());
        }
    }

    #[test]
    fn ill_conditioned_rejected() {
        let mut m = DMatrix::<Complex64>::identity(3, 3);
        m[(2, 2)] = Complex64::new(1e-14, 0.0);
        let cov = CovarianceEstimate {
            matrix: m,
            loading: 0.0,
            mode: CovarianceMode::MultiAntennaSnapshots,
        };
        assert!(matches!(
            mvdr_spectrum(&cov, &grid(3)),
            Err(Error::IllConditioned { .. })
        ));
    }

    #[test]
    fn single_steering_peak() {
        let m = 20;
        let delays = grid(m);
        let target = delays.bins()[37];
        let a = steering_vector(target, m, DF);
        let slice = DMatrix::from_column_slice(m, 1, a.as_slice());
        let cov = estimate_covariance(&slice, -30.0).unwrap();
        let p = mvdr_spectrum(&cov, &delays).unwrap();
        let best = (0..p.len()).max_by(|&x, &y| p[x].total_cmp(&p[y])).unwrap();
        assert!((best as i64 - 37).abs() <= 1);
        assert!(p.iter().all(|&v| v > 0.0 && v <= p[best]));
    }

    #[test]
    fn two_separated_delays_give_two_maxima() {
        let m = 32;
        let delays = grid(m);
        let (i1, i2) = (20, 20 + 4 * 3);
        let s = steering_vector(delays.bins()[i1], m, DF)
            + steering_vector(delays.bins()[i2], m, DF) * Complex64::new(0.0, 0.8);
        let slice = DMatrix::from_column_slice(m, 1, s.as_slice());
        let cov = estimate_covariance(&slice, -20.0).unwrap();
        let p = mvdr_spectrum(&cov, &delays).unwrap();
        let is_local_max =
            |k: usize| (k.saturating_sub(1)..=(k + 1).min(p.len() - 1)).all(|n| p[n] <= p[k]);
        let near = |target: usize| (target - 1..=target + 1).any(is_local_max);
        assert!(near(i1) && near(i2));
    }

    #[test]
    fn heatmap_csv_shape() {
        let dg = DopplerGrid::symmetric(1.0, 5).unwrap();
        let tg = DelayGrid::uniform(1e-8, 1e-8, 3, DF).unwrap();
        let map = DopplerRangeHeatmap::from_rows(dg, tg, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(map.row_of(2), None);
        assert_eq!(map.row_of(3), Some(2));
        assert_eq!(map.argmax(), (3, 2));
        let mut out = Vec::new();
        map.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().nth(1).unwrap().starts_with("-1,"));
    }
}
