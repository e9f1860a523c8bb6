//! Browser bindings for three interactive views: the flow pressure curve,
//! the track of the leading L-function pole, and a determinant strip scan.
//!
//! Every export takes a model as a bundled name or as model-file text and
//! returns a flat `Float64Array` of fixed-width records. The pure functions
//! in [`demo`] do the work and are what the native tests exercise.

use wasm_bindgen::prelude::*;

pub mod demo {
    use num_complex::Complex64;
    use orbitclt::io::{bundled, parse_model, BUNDLED};
    use orbitclt::lfunc::{l_det, strip_scan as scan, PoleOptions};
    use orbitclt::model::ShiftModel;
    use orbitclt::suite::uniform_grid;
    use orbitclt::thermo::{clt_parameters, flow_pressure};
    use orbitclt::tolerance::Tolerances;

    pub type Result<T> = std::result::Result<T, String>;

    /// Largest number of grid points a single call may evaluate.
    pub const MAX_POINTS: usize = 200_000;

    fn err(e: orbitclt::Error) -> String {
        e.to_string()
    }

    pub fn model_names() -> Vec<&'static str> {
        BUNDLED.iter().map(|(name, _)| *name).collect()
    }

    pub fn load(spec: &str) -> Result<ShiftModel> {
        match bundled(spec.trim()) {
            Some(m) => Ok(m),
            None => parse_model(spec).map_err(err),
        }
    }

    fn steps(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) || !(2..=MAX_POINTS).contains(&n) {
            return Err(format!("need finite lo <= hi and 2..={MAX_POINTS} points"));
        }
        Ok((0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect())
    }

    /// `[h, flow_mean, sigma2]`.
    pub fn parameters(spec: &str) -> Result<Vec<f64>> {
        let c = clt_parameters(&load(spec)?, &Tolerances::default()).map_err(err)?;
        Ok(vec![c.h, c.flow_mean, c.sigma2])
    }

    /// `(theta, p)` pairs.
    pub fn pressure_curve(spec: &str, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        let model = load(spec)?;
        let tol = Tolerances::default();
        let mut out = Vec::with_capacity(2 * n);
        for th in steps(lo, hi, n)? {
            out.push(th);
            out.push(flow_pressure(&model, th, &tol).map_err(err)?);
        }
        Ok(out)
    }

    /// `(t, re_s, im_s)` triples from `t = 0` to `t_max`.
    ///
    /// Continues the pole from `h` through every grid point, so each step
    /// starts next to the previous solution.
    pub fn pole_track(spec: &str, t_max: f64, n: usize) -> Result<Vec<f64>> {
        let model = load(spec)?;
        let tol = Tolerances::default();
        let opts = PoleOptions {
            t_range: t_max.abs().max(PoleOptions::default().t_range),
            ..PoleOptions::default()
        };
        let mut out = Vec::with_capacity(3 * n);
        for t in steps(0.0, t_max, n)? {
            let p = orbitclt::lfunc::find_pole(&model, t, &opts, &tol).map_err(err)?;
            out.extend([t, p.s.re, p.s.im]);
        }
        Ok(out)
    }

    /// `(re_s, im_s, log10 |det|)` over `[sigma_lo, sigma_hi] x [-tau_max, tau_max]`.
    pub fn strip_scan(
        spec: &str,
        t: f64,
        sigma_lo: f64,
        sigma_hi: f64,
        sigma_points: usize,
        tau_max: f64,
        tau_points: usize,
    ) -> Result<Vec<f64>> {
        let model = load(spec)?;
        if sigma_points.saturating_mul(tau_points) > MAX_POINTS {
            return Err(format!("at most {MAX_POINTS} grid points"));
        }
        let sigmas = if sigma_points == 1 {
            vec![sigma_lo]
        } else {
            steps(sigma_lo, sigma_hi, sigma_points)?
        };
        let s = scan(&model, t, &sigmas, tau_max, tau_points).map_err(err)?;
        Ok(s
            .grid
            .iter()
            .flat_map(|&(x, y, d)| [x, y, d.max(f64::MIN_POSITIVE).log10()])
            .collect())
    }

    /// `|det(I - M(s, t))|` at one point.
    pub fn abs_det(spec: &str, re: f64, im: f64, t: f64) -> Result<f64> {
        let v = l_det(&load(spec)?, Complex64::new(re, im), t, &Tolerances::default()).map_err(err)?;
        Ok(v.det.norm())
    }

    /// Default real parts for a strip scan: `h - 1` to `h`.
    pub fn default_sigmas(spec: &str, n: usize) -> Result<Vec<f64>> {
        let h = flow_pressure(&load(spec)?, 0.0, &Tolerances::default()).map_err(err)?;
        Ok(uniform_grid(h - 1.0, h, 1.0 / (n.max(2) - 1) as f64))
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = modelNames)]
pub fn model_names() -> Vec<String> {
    demo::model_names().into_iter().map(String::from).collect()
}

#[wasm_bindgen(js_name = modelSource)]
pub fn model_source(name: &str) -> Option<String> {
    orbitclt::io::bundled_source(name).map(String::from)
}

#[wasm_bindgen]
pub fn parameters(model: &str) -> Result<Vec<f64>, JsError> {
    demo::parameters(model).map_err(js)
}

#[wasm_bindgen(js_name = pressureCurve)]
pub fn pressure_curve(model: &str, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    demo::pressure_curve(model, lo, hi, points).map_err(js)
}

#[wasm_bindgen(js_name = poleTrack)]
pub fn pole_track(model: &str, t_max: f64, points: usize) -> Result<Vec<f64>, JsError> {
    demo::pole_track(model, t_max, points).map_err(js)
}

#[wasm_bindgen(js_name = stripScan)]
pub fn strip_scan(
    model: &str,
    t: f64,
    sigma_lo: f64,
    sigma_hi: f64,
    sigma_points: usize,
    tau_max: f64,
    tau_points: usize,
) -> Result<Vec<f64>, JsError> {
    demo::strip_scan(model, t, sigma_lo, sigma_hi, sigma_points, tau_max, tau_points).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::demo::*;

    #[test]
    fn bundled_and_inline_models_load() {
        assert_eq!(model_names().len(), 4);
        let text = orbitclt::io::bundled_source("coin-flip").unwrap();
        let a = parameters("coin-flip").unwrap();
        let b = parameters(text).unwrap();
        assert_eq!(a, b);
        assert!((a[0] - std::f64::consts::LN_2).abs() < 1e-10);
        assert!(load("[states]\n0\n").is_err());
    }

    #[test]
    fn pressure_curve_passes_through_entropy_and_is_convex() {
        let curve = pressure_curve("m-gold", -1.0, 1.0, 21).unwrap();
        assert_eq!(curve.len(), 42);
        let h = parameters("m-gold").unwrap()[0];
        assert!((curve[21] - h).abs() < 1e-12 && curve[20] == 0.0);
        let p: Vec<f64> = curve.chunks(2).map(|c| c[1]).collect();
        assert!(p.windows(3).all(|w| w[0] + w[2] - 2.0 * w[1] > -1e-12));
    }

    #[test]
    fn pole_track_starts_at_entropy_and_moves_left() {
        let track = pole_track("m-gold", 0.5, 11).unwrap();
        let h = parameters("m-gold").unwrap()[0];
        assert!((track[1] - h).abs() < 1e-12 && track[2].abs() < 1e-12);
        for rec in track.chunks(3).skip(1) {
            assert!(rec[1] < h);
            assert!(abs_det("m-gold", rec[1], rec[2], rec[0]).unwrap() < 1e-10);
        }
    }

    #[test]
    fn strip_scan_finds_only_the_pole_on_the_critical_line() {
        let h = parameters("m-gold").unwrap()[0];
        let grid = strip_scan("m-gold", 0.0, h - 0.5, h, 6, 4.0, 33).unwrap();
        assert_eq!(grid.len(), 3 * 6 * 33);
        let deep: Vec<&[f64]> = grid.chunks(3).filter(|r| r[2] < -6.0).collect();
        assert_eq!(deep.len(), 1);
        assert!((deep[0][0] - h).abs() < 1e-12 && deep[0][1] == 0.0);
        assert!(strip_scan("m-gold", 0.0, 0.0, 1.0, 1000, 4.0, 1000).is_err());
        assert_eq!(default_sigmas("m-gold", 5).unwrap().len(), 5);
    }
}
