//! Attribution integrators.
//!
//! Both integrators walk a [`Path`] segment by segment with the gradient taken at the
//! segment start. The Riemann integrator multiplies that gradient with the segment; the
//! important-direction integrator (IDGI) instead spends the step's change in `f_c`
//! along the gradient direction, giving feature `i` the share `g_i² / (g·g)` of
//! `d = f_c(x_{j+1}) - f_c(x_j)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GradientOracle;
use crate::paths::{
    blur_path, guided_path, straight_path, BlurSchedule, GuidedSchedule, Path, PathKind,
    DEFAULT_MAX_SIGMA, DEFAULT_STEPS,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Vanilla,
    Ig,
    Gig,
    Blurig,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Vanilla, Method::Ig, Method::Gig, Method::Blurig];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Vanilla => "vanilla",
            Method::Ig => "ig",
            Method::Gig => "gig",
            Method::Blurig => "blurig",
        }
    }

    /// Label used in tables: `IG`, `IG+IDGI`, ...
    pub fn label(self, idgi: bool) -> String {
        let base = match self {
            Method::Vanilla => "VG",
            Method::Ig => "IG",
            Method::Gig => "GIG",
            Method::Blurig => "BlurIG",
        };
        if idgi {
            format!("{base}+IDGI")
        } else {
            base.to_string()
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vanilla" | "vg" => Ok(Method::Vanilla),
            "ig" => Ok(Method::Ig),
            "gig" => Ok(Method::Gig),
            "blurig" => Ok(Method::Blurig),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reference point for the straight and guided paths.
#[derive(Debug, Clone, PartialEq)]
pub enum Baseline<T> {
    Black,
    White,
    Image(Tensor<T>),
}

impl<T: Scalar> Baseline<T> {
    pub fn tensor_like(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Baseline::Black => Ok(Tensor::zeros(x.shape())),
            Baseline::White => Ok(Tensor::filled(x.shape(), T::one())),
            Baseline::Image(b) => {
                b.ensure_same_shape(x)?;
                Ok(b.clone())
            }
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Baseline::Black => "black",
            Baseline::White => "white",
            Baseline::Image(_) => "custom",
        }
    }
}

/// Attribution tensor plus how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution<T> {
    pub values: Tensor<T>,
    pub method: Method,
    pub idgi: bool,
    pub steps: usize,
    /// `black`, `white`, `custom` or `blur:<max_sigma>`.
    pub baseline: String,
    pub class: usize,
    /// IDGI steps with zero gradient but nonzero `d`; they contribute nothing.
    pub degenerate_steps: usize,
}

impl<T: Scalar> Attribution<T> {
    pub fn sum(&self) -> T {
        self.values.sum()
    }
}

/// Quantities of one integration step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<T> {
    pub j: usize,
    /// Gradient of `f_c` at `x_j`.
    pub g: Tensor<T>,
    /// `f_c(x_{j+1}) - f_c(x_j)`.
    pub d: T,
    /// `x_{j+1} - x_j`.
    pub segment: Tensor<T>,
}

impl<T: Scalar> StepRecord<T> {
    /// `g ⊙ segment`.
    pub fn riemann_contribution(&self) -> Tensor<T> {
        self.g.mul(&self.segment).expect("step tensors share a shape")
    }

    /// `g_i² d / (g·g)`, or `None` when the gradient vanishes.
    pub fn idgi_contribution(&self) -> Option<Tensor<T>> {
        idgi_step(&self.g, self.d)
    }
}

/// Per-feature IDGI share of one step, `None` for a zero gradient.
pub fn idgi_step<T: Scalar>(g: &Tensor<T>, d: T) -> Option<Tensor<T>> {
    let gg = g.norm_sq();
    if gg == T::zero() {
        return None;
    }
    Some(g.map(|gi| gi * gi * d / gg))
}

fn method_for(kind: PathKind) -> Method {
    match kind {
        PathKind::Straight => Method::Ig,
        PathKind::Guided => Method::Gig,
        PathKind::Blur => Method::Blurig,
    }
}

fn check_path<T: Scalar, M: GradientOracle<T> + ?Sized>(model: &M, path: &Path<T>) -> Result<()> {
    if path.points().len() < 2 {
        return Err(Error::invalid("integration needs a path with at least two points"));
    }
    if path.start().shape() != model.input_shape() {
        return Err(Error::invalid(format!(
            "path shape {} does not match model input {}",
            path.start().shape(),
            model.input_shape()
        )));
    }
    Ok(())
}

/// Gradients, value differences and segments of every step of `path`.
pub fn step_records<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    path: &Path<T>,
) -> Result<Vec<StepRecord<T>>> {
    check_path(model, path)?;
    let pts = path.points();
    let mut records = Vec::with_capacity(path.steps());
    let (mut f_cur, mut g_cur) = model.value_and_gradient(&pts[0], class)?;
    for j in 0..path.steps() {
        let (f_next, g_next) = if j + 1 < path.steps() {
            model.value_and_gradient(&pts[j + 1], class)?
        } else {
            (model.value(&pts[j + 1], class)?, Tensor::zeros(pts[0].shape()))
        };
        records.push(StepRecord {
            j,
            g: g_cur,
            d: f_next - f_cur,
            segment: pts[j + 1].sub(&pts[j])?,
        });
        f_cur = f_next;
        g_cur = g_next;
    }
    Ok(records)
}

/// Left Riemann sum `Σ_j ∇f_c(x_j) ⊙ (x_{j+1} - x_j)`.
pub fn riemann_integrate<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    path: &Path<T>,
) -> Result<Attribution<T>> {
    check_path(model, path)?;
    let pts = path.points();
    let mut acc = Tensor::zeros(pts[0].shape());
    for j in 0..path.steps() {
        let g = model.gradient(&pts[j], class)?;
        let acc_s = acc.as_mut_slice();
        for (((a, &gi), &next), &cur) in acc_s
            .iter_mut()
            .zip(g.as_slice())
            .zip(pts[j + 1].as_slice())
            .zip(pts[j].as_slice())
        {
            *a = *a + gi * (next - cur);
        }
    }
    Ok(Attribution {
        values: acc,
        method: method_for(path.kind()),
        idgi: false,
        steps: path.steps(),
        baseline: String::new(),
        class,
        degenerate_steps: 0,
    })
}

/// Important-direction integration: `I_i = Σ_j g_i² d_j / (g·g)`.
///
/// Each step's shares sum to `d_j`, so the total telescopes to
/// `f_c(x_N) - f_c(x_0)`. A step whose gradient is exactly zero contributes nothing;
/// if its `d` is nonzero it is counted in `degenerate_steps`.
pub fn idgi_integrate<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    path: &Path<T>,
) -> Result<Attribution<T>> {
    check_path(model, path)?;
    let pts = path.points();
    let mut acc = Tensor::zeros(pts[0].shape());
    let mut degenerate = 0;
    let (mut f_cur, mut g_cur) = model.value_and_gradient(&pts[0], class)?;
    for j in 0..path.steps() {
        let last = j + 1 == path.steps();
        let (f_next, g_next) = if last {
            (model.value(&pts[j + 1], class)?, None)
        } else {
            let (f, g) = model.value_and_gradient(&pts[j + 1], class)?;
            (f, Some(g))
        };
        let d = f_next - f_cur;
        let gg = g_cur.norm_sq();
        if gg == T::zero() {
            if d != T::zero() {
                degenerate += 1;
            }
        } else {
            for (a, &gi) in acc.as_mut_slice().iter_mut().zip(g_cur.as_slice()) {
                *a = *a + gi * gi * d / gg;
            }
        }
        f_cur = f_next;
        if let Some(g) = g_next {
            g_cur = g;
        }
    }
    Ok(Attribution {
        values: acc,
        method: method_for(path.kind()),
        idgi: true,
        steps: path.steps(),
        baseline: String::new(),
        class,
        degenerate_steps: degenerate,
    })
}

/// Moves `x_j` along the gradient onto the level set `f_c = f_c(x_j) + d` of the
/// linearization: `x_j + g d / (g·g)`.
pub fn project_to_hyperplane<T: Scalar>(x_j: &Tensor<T>, g: &Tensor<T>, d: T) -> Result<Tensor<T>> {
    x_j.ensure_same_shape(g)?;
    let gg = g.norm_sq();
    if gg == T::zero() {
        return Err(Error::DegenerateStep(
            "cannot project along a zero gradient".into(),
        ));
    }
    let mut out = x_j.clone();
    out.axpy(d / gg, g)?;
    Ok(out)
}

/// Plain input gradient.
pub fn vanilla_gradient<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
) -> Result<Attribution<T>> {
    Ok(Attribution {
        values: model.gradient(x, class)?,
        method: Method::Vanilla,
        idgi: false,
        steps: 0,
        baseline: "none".into(),
        class,
        degenerate_steps: 0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeOptions<T> {
    pub steps: usize,
    pub baseline: Baseline<T>,
    pub max_sigma: T,
    pub guided: GuidedSchedule,
}

impl<T: Scalar> Default for AttributeOptions<T> {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            baseline: Baseline::Black,
            max_sigma: T::of(DEFAULT_MAX_SIGMA),
            guided: GuidedSchedule::EqualL1,
        }
    }
}

/// Builds the path for `method` and integrates it.
pub fn build_path<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
    method: Method,
    options: &AttributeOptions<T>,
) -> Result<Path<T>> {
    match method {
        Method::Vanilla => Err(Error::invalid("vanilla gradient has no integration path")),
        Method::Ig => straight_path(&options.baseline.tensor_like(x)?, x, options.steps),
        Method::Gig => guided_path(
            model,
            class,
            &options.baseline.tensor_like(x)?,
            x,
            options.steps,
            options.guided,
        ),
        Method::Blurig => blur_path(x, &BlurSchedule::quadratic(options.max_sigma, options.steps)?),
    }
}

/// Attribution for one `(method, idgi)` combination.
pub fn attribute<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    x: &Tensor<T>,
    method: Method,
    idgi: bool,
    options: &AttributeOptions<T>,
) -> Result<Attribution<T>> {
    model.check_input(x, class)?;
    if method == Method::Vanilla {
        if idgi {
            return Err(Error::invalid("IDGI does not apply to the vanilla gradient"));
        }
        return vanilla_gradient(model, class, x);
    }
    let path = build_path(model, class, x, method, options)?;
    let mut attribution = if path.points().len() < 2 {
        // guided path with baseline == input: nothing moves
        Attribution {
            values: Tensor::zeros(x.shape()),
            method,
            idgi,
            steps: 0,
            baseline: String::new(),
            class,
            degenerate_steps: 0,
        }
    } else if idgi {
        idgi_integrate(model, class, &path)?
    } else {
        riemann_integrate(model, class, &path)?
    };
    attribution.steps = options.steps;
    attribution.baseline = match method {
        Method::Blurig => format!("blur:{}", options.max_sigma),
        _ => options.baseline.tag().to_string(),
    };
    Ok(attribution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ToyModel;
    use crate::tensor::Shape;

    fn v(xs: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(xs.to_vec()).unwrap()
    }

    fn linear(w: &[f64]) -> ToyModel<f64> {
        ToyModel::linear(Shape::new(1, w.len(), 1), vec![w.to_vec()], vec![0.0]).unwrap()
    }

    #[test]
    fn riemann_exact_on_linear_score() {
        let m = linear(&[2.0, -1.0]);
        for n in [1, 3, 17] {
            let p = straight_path(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), n).unwrap();
            let a = riemann_integrate(&m, 0, &p).unwrap();
            assert!(a.values.max_abs_diff(&v(&[2.0, -1.0])).unwrap() < 1e-12);
        }
    }

    #[test]
    fn riemann_zero_for_degenerate_path() {
        let m = linear(&[2.0, -1.0]);
        let x = v(&[0.4, 0.1]);
        let a = riemann_integrate(&m, 0, &straight_path(&x, &x, 5).unwrap()).unwrap();
        assert!(a.values.as_slice().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn single_point_path_rejected() {
        let m = linear(&[2.0, -1.0]);
        let p = Path::new(vec![v(&[0.0, 0.0])], vec![0.0], PathKind::Straight).unwrap();
        assert!(riemann_integrate(&m, 0, &p).is_err());
        assert!(idgi_integrate(&m, 0, &p).is_err());
    }

    #[test]
    fn idgi_single_step_shares() {
        let share = idgi_step(&v(&[3.0, 4.0]), 1.0).unwrap();
        assert!(share.max_abs_diff(&v(&[0.36, 0.64])).unwrap() < 1e-15);
        assert!(idgi_step(&v(&[0.0, 0.0]), 1.0).is_none());
    }

    #[test]
    fn idgi_closed_form_on_linear_score() {
        let m = linear(&[2.0, -1.0]);
        let p = straight_path(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 10).unwrap();
        let a = idgi_integrate(&m, 0, &p).unwrap();
        assert!(a.values.max_abs_diff(&v(&[0.8, 0.2])).unwrap() < 1e-12);
        assert!(a.idgi);
        assert_eq!(a.degenerate_steps, 0);
    }

    #[test]
    fn idgi_zero_gradient_steps() {
        // f = 0·x: zero gradient and zero d everywhere, silently skipped
        let m = linear(&[0.0, 0.0]);
        let p = straight_path(&v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 4).unwrap();
        let a = idgi_integrate(&m, 0, &p).unwrap();
        assert_eq!(a.degenerate_steps, 0);
        assert_eq!(a.values.sum(), 0.0);
    }

    #[test]
    fn projection_cases() {
        let p = project_to_hyperplane(&v(&[0.0, 0.0]), &v(&[1.0, 0.0]), 0.5).unwrap();
        assert_eq!(p.as_slice(), &[0.5, 0.0]);
        let x = v(&[0.3, -0.2]);
        assert_eq!(project_to_hyperplane(&x, &v(&[2.0, 1.0]), 0.0).unwrap(), x);
        let p = project_to_hyperplane(&v(&[0.0, 0.0]), &v(&[2.0, -1.0]), 1.0).unwrap();
        assert!(p.max_abs_diff(&v(&[0.4, -0.2])).unwrap() < 1e-15);
        assert!((p.dot(&v(&[2.0, -1.0])).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            project_to_hyperplane(&x, &v(&[0.0, 0.0]), 1.0),
            Err(Error::DegenerateStep(_))
        ));
    }

    #[test]
    fn vanilla_is_gradient() {
        let m = linear(&[2.0, -1.0]);
        let x = v(&[0.1, 0.2]);
        let a = vanilla_gradient(&m, 0, &x).unwrap();
        assert_eq!(a.values, m.gradient(&x, 0).unwrap());
    }

    #[test]
    fn dispatcher_composes() {
        let m = linear(&[2.0, -1.0]);
        let x = v(&[1.0, 1.0]);
        let opts = AttributeOptions {
            steps: 8,
            ..AttributeOptions::default()
        };
        let a = attribute(&m, 0, &x, Method::Ig, false, &opts).unwrap();
        let b = riemann_integrate(&m, 0, &straight_path(&v(&[0.0, 0.0]), &x, 8).unwrap()).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.baseline, "black");

        assert!(matches!(
            attribute(&m, 0, &x, Method::Vanilla, true, &opts),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!("smoothgrad".parse::<Method>(), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn step_records_match_integrators() {
        let m = linear(&[2.0, -1.0]);
        let p = straight_path(&v(&[0.0, 0.0]), &v(&[1.0, 0.5]), 5).unwrap();
        let recs = step_records(&m, 0, &p).unwrap();
        assert_eq!(recs.len(), 5);
        let mut sum = Tensor::zeros(Shape::new(1, 2, 1));
        for r in &recs {
            sum.axpy(1.0, &r.riemann_contribution()).unwrap();
        }
        let a = riemann_integrate(&m, 0, &p).unwrap();
        assert!(sum.max_abs_diff(&a.values).unwrap() < 1e-15);
    }
}
