//! Integration paths from a reference point to the explained input.
//!
//! * straight line between baseline and input,
//! * guided path that moves low-gradient features first,
//! * blur path from a heavily blurred image back to the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::GradientOracle;
use crate::scalar::Scalar;
use crate::tensor::{blur, Tensor};

/// Default number of integration steps.
pub const DEFAULT_STEPS: usize = 200;
/// Default widest blur of the blur path, in pixels.
pub const DEFAULT_MAX_SIGMA: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Straight,
    Guided,
    Blur,
}

/// Ordered points `x_0 .. x_N` with their path parameters `alpha_0 .. alpha_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path<T> {
    points: Vec<Tensor<T>>,
    alphas: Vec<T>,
    kind: PathKind,
}

impl<T: Scalar> Path<T> {
    /// Validates point shapes, matching lengths and strictly increasing alphas in `[0, 1]`.
    pub fn new(points: Vec<Tensor<T>>, alphas: Vec<T>, kind: PathKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("path has no points"));
        }
        if points.len() != alphas.len() {
            return Err(Error::invalid("path points and alphas differ in length"));
        }
        let shape = points[0].shape();
        if points.iter().any(|p| p.shape() != shape) {
            return Err(Error::invalid("path points differ in shape"));
        }
        if alphas.iter().any(|&a| a < T::zero() || a > T::one())
            || alphas.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::invalid("path alphas must increase strictly within [0, 1]"));
        }
        Ok(Self {
            points,
            alphas,
            kind,
        })
    }

    pub fn points(&self) -> &[Tensor<T>] {
        &self.points
    }

    pub fn alphas(&self) -> &[T] {
        &self.alphas
    }

    pub fn kind(&self) -> PathKind {
        self.kind
    }

    /// Number of segments `N`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn start(&self) -> &Tensor<T> {
        &self.points[0]
    }

    pub fn end(&self) -> &Tensor<T> {
        self.points.last().expect("path is nonempty")
    }
}

fn check_steps(steps: usize) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("path needs at least one step"));
    }
    Ok(())
}

fn uniform_alphas<T: Scalar>(steps: usize) -> Vec<T> {
    (0..=steps)
        .map(|j| T::of_usize(j) / T::of_usize(steps))
        .collect()
}

/// `x_j = baseline + (j/N)(input - baseline)`; the last point is `input` itself.
pub fn straight_path<T: Scalar>(
    baseline: &Tensor<T>,
    input: &Tensor<T>,
    steps: usize,
) -> Result<Path<T>> {
    check_steps(steps)?;
    let delta = input.sub(baseline)?;
    let n = T::of_usize(steps);
    let mut points = Vec::with_capacity(steps + 1);
    for j in 0..steps {
        let mut p = baseline.clone();
        p.axpy(T::of_usize(j) / n, &delta)?;
        points.push(p);
    }
    points.push(input.clone());
    Path::new(points, uniform_alphas(steps), PathKind::Straight)
}

/// Share of the remaining L1 distance consumed by each guided step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GuidedSchedule {
    /// `1 / (remaining steps)`: every step covers the same L1 distance.
    #[default]
    EqualL1,
    /// A fixed share of what is left; the last step closes the gap.
    Fraction(f64),
}

/// Greedy guided path.
///
/// At each step the gradient is taken at the current point and the features still away
/// from their targets are visited in ascending `|g_i|`. Each is moved toward `input`
/// until the step's L1 budget is spent; the feature that exhausts the budget moves
/// partially. Features only ever move toward their targets, so `||x_j - input||_1`
/// never increases. If `baseline == input` the path is the single point `input`.
pub fn guided_path<T: Scalar, M: GradientOracle<T> + ?Sized>(
    model: &M,
    class: usize,
    baseline: &Tensor<T>,
    input: &Tensor<T>,
    steps: usize,
    schedule: GuidedSchedule,
) -> Result<Path<T>> {
    check_steps(steps)?;
    baseline.ensure_same_shape(input)?;
    if let GuidedSchedule::Fraction(f) = schedule {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::invalid(format!("guided fraction must be in (0, 1], got {f}")));
        }
    }
    let total = baseline.l1_distance(input)?;
    if total == T::zero() {
        return Path::new(vec![input.clone()], vec![T::one()], PathKind::Guided);
    }

    let target = input.as_slice();
    let mut current = baseline.clone();
    let mut points = Vec::with_capacity(steps + 1);
    let mut alphas = Vec::with_capacity(steps + 1);
    points.push(current.clone());
    alphas.push(T::zero());

    for j in 0..steps {
        let remaining_steps = steps - j;
        if remaining_steps == 1 {
            current = input.clone();
        } else {
            let remaining = current.l1_distance(input)?;
            let share = match schedule {
                GuidedSchedule::EqualL1 => T::one() / T::of_usize(remaining_steps),
                GuidedSchedule::Fraction(f) => T::of(f),
            };
            let mut budget = remaining * share;
            let grad = model.gradient(&current, class)?;
            let g = grad.as_slice();
            let mut order: Vec<usize> = (0..current.len())
                .filter(|&i| current.as_slice()[i] != target[i])
                .collect();
            // stable: ties keep feature order
            order.sort_by(|&a, &b| g[a].abs().partial_cmp(&g[b].abs()).unwrap());
            let cur = current.as_mut_slice();
            for i in order {
                if budget <= T::zero() {
                    break;
                }
                let gap = target[i] - cur[i];
                if gap.abs() <= budget {
                    cur[i] = target[i];
                    budget = budget - gap.abs();
                } else {
                    cur[i] = cur[i] + budget * gap.signum();
                    budget = T::zero();
                }
            }
        }
        let alpha = match schedule {
            GuidedSchedule::EqualL1 => T::of_usize(j + 1) / T::of_usize(steps),
            GuidedSchedule::Fraction(_) => T::one() - current.l1_distance(input)? / total,
        };
        points.push(current.clone());
        alphas.push(alpha);
    }
    fix_alphas(&mut alphas);
    Path::new(points, alphas, PathKind::Guided)
}

/// Pins the last alpha to 1 and repairs roundoff stalls so alphas increase strictly.
fn fix_alphas<T: Scalar>(alphas: &mut [T]) {
    let n = alphas.len();
    alphas[n - 1] = T::one();
    for j in 1..n - 1 {
        let floor = alphas[j - 1];
        if !(alphas[j] > floor) || alphas[j] >= T::one() {
            alphas[j] = floor + (T::one() - floor) / T::of_usize(n - j);
        }
    }
}

/// Blur levels from `max_sigma` down to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurSchedule<T> {
    sigmas: Vec<T>,
}

impl<T: Scalar> BlurSchedule<T> {
    /// `sigma_j = max_sigma * sqrt(1 - j/N)`, i.e. the variance falls linearly to 0.
    pub fn quadratic(max_sigma: T, steps: usize) -> Result<Self> {
        check_steps(steps)?;
        if !(max_sigma > T::zero()) || !max_sigma.is_finite() {
            return Err(Error::invalid(format!("max sigma must be positive, got {max_sigma}")));
        }
        let n = T::of_usize(steps);
        let mut sigmas: Vec<T> = (0..steps)
            .map(|j| max_sigma * (T::one() - T::of_usize(j) / n).sqrt())
            .collect();
        sigmas.push(T::zero());
        Self::from_sigmas(sigmas)
    }

    /// Explicit levels; must decrease strictly and end at 0.
    pub fn from_sigmas(sigmas: Vec<T>) -> Result<Self> {
        if sigmas.len() < 2 {
            return Err(Error::invalid("blur schedule needs at least two levels"));
        }
        if sigmas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::invalid("blur sigmas must decrease strictly"));
        }
        if *sigmas.last().unwrap() != T::zero() {
            return Err(Error::invalid("blur schedule must end at sigma 0"));
        }
        if !sigmas[0].is_finite() {
            return Err(Error::invalid("blur sigmas must be finite"));
        }
        Ok(Self { sigmas })
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn max_sigma(&self) -> T {
        self.sigmas[0]
    }

    pub fn steps(&self) -> usize {
        self.sigmas.len() - 1
    }

    /// `alpha_j = 1 - sigma_j² / sigma_0²`.
    fn alphas(&self) -> Vec<T> {
        let v0 = self.sigmas[0] * self.sigmas[0];
        self.sigmas.iter().map(|&s| T::one() - s * s / v0).collect()
    }
}

/// `x_j = blur(input, sigma_j)`, from the most blurred image to `input` itself.
pub fn blur_path<T: Scalar>(input: &Tensor<T>, schedule: &BlurSchedule<T>) -> Result<Path<T>> {
    let points = schedule
        .sigmas()
        .iter()
        .map(|&s| blur(input, s))
        .collect::<Result<Vec<_>>>()?;
    Path::new(points, schedule.alphas(), PathKind::Blur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ToyModel;
    use crate::tensor::Shape;

    fn v(xs: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(xs.to_vec()).unwrap()
    }

    #[test]
    fn straight_two_steps() {
        let p = straight_path(&v(&[0.0, 0.0]), &v(&[1.0, 2.0]), 2).unwrap();
        let pts: Vec<&[f64]> = p.points().iter().map(|t| t.as_slice()).collect();
        assert_eq!(pts, vec![&[0.0, 0.0][..], &[0.5, 1.0], &[1.0, 2.0]]);
        assert_eq!(p.alphas(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn straight_degenerate_and_default_length() {
        let x = v(&[0.3, 0.7]);
        let p = straight_path(&x, &x, 5).unwrap();
        assert!(p.points().iter().all(|q| *q == x));
        let p = straight_path(&v(&[0.0]), &v(&[1.0]), DEFAULT_STEPS).unwrap();
        assert_eq!(p.points().len(), 201);
        assert!(straight_path(&x, &x, 0).is_err());
    }

    #[test]
    fn guided_moves_low_gradient_feature_first() {
        let m = ToyModel::linear(Shape::new(1, 2, 1), vec![vec![1.0, 3.0]], vec![0.0]).unwrap();
        let p = guided_path(&m, 0, &v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 4, GuidedSchedule::EqualL1)
            .unwrap();
        let first_arrival = |i: usize| {
            p.points()
                .iter()
                .position(|q| q.as_slice()[i] == 1.0)
                .unwrap()
        };
        // budget 0.5 per step: f1 arrives at point 2, f2 at point 4
        assert_eq!(first_arrival(0), 2);
        assert_eq!(first_arrival(1), 4);
        assert_eq!(p.points()[1].as_slice(), &[0.5, 0.0]);
        assert_eq!(p.points()[3].as_slice(), &[1.0, 0.5]);
    }

    #[test]
    fn guided_degenerate_is_single_point() {
        let m = ToyModel::linear(Shape::new(1, 2, 1), vec![vec![1.0, 3.0]], vec![0.0]).unwrap();
        let x = v(&[0.2, 0.4]);
        let p = guided_path(&m, 0, &x, &x, 10, GuidedSchedule::EqualL1).unwrap();
        assert_eq!(p.points().len(), 1);
        assert_eq!(p.end(), &x);
    }

    #[test]
    fn guided_rejects_bad_fraction() {
        let m = ToyModel::linear(Shape::new(1, 2, 1), vec![vec![1.0, 3.0]], vec![0.0]).unwrap();
        let (a, b) = (v(&[0.0, 0.0]), v(&[1.0, 1.0]));
        assert!(guided_path(&m, 0, &a, &b, 3, GuidedSchedule::Fraction(0.0)).is_err());
        assert!(guided_path(&m, 0, &a, &b, 3, GuidedSchedule::Fraction(1.5)).is_err());
        assert!(guided_path(&m, 0, &a, &b, 0, GuidedSchedule::EqualL1).is_err());
        let p = guided_path(&m, 0, &a, &b, 3, GuidedSchedule::Fraction(0.25)).unwrap();
        assert_eq!(p.end(), &b);
    }

    #[test]
    fn blur_schedule_shape() {
        let s = BlurSchedule::quadratic(2.0f64, 4).unwrap();
        assert_eq!(s.sigmas()[0], 2.0);
        assert_eq!(*s.sigmas().last().unwrap(), 0.0);
        assert!(s.sigmas().windows(2).all(|w| w[1] < w[0]));
        assert!(BlurSchedule::from_sigmas(vec![1.0f64, 1.0, 0.0]).is_err());
        assert!(BlurSchedule::from_sigmas(vec![1.0f64, 0.5]).is_err());
        assert!(BlurSchedule::quadratic(0.0f64, 4).is_err());
    }

    #[test]
    fn blur_path_endpoints() {
        let x = Tensor::from_fn(Shape::new(6, 6, 1), |r, c, _| ((r * 7 + c * 3) % 5) as f64 / 4.0);
        let s = BlurSchedule::from_sigmas(vec![2.0, 1.0, 0.0]).unwrap();
        let p = blur_path(&x, &s).unwrap();
        assert_eq!(p.points().len(), 3);
        assert_eq!(p.end(), &x);
        assert_eq!(p.alphas(), &[0.0, 0.75, 1.0]);

        let flat = Tensor::filled(Shape::new(5, 5, 2), 0.25);
        let p = blur_path(&flat, &BlurSchedule::quadratic(3.0, 6).unwrap()).unwrap();
        assert!(p.points().iter().all(|q| q.max_abs_diff(&flat).unwrap() <= 1e-15));
    }

    #[test]
    fn blur_path_variance_grows_toward_input() {
        let mut x = Tensor::zeros(Shape::new(15, 15, 1));
        x.set(7, 7, 0, 1.0);
        let p = blur_path(&x, &BlurSchedule::quadratic(3.0, 8).unwrap()).unwrap();
        let vars: Vec<f64> = p.points().iter().map(|q| q.variance()).collect();
        assert!(vars.windows(2).all(|w| w[1] > w[0]), "{vars:?}");
    }
}
