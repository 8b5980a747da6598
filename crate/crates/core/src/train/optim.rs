use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{cholesky_with_jitter, JitterSchedule};
use crate::scalar::Scalar;
use ndarray::{Array1, Array2};

/// Something to minimise.
pub trait Objective<T: Scalar> {
    fn value(&mut self, x: &[T]) -> Result<T>;

    /// Defaults to central differences with relative step `1e-6`.
    fn value_and_grad(&mut self, x: &[T]) -> Result<(T, Vec<T>)> {
        let f = self.value(x)?;
        let g = finite_diff_grad(|p| self.value(p), x, T::lit(1e-6))?;
        Ok((f, g))
    }
}

/// Wraps a closure; gradients by central differences with `step`.
pub struct FnObjective<F, T> {
    pub f: F,
    pub step: T,
}

impl<T: Scalar, F: FnMut(&[T]) -> Result<T>> FnObjective<F, T> {
    pub fn new(f: F) -> Self {
        FnObjective { f, step: T::lit(1e-6) }
    }
}

impl<T: Scalar, F: FnMut(&[T]) -> Result<T>> Objective<T> for FnObjective<F, T> {
    fn value(&mut self, x: &[T]) -> Result<T> {
        (self.f)(x)
    }
    fn value_and_grad(&mut self, x: &[T]) -> Result<(T, Vec<T>)> {
        let f = (self.f)(x)?;
        let step = self.step;
        let g = finite_diff_grad(&mut self.f, x, step)?;
        Ok((f, g))
    }
}

/// Central differences with per-coordinate step `step·max(1, |θ_i|)`.
pub fn finite_diff_grad<T: Scalar, F: FnMut(&[T]) -> Result<T>>(
    mut f: F,
    theta: &[T],
    step: T,
) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::InvalidParameter(format!("grad step must be > 0, got {step}")));
    }
    let mut p = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = step * T::one().max(theta[i].abs());
        p[i] = theta[i] + h;
        let fp = f(&p)?;
        p[i] = theta[i] - h;
        let fm = f(&p)?;
        p[i] = theta[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteObjective);
        }
        // the realised step can differ from h by rounding
        g.push((fp - fm) / ((theta[i] + h) - (theta[i] - h)));
    }
    Ok(g)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimStatus {
    GradientTolerance,
    RelativeTolerance,
    MaxIterations,
    /// The line search could not make progress; the best iterate is returned.
    LineSearchFailed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub rel_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iters: 500,
            grad_tol: 1e-6,
            rel_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub f0: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: OptimStatus,
    /// Objective value after each iteration, starting with `f0`.
    pub trace: Vec<T>,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn axpy<T: Scalar>(x: &[T], a: T, d: &[T]) -> Vec<T> {
    x.iter().zip(d).map(|(&xi, &di)| xi + a * di).collect()
}

fn inf_norm<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
}

/// Evaluation that maps failures and non-finite values to `+∞`.
fn soft<T: Scalar, O: Objective<T> + ?Sized>(obj: &mut O, x: &[T], evals: &mut usize) -> (T, Option<Vec<T>>) {
    *evals += 1;
    match obj.value_and_grad(x) {
        Ok((f, g)) if f.is_finite() && g.iter().all(|v| v.is_finite()) => (f, Some(g)),
        _ => (T::infinity(), None),
    }
}

struct Point<T> {
    a: T,
    f: T,
    g: Vec<T>,
    dg: T,
}

/// Strong-Wolfe line search; returns `None` if no acceptable step was found.
fn wolfe_search<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &mut O,
    x: &[T],
    f0: T,
    dg0: T,
    d: &[T],
    a_init: T,
    evals: &mut usize,
) -> Option<Point<T>> {
    let c1 = T::lit(1e-4);
    let c2 = T::lit(0.9);
    let eval = |obj: &mut O, a: T, evals: &mut usize| -> Option<Point<T>> {
        let xa = axpy(x, a, d);
        match soft(obj, &xa, evals) {
            (f, Some(g)) => {
                let dg = dot(&g, d);
                Some(Point { a, f, g, dg })
            }
            _ => None,
        }
    };

    let mut prev = Point {
        a: T::zero(),
        f: f0,
        g: Vec::new(),
        dg: dg0,
    };
    let mut a = a_init;
    let mut best: Option<Point<T>> = None;
    for i in 0..30 {
        let cur = match eval(obj, a, evals) {
            Some(p) => p,
            None => {
                // failed region: back off toward the last good step
                a = prev.a + (a - prev.a) * T::lit(0.25);
                if a <= T::zero() || i == 29 {
                    break;
                }
                continue;
            }
        };
        if cur.f < f0 && best.as_ref().is_none_or(|b| cur.f < b.f) {
            best = Some(Point { a: cur.a, f: cur.f, g: cur.g.clone(), dg: cur.dg });
        }
        if cur.f > f0 + c1 * cur.a * dg0 || (i > 0 && cur.f >= prev.f) {
            return zoom(obj, x, d, f0, dg0, prev, cur, evals).or(best);
        }
        if cur.dg.abs() <= -c2 * dg0 {
            return Some(cur);
        }
        if cur.dg >= T::zero() {
            return zoom(obj, x, d, f0, dg0, cur, prev, evals).or(best);
        }
        prev = cur;
        a *= T::lit(2.0);
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &mut O,
    x: &[T],
    d: &[T],
    f0: T,
    dg0: T,
    mut lo: Point<T>,
    mut hi: Point<T>,
    evals: &mut usize,
) -> Option<Point<T>> {
    let c1 = T::lit(1e-4);
    let c2 = T::lit(0.9);
    let mut best: Option<Point<T>> = None;
    for _ in 0..40 {
        // safeguarded quadratic interpolation using lo's slope
        let da = hi.a - lo.a;
        let denom = T::lit(2.0) * (hi.f - lo.f - lo.dg * da);
        let mut a = if denom > T::zero() && hi.f.is_finite() {
            lo.a - lo.dg * da * da / denom
        } else {
            lo.a + T::lit(0.5) * da
        };
        let (l, h) = if lo.a < hi.a { (lo.a, hi.a) } else { (hi.a, lo.a) };
        let margin = T::lit(0.1) * (h - l);
        if !(a > l + margin && a < h - margin) {
            a = T::lit(0.5) * (l + h);
        }
        if (h - l).abs() <= T::epsilon() * T::one().max(h.abs()) {
            break;
        }
        let xa = axpy(x, a, d);
        let cur = match soft(obj, &xa, evals) {
            (f, Some(g)) => {
                let dg = dot(&g, d);
                Point { a, f, g, dg }
            }
            _ => {
                hi = Point {
                    a,
                    f: T::infinity(),
                    g: Vec::new(),
                    dg: T::zero(),
                };
                continue;
            }
        };
        if cur.f < f0 && best.as_ref().is_none_or(|b| cur.f < b.f) {
            best = Some(Point { a: cur.a, f: cur.f, g: cur.g.clone(), dg: cur.dg });
        }
        if cur.f > f0 + c1 * a * dg0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.dg.abs() <= -c2 * dg0 {
                return Some(cur);
            }
            if cur.dg * (hi.a - lo.a) >= T::zero() {
                hi = lo;
            }
            lo = cur;
        }
    }
    best.or(if lo.a > T::zero() && !lo.g.is_empty() { Some(lo) } else { None })
}

/// Quasi-Newton minimisation with an inverse-Hessian BFGS update and a
/// strong-Wolfe line search.
pub fn bfgs_minimize<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &mut O,
    x0: &[T],
    opts: &OptimOptions,
) -> Result<OptimResult<T>> {
    let n = x0.len();
    let (f0, g0) = obj.value_and_grad(x0)?;
    if !f0.is_finite() || g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteObjective);
    }
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut f = f0;
    let mut g = g0;
    let mut trace = vec![f0];
    let grad_tol = T::lit(opts.grad_tol);
    let rel_tol = T::lit(opts.rel_tol);
    if n == 0 {
        return Ok(OptimResult {
            x,
            f,
            f0,
            iterations: 0,
            evaluations: evals,
            status: OptimStatus::GradientTolerance,
            trace,
        });
    }
    let mut h = Array2::<T>::eye(n);
    let mut first = true;
    let mut status = OptimStatus::MaxIterations;
    let mut iterations = 0;
    let mut small_steps = 0;
    while iterations < opts.max_iters {
        if inf_norm(&g) < grad_tol {
            status = OptimStatus::GradientTolerance;
            break;
        }
        let ga = Array1::from(g.clone());
        let mut d: Vec<T> = (-h.dot(&ga)).to_vec();
        let mut dg = dot(&d, &g);
        if !(dg < T::zero()) {
            h = Array2::eye(n);
            d = g.iter().map(|v| -*v).collect();
            dg = dot(&d, &g);
            first = true;
        }
        let a_init = if first {
            T::one().min(T::one() / inf_norm(&g).max(T::lit(1e-300)))
        } else {
            T::one()
        };
        let pt = match wolfe_search(obj, &x, f, dg, &d, a_init, &mut evals) {
            Some(p) => p,
            None => {
                if !first {
                    // retry once from steepest descent
                    h = Array2::eye(n);
                    first = true;
                    continue;
                }
                status = OptimStatus::LineSearchFailed;
                break;
            }
        };
        iterations += 1;
        let s: Vec<T> = d.iter().map(|&v| v * pt.a).collect();
        let y: Vec<T> = pt.g.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let f_prev = f;
        x = axpy(&x, T::one(), &s);
        f = pt.f;
        g = pt.g;
        trace.push(f);
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if first {
                let yy = dot(&y, &y);
                h = Array2::eye(n) * (sy / yy);
                first = false;
            }
            let rho = sy.recip();
            let ya = Array1::from(y);
            let sa = Array1::from(s);
            let hy = h.dot(&ya);
            let yhy = ya.dot(&hy);
            // H ← H − ρ(s·hyᵀ + hy·sᵀ) + (ρ²·yᵀHy + ρ)·s·sᵀ
            let coef = rho * rho * yhy + rho;
            for i in 0..n {
                for j in 0..n {
                    h[[i, j]] = h[[i, j]] - rho * (sa[i] * hy[j] + hy[i] * sa[j]) + coef * sa[i] * sa[j];
                }
            }
        }
        if (f_prev - f).abs() <= rel_tol * T::one().max(f.abs()) {
            small_steps += 1;
            if small_steps >= 2 {
                status = OptimStatus::RelativeTolerance;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    Ok(OptimResult {
        x,
        f,
        f0,
        iterations,
        evaluations: evals,
        status,
        trace,
    })
}

/// Brent's method on `[a, c]` with interior point `b`, `f(b) < f(a), f(c)`.
fn brent<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T, c: T, fb: T, tol: T, evals: &mut usize) -> (T, T) {
    let golden = T::lit(0.381_966_011_250_105_1);
    let (mut lo, mut hi) = if a < c { (a, c) } else { (c, a) };
    let (mut x, mut w, mut v) = (b, b, b);
    let (mut fx, mut fw, mut fv) = (fb, fb, fb);
    let mut d = T::zero();
    let mut e = T::zero();
    let two = T::lit(2.0);
    for _ in 0..100 {
        let xm = T::lit(0.5) * (lo + hi);
        let tol1 = tol * x.abs() + T::lit(1e-12);
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - T::lit(0.5) * (hi - lo) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (T::lit(0.5) * q * etemp).abs() || p <= q * (lo - x) || p >= q * (hi - x)) {
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { lo - x } else { hi - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        *evals += 1;
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Minimises `f(x + t·d)` over `t`; returns `(t, f)` with `f ≤ f(x)`.
fn line_minimize<T: Scalar, F: FnMut(&[T]) -> T>(f: &mut F, x: &[T], d: &[T], fx: T, evals: &mut usize) -> (T, T) {
    let mut phi = |t: T| {
        let v = f(&axpy(x, t, d));
        if v.is_finite() {
            v
        } else {
            T::infinity()
        }
    };
    let gold = T::lit(1.618_033_988_749_895);
    let (mut a, mut fa) = (T::zero(), fx);
    let (mut b, mut fb) = (T::one(), phi(T::one()));
    *evals += 1;
    if fb > fa {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = b + gold * (b - a);
    let mut fc = phi(c);
    *evals += 1;
    let mut guard = 0;
    while fc < fb && guard < 80 {
        guard += 1;
        a = b;
        fa = fb;
        b = c;
        fb = fc;
        c = b + gold * (b - a);
        fc = phi(c);
        *evals += 1;
    }
    let _ = fa;
    if fc < fb {
        return if fc < fx { (c, fc) } else { (T::zero(), fx) };
    }
    let (t, v) = brent(&mut phi, a, b, c, fb, T::lit(2e-8), evals);
    if v < fx {
        (t, v)
    } else if fb < fx {
        (b, fb)
    } else {
        (T::zero(), fx)
    }
}

/// Powell's direction-set method with Brent line minimisations.
pub fn powell_minimize<T: Scalar, O: Objective<T> + ?Sized>(
    obj: &mut O,
    x0: &[T],
    opts: &OptimOptions,
) -> Result<OptimResult<T>> {
    let n = x0.len();
    let f0 = obj.value(x0)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut evals = 1;
    let mut f = |p: &[T]| match obj.value(p) {
        Ok(v) if v.is_finite() => v,
        _ => T::infinity(),
    };
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut trace = vec![f0];
    let mut dirs: Vec<Vec<T>> = (0..n)
        .map(|i| {
            let mut e = vec![T::zero(); n];
            e[i] = T::one();
            e
        })
        .collect();
    let rel_tol = T::lit(opts.rel_tol);
    let mut status = OptimStatus::MaxIterations;
    let mut iterations = 0;
    if n == 0 {
        status = OptimStatus::GradientTolerance;
    }
    while n > 0 && iterations < opts.max_iters {
        iterations += 1;
        let x_start = x.clone();
        let f_start = fx;
        let mut biggest = 0;
        let mut biggest_drop = T::zero();
        for (i, d) in dirs.iter().enumerate() {
            let before = fx;
            let (t, v) = line_minimize(&mut f, &x, d, fx, &mut evals);
            if v < fx {
                x = axpy(&x, t, d);
                fx = v;
            }
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest = i;
            }
        }
        trace.push(fx);
        if T::lit(2.0) * (f_start - fx) <= rel_tol * (f_start.abs() + fx.abs()) + T::lit(1e-300) {
            status = OptimStatus::RelativeTolerance;
            break;
        }
        let new_dir: Vec<T> = x.iter().zip(&x_start).map(|(&a, &b)| a - b).collect();
        let extrap: Vec<T> = x.iter().zip(&x_start).map(|(&a, &b)| T::lit(2.0) * a - b).collect();
        let fe = f(&extrap);
        evals += 1;
        if fe < f_start {
            let t = T::lit(2.0) * (f_start - T::lit(2.0) * fx + fe) * (f_start - fx - biggest_drop).powi(2)
                - biggest_drop * (f_start - fe).powi(2);
            if t < T::zero() {
                let (s, v) = line_minimize(&mut f, &x, &new_dir, fx, &mut evals);
                if v < fx {
                    x = axpy(&x, s, &new_dir);
                    fx = v;
                }
                dirs.remove(biggest);
                dirs.push(new_dir);
            }
        }
    }
    Ok(OptimResult {
        x,
        f: fx,
        f0,
        iterations,
        evaluations: evals,
        status,
        trace,
    })
}

/// Levenberg–Marquardt for `min Σ r_i(θ)²` with a forward-difference Jacobian.
pub fn levenberg_marquardt<T: Scalar, R: FnMut(&[T]) -> Result<Vec<T>>>(
    mut resid: R,
    x0: &[T],
    opts: &OptimOptions,
) -> Result<OptimResult<T>> {
    let n = x0.len();
    let ss = |r: &[T]| r.iter().map(|v| *v * *v).sum::<T>();
    let mut r = resid(x0)?;
    let f0 = ss(&r);
    if !f0.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    let mut evals = 1;
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut trace = vec![f0];
    let mut mu = T::lit(1e-3);
    let mut status = OptimStatus::MaxIterations;
    let mut iterations = 0;
    let m = r.len();
    let step = T::lit(1.5e-8).sqrt().max(T::lit(1e-7));
    let policy = JitterSchedule::default();
    while n > 0 && iterations < opts.max_iters {
        iterations += 1;
        let mut jac = Array2::<T>::zeros((m, n));
        let mut xp = x.clone();
        for j in 0..n {
            let h = step * T::one().max(x[j].abs());
            xp[j] = x[j] + h;
            let rp = resid(&xp);
            evals += 1;
            xp[j] = x[j];
            let rp = match rp {
                Ok(v) if v.iter().all(|e| e.is_finite()) => v,
                _ => {
                    // backward difference when the forward probe leaves the domain
                    xp[j] = x[j] - h;
                    let rm = resid(&xp)?;
                    evals += 1;
                    xp[j] = x[j];
                    for i in 0..m {
                        jac[[i, j]] = (r[i] - rm[i]) / h;
                    }
                    continue;
                }
            };
            for i in 0..m {
                jac[[i, j]] = (rp[i] - r[i]) / h;
            }
        }
        let ra = Array1::from(r.clone());
        let jtj = jac.t().dot(&jac);
        let jtr = jac.t().dot(&ra);
        if inf_norm(jtr.as_slice().unwrap()) <= T::lit(opts.grad_tol) * T::one().max(fx) {
            status = OptimStatus::GradientTolerance;
            break;
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                let dii = jtj[[i, i]].max(T::lit(1e-12));
                a[[i, i]] += mu * dii;
            }
            let delta = match cholesky_with_jitter(a.view(), &policy) {
                Ok(c) => c.solve(jtr.view()),
                Err(_) => {
                    mu *= T::lit(10.0);
                    continue;
                }
            };
            let xn: Vec<T> = x.iter().zip(delta.iter()).map(|(&a, &d)| a - d).collect();
            evals += 1;
            match resid(&xn) {
                Ok(rn) if rn.iter().all(|v| v.is_finite()) && ss(&rn) < fx => {
                    let fnew = ss(&rn);
                    let rel = (fx - fnew) / fx.max(T::lit(1e-300));
                    x = xn;
                    r = rn;
                    fx = fnew;
                    mu = (mu * T::lit(0.3)).max(T::lit(1e-12));
                    improved = true;
                    if rel <= T::lit(opts.rel_tol) {
                        status = OptimStatus::RelativeTolerance;
                    }
                    break;
                }
                _ => mu *= T::lit(10.0),
            }
            if mu > T::lit(1e16) {
                break;
            }
        }
        trace.push(fx);
        if !improved {
            status = OptimStatus::LineSearchFailed;
            break;
        }
        if status == OptimStatus::RelativeTolerance {
            break;
        }
    }
    Ok(OptimResult {
        x,
        f: fx,
        f0,
        iterations,
        evaluations: evals,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rosenbrock(p: &[f64]) -> Result<f64> {
        Ok((1.0 - p[0]).powi(2) + 100.0 * (p[1] - p[0] * p[0]).powi(2))
    }

    struct Rosen;
    impl Objective<f64> for Rosen {
        fn value(&mut self, p: &[f64]) -> Result<f64> {
            rosenbrock(p)
        }
        fn value_and_grad(&mut self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
            let (x, y) = (p[0], p[1]);
            Ok((
                rosenbrock(p)?,
                vec![-2.0 * (1.0 - x) - 400.0 * x * (y - x * x), 200.0 * (y - x * x)],
            ))
        }
    }

    #[test]
    fn fd_examples() {
        let g = finite_diff_grad(|p: &[f64]| Ok(p[0] * p[0]), &[3.0], 1e-6).unwrap();
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-6);
        let g = finite_diff_grad(|_: &[f64]| Ok(2.5), &[1.0, -4.0], 1e-6).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(matches!(
            finite_diff_grad(|p: &[f64]| Ok(if p[0] > 0.0 { f64::NAN } else { 0.0 }), &[0.0], 1e-6),
            Err(Error::NonFiniteObjective)
        ));
    }

    #[test]
    fn bfgs_quadratic() {
        let c = [1.0, -2.0, 3.5, 0.25];
        let mut obj = FnObjective::new(|p: &[f64]| Ok(p.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum()));
        let r = bfgs_minimize(&mut obj, &[0.0; 4], &OptimOptions::default()).unwrap();
        for (a, b) in r.x.iter().zip(&c) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
        assert!(r.iterations <= 4 + 5, "{} iterations", r.iterations);
    }

    #[test]
    fn bfgs_rosenbrock() {
        let r = bfgs_minimize(&mut Rosen, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-4);
        assert_abs_diff_eq!(r.x[1], 1.0, epsilon = 1e-4);
        assert!(r.f <= r.f0);
        let mut fd = FnObjective::new(rosenbrock);
        let r = bfgs_minimize(&mut fd, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert_abs_diff_eq!(r.x[0], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn powell_examples() {
        let mut q = FnObjective::new(|p: &[f64]| Ok((p[0] - 1.0).powi(2) + 3.0 * (p[1] + 2.0).powi(2) + p[0] * p[1]));
        let r = powell_minimize(&mut q, &[5.0, 5.0], &OptimOptions::default()).unwrap();
        // ∇ = 0: 2(x−1) + y = 0, 6(y+2) + x = 0
        let (x, y) = (24.0 / 11.0, -26.0 / 11.0);
        let fmin = (x - 1.0f64).powi(2) + 3.0 * (y + 2.0f64).powi(2) + x * y;
        assert!(r.f - fmin <= 1e-8, "{} vs {}", r.f, fmin);
        assert_abs_diff_eq!(r.x[0], x, epsilon = 1e-5);
        assert_abs_diff_eq!(r.x[1], y, epsilon = 1e-5);
        let mut a = FnObjective::new(|p: &[f64]| Ok(p[0].abs()));
        let r = powell_minimize(&mut a, &[3.3], &OptimOptions::default()).unwrap();
        assert!(r.x[0].abs() < 1e-4);
        let r = powell_minimize(&mut Rosen, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert!(r.f <= r.f0);
    }

    #[test]
    fn lm_fits_exponential() {
        let ts: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = ts.iter().map(|t| 2.0 * (-1.3 * t).exp()).collect();
        let r = levenberg_marquardt(
            |p: &[f64]| Ok(ts.iter().zip(&ys).map(|(t, y)| p[0] * (p[1] * t).exp() - y).collect()),
            &[1.0, 0.0],
            &OptimOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(r.x[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(r.x[1], -1.3, epsilon = 1e-6);
    }
}
