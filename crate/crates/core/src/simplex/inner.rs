use ndarray::ArrayView2;

use super::SolverSettings;
use crate::scalar::{dot, Scalar};

/// Result of one inner solve.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution<T> {
    pub weights: Vec<T>,
    /// `sum_k v_k (x_treated_k - sum_j w_j x_jk)^2` at `weights`.
    pub objective: T,
    /// `max_j |w_j - P(w - grad)_j|`; zero exactly at a stationary point.
    pub projected_gradient: T,
    /// Frank-Wolfe gap, an upper bound on `objective - optimum`.
    pub optimality_gap: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}`.
pub fn project_to_simplex<T: Scalar>(y: &[T]) -> Vec<T> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite input"));
    let mut cumsum = T::zero();
    let mut theta = T::zero();
    for (i, &u) in sorted.iter().enumerate() {
        cumsum = cumsum + u;
        let t = (cumsum - T::one()) / T::lit((i + 1) as f64);
        if u - t > T::zero() {
            theta = t;
        }
    }
    y.iter().map(|&v| (v - theta).max(T::zero())).collect()
}

/// `f(w) = (x - D'w)' diag(v) (x - D'w)` with donors as rows of `D`.
struct Quadratic<'a, T> {
    target: &'a [T],
    donors: ArrayView2<'a, T>,
    v: &'a [T],
    /// Row-major `J x J` matrix `H = D diag(v) D'`; the gradient is `2(Hw - b)`.
    h: Vec<T>,
    /// `b = D diag(v) x`
    b: Vec<T>,
    j: usize,
}

impl<'a, T: Scalar> Quadratic<'a, T> {
    fn new(target: &'a [T], donors: ArrayView2<'a, T>, v: &'a [T]) -> Self {
        let (j, k) = donors.dim();
        let mut h = vec![T::zero(); j * j];
        let mut b = vec![T::zero(); j];
        for a in 0..j {
            for c in a..j {
                let mut s = T::zero();
                for p in 0..k {
                    s = s + v[p] * donors[[a, p]] * donors[[c, p]];
                }
                h[a * j + c] = s;
                h[c * j + a] = s;
            }
            b[a] = (0..k).map(|p| v[p] * donors[[a, p]] * target[p]).sum();
        }
        Self {
            target,
            donors,
            v,
            h,
            b,
            j,
        }
    }

    /// Evaluated through the residual to avoid cancellation near zero.
    fn value(&self, w: &[T]) -> T {
        let k = self.target.len();
        (0..k)
            .map(|p| {
                let fitted: T = (0..self.j).map(|a| w[a] * self.donors[[a, p]]).sum();
                let r = self.target[p] - fitted;
                self.v[p] * r * r
            })
            .sum()
    }

    fn h_times(&self, d: &[T]) -> Vec<T> {
        (0..self.j)
            .map(|a| dot(&self.h[a * self.j..(a + 1) * self.j], d))
            .collect()
    }

    fn gradient(&self, w: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        self.h_times(w)
            .into_iter()
            .zip(&self.b)
            .map(|(hw, &b)| two * (hw - b))
            .collect()
    }

    /// `f(cand) - f(w)` from the gradient at `w`. Exact for a quadratic and,
    /// unlike a difference of two values, accurate when the change is tiny.
    /// The gradient is shifted by `g'w` first; the shift is free on the
    /// simplex and keeps renormalization error out of the product.
    fn change(&self, w: &[T], g: &[T], cand: &[T]) -> T {
        let c = dot(w, g);
        let d = diff(cand, w);
        let gd: T = g.iter().zip(&d).map(|(&gi, &di)| (gi - c) * di).sum();
        gd + dot(&d, &self.h_times(&d))
    }

    /// Gershgorin bound on the gradient's Lipschitz constant.
    fn lipschitz(&self) -> T {
        let row_max = (0..self.j)
            .map(|a| {
                self.h[a * self.j..(a + 1) * self.j]
                    .iter()
                    .map(|x| x.abs())
                    .sum::<T>()
            })
            .fold(T::zero(), T::max);
        T::lit(2.0) * row_max
    }

    /// Conjugate-gradient descent on the face spanned by `support`, moving
    /// from `w` and stopping at the first coordinate that would turn
    /// negative. Works on singular faces, where the minimizer is not unique.
    /// The flag reports whether a coordinate was dropped.
    fn face_descent(&self, w: &[T], g: &[T], support: &[usize], tol: T) -> (Vec<T>, bool) {
        let two = T::lit(2.0);
        let s = T::lit(support.len() as f64);
        let reduce = |g: &[T]| -> Vec<T> {
            let mean = support.iter().map(|&i| g[i]).sum::<T>() / s;
            let mut r = vec![T::zero(); self.j];
            for &i in support {
                r[i] = mean - g[i];
            }
            r
        };
        let mut w = w.to_vec();
        let mut g = g.to_vec();
        let mut r = reduce(&g);
        let mut rr = dot(&r, &r);
        let mut p = r.clone();
        let mut blocked = false;
        for _ in 0..2 * support.len() {
            if rr.sqrt() <= tol {
                break;
            }
            let hp: Vec<T> = self.h_times(&p).into_iter().map(|x| two * x).collect();
            let php = dot(&p, &hp);
            if !(php > T::zero()) {
                break;
            }
            let alpha = rr / php;
            let mut t_max = alpha;
            let mut blocking = None;
            for &i in support {
                if p[i] < T::zero() {
                    let t = -w[i] / p[i];
                    if t < t_max {
                        t_max = t;
                        blocking = Some(i);
                    }
                }
            }
            for &i in support {
                w[i] = w[i] + t_max * p[i];
            }
            if let Some(i) = blocking {
                w[i] = T::zero();
                blocked = true;
                break;
            }
            for (gi, hi) in g.iter_mut().zip(&hp) {
                *gi = *gi + alpha * *hi;
            }
            r = reduce(&g);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = *ri + beta * *pi;
            }
        }
        clean(&mut w);
        (w, blocked)
    }
}

fn clean<T: Scalar>(w: &mut [T]) {
    for x in w.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
    let s: T = w.iter().copied().sum();
    if s > T::zero() {
        for x in w.iter_mut() {
            *x = *x / s;
        }
    }
}

fn diff<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

fn stationarity<T: Scalar>(w: &[T], g: &[T]) -> T {
    let step: Vec<T> = w.iter().zip(g).map(|(&a, &b)| a - b).collect();
    project_to_simplex(&step)
        .iter()
        .zip(w)
        .map(|(&p, &x)| (p - x).abs())
        .fold(T::zero(), T::max)
}

fn fw_gap<T: Scalar>(w: &[T], g: &[T]) -> T {
    let min_g = g.iter().copied().fold(T::infinity(), T::min);
    (dot(w, g) - min_g).max(T::zero())
}

fn support_of<T: Scalar>(w: &[T]) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] > T::zero()).collect()
}

/// Solves `min_w sum_k v_k (target_k - sum_j w_j donors[j, k])^2` over the
/// probability simplex.
///
/// Starts at the best single donor (first in order on ties) and alternates
/// projected-gradient steps with exact line search and conjugate-gradient
/// steps on the face it lands on. Stops when the projected
/// gradient norm falls to `settings.inner_tolerance`; otherwise returns
/// the best iterate with `converged == false`.
///
/// Ties between optima are broken towards earlier donors: a single donor
/// attaining the optimum is returned as a vertex, and weight on donors with
/// identical predictor rows is moved to the first of them.
pub fn solve_w<T: Scalar>(
    target: &[T],
    donors: ArrayView2<'_, T>,
    v: &[T],
    settings: &SolverSettings,
) -> InnerSolution<T> {
    let (j, k) = donors.dim();
    assert!(j >= 1, "solve_w needs at least one donor");
    assert_eq!(k, target.len(), "predictor count mismatch");
    assert_eq!(k, v.len(), "predictor weight count mismatch");

    let q = Quadratic::new(target, donors, v);
    let tol = T::tol(settings.inner_tolerance);

    let vertex_values: Vec<T> = (0..j)
        .map(|a| {
            let mut e = vec![T::zero(); j];
            e[a] = T::one();
            q.value(&e)
        })
        .collect();
    let mut best_vertex = 0;
    for a in 1..j {
        if vertex_values[a] < vertex_values[best_vertex] {
            best_vertex = a;
        }
    }
    let mut w = vec![T::zero(); j];
    w[best_vertex] = T::one();

    let lip = q.lipschitz();
    let step = if lip > T::zero() { T::one() / lip } else { T::one() };
    let two = T::lit(2.0);

    let mut iterations = 0;
    let mut converged = false;
    let mut g = q.gradient(&w);
    let mut pg = stationarity(&w, &g);

    while iterations < settings.inner_max_iterations {
        if pg <= tol {
            converged = true;
            break;
        }
        iterations += 1;

        let trial: Vec<T> = w.iter().zip(&g).map(|(&x, &gi)| x - step * gi).collect();
        let d: Vec<T> = project_to_simplex(&trial)
            .into_iter()
            .zip(&w)
            .map(|(y, &x)| y - x)
            .collect();
        let gd = dot(&g, &d);
        let dhd = dot(&d, &q.h_times(&d));
        let alpha = if dhd > T::zero() {
            (-gd / (two * dhd)).min(T::one())
        } else {
            T::one()
        };
        if alpha > T::zero() && gd < T::zero() {
            let mut cand: Vec<T> = w.iter().zip(&d).map(|(&x, &di)| x + alpha * di).collect();
            clean(&mut cand);
            if q.change(&w, &g, &cand) <= T::zero() {
                w = cand;
            }
        }

        // Explore the current face, restarting on the smaller face each
        // time a coordinate hits zero.
        for _ in 0..j {
            let support = support_of(&w);
            if support.len() < 2 {
                break;
            }
            let gw = q.gradient(&w);
            let (cand, blocked) = q.face_descent(&w, &gw, &support, tol * T::lit(1e-3));
            if q.change(&w, &gw, &cand) > T::zero() {
                break;
            }
            w = cand;
            if !blocked {
                break;
            }
        }

        g = q.gradient(&w);
        pg = stationarity(&w, &g);
    }
    if !converged && pg <= tol {
        converged = true;
    }
    let f = q.value(&w);

    // Tie-breaks towards earlier donors.
    let tie = tol * T::one().max(f.abs());
    if vertex_values[best_vertex] <= f + tie && w[best_vertex] != T::one() {
        w = vec![T::zero(); j];
        w[best_vertex] = T::one();
    }
    merge_duplicate_donors(&mut w, donors, v);

    let g = q.gradient(&w);
    let sol = InnerSolution {
        objective: q.value(&w),
        projected_gradient: stationarity(&w, &g),
        optimality_gap: fw_gap(&w, &g),
        weights: w,
        iterations,
        converged,
    };
    debug_assert!(super::check_simplex(&sol.weights, false));
    sol
}

fn merge_duplicate_donors<T: Scalar>(w: &mut [T], donors: ArrayView2<'_, T>, v: &[T]) {
    let j = w.len();
    let active: Vec<usize> = (0..v.len()).filter(|&p| v[p] > T::zero()).collect();
    let same = |a: usize, b: usize| active.iter().all(|&p| donors[[a, p]] == donors[[b, p]]);
    for a in 0..j {
        for b in a + 1..j {
            if w[b] > T::zero() && same(a, b) {
                w[a] = w[a] + w[b];
                w[b] = T::zero();
            }
        }
    }
}
