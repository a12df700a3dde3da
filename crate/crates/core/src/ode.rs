//! Fixed-step classical Runge–Kutta integration and bisection event localization.

use crate::scalar::Scalar;

/// Classical fourth-order Runge–Kutta stepper with reusable stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Scalar> Default for Rk4<T> {
    fn default() -> Self {
        Self::new(0)
    }
}

impl<T: Scalar> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        let z = vec![T::zero(); dim];
        Rk4 { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    fn resize(&mut self, dim: usize) {
        for b in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            b.resize(dim, T::zero());
        }
    }

    /// Advances `y` by one step of size `h` under the autonomous system `rhs(y, dydt)`.
    pub fn step<E, F>(&mut self, y: &[T], h: T, out: &mut [T], mut rhs: F) -> Result<(), E>
    where
        F: FnMut(&[T], &mut [T]) -> Result<(), E>,
    {
        let n = y.len();
        self.resize(n);
        let half = h * T::lit(0.5);

        rhs(y, &mut self.k1)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k1[i];
        }
        rhs(&self.tmp, &mut self.k2)?;
        for i in 0..n {
            self.tmp[i] = y[i] + half * self.k2[i];
        }
        rhs(&self.tmp, &mut self.k3)?;
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        rhs(&self.tmp, &mut self.k4)?;
        let sixth = h / T::lit(6.0);
        for i in 0..n {
            out[i] = y[i]
                + sixth * (self.k1[i] + T::lit(2.0) * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
        Ok(())
    }

    /// Integrates from `y0` over `[0, span]` with at most `dt`-sized steps.
    pub fn integrate<E, F>(&mut self, y0: &[T], span: T, dt: T, mut rhs: F) -> Result<Vec<T>, E>
    where
        F: FnMut(&[T], &mut [T]) -> Result<(), E>,
    {
        let mut y = y0.to_vec();
        let mut next = y0.to_vec();
        let mut t = T::zero();
        while t < span {
            let h = dt.min(span - t);
            self.step(&y, h, &mut next, &mut rhs)?;
            std::mem::swap(&mut y, &mut next);
            t = t + h;
        }
        Ok(y)
    }
}

/// Result of a bisection search over a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket<T> {
    /// Largest probed offset at which the predicate was false.
    pub lo: T,
    /// Smallest probed offset at which the predicate was true.
    pub hi: T,
}

/// Outcome of probing one point of a bisection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Probe {
    /// The event has happened by this point.
    pub crossed: bool,
    /// The state here is close enough to the event to be accepted.
    pub settled: bool,
}

/// Locates the switching point of a monotone predicate on `[lo, hi]`, where the
/// event has not happened at `lo` and has at `hi`. Bisection stops once the
/// bracket is narrower than `tol` and the probe at `hi` was settled, when the
/// bracket can no longer be split in floating point, or after `max_iter` halvings.
pub fn bisect<T, E, P>(mut lo: T, mut hi: T, mut hi_settled: bool, tol: T, max_iter: usize, mut probe: P) -> Result<Bracket<T>, E>
where
    T: Scalar,
    P: FnMut(T) -> Result<Probe, E>,
{
    for _ in 0..max_iter {
        if hi - lo <= tol && hi_settled {
            break;
        }
        let mid = lo + (hi - lo) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let p = probe(mid)?;
        if p.crossed {
            hi = mid;
            hi_settled = p.settled;
        } else {
            lo = mid;
        }
    }
    Ok(Bracket { lo, hi })
}
