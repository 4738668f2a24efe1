//! Scalar reverse-mode automatic differentiation.
//!
//! All differentiable code in this crate is written once, generic over
//! [`Real`], and instantiated either with `f64` (plain evaluation) or with
//! [`Var`] (recorded on a thread-local tape for gradients).
//!
//! The tape is flat: every recorded node stores at most two parents and the
//! local partial derivatives towards them. Constants are never recorded.
//!
//! ```
//! use physmotion::ad::{Real, Tape, Var};
//!
//! let tape = Tape::begin();
//! let x = tape.input(3.0);
//! let y = x * x + x.sin();
//! let grads = tape.gradient(y);
//! assert!((grads[x.index().unwrap()] - (6.0 + 3.0f64.cos())).abs() < 1e-12);
//! ```

use std::cell::RefCell;
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar field used by every differentiable routine.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn val(self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn atan2(self, x: Self) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn powi2(self) -> Self {
        self * self
    }
    /// `max(self, 0)`, with derivative 0 on the inactive branch and at the kink.
    fn relu(self) -> Self {
        if self.val() > 0.0 {
            self
        } else {
            Self::zero()
        }
    }
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        f64::atan2(self, x)
    }
}

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

thread_local! {
    static TAPE: RefCell<Vec<Node>> = const { RefCell::new(Vec::new()) };
}

#[inline]
fn push(parents: [u32; 2], partials: [f64; 2]) -> u32 {
    TAPE.with(|t| {
        let mut t = t.borrow_mut();
        let idx = t.len() as u32;
        t.push(Node { parents, partials });
        idx
    })
}

/// A value tracked on the current thread's tape.
#[derive(Clone, Copy, Debug)]
pub struct Var {
    val: f64,
    idx: u32,
}

impl Var {
    /// Tape index, or `None` for an untracked constant.
    pub fn index(&self) -> Option<usize> {
        (self.idx != NONE).then_some(self.idx as usize)
    }

    #[inline]
    fn unary(self, val: f64, d: f64) -> Var {
        if self.idx == NONE {
            return Var { val, idx: NONE };
        }
        Var {
            val,
            idx: push([self.idx, NONE], [d, 0.0]),
        }
    }

    #[inline]
    fn binary(a: Var, b: Var, val: f64, da: f64, db: f64) -> Var {
        match (a.idx == NONE, b.idx == NONE) {
            (true, true) => Var { val, idx: NONE },
            (false, true) => Var {
                val,
                idx: push([a.idx, NONE], [da, 0.0]),
            },
            (true, false) => Var {
                val,
                idx: push([b.idx, NONE], [db, 0.0]),
            },
            (false, false) => Var {
                val,
                idx: push([a.idx, b.idx], [da, db]),
            },
        }
    }
}

/// Handle to the thread-local tape. Creating one clears the tape; only one
/// recording may be active per thread at a time.
pub struct Tape {
    _not_send: std::marker::PhantomData<*const ()>,
}

impl Tape {
    pub fn begin() -> Tape {
        TAPE.with(|t| t.borrow_mut().clear());
        Tape {
            _not_send: std::marker::PhantomData,
        }
    }

    /// Registers an independent variable.
    pub fn input(&self, v: f64) -> Var {
        Var {
            val: v,
            idx: push([NONE, NONE], [0.0, 0.0]),
        }
    }

    pub fn len(&self) -> usize {
        TAPE.with(|t| t.borrow().len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adjoints of `output` with respect to every node on the tape.
    pub fn gradient(&self, output: Var) -> Vec<f64> {
        let mut adj = Vec::new();
        self.gradient_into(output, &mut adj);
        adj
    }

    /// Like [`Tape::gradient`] but reuses `adj` as the adjoint buffer.
    pub fn gradient_into(&self, output: Var, adj: &mut Vec<f64>) {
        TAPE.with(|t| {
            let t = t.borrow();
            adj.clear();
            adj.resize(t.len(), 0.0);
            if output.idx == NONE {
                return;
            }
            adj[output.idx as usize] = 1.0;
            for i in (0..=output.idx as usize).rev() {
                let a = adj[i];
                if a == 0.0 {
                    continue;
                }
                let n = t[i];
                if n.parents[0] != NONE {
                    adj[n.parents[0] as usize] += n.partials[0] * a;
                }
                if n.parents[1] != NONE {
                    adj[n.parents[1] as usize] += n.partials[1] * a;
                }
            }
        });
    }
}

impl Real for Var {
    #[inline]
    fn cst(v: f64) -> Self {
        Var { val: v, idx: NONE }
    }
    #[inline]
    fn val(self) -> f64 {
        self.val
    }
    #[inline]
    fn sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.unary(r, 0.5 / r)
    }
    #[inline]
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    #[inline]
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    #[inline]
    fn atan2(self, x: Self) -> Self {
        let (y0, x0) = (self.val, x.val);
        let r2 = x0 * x0 + y0 * y0;
        Var::binary(self, x, y0.atan2(x0), x0 / r2, -y0 / r2)
    }
}

impl Add for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: Var) -> Var {
        Var::binary(self, rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: Var) -> Var {
        Var::binary(self, rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: Var) -> Var {
        Var::binary(self, rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: Var) -> Var {
        let inv = 1.0 / rhs.val;
        let q = self.val * inv;
        Var::binary(self, rhs, q, inv, -q * inv)
    }
}

impl Neg for Var {
    type Output = Var;
    #[inline]
    fn neg(self) -> Var {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Var {
    type Output = Var;
    #[inline]
    fn add(self, rhs: f64) -> Var {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Var {
    type Output = Var;
    #[inline]
    fn sub(self, rhs: f64) -> Var {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Var {
    type Output = Var;
    #[inline]
    fn mul(self, rhs: f64) -> Var {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Var {
    type Output = Var;
    #[inline]
    fn div(self, rhs: f64) -> Var {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl AddAssign for Var {
    #[inline]
    fn add_assign(&mut self, rhs: Var) {
        *self = *self + rhs;
    }
}

impl SubAssign for Var {
    #[inline]
    fn sub_assign(&mut self, rhs: Var) {
        *self = *self - rhs;
    }
}

impl MulAssign for Var {
    #[inline]
    fn mul_assign(&mut self, rhs: Var) {
        *self = *self * rhs;
    }
}
