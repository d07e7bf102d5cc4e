//! Reverse-mode tape.
//!
//! Every operation on a [`Var`] appends one node holding at most two parent
//! indices and the local partial derivatives. Nodes are appended in evaluation
//! order, so the tape is topologically sorted by construction and the adjoint
//! sweep is a single reverse pass.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::real::{self, Real};

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    fault: Cell<Option<&'static str>>,
}

/// A scalar recorded on a [`Tape`]. Constants carry no node.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == NONE {
            write!(f, "Var(const {})", self.val)
        } else {
            write!(f, "Var(#{} = {})", self.idx, self.val)
        }
    }
}

/// Adjoints of every node of a tape after a reverse sweep.
pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn wrt(&self, v: &Var<'_>) -> f64 {
        if v.idx == NONE {
            0.0
        } else {
            self.0[v.idx as usize]
        }
    }

    pub fn wrt_all(&self, vs: &[Var<'_>]) -> Vec<f64> {
        vs.iter().map(|v| self.wrt(v)).collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            fault: Cell::new(None),
        }
    }

    /// A new independent variable (leaf).
    pub fn var(&self, val: f64) -> Var<'_> {
        let idx = self.push([NONE, NONE], [0.0, 0.0]);
        Var {
            tape: self,
            idx,
            val,
        }
    }

    pub fn vars(&self, vals: &[f64]) -> Vec<Var<'_>> {
        vals.iter().map(|&v| self.var(v)).collect()
    }

    pub fn constant(&self, val: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: NONE,
            val,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// First non-differentiable operation encountered, if any.
    pub fn fault(&self) -> Option<&'static str> {
        self.fault.get()
    }

    fn flag(&self, what: &'static str) {
        if self.fault.get().is_none() {
            self.fault.set(Some(what));
        }
    }

    fn push(&self, parents: [u32; 2], partials: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len();
        assert!(idx < NONE as usize, "tape overflow");
        nodes.push(Node { parents, partials });
        idx as u32
    }

    /// Reverse sweep seeded with d(out)/d(out) = 1.
    pub fn adjoints(&self, out: &Var<'_>) -> Adjoints {
        self.adjoints_seeded(&[(*out, 1.0)])
    }

    /// Reverse sweep for the scalar Σ seed_k · out_k.
    pub fn adjoints_seeded(&self, seeds: &[(Var<'_>, f64)]) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0; nodes.len()];
        let mut top = 0usize;
        for (v, s) in seeds {
            if v.idx != NONE {
                adj[v.idx as usize] += s;
                top = top.max(v.idx as usize + 1);
            }
        }
        for i in (0..top).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = nodes[i];
            for k in 0..2 {
                let p = n.parents[k];
                if p != NONE {
                    adj[p as usize] += a * n.partials[k];
                }
            }
        }
        Adjoints(adj)
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn is_constant(&self) -> bool {
        self.idx == NONE
    }

    /// Same value, no gradient flow.
    pub fn detach(&self) -> Var<'t> {
        self.tape.constant(self.val)
    }

    fn unary(self, val: f64, d: f64) -> Var<'t> {
        if self.idx == NONE {
            return self.tape.constant(val);
        }
        let idx = self.tape.push([self.idx, NONE], [d, 0.0]);
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        match (self.idx == NONE, other.idx == NONE) {
            (true, true) => self.tape.constant(val),
            (false, true) => self.unary(val, da),
            (true, false) => other.unary(val, db),
            (false, false) => {
                let idx = self.tape.push([self.idx, other.idx], [da, db]);
                Var {
                    tape: self.tape,
                    idx,
                    val,
                }
            }
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        if rhs.val == 0.0 {
            self.tape.flag("division by zero");
        }
        let inv = 1.0 / rhs.val;
        let val = self.val * inv;
        self.binary(rhs, val, inv, -val * inv)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        rhs.unary(self - rhs.val, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        rhs.tape.constant(self) / rhs
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn value(&self) -> f64 {
        self.val
    }

    fn lift(&self, c: f64) -> Self {
        self.tape.constant(c)
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        if self.val <= 0.0 {
            self.tape.flag("log of a non-positive value");
        }
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        if self.val <= 0.0 {
            self.tape.flag("square root at or below zero");
        }
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }

    fn abs(self) -> Self {
        if self.val == 0.0 && self.idx != NONE {
            self.tape.flag("absolute value at zero");
        }
        self.unary(self.val.abs(), self.val.signum())
    }

    fn sigmoid(self) -> Self {
        let s = real::sigmoid(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn softplus(self) -> Self {
        self.unary(real::softplus(self.val), real::sigmoid(self.val))
    }

    fn norm_ppf(self) -> Self {
        let z = real::norm_ppf(self.val);
        // d/dp Φ⁻¹(p) = 1 / φ(z)
        self.unary(z, (0.5 * z * z + real::LN_SQRT_2PI).exp())
    }
}
