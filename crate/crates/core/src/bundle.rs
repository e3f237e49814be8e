//! Piecewise-linear minorant models of the smooth loss, built from function
//! values and gradients at past iterates. Four policies: a single
//! linearization plus a scalar floor (Polyak), a FIFO window of cuts
//! (cutting-plane), the window plus the floor, and a two-cut scheme that
//! compresses history into one aggregate cut.

use crate::{Error, Result, Vector};

/// One affine piece `x -> slope^T x + intercept`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub slope: Vector,
    pub intercept: f64,
    /// Update event the cut was built at.
    pub origin: u64,
}

impl Cut {
    /// Tangent-style cut from a value/gradient pair at `x0`:
    /// the affine function agreeing with `value` at `x0` with slope `grad`.
    pub fn linearization(value: f64, grad: Vector, x0: &Vector, origin: u64) -> Result<Self> {
        let intercept = value - grad.dot(x0);
        let cut = Cut { slope: grad, intercept, origin };
        cut.check_finite()?;
        Ok(cut)
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.slope.dot(x) + self.intercept
    }

    fn check_finite(&self) -> Result<()> {
        if !self.intercept.is_finite() || self.slope.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bundle cut".into()));
        }
        Ok(())
    }
}

/// Which cuts the model retains across updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPolicy {
    /// One linearization plus the floor.
    Polyak,
    /// FIFO window of up to `capacity` linearizations, newest always present.
    CuttingPlane { capacity: usize },
    /// The window plus the floor.
    PolyakCuttingPlane { capacity: usize },
    /// Aggregate cut plus fresh linearization.
    TwoCut,
}

impl ModelPolicy {
    pub fn uses_floor(&self) -> bool {
        matches!(self, ModelPolicy::Polyak | ModelPolicy::PolyakCuttingPlane { .. })
    }

    fn capacity(&self) -> Option<usize> {
        match self {
            ModelPolicy::CuttingPlane { capacity }
            | ModelPolicy::PolyakCuttingPlane { capacity } => Some(*capacity),
            _ => None,
        }
    }
}

/// The model `m(x) = max(cuts, floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleModel {
    policy: ModelPolicy,
    cuts: Vec<Cut>,
    floor: Option<f64>,
}

impl BundleModel {
    /// Builds the model from the first value/gradient pair. Floored policies
    /// require `floor <= value`.
    pub fn initial(
        policy: ModelPolicy,
        value: f64,
        grad: Vector,
        x0: &Vector,
        floor: Option<f64>,
    ) -> Result<Self> {
        if let Some(cap) = policy.capacity() {
            if cap == 0 {
                return Err(Error::PolicyMismatch("window capacity must be at least 1".into()));
            }
        }
        let floor = if policy.uses_floor() {
            let c = floor.ok_or_else(|| {
                Error::PolicyMismatch("floored policy requires a lower bound".into())
            })?;
            if c > value {
                return Err(Error::FloorAboveValue { floor: c, value });
            }
            Some(c)
        } else {
            None
        };
        let cut = Cut::linearization(value, grad, x0, 0)?;
        Ok(BundleModel { policy, cuts: vec![cut], floor })
    }

    pub fn policy(&self) -> ModelPolicy {
        self.policy
    }

    pub fn cuts(&self) -> &[Cut] {
        &self.cuts
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    /// Number of affine pieces including the floor.
    pub fn piece_count(&self) -> usize {
        self.cuts.len() + usize::from(self.floor.is_some())
    }

    /// `m(x)`: maximum over cuts and the floor.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        if self.cuts.is_empty() {
            return Err(Error::EmptyModel);
        }
        let best = self.cuts.iter().map(|c| c.eval(x)).fold(f64::NEG_INFINITY, f64::max);
        Ok(match self.floor {
            Some(c) => best.max(c),
            None => best,
        })
    }

    /// Slope of an active piece at `x`. Ties break toward the lowest cut
    /// index; the floor is considered last and contributes a zero slope.
    pub fn subgradient(&self, x: &Vector) -> Result<Vector> {
        if self.cuts.is_empty() {
            return Err(Error::EmptyModel);
        }
        let mut best_idx = 0;
        let mut best_val = self.cuts[0].eval(x);
        for (idx, cut) in self.cuts.iter().enumerate().skip(1) {
            let v = cut.eval(x);
            if v > best_val {
                best_val = v;
                best_idx = idx;
            }
        }
        if let Some(c) = self.floor {
            if c > best_val {
                return Ok(Vector::zeros(x.len()));
            }
        }
        Ok(self.cuts[best_idx].slope.clone())
    }

    /// Polyak refresh: replace the single cut with the linearization at `x`,
    /// keeping the floor. Fails if the stored floor exceeds `value`.
    pub fn update_polyak(
        &mut self,
        value: f64,
        grad: Vector,
        x: &Vector,
        origin: u64,
    ) -> Result<()> {
        if self.policy != ModelPolicy::Polyak {
            return Err(Error::PolicyMismatch(format!(
                "update_polyak on {:?} model",
                self.policy
            )));
        }
        let floor = self.floor.expect("polyak model always carries a floor");
        if floor > value {
            return Err(Error::FloorAboveValue { floor, value });
        }
        self.cuts = vec![Cut::linearization(value, grad, x, origin)?];
        Ok(())
    }

    /// Appends the linearization at `x`; evicts the oldest cut past the
    /// window capacity.
    pub fn update_cutting_plane(
        &mut self,
        value: f64,
        grad: Vector,
        x: &Vector,
        origin: u64,
    ) -> Result<()> {
        let capacity = match self.policy {
            ModelPolicy::CuttingPlane { capacity }
            | ModelPolicy::PolyakCuttingPlane { capacity } => capacity,
            other => {
                return Err(Error::PolicyMismatch(format!(
                    "update_cutting_plane on {other:?} model"
                )))
            }
        };
        if let Some(floor) = self.floor {
            if floor > value {
                return Err(Error::FloorAboveValue { floor, value });
            }
        }
        self.cuts.push(Cut::linearization(value, grad, x, origin)?);
        while self.cuts.len() > capacity {
            self.cuts.remove(0);
        }
        Ok(())
    }

    /// Two-cut recursion: the new model is the maximum of (i) the aggregate
    /// cut that agrees with the old model at `x_next` with one of its active
    /// slopes, and (ii) the fresh linearization at `x_next`.
    pub fn update_two_cut(
        &mut self,
        x_next: &Vector,
        value_next: f64,
        grad_next: Vector,
        origin: u64,
    ) -> Result<()> {
        if self.policy != ModelPolicy::TwoCut {
            return Err(Error::PolicyMismatch(format!(
                "update_two_cut on {:?} model",
                self.policy
            )));
        }
        let model_val = self.value(x_next)?;
        let g_hat = self.subgradient(x_next)?;
        let aggregate = Cut::linearization(model_val, g_hat, x_next, origin)?;
        let fresh = Cut::linearization(value_next, grad_next, x_next, origin)?;
        self.cuts = vec![aggregate, fresh];
        Ok(())
    }

    /// Policy dispatch used by the node update loop: refresh the model with
    /// the value/gradient pair observed at the new iterate.
    pub fn update(&mut self, value: f64, grad: Vector, x: &Vector, origin: u64) -> Result<()> {
        match self.policy {
            ModelPolicy::Polyak => self.update_polyak(value, grad, x, origin),
            ModelPolicy::CuttingPlane { .. } | ModelPolicy::PolyakCuttingPlane { .. } => {
                self.update_cutting_plane(value, grad, x, origin)
            }
            ModelPolicy::TwoCut => self.update_two_cut(x, value, grad, origin),
        }
    }
}
