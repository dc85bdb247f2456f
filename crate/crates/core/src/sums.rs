//! Records, public bounds and the exact summary sums that drive all inference.
//!
//! Every quantity needed for the ratio and its delta-method variance can be
//! written in terms of at most seven weighted sums:
//!
//! `Σw, Σwy, Σws, Σw², Σwy², Σws², Σwys`
//!
//! With binary labels `Σwy == Σwy²`, and with unit weights additionally
//! `Σw == Σw²`, so only six or five distinct sums need to be released. Which
//! sums are released is decided by the public [`Bounds`], never by the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One observation: label, model score and sampling weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub y: f64,
    pub s: f64,
    pub w: f64,
}

impl Record {
    pub fn new(y: f64, s: f64, w: f64) -> Self {
        Self { y, s, w }
    }

    pub fn unweighted(y: f64, s: f64) -> Self {
        Self { y, s, w: 1.0 }
    }
}

/// Which sums are distinct and therefore released.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// All seven sums.
    Full7,
    /// Binary labels: `Σwy²` aliases `Σwy`.
    Binary6,
    /// Binary labels and unit weights: additionally `Σw²` aliases `Σw`.
    Unweighted5,
}

impl Profile {
    /// The sums that carry independent noise, in release order.
    pub fn released(self) -> &'static [SumField] {
        use SumField::*;
        match self {
            Profile::Full7 => &[W, WY, WS, W2, WY2, WS2, WYS],
            Profile::Binary6 => &[W, WY, WS, W2, WS2, WYS],
            Profile::Unweighted5 => &[W, WY, WS, WS2, WYS],
        }
    }

    /// Number of released sums.
    pub fn size(self) -> usize {
        self.released().len()
    }

    /// The released sum whose value `field` mirrors.
    pub fn canonical(self, field: SumField) -> SumField {
        match (self, field) {
            (Profile::Binary6 | Profile::Unweighted5, SumField::WY2) => SumField::WY,
            (Profile::Unweighted5, SumField::W2) => SumField::W,
            _ => field,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Profile::Full7 => "full7",
            Profile::Binary6 => "binary6",
            Profile::Unweighted5 => "unweighted5",
        }
    }
}

/// Identifies one of the seven sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SumField {
    W,
    WY,
    WS,
    W2,
    WY2,
    WS2,
    WYS,
}

impl SumField {
    pub const ALL: [SumField; 7] = [
        SumField::W,
        SumField::WY,
        SumField::WS,
        SumField::W2,
        SumField::WY2,
        SumField::WS2,
        SumField::WYS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SumField::W => "sum_w",
            SumField::WY => "sum_wy",
            SumField::WS => "sum_ws",
            SumField::W2 => "sum_w2",
            SumField::WY2 => "sum_wy2",
            SumField::WS2 => "sum_ws2",
            SumField::WYS => "sum_wys",
        }
    }

    /// The summand contributed by one record.
    pub fn summand(self, r: &Record) -> f64 {
        match self {
            SumField::W => r.w,
            SumField::WY => r.w * r.y,
            SumField::WS => r.w * r.s,
            SumField::W2 => r.w * r.w,
            SumField::WY2 => r.w * r.y * r.y,
            SumField::WS2 => r.w * r.s * r.s,
            SumField::WYS => r.w * r.y * r.s,
        }
    }
}

/// Seven named values, one per sum. Used for exact sums, noisy sums and
/// per-sum noise variances alike.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sums {
    pub sum_w: f64,
    pub sum_wy: f64,
    pub sum_ws: f64,
    pub sum_w2: f64,
    pub sum_wy2: f64,
    pub sum_ws2: f64,
    pub sum_wys: f64,
}

impl Sums {
    pub fn get(&self, field: SumField) -> f64 {
        match field {
            SumField::W => self.sum_w,
            SumField::WY => self.sum_wy,
            SumField::WS => self.sum_ws,
            SumField::W2 => self.sum_w2,
            SumField::WY2 => self.sum_wy2,
            SumField::WS2 => self.sum_ws2,
            SumField::WYS => self.sum_wys,
        }
    }

    pub fn set(&mut self, field: SumField, value: f64) {
        let slot = match field {
            SumField::W => &mut self.sum_w,
            SumField::WY => &mut self.sum_wy,
            SumField::WS => &mut self.sum_ws,
            SumField::W2 => &mut self.sum_w2,
            SumField::WY2 => &mut self.sum_wy2,
            SumField::WS2 => &mut self.sum_ws2,
            SumField::WYS => &mut self.sum_wys,
        };
        *slot = value;
    }

    pub fn from_fn(mut f: impl FnMut(SumField) -> f64) -> Self {
        let mut out = Sums::default();
        for field in SumField::ALL {
            out.set(field, f(field));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        SumField::ALL.iter().all(|&f| self.get(f).is_finite())
    }
}

/// Exact sums over a dataset, together with the declared profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumVector {
    #[serde(flatten)]
    pub sums: Sums,
    pub profile: Profile,
    /// Number of records. Private; never part of a release.
    pub count: usize,
}

impl SumVector {
    /// Elementwise sum of two vectors over disjoint datasets.
    pub fn merge(&self, other: &SumVector) -> Result<SumVector> {
        if self.profile != other.profile {
            return Err(Error::InvalidSums(format!(
                "cannot merge profiles {} and {}",
                self.profile.name(),
                other.profile.name()
            )));
        }
        Ok(SumVector {
            sums: Sums::from_fn(|f| self.sums.get(f) + other.sums.get(f)),
            profile: self.profile,
            count: self.count + other.count,
        })
    }
}

/// Public clipping bounds. Labels and scores are non-negative, weights
/// strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub y_lower: f64,
    pub y_upper: f64,
    pub s_lower: f64,
    pub s_upper: f64,
    pub w_lower: f64,
    pub w_upper: f64,
    /// Labels restricted to {0, 1}.
    pub binary: bool,
}

impl Bounds {
    /// Binary classifier with weights in `[w_lower, w_upper]`.
    pub fn binary(w_lower: f64, w_upper: f64) -> Result<Self> {
        let bounds = Bounds {
            y_lower: 0.0,
            y_upper: 1.0,
            s_lower: 0.0,
            s_upper: 1.0,
            w_lower,
            w_upper,
            binary: true,
        };
        bounds.validate()?;
        Ok(bounds)
    }

    /// Binary classifier, every weight equal to one.
    pub fn binary_unweighted() -> Self {
        Bounds {
            y_lower: 0.0,
            y_upper: 1.0,
            s_lower: 0.0,
            s_upper: 1.0,
            w_lower: 1.0,
            w_upper: 1.0,
            binary: true,
        }
    }

    /// Real-valued labels and scores.
    pub fn continuous(y: (f64, f64), s: (f64, f64), w: (f64, f64)) -> Result<Self> {
        let bounds = Bounds {
            y_lower: y.0,
            y_upper: y.1,
            s_lower: s.0,
            s_upper: s.1,
            w_lower: w.0,
            w_upper: w.1,
            binary: false,
        };
        bounds.validate()?;
        Ok(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.y_lower,
            self.y_upper,
            self.s_lower,
            self.s_upper,
            self.w_lower,
            self.w_upper,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBounds("bounds must be finite".into()));
        }
        if !(0.0 <= self.y_lower && self.y_lower <= self.y_upper) {
            return Err(Error::InvalidBounds(format!(
                "need 0 <= y_lower <= y_upper, got [{}, {}]",
                self.y_lower, self.y_upper
            )));
        }
        if !(0.0 <= self.s_lower && self.s_lower <= self.s_upper) {
            return Err(Error::InvalidBounds(format!(
                "need 0 <= s_lower <= s_upper, got [{}, {}]",
                self.s_lower, self.s_upper
            )));
        }
        if !(0.0 < self.w_lower && self.w_lower <= self.w_upper) {
            return Err(Error::InvalidBounds(format!(
                "need 0 < w_lower <= w_upper, got [{}, {}]",
                self.w_lower, self.w_upper
            )));
        }
        if self.binary
            && (self.y_lower, self.y_upper, self.s_lower, self.s_upper) != (0.0, 1.0, 0.0, 1.0)
        {
            return Err(Error::InvalidBounds(
                "binary profile requires label and score bounds [0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn is_unweighted(&self) -> bool {
        self.w_lower == 1.0 && self.w_upper == 1.0
    }

    /// Released-sum profile implied by the bounds. Continuous labels always
    /// release all seven sums.
    pub fn profile(&self) -> Profile {
        match (self.binary, self.is_unweighted()) {
            (true, true) => Profile::Unweighted5,
            (true, false) => Profile::Binary6,
            (false, _) => Profile::Full7,
        }
    }

    fn check(&self, index: usize, r: &Record) -> Result<()> {
        let violation = |reason: String| Err(Error::BoundsViolation { index, reason });
        if !(r.y.is_finite() && r.s.is_finite() && r.w.is_finite()) {
            return violation("non-finite value".into());
        }
        if r.y < self.y_lower || r.y > self.y_upper {
            return violation(format!(
                "y = {} outside [{}, {}]",
                r.y, self.y_lower, self.y_upper
            ));
        }
        if self.binary && r.y != 0.0 && r.y != 1.0 {
            return violation(format!("y = {} is not binary", r.y));
        }
        if r.s < self.s_lower || r.s > self.s_upper {
            return violation(format!(
                "s = {} outside [{}, {}]",
                r.s, self.s_lower, self.s_upper
            ));
        }
        if r.w < self.w_lower || r.w > self.w_upper {
            return violation(format!(
                "w = {} outside [{}, {}]",
                r.w, self.w_lower, self.w_upper
            ));
        }
        Ok(())
    }
}

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Computes the exact sums of `records`, validating each against `bounds`.
/// Out-of-bounds records are rejected, never clipped.
pub fn compute_sums(records: &[Record], bounds: &Bounds) -> Result<SumVector> {
    bounds.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut acc = [CompensatedSum::default(); 7];
    for (index, record) in records.iter().enumerate() {
        bounds.check(index, record)?;
        for (slot, field) in acc.iter_mut().zip(SumField::ALL) {
            slot.add(field.summand(record));
        }
    }
    let mut sums = Sums::default();
    for (slot, field) in acc.iter().zip(SumField::ALL) {
        sums.set(field, slot.value());
    }
    Ok(SumVector {
        sums,
        profile: bounds.profile(),
        count: records.len(),
    })
}

/// Add/remove-one sensitivity of a single sum: the summand evaluated at the
/// upper bounds.
pub fn sensitivity(bounds: &Bounds, field: SumField) -> f64 {
    field.summand(&Record::new(bounds.y_upper, bounds.s_upper, bounds.w_upper))
}

/// Sensitivities of the released sums for `profile`, in release order.
pub fn sensitivity_per_sum(bounds: &Bounds, profile: Profile) -> Result<Vec<(SumField, f64)>> {
    bounds.validate()?;
    Ok(profile
        .released()
        .iter()
        .map(|&field| (field, sensitivity(bounds, field)))
        .collect())
}

/// Kish effective sample size `(Σw)² / Σw²`.
pub fn kish_effective_n(sums: &SumVector) -> Result<f64> {
    let sum_w2 = sums.sums.sum_w2;
    if !(sum_w2 > 0.0) || !sum_w2.is_finite() {
        return Err(Error::InvalidSums(format!(
            "sum_w2 must be positive, got {sum_w2}"
        )));
    }
    Ok(sums.sums.sum_w * sums.sums.sum_w / sum_w2)
}
