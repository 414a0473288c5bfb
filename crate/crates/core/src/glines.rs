//! Graded one-dimensional lines.
//!
//! Lines are symbolic: a label naming the chosen unit basis element, an
//! integer grade and the norm of that basis element. Elements of ordered
//! tensor words carry a complex coordinate relative to the product basis.
//! Every sign in the algebra comes from exactly two places: the Koszul rule
//! in [`LineElement::reorder`] and the grading factor in
//! [`LineElement::supertrace`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DUAL_SUFFIX: &str = "^-1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradedLine {
    pub label: String,
    pub grade: i64,
    pub basis_norm: f64,
}

impl GradedLine {
    pub fn new(label: impl Into<String>, grade: i64, basis_norm: f64) -> Result<Self> {
        if !(basis_norm > 0.0) || !basis_norm.is_finite() {
            return Err(Error::InvalidSpec(format!("basis norm must be positive, got {basis_norm}")));
        }
        Ok(Self { label: label.into(), grade, basis_norm })
    }

    /// Unit-norm line; panics never since the norm is fixed.
    pub fn unit(label: impl Into<String>, grade: i64) -> Self {
        Self { label: label.into(), grade, basis_norm: 1.0 }
    }

    pub fn trivial() -> Self {
        Self::unit("C", 0)
    }

    pub fn dual(&self) -> Self {
        let label = match self.label.strip_suffix(DUAL_SUFFIX) {
            Some(base) => base.to_string(),
            None => format!("{}{}", self.label, DUAL_SUFFIX),
        };
        Self { label, grade: -self.grade, basis_norm: 1.0 / self.basis_norm }
    }
}

/// A factor of a tensor word: a line or its inverse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub line: GradedLine,
    pub dual: bool,
}

impl Factor {
    pub fn plain(line: GradedLine) -> Self {
        Self { line, dual: false }
    }

    pub fn inverse(line: GradedLine) -> Self {
        Self { line, dual: true }
    }

    pub fn grade(&self) -> i64 {
        if self.dual {
            -self.line.grade
        } else {
            self.line.grade
        }
    }

    pub fn norm(&self) -> f64 {
        if self.dual {
            1.0 / self.line.basis_norm
        } else {
            self.line.basis_norm
        }
    }

    pub fn flipped(&self) -> Self {
        Self { line: self.line.clone(), dual: !self.dual }
    }

    pub fn display(&self) -> String {
        if self.dual {
            format!("{}{}", self.line.label, DUAL_SUFFIX)
        } else {
            self.line.label.clone()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TensorWord {
    pub factors: Vec<Factor>,
}

impl TensorWord {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn grade(&self) -> i64 {
        self.factors.iter().map(Factor::grade).sum()
    }

    pub fn basis_norm(&self) -> f64 {
        self.factors.iter().map(Factor::norm).product()
    }

    /// Word of the dual line: reversed order, every factor inverted.
    pub fn dual(&self) -> Self {
        Self { factors: self.factors.iter().rev().map(Factor::flipped).collect() }
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        Self { factors }
    }

    pub fn display(&self) -> String {
        if self.factors.is_empty() {
            return "C".into();
        }
        self.factors.iter().map(Factor::display).collect::<Vec<_>>().join(" ⊗ ")
    }

    /// Collapses the word into a single graded line.
    pub fn assemble(&self) -> GradedLine {
        if self.factors.is_empty() {
            return GradedLine::trivial();
        }
        GradedLine { label: self.display(), grade: self.grade(), basis_norm: self.basis_norm() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineElement {
    pub word: TensorWord,
    pub coordinate: Complex64,
}

impl LineElement {
    pub fn new(word: TensorWord, coordinate: Complex64) -> Self {
        Self { word, coordinate }
    }

    pub fn scalar(z: Complex64) -> Self {
        Self { word: TensorWord::empty(), coordinate: z }
    }

    pub fn basis(line: GradedLine) -> Self {
        Self::new(TensorWord::new(vec![Factor::plain(line)]), Complex64::new(1.0, 0.0))
    }

    pub fn grade(&self) -> i64 {
        self.word.grade()
    }

    pub fn quillen_norm(&self) -> f64 {
        self.coordinate.norm() * self.word.basis_norm()
    }

    /// Rescales to unit Quillen norm, returning the previous norm as well.
    pub fn normalized(&self) -> Result<(Self, f64)> {
        let n = self.quillen_norm();
        if n == 0.0 {
            return Err(Error::ZeroElement);
        }
        Ok((Self::new(self.word.clone(), self.coordinate / n), n))
    }

    pub fn tensor(&self, other: &Self) -> Self {
        Self::new(self.word.concat(&other.word), self.coordinate * other.coordinate)
    }

    /// The element of the dual word that evaluates to 1 on `self`.
    pub fn dual(&self) -> Result<Self> {
        if self.coordinate == Complex64::new(0.0, 0.0) {
            return Err(Error::ZeroElement);
        }
        Ok(Self::new(self.word.dual(), self.coordinate.inv()))
    }

    /// Koszul sign picked up by moving factors into the order `perm`, where
    /// new position `i` holds old factor `perm[i]`.
    pub fn koszul_sign(word: &TensorWord, perm: &[usize]) -> Result<i64> {
        let n = word.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidPermutation(perm.to_vec(), n));
        }
        let mut exponent = 0_i64;
        for i in 0..n {
            for j in (i + 1)..n {
                if perm[i] > perm[j] {
                    exponent += word.factors[perm[i]].grade() * word.factors[perm[j]].grade();
                }
            }
        }
        Ok(if exponent.rem_euclid(2) == 0 { 1 } else { -1 })
    }

    pub fn reorder(&self, perm: &[usize]) -> Result<Self> {
        let sign = Self::koszul_sign(&self.word, perm)?;
        let word = TensorWord::new(perm.iter().map(|&p| self.word.factors[p].clone()).collect());
        Ok(Self::new(word, self.coordinate * sign as f64))
    }

    /// Contracts the adjacent pair at `pos`, `pos + 1`.
    ///
    /// `L ⊗ L^-1` contracts with the grading factor `(-1)^grade(L)`;
    /// `L^-1 ⊗ L` contracts as the plain trace.
    pub fn supertrace_at(&self, pos: usize) -> Result<Self> {
        self.contract_at(pos, true)
    }

    /// Supertrace of the first adjacent contractible pair.
    pub fn supertrace(&self) -> Result<Self> {
        let pos = self.first_pair().ok_or(Error::NoContractiblePair(0))?;
        self.supertrace_at(pos)
    }

    /// Contraction without the grading factor. Only meaningful as a negative
    /// control against [`Self::supertrace_at`].
    pub fn contract_ungraded_at(&self, pos: usize) -> Result<Self> {
        self.contract_at(pos, false)
    }

    /// Position of the first adjacent pair `L, L^-1` or `L^-1, L`.
    pub fn first_pair(&self) -> Option<usize> {
        let f = &self.word.factors;
        (0..f.len().saturating_sub(1)).find(|&i| f[i].line == f[i + 1].line && f[i].dual != f[i + 1].dual)
    }

    fn contract_at(&self, pos: usize, graded: bool) -> Result<Self> {
        let f = &self.word.factors;
        if pos + 1 >= f.len() || f[pos].line != f[pos + 1].line || f[pos].dual == f[pos + 1].dual {
            return Err(Error::NoContractiblePair(pos));
        }
        let sign = if graded && !f[pos].dual && f[pos].line.grade.rem_euclid(2) == 1 { -1.0 } else { 1.0 };
        let mut factors = f.clone();
        factors.drain(pos..pos + 2);
        Ok(Self::new(TensorWord::new(factors), self.coordinate * sign))
    }

    /// Distance between two elements of the same word.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        if self.word != other.word {
            return Err(Error::LineMismatch(format!("{} vs {}", self.word.display(), other.word.display())));
        }
        Ok((self.coordinate - other.coordinate).norm() * self.word.basis_norm())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn el(line: &GradedLine, dual: bool, z: f64) -> LineElement {
        let f = if dual { Factor::inverse(line.clone()) } else { Factor::plain(line.clone()) };
        LineElement::new(TensorWord::new(vec![f]), c(z))
    }

    #[test]
    fn tensor_examples() {
        let l = GradedLine::unit("L", 1);
        let m = GradedLine::unit("M", 2);
        let t = el(&l, false, 2.0).tensor(&el(&m, false, 3.0));
        assert_eq!(t.coordinate, c(6.0));
        assert_eq!(t.grade(), 3);
        let u = el(&l, false, 1.0).tensor(&el(&l, true, 1.0));
        assert_eq!(u.coordinate, c(1.0));
        assert_eq!(u.grade(), 0);

        let e = GradedLine::unit("e", 0);
        let f = GradedLine::new("f", 0, 2.0).unwrap();
        let prod = el(&e, false, 2.0).tensor(&el(&f, false, 0.5));
        assert!((prod.quillen_norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn dual_examples() {
        let l = GradedLine::unit("L", 3);
        let d = el(&l, false, 1.0).dual().unwrap();
        assert_eq!(d.coordinate, c(1.0));
        assert_eq!(d.word.factors[0].dual, true);
        assert_eq!(d.grade(), -3);
        let x = el(&l, false, 2.0);
        assert_eq!(x.dual().unwrap().dual().unwrap(), x);
        assert_eq!(LineElement::scalar(c(0.0)).dual(), Err(Error::ZeroElement));
        assert_eq!(l.dual().dual(), l);
        assert!(GradedLine::new("bad", 0, 0.0).is_err());
    }

    #[test]
    fn reorder_examples() {
        let a = GradedLine::unit("A", 0);
        let b = GradedLine::unit("B", 0);
        let x = el(&a, false, 5.0).tensor(&el(&b, false, 1.0));
        assert_eq!(x.reorder(&[1, 0]).unwrap().coordinate, c(5.0));

        let p = GradedLine::unit("P", 1);
        let q = GradedLine::unit("Q", 1);
        let y = el(&p, false, 1.0).tensor(&el(&q, true, 1.0));
        assert_eq!(y.reorder(&[1, 0]).unwrap().coordinate, c(-1.0));
        assert_eq!(y.reorder(&[0, 1]).unwrap(), y);
        assert!(matches!(y.reorder(&[0, 0]), Err(Error::InvalidPermutation(..))));
        assert!(matches!(y.reorder(&[0]), Err(Error::InvalidPermutation(..))));
    }

    #[test]
    fn supertrace_examples() {
        let l0 = GradedLine::unit("L", 0);
        let x = el(&l0, false, 6.0).tensor(&el(&l0, true, 1.0));
        assert_eq!(x.supertrace().unwrap().coordinate, c(6.0));

        let l1 = GradedLine::unit("L", 1);
        let y = el(&l1, false, 6.0).tensor(&el(&l1, true, 1.0));
        assert_eq!(y.supertrace().unwrap().coordinate, c(-6.0));
        assert_eq!(y.contract_ungraded_at(0).unwrap().coordinate, c(6.0));

        let z = el(&l1, true, 6.0).tensor(&el(&l1, false, 1.0));
        assert_eq!(z.supertrace().unwrap().coordinate, c(6.0));

        let m = GradedLine::unit("M", 1);
        let bad = el(&l1, false, 1.0).tensor(&el(&m, true, 1.0));
        assert!(matches!(bad.supertrace(), Err(Error::NoContractiblePair(_))));
    }

    #[test]
    fn norm_inverse_under_dual() {
        let l = GradedLine::new("L", 2, 3.0).unwrap();
        let x = LineElement::new(TensorWord::new(vec![Factor::plain(l)]), Complex64::new(0.4, 0.3));
        let d = x.dual().unwrap();
        assert!((x.quillen_norm() * d.quillen_norm() - 1.0).abs() < 1e-14);
    }
}
