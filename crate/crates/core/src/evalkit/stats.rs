use crate::scalar::Scalar;

/// Mean, sample standard deviation and median of one sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary<T> {
    pub mean: T,
    pub std: T,
    pub median: T,
    pub count: usize,
}

pub fn mean<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() {
        return None;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + x);
    Some(sum / T::from_usize_lossy(xs.len()))
}

/// Sample (n − 1) standard deviation; zero for a single sample.
pub fn sample_std<T: Scalar>(xs: &[T]) -> Option<T> {
    let m = mean(xs)?;
    if xs.len() == 1 {
        return Some(T::zero());
    }
    let ss = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m));
    Some((ss / T::from_usize_lossy(xs.len() - 1)).sqrt())
}

/// Middle value, or the mean of the two middle values for even lengths.
pub fn median<T: Scalar>(xs: &[T]) -> Option<T> {
    if xs.is_empty() || xs.iter().any(|x| x.is_nan()) {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    let n = v.len();
    let two = T::one() + T::one();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / two
    })
}

pub fn summarize<T: Scalar>(xs: &[T]) -> Option<Summary<T>> {
    Some(Summary {
        mean: mean(xs)?,
        std: sample_std(xs)?,
        median: median(xs)?,
        count: xs.len(),
    })
}
