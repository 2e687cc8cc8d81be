use rand::Rng;

/// Index of the largest value, ties broken uniformly at random.
///
/// The random source is consumed only when an exact tie is found, so tie-free
/// inputs leave the stream untouched.
pub(crate) fn argmax_uniform<R: Rng + ?Sized>(values: &[f64], rng: &mut R) -> usize {
    assert!(!values.is_empty(), "argmax of an empty slice");
    let mut best = 0;
    let mut ties = 1u32;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
            ties = 1;
        } else if v == values[best] {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best = i;
            }
        }
    }
    best
}
