use alloc::vec::Vec;

use crate::sphere::SphericalSignal;

/// Eight translated copies of `signal`, one per neighbouring cell direction
/// at distance `step` (1 or 2 cells): `(+-theta, 0)`, `(0, +-phi)` and the
/// four diagonals. Phi wraps around; theta shifts zero-fill at the poles.
pub fn make_virtual_faces(signal: &SphericalSignal, step: usize) -> Vec<SphericalSignal> {
    let s = step.max(1) as isize;
    const DIRS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    DIRS.iter().map(|&(dt, dp)| signal.shifted(dt * s, dp * s)).collect()
}
