"""Per-symbol receiver loops, compiled with numba."""
import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _interp(x, m, mu):
    a = 0.5
    wm1 = a * mu * mu - a * mu
    w0 = -a * mu * mu + (a - 1.0) * mu + 1.0
    w1 = -a * mu * mu + (a + 1.0) * mu
    return wm1 * x[m - 1] + w0 * x[m] + w1 * x[m + 1] + wm1 * x[m + 2]


@njit(cache=True)
def sync_block(x, state, gains, bits_out, sym_out, perr_out):
    """Run timing recovery and the decision-directed carrier loop over ``x``.

    ``x`` holds matched-filter output; ``state`` is
    [t, timing_integrator, y_prev.re, y_prev.im, phase, freq] and is updated
    in place. ``gains`` is [sps, k1_timing, k2_timing, k1_carrier, k2_carrier].
    Stops when the next strobe would need samples beyond ``x``; returns the
    number of symbols produced.
    """
    sps = gains[0]
    k1t = gains[1]
    k2t = gains[2]
    k1c = gains[3]
    k2c = gains[4]
    half = 0.5 * sps
    t = state[0]
    integ = state[1]
    y_prev = complex(state[2], state[3])
    phase = state[4]
    freq = state[5]
    n = x.shape[0]
    count = 0
    integ_lim = 0.25 * sps
    while True:
        m = int(math.floor(t))
        if m + 2 >= n or count >= bits_out.shape[0]:
            break
        tm = t - half
        mm = int(math.floor(tm))
        y = _interp(x, m, t - m)
        y_mid = _interp(x, mm, tm - mm)

        # Gardner detector: negative when strobes are late
        e_t = (y_mid.conjugate() * (y_prev - y)).real
        y_prev = y

        z = y * complex(math.cos(phase), -math.sin(phase))
        d = 1.0 if z.real >= 0.0 else -1.0
        e_c = z.imag * d
        freq += k2c * e_c
        phase += k1c * e_c + freq
        if phase > math.pi:
            phase -= 2.0 * math.pi
        elif phase < -math.pi:
            phase += 2.0 * math.pi

        bits_out[count] = 1 if d > 0.0 else 0
        sym_out[count] = z
        perr_out[count] = e_c
        count += 1

        integ += k2t * e_t
        if integ > integ_lim:
            integ = integ_lim
        elif integ < -integ_lim:
            integ = -integ_lim
        step = k1t * e_t + integ
        if step > half:
            step = half
        elif step < -half:
            step = -half
        t += sps + step

    state[0] = t
    state[1] = integ
    state[2] = y_prev.real
    state[3] = y_prev.imag
    state[4] = phase
    state[5] = freq
    return count


def warmup():
    """Compile the kernel ahead of time (first call otherwise pays for it)."""
    x = np.zeros(64, dtype=np.complex128)
    state = np.array([8.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    gains = np.array([4.0, 0.01, 0.0001, 0.01, 0.0001])
    sync_block(x, state, gains, np.zeros(32, np.uint8), np.zeros(32, np.complex128), np.zeros(32))
