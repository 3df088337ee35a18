"""Pure numpy versions of the hot loops (fallback when the extension is absent)."""
import numpy as np


def causal_convolve(kernel, signal):
    """out[i] = sum_{j<=i} kernel[j] * signal[i-j] for i < len(signal)."""
    kernel = np.ascontiguousarray(kernel, dtype=np.float64)
    signal = np.ascontiguousarray(signal, dtype=np.float64)
    m = signal.size
    return np.convolve(kernel[:m], signal)[:m]


def lattice_renewal(shifts, probs, size, n_max):
    """Survival recursion on an integer lattice with per-step normalisation.

    See the compiled version for the contract.
    """
    shifts = np.asarray(shifts, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    cur = np.ones(size)
    logs = np.zeros(n_max + 1)
    acc = 0.0
    for n in range(n_max):
        new = np.zeros(size)
        for s, p in zip(shifts, probs):
            if s >= size:
                continue
            if s == 0:
                new += p * cur
            else:
                new[s:] += p * cur[:-s]
        scale = new[-1]
        if scale <= 0:
            logs[n + 1:] = -np.inf
            return logs
        cur = new / scale
        acc += np.log(scale)
        logs[n + 1] = acc
    return logs
