"""Small input-validation helpers shared by the estimators and the CLI."""
import numbers

import numpy as np


def as_lambda(value):
    """Coerce ``value`` to a Python complex ``theta + i*eta``.

    Accepts complex numbers, reals, ``(theta, eta)`` pairs and strings
    of the form ``"theta,eta"``.
    """
    if isinstance(value, str):
        parts = [s.strip() for s in value.split(",")]
        if len(parts) == 1:
            return complex(float(parts[0]), 0.0)
        if len(parts) != 2:
            raise ValueError(f"cannot parse lambda from {value!r}")
        return complex(float(parts[0]), float(parts[1]))
    if isinstance(value, numbers.Number):
        return complex(value)
    arr = np.asarray(value, dtype=float).ravel()
    if arr.shape != (2,):
        raise ValueError(f"lambda must be complex or (theta, eta); got {value!r}")
    return complex(arr[0], arr[1])


def as_lambda_array(X):
    """Return a 1-d complex array from complex input or an (n, 2) array of (theta, eta)."""
    arr = np.asarray(X)
    if np.iscomplexobj(arr):
        return arr.astype(complex).ravel()
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] == 2:
            return np.array([complex(arr[0], arr[1])])
        return arr.astype(complex)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected shape (n, 2) of (theta, eta); got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("lambda values must be finite")
    return arr[:, 0] + 1j * arr[:, 1]


def check_random_state(seed):
    """Turn ``seed`` into a ``numpy.random.Generator``."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a Generator")


def check_count(name, value, minimum):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}; got {value!r}")
    return int(value)


def spawn_streams(seed, n):
    """``n`` independent generators derived deterministically from ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def stream_for(seed, *indices):
    """Generator keyed by ``(seed, *indices)``; independent of how work is scheduled."""
    entropy = [int(seed)] + [int(i) for i in indices]
    return np.random.default_rng(np.random.SeedSequence(entropy))
