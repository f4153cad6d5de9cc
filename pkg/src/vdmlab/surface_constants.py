"""Coefficients of the closed-form benchmark surfaces, transcribed verbatim.

A checksum over this table is pinned in the test suite, so any edit here
fails loudly.

Adopted grouping for the filter-sim surface (the prose nests its parentheses
loosely):

    l = (0.2 * (0.01 (p1+0.5)^2 + 1.32 atan(0.5 p1 - 2)^2 + atan(10 (p1+5))^2) - 0.5232)
      * ((0.02 (p2+0.5)^2 + 2.64 atan(0.5 p2 - 2)^2 + 2 atan(10 (p2+5))^2) - 5.232)

``atan(x)^2`` squares the arctangent. With this grouping both factors are
within 1e-3 of zero at p = (-5, -5), a narrow well carved by the
``atan(10 (p + 5))`` terms.
"""

FILTER_SIM = {
    "scale_1": 0.2,
    "quad_1": 0.01,
    "shift_quad": 0.5,
    "atan_wide_gain_1": 1.32,
    "atan_wide_slope": 0.5,
    "atan_wide_shift": 2.0,
    "atan_narrow_gain_1": 1.0,
    "atan_narrow_slope": 10.0,
    "atan_narrow_shift": 5.0,
    "offset_1": 0.5232,
    "quad_2": 0.02,
    "atan_wide_gain_2": 2.64,
    "atan_narrow_gain_2": 2.0,
    "offset_2": 5.232,
}

EIG_ROUND = {
    "log_gain": 0.132,
    "inner_freq": 4.7,
    "log_shift": 1.2,
    "ripple_gain": 0.01,
    "ripple_freq_1": 10.0,
    "ripple_freq_2": 6.0,
    "quad": 0.001,
    "offset": 0.426931992284953,
}

COMPLEX_SIM = {
    "scale": 0.12,
    "quad_1": 0.1,
    "offset_1": 1.331,
    "quad_2": 0.158,
    "offset_2": 1.25,
}

ONE_DIM_M = {
    "quad": 0.05,
    "bump_height": 1.2,
    "bump_width": 8.0,
    "bump_center": 1.0,
}


def table_digest():
    """SHA-256 over a canonical rendering of every coefficient."""
    import hashlib

    parts = []
    for name, table in (
        ("filter_sim", FILTER_SIM),
        ("eig_round", EIG_ROUND),
        ("complex_sim", COMPLEX_SIM),
        ("one_dim_m", ONE_DIM_M),
    ):
        for key in sorted(table):
            parts.append(f"{name}.{key}={table[key]!r}")
    return hashlib.sha256("\n".join(parts).encode()).hexdigest()
