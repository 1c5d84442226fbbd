"""Postprocessing diagnostics on sampled field snapshots."""

from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)


def interface_positions(snap):
    """Zero-level x-position of the phase field per horizontal sample line.

    For every grid row the sign change of phi between adjacent unmasked
    samples locates the interface by linear interpolation.  Rows with no
    crossing or with several crossings are skipped (returned as NaN) and
    counted in the second return value.
    """
    phi = snap.values["phi"]
    ny, nx = snap.shape
    x = snap.x
    pos = np.full(ny, np.nan)
    skipped = 0
    for j in range(ny):
        row = phi[j]
        valid = snap.mask[j] & np.isfinite(row)
        idx = np.flatnonzero(valid)
        if idx.size < 2 or not np.all(np.diff(idx) == 1):
            # broken sample line (obstacle in the way): treat conservatively
            skipped += 1
            continue
        r = row[idx]
        sign_change = np.flatnonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0)
        if sign_change.size != 1:
            skipped += 1
            continue
        i = sign_change[0]
        xa, xb = x[idx[i]], x[idx[i + 1]]
        fa, fb = r[i], r[i + 1]
        pos[j] = xa + fa / (fa - fb) * (xb - xa)
    if skipped:
        log.warning("interface position: %d of %d sample lines skipped",
                    skipped, ny)
    return pos, skipped


def interface_rotation(snap) -> float:
    """Largest local tilt of the phase interface from the vertical, in rad.

    The interface line x(y) is extracted per sample row and differentiated
    with central differences; the diagnostic is max over y of arctan|dx/dy|.
    """
    pos, _ = interface_positions(snap)
    valid = np.isfinite(pos)
    idx = np.flatnonzero(valid)
    if idx.size < 3:
        raise ValueError("too few interface crossings to measure a rotation")
    # use the largest contiguous run of valid lines
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    run = max(runs, key=len)
    if run.size < 3:
        raise ValueError("interface crossings are too fragmented")
    slope = np.gradient(pos[run], snap.y[run])
    return float(np.max(np.arctan(np.abs(slope))))
