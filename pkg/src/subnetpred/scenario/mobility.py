"""Mobility models: random-direction movement with collision avoidance, and
fixed alley circuits for the factory-floor layout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .deploy import MobilityState, disc_offsets


def _reflect(coord, heading_comp, lo, hi):
    """Reflect a scalar coordinate into [lo, hi]; flips the matching
    heading component sign."""
    flipped = False
    if coord < lo:
        coord = 2.0 * lo - coord
        flipped = True
    elif coord > hi:
        coord = 2.0 * hi - coord
        flipped = True
    return coord, -heading_comp if flipped else heading_comp


def _propose(positions, headings, step, bounds):
    lo_x, lo_y, hi_x, hi_y = bounds
    cand = positions + step * np.stack([np.cos(headings), np.sin(headings)], axis=1)
    new_head = headings.copy()
    for i in range(cand.shape[0]):
        cx, hx = _reflect(cand[i, 0], np.cos(new_head[i]), lo_x, hi_x)
        cy, hy = _reflect(cand[i, 1], np.sin(new_head[i]), lo_y, hi_y)
        cand[i] = (cx, cy)
        new_head[i] = np.arctan2(hy, hx)
    return cand, new_head


def step_rdmm(state, speed, dt, min_distance, rng, max_retries=8):
    """One random-direction step: constant speed, reflection at the border,
    heading resampled on near-collision; stragglers stay put for the cycle.

    Collisions are detected with a 2-step hysteresis margin so accepted
    positions always satisfy the min-distance invariant exactly.
    """
    step = speed * dt
    if step == 0.0:
        return state
    pos = state.positions
    head = state.headings.copy()
    cand, cand_head = _propose(pos, head, step, state.bounds)
    guard = min_distance + 2.0 * step
    n = pos.shape[0]
    for _ in range(max_retries):
        diff = cand[:, None, :] - cand[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        bad = (dist < guard).any(axis=1)
        if not bad.any():
            break
        head[bad] = rng.uniform(0.0, 2.0 * np.pi, int(bad.sum()))
        redo, redo_head = _propose(pos[bad], head[bad], step, state.bounds)
        cand[bad] = redo
        cand_head[bad] = redo_head
    else:
        diff = cand[:, None, :] - cand[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        bad = (dist < guard).any(axis=1)
        cand[bad] = pos[bad]

    out = state.copy()
    out.positions = cand
    out.headings = cand_head
    return out


@dataclass(frozen=True)
class AlleyLayout:
    """Closed rectangular circuits (racetracks) stacked inside the area."""

    loops: tuple            # tuple of [k x 2] vertex arrays, closed polylines
    cum_lengths: tuple      # per loop: cumulative segment lengths, leading 0

    @property
    def n_loops(self):
        return len(self.loops)

    def total_length(self, k):
        return float(self.cum_lengths[k][-1])

    def point_at(self, k, s):
        """Position and tangent heading at arc length s along loop k."""
        cum = self.cum_lengths[k]
        verts = self.loops[k]
        s = s % cum[-1]
        seg = int(np.searchsorted(cum, s, side="right")) - 1
        seg = min(seg, len(verts) - 2)
        a, b = verts[seg], verts[seg + 1]
        seg_len = cum[seg + 1] - cum[seg]
        frac = (s - cum[seg]) / seg_len
        pos = a + frac * (b - a)
        heading = float(np.arctan2(b[1] - a[1], b[0] - a[0]))
        return pos, heading


def build_alley_layout(area=(180.0, 90.0), margin=10.0, n_loops=3):
    """Axis-aligned alley circuits: n_loops horizontal racetracks."""
    width, height = area
    usable_h = height - 2.0 * margin
    band = usable_h / n_loops
    loops = []
    cums = []
    for k in range(n_loops):
        y0 = margin + k * band
        y1 = y0 + 0.6 * band
        verts = np.array([
            [margin, y0], [width - margin, y0],
            [width - margin, y1], [margin, y1], [margin, y0],
        ])
        seg = np.linalg.norm(np.diff(verts, axis=0), axis=1)
        loops.append(verts)
        cums.append(np.concatenate([[0.0], np.cumsum(seg)]))
    return AlleyLayout(loops=tuple(loops), cum_lengths=tuple(cums))


def deploy_alley(config, rng, layout=None):
    """Assign sub-networks round-robin to alley loops with staggered starts."""
    if layout is None:
        layout = build_alley_layout(config.area, margin=max(config.sn_radius * 2, 5.0))
    n = config.n_subnetworks
    path_ids = np.arange(n) % layout.n_loops
    arc = np.empty(n)
    positions = np.empty((n, 2))
    headings = np.empty(n)
    per_loop = np.bincount(path_ids, minlength=layout.n_loops)
    rank_in_loop = np.zeros(n, dtype=int)
    seen = np.zeros(layout.n_loops, dtype=int)
    for i in range(n):
        rank_in_loop[i] = seen[path_ids[i]]
        seen[path_ids[i]] += 1
    for i in range(n):
        k = path_ids[i]
        arc[i] = rank_in_loop[i] * layout.total_length(k) / max(per_loop[k], 1)
        positions[i], headings[i] = layout.point_at(k, arc[i])
    offsets = disc_offsets(n, config.sa_pairs_per_sn, config.sn_radius, rng)
    w, h = config.area
    return MobilityState(positions=positions, headings=headings, offsets=offsets,
                         path_ids=path_ids, arc_positions=arc, layout=layout,
                         bounds=(0.0, 0.0, w, h))


def step_alley(state, speed, dt):
    """Advance every sub-network along its circuit, wrapping at the end."""
    out = state.copy()
    out.arc_positions = state.arc_positions + speed * dt
    for i in range(out.positions.shape[0]):
        out.positions[i], out.headings[i] = state.layout.point_at(
            state.path_ids[i], out.arc_positions[i])
    return out


def step_mobility(state, model, speed, dt, min_distance, rng):
    """Dispatch a single mobility step; dt must be positive."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if model == "rdmm":
        return step_rdmm(state, speed, dt, min_distance, rng)
    if model == "alley":
        return step_alley(state, speed, dt)
    raise ValueError(f"unknown mobility model {model!r}")
