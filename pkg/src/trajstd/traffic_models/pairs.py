"""Extraction of aligned leader/follower pairs from a scene."""

from __future__ import annotations

import math

import numpy as np

from ..errors import PreconditionError
from ..schema import CanonicalScene
from .idm import CfPair


def pair_from_scene(scene: CanonicalScene, leader_id: str, follower_id: str,
                    axis: tuple[float, float] | None = None) -> CfPair:
    """Project both tracks onto ``axis`` (default: leader heading at the first
    shared frame) over their shared frames."""
    try:
        lead, foll = scene.track(leader_id), scene.track(follower_id)
    except KeyError as exc:
        raise PreconditionError(f"track {exc.args[0]!r} not in scene") from None
    frames = np.intersect1d(lead.frame, foll.frame)
    if len(frames) < 2:
        raise PreconditionError(f"tracks {leader_id} and {follower_id} share fewer than 2 frames")
    il = np.searchsorted(lead.frame, frames)
    jf = np.searchsorted(foll.frame, frames)
    if np.any(np.diff(frames) != 1):
        raise PreconditionError("shared frames are not contiguous")
    if axis is None:
        h = float(lead.heading[il[0]])
        axis = (math.cos(h), math.sin(h))
    ux, uy = axis
    n = math.hypot(ux, uy)
    ux, uy = ux / n, uy / n
    xl = lead.x[il] * ux + lead.y[il] * uy
    xf = foll.x[jf] * ux + foll.y[jf] * uy
    vl = lead.speed[il] * np.cos(lead.heading[il] - math.atan2(uy, ux))
    vf = foll.speed[jf] * np.cos(foll.heading[jf] - math.atan2(uy, ux))
    return CfPair(xl, vl, xf, vf, scene.metadata.dt, lead.length, foll.length)
