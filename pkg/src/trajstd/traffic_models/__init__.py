"""Macroscopic aggregation and traffic-model calibration."""

from .edie import MacroState, SpaceTimeRegion, edie_aggregate
from .fd import FD_MODELS, FdFit, fd_points, fd_speed, fit_fd
from .idm import (IDM_BOUNDS, CfPair, IdmCalibration, IdmParams, calibrate_idm,
                  idm_acceleration, simulate_idm)
from .mobil import LaneMap, MobilParams, evaluate_mobil, mobil_decide
from .newell import NewellCalibration, NewellParams, calibrate_newell
from .pairs import pair_from_scene

__all__ = [
    "MacroState", "SpaceTimeRegion", "edie_aggregate", "FD_MODELS", "FdFit", "fd_points",
    "fd_speed", "fit_fd", "IDM_BOUNDS", "CfPair", "IdmCalibration", "IdmParams", "calibrate_idm",
    "idm_acceleration", "simulate_idm", "LaneMap", "MobilParams", "evaluate_mobil",
    "mobil_decide", "NewellCalibration", "NewellParams", "calibrate_newell", "pair_from_scene",
]
