"""Confluence checking for Constraint Handling Rules programs, classically,
under an invariant, and modulo a state equivalence."""

from importlib.resources import files

from .confluence import (CANNOT_PROVE, CONFLUENT, LOCALLY_CONFLUENT, NOT_CONFLUENT, Limits, Verdict, check,
                         critical_alpha_corners_classical, critical_alpha_corners_meta, critical_beta_corners,
                         joinable, split_joinable)
from .specs import parse_spec, parse_spec_file
from .syntax import parse_program, parse_program_file

__version__ = "0.1.0"


def shipped(name: str) -> str:
    """Path of a program or spec shipped with the package, e.g. ``"set.chr"``."""
    return str(files(__package__) / "programs" / name)
