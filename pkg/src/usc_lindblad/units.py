"""Unit conventions.

All energies are expressed in one declared unit (meV or eV) with hbar = 1,
so times are in hbar/energy-unit. Conversion to femtoseconds uses
hbar = 658.2119569 meV fs.
"""

HBAR_MEV_FS = 658.2119569
HBAR_EV_FS = 0.6582119569

SUPPORTED_UNITS = ("meV", "eV")


def hbar_fs(units: str) -> float:
    """Return hbar in <units> * fs, i.e. the fs duration of one natural time unit."""
    if units == "meV":
        return HBAR_MEV_FS
    if units == "eV":
        return HBAR_EV_FS
    raise ValueError(f"unsupported units {units!r}, expected one of {SUPPORTED_UNITS}")
