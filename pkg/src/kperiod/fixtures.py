"""Reference NV model fixtures.

The hyperfine constants are not the literature values: they are the pair
that puts the selected transition at 7.50 MHz with ``|alpha|^2 = 0.9044``
at ``B_z = 1020.874 G``.  ``scripts/derive_fixtures.py`` regenerates every
number below.  The amplitude calibration (G per mV) is arbitrary; it only
places the period-doubling amplitude in the 33-36 mV range (about 33.4 mV
on the two-level abstraction, about 35.1 mV in the full six-level model).
"""
from dataclasses import replace

from .hamiltonians import NvModel

PAPER_SIM_TARGETS = {"b_z": 1020.874, "delta0": 7.50, "alpha_sq": 0.9044}
PAPER_EXP_DELTA0 = 9.21

PAPER_SIM_A_PAR = 4.682041688489671
PAPER_SIM_A_PERP = 3.650512726302201
AMPLITUDE_CALIBRATION_G_PER_MV = 0.06

PAPER_SIM = NvModel(
    d_zfs=2870.0,
    b_z=PAPER_SIM_TARGETS["b_z"],
    a_par=PAPER_SIM_A_PAR,
    a_perp=PAPER_SIM_A_PERP,
    amplitude_calibration=AMPLITUDE_CALIBRATION_G_PER_MV,
)

# Same centre, bias field re-tuned so the selected spacing is 9.21 MHz.
PAPER_EXP_B_Z = 1020.2107696046926
PAPER_EXP = replace(PAPER_SIM, b_z=PAPER_EXP_B_Z)

FIXTURES = {"paper-sim": PAPER_SIM, "paper-exp": PAPER_EXP}
