"""
xbarnl: linear and nonlinear modelling of thin-film LiNbO3 XBAR ladder filters.

Submodules
----------
rfnet      S/Y/Z/ABCD/T networks, cascading, renormalization, Touchstone I/O
mbvd       modified Butterworth-Van Dyke resonator model and fitting
ladder     ladder assembly, nodal solution, filter metrics
thermal    lumped thermal node
drive      self-heating power sweeps
imd        two-tone IMD3 and IIP3
cal        switch terms, multiline TRL, impedance transformation
platforms  sapphire and silicon filter platforms
cli        command-line front end
"""
from . import cal, drive, imd, ladder, mbvd, platforms, rfnet, thermal

__version__ = "0.1.0"

__all__ = ["cal", "drive", "imd", "ladder", "mbvd", "platforms", "rfnet", "thermal", "__version__"]
