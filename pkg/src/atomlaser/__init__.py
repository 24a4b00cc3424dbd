"""Deterministic atom-laser linewidth simulator.

Modules
-------
physical_model   species, trap, coupling and Thomas-Fermi relations
single_mode      condensate mode coupled to a beam continuum
multimode        trap eigenmodes coupled to box beam modes
gpe              coupled one-dimensional Gross-Pitaevskii solver
analysis         spectra, widths, fits and chirp tracks
interferometry   dispersive phase spread of a step barrier
config, experiments, records, cli
                 configuration files, runners and the command line
"""

__version__ = "0.1.0"
