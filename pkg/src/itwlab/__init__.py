"""itwlab: fractional Brownian motion, the Ito-Tanaka-Wentzell identity and regularization by noise.

Modules
-------
fbm            two-sided Brownian lattices, moving-average fBm and the W1/W2 split
fields         catalog of deterministic and adapted random fields
function_space heat semigroup, Sobolev and Hoelder norms on periodic grids
averaging      the averaging operator A and its regularity scans
young          nonlinear Young integrals and the Young ODE solver
verifier       Monte-Carlo checks of Clark-Ocone and of the four-term identity
config, experiments, cli
               YAML configs, experiment runners and the ``itwlab`` command
"""

__version__ = "0.1.0"
