"""Feasibility tools for mutually unbiased (sub-)bases.

The problem is posed as a real polynomial equation system (see
``mubopt.model``), then attacked two ways: a damped Newton search over an
integration-lifted squared-residual objective (``mubopt.search``), and
moment relaxations solved as conic programs inside a spatial
branch-and-bound loop (``mubopt.relaxation``, ``mubopt.conic``,
``mubopt.bnb``).
"""

__version__ = "0.1.0"
