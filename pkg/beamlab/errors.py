"""
Exceptions raised by beamlab.

Library code raises these; only the runner turns them into
ERROR lines and exit codes.
"""


class BeamlabError(Exception):
    """Base class for all beamlab errors."""


class UsageError(BeamlabError):
    """Invalid experiment configuration or command line."""


class DomainError(BeamlabError):
    """Point outside a chart domain, or outside a Fermi tube."""


class CapabilityError(BeamlabError):
    """Operation not supported by this model."""


class PreconditionError(BeamlabError):
    """Input violates the documented precondition of an operation."""


class IntegrationError(BeamlabError):
    """
    ODE integration failed.

    diagnostics holds whatever the solver reported (status, message,
    last time reached, number of function evaluations).
    """

    def __init__(self, message, diagnostics=None):
        BeamlabError.__init__(self, message)
        self.diagnostics = diagnostics or {}


class NumericalDegeneracyError(IntegrationError):
    """Im H lost positivity along a beam."""


class AccuracyError(BeamlabError):
    """A computed quantity drifted beyond its tolerance."""


class ResolutionError(BeamlabError):
    """Quadrature or difference grid too coarse for the requested scale."""


class GeometryError(BeamlabError):
    """Geometric assumption violated (beams miss x0, intersection inside a window)."""


class SupportError(BeamlabError):
    """Beam product leaks outside its support ball."""


class SamplingError(BeamlabError):
    """A frequency sample falls inside the excluded set."""


class DegenerateInputError(BeamlabError):
    """Input leaves nothing to compute on."""


class RangeError(BeamlabError):
    """Spectrum table does not reach far enough."""


class SearchFailure(BeamlabError):
    """
    A numerical search came back empty.

    report carries the evidence gathered (near misses, blocked directions).
    """

    def __init__(self, message, report=None):
        BeamlabError.__init__(self, message)
        self.report = report or {}
