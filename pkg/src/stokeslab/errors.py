"""Exception types raised across the package.

Every numerical failure carries enough context (point, tolerance, residual)
to be reported by the CLI without re-running the computation.
"""


class StokeslabError(Exception):
    """Base class for all package errors."""


class ExprSyntaxError(StokeslabError):
    """Malformed expression text. Carries the 0-based position of the problem."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):
    """Identifier that is neither z, a declared parameter, i nor pi."""

    def __init__(self, name, position):
        super().__init__(f"unknown identifier '{name}'", position)
        self.name = name


class PoleEvaluationError(StokeslabError):
    """Evaluation requested at a zero of the denominator."""

    def __init__(self, z, t):
        super().__init__(f"denominator vanishes at z={z!r}, t={t!r}")
        self.z = z
        self.t = t


class SeriesError(StokeslabError):
    """Invalid series operation (inverting a zero series, Laurent tail in a
    Borel transform, too few coefficients for a fit)."""


class CyclicVectorError(StokeslabError):
    """No cyclic vector found by the deterministic ladder plus seeded fallback."""

    def __init__(self, attempts):
        super().__init__(f"cyclic vector search failed after {attempts} candidates")
        self.attempts = attempts


class ResonanceError(StokeslabError):
    """Coefficient recurrence hit an exponent obstruction that the log-block
    enlargement could not resolve."""

    def __init__(self, index, detail=""):
        msg = f"non-resolvable resonance at coefficient index {index}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.index = index


class RootSolveError(StokeslabError):
    """Characteristic-root extraction failed to converge."""


class SummationError(StokeslabError):
    """Borel-Laplace machinery failure: pole on the ray, growth fit violated,
    quadrature tolerance not met."""


class RayPoleError(SummationError):
    """A Borel-plane singularity sits inside the pole-exclusion radius of the
    integration ray."""

    def __init__(self, pole, direction, distance):
        super().__init__(
            f"Borel-plane pole {pole!r} within exclusion radius of ray "
            f"direction {direction:.6f} (distance {distance:.3e})"
        )
        self.pole = pole
        self.direction = direction
        self.distance = distance


class StokesConstancyError(StokeslabError):
    """Per-z Stokes estimates disagree beyond tolerance; the summation failed
    and the result must not be averaged silently."""

    def __init__(self, residual, tol):
        super().__init__(
            f"Stokes matrix varies with z: residual {residual:.3e} > {tol:.3e}"
        )
        self.residual = residual


class ConvergenceDisagreementError(StokeslabError):
    """Stokes-triviality and Gevrey-order evidence contradict each other."""

    def __init__(self, stokes_trivial, gevrey_verdict):
        super().__init__(
            "convergence tests disagree: Stokes matrices "
            f"{'all trivial' if stokes_trivial else 'nontrivial'} but series "
            f"estimate says {gevrey_verdict!r}"
        )
        self.stokes_trivial = stokes_trivial
        self.gevrey_verdict = gevrey_verdict


class IntegrationError(StokeslabError):
    """Path integration failure: step collapse or tolerance not met."""


class CoveringError(StokeslabError):
    """Disk covering for the isomonodromy check cannot be built."""


class GridError(StokeslabError):
    """Parameter grid too small or malformed for the requested check."""


class JobValidationError(StokeslabError):
    """CLI job file fails validation. Exit code 2."""


class CollisionAbort(StokeslabError):
    """Collision or degeneracy across the grid; abortable with --force. Exit 4."""

    def __init__(self, report):
        super().__init__("singular-direction collision/degeneracy across the grid")
        self.report = report
