"""Ground-truth potentials and synthetic columns shared by the tests."""
import numpy as np

from weylinverse.core import GridSpec, PoleSet, PotentialField

POLES_G = PoleSet((1.0, -1.0), (1, 1))
POLES_F = PoleSet((1.0, -1.0), (1, -1))


def _rows(th1, ch1, th2, ch2):
    r1 = np.stack([np.cos(th1), np.sin(th1) * np.exp(1j * ch1)], -1)
    r2 = np.stack([np.cos(th2), np.sin(th2) * np.exp(1j * ch2)], -1)
    return np.stack([r1, r2])


def smooth_rows(x):
    x = np.asarray(x, dtype=float)
    return _rows(0.3 + 0.25 * np.sin(2 * x), 0.5 * x + 0.2 * np.cos(x),
                 -0.2 + 0.3 * np.cos(1.5 * x), -0.4 * x * x + 0.1)


def vanishing_first_rows(x):
    """Same as ``smooth_rows`` but the first row starts at ``[0, 1]`` up to phase."""
    x = np.asarray(x, dtype=float)
    return _rows(np.pi / 2 + 0.25 * np.sin(2 * x), 0.5 * x + 0.2 * np.cos(x),
                 -0.2 + 0.3 * np.cos(1.5 * x), -0.4 * x * x + 0.1)


def split_rows(l0: float, amount: float):
    """``smooth_rows`` with the first angle bumped by ``amount`` beyond ``l0``."""
    def fn(x):
        x = np.asarray(x, dtype=float)
        bump = np.where(x > l0, 0.4 + 0.2 * np.sin(3 * x), 0.0)
        return _rows(0.3 + 0.25 * np.sin(2 * x) + amount * bump, 0.5 * x + 0.2 * np.cos(x),
                     -0.2 + 0.3 * np.cos(1.5 * x) + amount * bump, -0.4 * x * x + 0.1)
    return fn


def smooth_potential(n: int = 256, l: float = 1.0) -> PotentialField:
    return PotentialField.from_function(GridSpec(l, n), smooth_rows)


def trig_phi2(x):
    """Trigonometric second column and its exact derivative, two poles."""
    x = np.asarray(x, dtype=float)
    values = np.stack([0.3 * np.sin(2 * x) + 0.2j * np.cos(3 * x) + 0.1,
                       -0.25 * np.cos(x) + 0.15j * np.sin(2 * x)])
    deriv = np.stack([0.6 * np.cos(2 * x) - 0.6j * np.sin(3 * x),
                      0.25 * np.sin(x) + 0.3j * np.cos(2 * x)])
    return values, deriv


# ------------------------------------------------------------- shared builds
# these take seconds each; the cache shares them between test modules

from functools import lru_cache  # noqa: E402

from weylinverse import direct, inverse  # noqa: E402

ETA = -4.0
POLE_SETS = {"G": POLES_G, "F": POLES_F}


@lru_cache(maxsize=None)
def smooth_weyl(case: str = "G", n: int = 256) -> direct.WeylData:
    return direct.sample_weyl_function(smooth_potential(n), POLE_SETS[case], ETA)


@lru_cache(maxsize=None)
def roundtrip(case: str = "G", n: int = 256) -> inverse.ReconstructionReport:
    return inverse.recover_from_weyl_function(smooth_weyl(case), POLE_SETS[case],
                                              GridSpec(1.0, n), truth=smooth_potential(n))


@lru_cache(maxsize=None)
def vanishing_potential(n: int = 256) -> PotentialField:
    return PotentialField.from_function(GridSpec(1.0, n), vanishing_first_rows)


@lru_cache(maxsize=None)
def weyl_set(which: str = "smooth") -> inverse.WeylSetData:
    pot = smooth_potential() if which == "smooth" else vanishing_potential()
    return inverse.weyl_set_from_potential(pot, POLES_G, ETA)


@lru_cache(maxsize=None)
def weyl_set_report(which: str = "smooth") -> inverse.ReconstructionReport:
    truth = smooth_potential() if which == "smooth" else vanishing_potential()
    return inverse.recover_from_weyl_set(weyl_set(which), POLES_G, GridSpec(1.0, 256), truth=truth)


def split_pair(l0: float, n: int = 256, l: float = 2.0):
    grid = GridSpec(l, n)
    return (PotentialField.from_function(grid, split_rows(l0, 0.0)),
            PotentialField.from_function(grid, split_rows(l0, 1.0)))


@lru_cache(maxsize=None)
def borg_marchenko_rate(l0: float) -> float:
    a, b = split_pair(l0)
    return inverse.borg_marchenko_gap(a, b, POLES_G, l0, M=direct.bound_M(a, POLES_G)).rate


from weylinverse import sgordon  # noqa: E402

SG_SOLUTIONS = {"kink": sgordon.kink, "pi": sgordon.constant_pi}


@lru_cache(maxsize=None)
def sg_boundary(name: str) -> sgordon.BoundaryData:
    return sgordon.BoundaryData.from_solution(SG_SOLUTIONS[name], 20.0, 2000)


@lru_cache(maxsize=None)
def sg_recovery(name: str, t: float = 0.0) -> sgordon.CosOmega:
    return sgordon.recover_cos_omega(sg_boundary(name), t, GridSpec(1.0, 128))


def sg_recovery_error(name: str, t: float = 0.0) -> float:
    res = sg_recovery(name, t)
    return float(np.abs(res.values - np.cos(SG_SOLUTIONS[name](res.x, t)[0])).max())


@lru_cache(maxsize=None)
def sg_field(name: str, n: int) -> sgordon.SGField:
    return sgordon.SGField.from_solution(SG_SOLUTIONS[name], np.linspace(0, 1, n + 1),
                                         np.linspace(-0.5, 0.5, n + 1))
