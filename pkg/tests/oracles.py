"""Closed-form references shared by the unit and acceptance tests."""
import numpy as np


def reflected_pulse(x, half_width, v1, t, width, center=0.0):
    """x-profile at time t of a Gaussian pulse under free transport with specular walls.

    Specular walls fold the line: unfold onto a circle of length 4L, shift by v1 t,
    then fold back.  The pulse is even in v1 so both branches share one profile.
    """
    L = half_width
    period = 4.0 * L
    y = np.mod(x[:, None] - v1[None, :] * t + L, period) - L  # in [-L, 3L)
    y = np.where(y > L, 2.0 * L - y, y)
    return np.exp(-0.5 * ((y - center) / width) ** 2)


def slab_bounce_times(t, x0, v1, half_width, count):
    """Backward bounce times of the slab billiard started at x0 with normal velocity v1."""
    first = (x0 + half_width) / v1 if v1 > 0 else (half_width - x0) / -v1
    return t - first - np.arange(count) * (2.0 * half_width / abs(v1))


def free_transport_l1_error(grid, nx, dt, t_end, width=0.1, half_width=0.5):
    """L1 distance between the damped specular solver and the reflected-pulse solution."""
    from softbolt.solver import DistributionField, SlabSolver, initial_field, slab_nodes

    s = SlabSolver(grid, half_width, nx, "specular", dt, mode="damping")
    x = slab_nodes(half_width, nx)
    f = DistributionField(x, initial_field("gaussian_pulse", grid, x, half_width, width=width))
    n = int(round(t_end / dt))
    for _ in range(n):
        f = s.step(f)
    t = n * dt
    exact = reflected_pulse(x, half_width, grid.nodes[:, 0], t, width) * grid.sqrt_mu * np.exp(-s.nu * t)
    dx = 2 * half_width / nx
    return dx * np.sum(grid.weights * np.abs(f.values - exact))
