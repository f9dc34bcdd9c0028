"""Stationary geometric laws of the mean-field closure over a sweep of d2.

Run:  python3 demos/stationary_phases.py
"""

import numpy as np

from crsos.mean_field import MeanFieldParams, bulk_residual, solve_lambda, stationary_quadratic

c = (1.0, 1.0, 1.0, 1.0)
print(f"{'d2':>5} {'phase':>10} {'lambda':>8} {'<h>':>8} {'G(lambda)':>10}   published-triple roots")
for d2 in np.linspace(0.0, 3.0, 7):
    params = MeanFieldParams(c, (0.5, d2, 0.5, 0.5))
    published, collected = stationary_quadratic(params)
    res = solve_lambda(collected)
    alt = solve_lambda(published).roots_in_unit
    if res.lambda_ is None:
        print(f"{d2:5.2f} {res.phase:>10} {'-':>8} {'-':>8} {'-':>10}   {np.round(alt, 4)}")
        continue
    print(f"{d2:5.2f} {res.phase:>10} {res.lambda_:8.4f} {res.mean_height:8.4f} "
          f"{bulk_residual(res.lambda_, params):10.1e}   {np.round(alt, 4)}")
