"""
Superconvergence of the network pressure
=========================================

The distance between the discrete pressure ``p1h`` and the elliptic
projection of the exact pressure converges one order faster in H1 than
the error itself.
"""

from mpet import TOTAL_PRESSURE
from mpet.verify import example1_case, convergence_study

case = example1_case()
rep = convergence_study(case, TOTAL_PRESSURE, levels=4, discretization_errors=True)

# full error: first order in H1
print("||p1 - p1h||_H1 rates:     ", rep.rates("p1:H1").round(2))
# discretization error against the projection: second order in H1
print("||Pi p1 - p1h||_H1 rates:  ", rep.rates("Pip1:H1").round(2))
print("||Pi u - uh||_H1 rates:    ", rep.rates("Piu:H1").round(2))
