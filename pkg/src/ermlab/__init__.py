"""ERM laboratory for strongly convex / exp-concave losses.

Implements empirical risk minimization on Euclidean balls, exact population
minimizers for finite-support distributions, seminorm covering nets, exact
exponential moments of offset Rademacher processes and Monte Carlo checks of
the ``(d + log(1/delta)) / n`` excess-risk rate.
"""

from .certify import CertificationReport, certify_assumption1
from .geometry import (Annulus, Ball, SeminormNet, annulus_membership, build_euclidean_net,
                       cover_annulus, project_to_ball)
from .losses import (Datum, EmpiricalObjective, LossModel, empirical_risk, make_logistic_loss,
                     make_squared_loss)
from .processes import (OffsetProcessInstance, exp_moment_exhaustive, offset_supremum,
                        peel_decompose, rademacher_sup_mc)
from .risk_lab import (ExperimentConfig, RiskSweepResult, make_distribution, run_sweep,
                       tail_profile, theory_bound)
from .seminorm import PsdSeminorm, build_seminorm, pushforward_root, seminorm_of
from .solver import (DiscreteDistribution, ErmResult, excess_risk, minimize_empirical,
                     minimize_population)

__version__ = "0.1.0"
