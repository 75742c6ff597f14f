"""Desk-scale laboratory for the two solution paths of low-rank matrix
sensing and completion: trace minimization over the PSD cone and
factorized gradient descent, with instance generators, failure witnesses,
restricted-isometry bounds, and a graph-propagation completion oracle."""

__version__ = "0.1.0"

from .errors import (ConditionNotMet, ConstructionFailure, DivergenceError,
                     InconsistencyError, InvalidInput, NumericalFailure,
                     RankDeficiencyError)
from .linalg import EigenDecomp, SymMat, mat_s, psd_check, sym_eig, vec
from .instances import (BlockSparsityGraph, Factor, Instance, MeasurementOp,
                        apply_op, canonical_low_complexity_graph, gen_chain,
                        gen_cycle, gen_low_complexity, induced_measurement_set,
                        make_instance, maximal_independent_set,
                        perturbed_operator)
from .bm import (BmOptions, CriticalityReport, LandscapeSummary, bm_gradient,
                 bm_hessian, bm_objective, classify_point, monte_carlo,
                 solve_gd)
from .sdp import (KktReport, RecoveryReport, SdpOptions, SdpResult,
                  kkt_residuals, recovery_check, solve_sdp, solve_sdp_raw)
from .riplab import (EBlocks, decompose_e, delta_lb_analytic, delta_lb_numeric,
                     eta_closed_form, eta_numeric, rip_constant_explicit,
                     sdp_sufficient_rip, verify_weyl_lemma)
from .certificates import (Certificate, chain_certificate, cycle_certificate,
                           example1_certificate, example2_certificate,
                           verify_certificate)
from .completer import CompletionResult, CrossCheck, cross_check, propagate_complete
