"""Certificates of (un)representability for truncated moment sequences.

Given moments y of degree <= d and a compact K = {g_i >= 0}, decide whether y
is the moment vector of a measure on K: either produce p >= 1 on K with
L_y(p) = 0 (an SOS-backed certificate, verified in rational arithmetic) or
an atomic measure whose moments match y.
"""
from .certify import (CertifyOptions, NotFoundAtDegree, Verdict, build_certificate_sdp,
                      certify_moment, default_schedule, extract_sos, find_certificate,
                      scale_certificate)
from .exact import (RationalCertificate, RoundingFailed, exact_psd, project_and_verify,
                    round_to_rational, verify_certificate)
from .measure import AtomicMeasure, NotFound, find_measure, hankel_atoms_1d, psd_prescreen
from .polycore import (MomentVector, MonomialBasis, Polynomial, SemialgebraicDescription,
                       input_stats, localizing_matrix, moment_matrix, moments_of_atomic_measure,
                       riesz_apply)
from .qmodule import Certificate, QuadraticModuleTruncation
from .sdp import SdpProblem, Status, check_kkt, solve_max_margin

__version__ = "0.1.0"
