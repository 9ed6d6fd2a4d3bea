from anytime_mc.models.lgssm import (
    LgssmSpec,
    bootstrap_pf_loglik,
    kalman_loglik,
    kalman_truth,
    lgssm_exact_targets,
    lgssm_pseudomarginal_targets,
    simulate_lgssm,
)
from anytime_mc.models.lorenz96 import (
    Lorenz96Spec,
    lorenz96_drift,
    lorenz96_pf_loglik,
    lorenz96_sde_step,
    lorenz96_simulate_dataset,
    lorenz96_smc2_targets,
)

__all__ = [
    "LgssmSpec", "kalman_loglik", "kalman_truth", "bootstrap_pf_loglik",
    "simulate_lgssm", "lgssm_exact_targets", "lgssm_pseudomarginal_targets",
    "Lorenz96Spec", "lorenz96_drift", "lorenz96_sde_step",
    "lorenz96_simulate_dataset", "lorenz96_pf_loglik", "lorenz96_smc2_targets",
]
