"""Monte Carlo sensitivities of power-utility value functions in fractional markets."""

from .fbm_kernel import (HurstParam, QuadratureSpec, SingularPointError, c1, c2, c_norm, dc_norm,
                     dkernel, dq_l2_error, kernel, kernel_l2)
from .kim_omberg import (RiccatiBlowUpError, RiccatiSolution, complete_market_value,
                         solve_riccati, strategy_ko, tilted_weights, value_ko)
from .market import (ModelParams, StrategySpec, constant_strategy, deflator_path,
                     dvol_process, estimate_value, merton_strategy, model2_transform,
                     myopic_strategy, return_path, simulate_market, wealth_path)
from .mc import MCEstimate
from .paths import (Grid, NoiseBundle, ProcessPath, dlambda_path, exact_fbm_oracle, fbm_path,
                    fou_path, frechet_remainder, norm_beta, sample_noise)
from .sensitivity import (BoundReport, ExpansionReport, MeanRevTable, constant_direction,
                          constant_drift, constant_shift_fd, gateaux_derivative,
                          hurst_derivative, hurst_expansion, hurst_slope_fit, meanrev_gap,
                          ratio_test, suboptimality_bound)

__all__ = [name for name in dir() if not name.startswith("_")]
