from .flow import DequantFlow
from .objective import (BoundDraws, draw_dequant_bound, uniform_dequant_objective, uniform_dequantize,
                        var_deq_loss_and_gradient, var_deq_objective, var_deq_sample_and_logq)
