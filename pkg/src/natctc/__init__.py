"""Non-autoregressive CTC translation at desk scale.

CTC training over MASK-inserted (or token-duplicated) upsampled sources,
Hungarian-matched embedding distillation from a frozen masked-LM teacher,
and CTC prefix beam search fused with an n-gram language model.
"""

__version__ = "0.1.0"
