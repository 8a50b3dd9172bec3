"""LadaGAN: linear additive-attention GAN on a small NumPy autodiff engine."""
from . import numerics
from .numerics import Tensor

__version__ = "0.1.0"
