"""Neural networks with activation networks."""
from . import kernels
from .activation_net import ANConfig, ConvActivationNet, DenseActivationNet, an_parameter_count
from .autograd import Parameter, Tensor, backward, no_grad
from .models import ModelSpec, LayerSpec, build, preset

__version__ = "0.1.0"
