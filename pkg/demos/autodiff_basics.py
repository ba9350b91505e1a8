"""The reverse-mode engine underneath the network, on a small expression.

Tensors record the ops applied to them; backward() walks the graph once
in topological order.  A central-difference check confirms the analytic
gradient.
"""

import numpy as np

from ssmdenoise.optim import grad_check
from ssmdenoise.rng import Rng
from ssmdenoise.tensor import Tensor, linear

rng = Rng(0)
x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
b = Tensor(np.zeros(2), requires_grad=True)

y = linear(x, w, b).silu().square().sum()
y.backward()
print("loss:", y.item())
print("dL/db:", b.grad)

err = grad_check(lambda ts: linear(ts[0], ts[1], ts[2]).silu().square().sum(),
                 [Tensor(x.data, requires_grad=True),
                  Tensor(w.data, requires_grad=True),
                  Tensor(b.data, requires_grad=True)])
print("central-difference relative error:", err)
