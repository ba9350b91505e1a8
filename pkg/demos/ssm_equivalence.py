"""A linear time-invariant state space model can be run two ways: as a
step-by-step recurrence, or as a single convolution with the kernel
C*A^k*B.  Both are implemented independently; this script shows they
agree to near machine precision, and that the zero-order-hold
discretization matches its closed form.
"""

import numpy as np

from ssmdenoise.rng import Rng
from ssmdenoise.ssm import (LtiSsm, discretize, ssm_convolutional, ssm_kernel,
                            ssm_recurrent)

rng = Rng(0)
N, L = 8, 32

m = LtiSsm(
    A=-rng.uniform(0.5, 2.0, size=N),  # stable continuous-time poles
    B=rng.normal(size=N),
    C=rng.normal(size=N),
    delta=0.1,
)
d = discretize(m)
print("Abar[0] vs exp(delta*A[0]):", d.Abar[0], np.exp(m.delta * m.A[0]))

u = rng.normal(size=L)
y_rec = ssm_recurrent(d, u)
y_conv = ssm_convolutional(d, u)
print("max |recurrent - convolutional| =", np.max(np.abs(y_rec - y_conv)))

k = ssm_kernel(d, L)
print("kernel head:", k[:4])
print("impulse response equals kernel:",
      np.allclose(ssm_recurrent(d, np.eye(L)[0]), k))
