"""Verify the analytic backward pass with central finite differences.

Builds a small float64 classifier (encoder + grid reshape + conv head),
defines the softmax cross-entropy loss over one batch, and compares a
random sample of analytic gradient coordinates against numeric ones.
Flip the sign of one gradient (set INJECT_BUG = True) to see how loudly
a wrong backward pass fails.
"""

import numpy as np

from penet import Classifier, grad_check, softmax_cross_entropy

INJECT_BUG = False

model = Classifier(din=6, num_classes=4, k=64, depth=3, seed=7,
                   dtype=np.float64)
rng = np.random.default_rng(0)
x = rng.standard_normal((2, 32, 6))
labels = np.array([1, 3])


def loss_fn():
    logits = model.forward(x)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    model.zero_grads()
    if INJECT_BUG:
        dlogits = -dlogits
    model.backward(dlogits)
    return loss


report = grad_check(loss_fn, model.params(), tol=1e-5, eps=1e-7,
                    denom_floor=1e-3, samples_per_param=20,
                    rng=np.random.default_rng(1))
print(f"checked {report.checked} coordinates, "
      f"max relative error {report.max_rel_error:.3e}")
print("PASS" if report.passed else f"FAIL at {report.worst_param}")
