"""
The reverse-mode engine underneath
==================================

The network trains on a small numpy tape: tensors record their parents,
backward walks the graph once, Adam consumes the gradients.  This script
fits a two-layer perceptron to a noisy sine and then verifies a composed
graph against central differences.
"""

import numpy as np

from focalforge.autodiff import (
    AdamState,
    ParamSet,
    adam_step,
    add,
    affine,
    conv2d,
    cosine_warmup_lr,
    gradcheck,
    l1_loss,
    mul,
    relu,
    tensor,
)

rng = np.random.default_rng(0)
x = rng.uniform(-3.0, 3.0, (256, 1))
y = np.sin(x) + rng.normal(0.0, 0.05, x.shape)

ps = ParamSet()
ps.add("w1", rng.normal(0.0, 0.5, (1, 32)))
ps.add("b1", np.zeros(32))
ps.add("w2", rng.normal(0.0, 0.5, (32, 1)))
ps.add("b2", np.zeros(1))


def forward(inp):
    h = relu(affine(inp, ps["w1"], ps["b1"]))
    return affine(h, ps["w2"], ps["b2"])


state = AdamState()
params = ps.parameters()
for epoch in range(300):
    lr = cosine_warmup_lr(epoch, total=300, warmup=20, base=0.01)
    ps.zero_grad()
    loss = l1_loss(forward(tensor(x)), y)
    loss.backward()
    grads = [p.grad for p in params]
    adam_step(params, grads, state, lr)
    if epoch % 60 == 0 or epoch == 299:
        print(f"epoch {epoch:3d}  lr {lr:.4f}  L1 {float(loss.data):.4f}")

probe = np.linspace(-3.0, 3.0, 7)[:, None]
fit = forward(tensor(probe)).data[:, 0]
print("x:   " + "  ".join(f"{v:6.2f}" for v in probe[:, 0]))
print("sin: " + "  ".join(f"{v:6.2f}" for v in np.sin(probe[:, 0])))
print("fit: " + "  ".join(f"{v:6.2f}" for v in fit))

# Every primitive carries its own backward rule; a composed graph is only
# trustworthy if the whole chain differentiates correctly.
a = tensor(rng.normal(0.0, 1.0, (2, 3, 8, 8)), requires_grad=True, dtype=np.float64)
w = tensor(rng.normal(0.0, 0.3, (4, 3, 3, 3)), requires_grad=True, dtype=np.float64)


def graph(a, w):
    h = relu(conv2d(a, w, stride=2, pad=1))
    return l1_loss(add(h, mul(h, h)), 0.1)


err = gradcheck(graph, [a, w], sample=40)
print(f"conv/relu/mul chain gradient check: max error {err:.2e} (tolerance 1e-4)")
