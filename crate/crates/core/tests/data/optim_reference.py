"""Reference trajectories for the optimizer oracle test.

Minimises f(a, b) = 0.5 * (a^2 + 3 b^2) from (0.6, -0.8) for 100 steps
with each update rule written out independently. Run with python3 and
redirect stdout to optim_reference.json.
"""
import json
import math


def grad(theta):
    return [theta[0], 3.0 * theta[1]]


def adam(lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    theta, m, v, out = [0.6, -0.8], [0.0, 0.0], [0.0, 0.0], []
    for t in range(1, steps + 1):
        g = grad(theta)
        for i in range(2):
            m[i] = b1 * m[i] + (1 - b1) * g[i]
            v[i] = b2 * v[i] + (1 - b2) * g[i] ** 2
            mh = m[i] / (1 - b1 ** t)
            vh = v[i] / (1 - b2 ** t)
            theta[i] -= lr * mh / (math.sqrt(vh) + eps)
        out.append(list(theta))
    return out


def adagrad(lr, steps, eps=1e-8):
    theta, acc, out = [0.6, -0.8], [0.0, 0.0], []
    for _ in range(steps):
        g = grad(theta)
        for i in range(2):
            acc[i] += g[i] ** 2
            theta[i] -= lr * g[i] / (math.sqrt(acc[i]) + eps)
        out.append(list(theta))
    return out


def adadelta(steps, rho=0.9, eps=1e-6):
    theta, eg, edx, out = [0.6, -0.8], [0.0, 0.0], [0.0, 0.0], []
    for _ in range(steps):
        g = grad(theta)
        for i in range(2):
            eg[i] = rho * eg[i] + (1 - rho) * g[i] ** 2
            dx = -math.sqrt(edx[i] + eps) / math.sqrt(eg[i] + eps) * g[i]
            edx[i] = rho * edx[i] + (1 - rho) * dx ** 2
            theta[i] += dx
        out.append(list(theta))
    return out


def rmsprop(lr, steps, rho=0.9, eps=1e-6):
    theta, eg, out = [0.6, -0.8], [0.0, 0.0], []
    for _ in range(steps):
        g = grad(theta)
        for i in range(2):
            eg[i] = rho * eg[i] + (1 - rho) * g[i] ** 2
            theta[i] -= lr * g[i] / (math.sqrt(eg[i]) + eps)
        out.append(list(theta))
    return out


if __name__ == "__main__":
    lr = 0.01
    print(json.dumps({
        "learning_rate": lr,
        "start": [0.6, -0.8],
        "adam": adam(lr, 100),
        "adagrad": adagrad(lr, 100),
        "adadelta": adadelta(100),
        "rmsprop": rmsprop(lr, 100),
    }, indent=1))
