"""Dense MLP with hand-rolled backprop, plus the Gaussian actor-critic pair.

Keeping the function approximator self-contained (numpy forward, analytic
reverse pass) makes the training loop fully deterministic and easy to
gradient-check against finite differences.
"""

import json
import struct

import numpy as np

CHECKPOINT_MAGIC = b"WQCK"
CHECKPOINT_VERSION = 1

LOG_2PI = float(np.log(2.0 * np.pi))


def elu(x):
    return np.where(x > 0.0, x, np.expm1(x))


def elu_grad(x):
    # exp(x) at x = 0 gives 1, matching the right-hand slope: the derivative
    # is continuous and no special case is needed
    return np.where(x > 0.0, 1.0, np.exp(x))


def orthogonal(rng, shape, gain=1.0):
    """Orthogonal weight init (QR of a Gaussian draw, sign-fixed)."""
    a = rng.standard_normal((max(shape), min(shape)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return np.ascontiguousarray(gain * q[: shape[0], : shape[1]])


class Mlp:
    """Fully connected net: affine + ELU per hidden layer, linear head.

    Weights are stored as (fan_in, fan_out) so a batch row-vector input
    composes left-to-right: h = x @ W + b.
    """

    def __init__(self, sizes, rng, head_scale=1.0):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        self.sizes = sizes
        self.weights = []
        self.biases = []
        last = len(sizes) - 2
        for k in range(len(sizes) - 1):
            gain = head_scale if k == last else np.sqrt(2.0)
            self.weights.append(orthogonal(rng, (sizes[k], sizes[k + 1]), gain))
            self.biases.append(np.zeros(sizes[k + 1]))

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def forward(self, x):
        """Returns (output, cache); cache feeds backward()."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.in_dim:
            raise ValueError(f"input width {x.shape[1]}, expected {self.in_dim}")
        inputs = [x]
        pre = []
        h = x
        n_layers = len(self.weights)
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            pre.append(z)
            h = z if k == n_layers - 1 else elu(z)
            inputs.append(h)
        out = h[0] if squeeze else h
        return out, (inputs, pre, squeeze)

    def backward(self, cache, dout):
        """Reverse pass: returns (gradients, d_input).

        gradients is a list of (dW, db) matching self.weights layer order;
        dout must be the loss gradient at the network output.
        """
        inputs, pre, squeeze = cache
        dout = np.asarray(dout, dtype=np.float64)
        if squeeze and dout.ndim == 1:
            dout = dout[None, :]
        grads = [None] * len(self.weights)
        delta = dout
        for k in range(len(self.weights) - 1, -1, -1):
            if k != len(self.weights) - 1:
                delta = delta * elu_grad(pre[k])
            grads[k] = (inputs[k].T @ delta, delta.sum(axis=0))
            delta = delta @ self.weights[k].T
        return grads, (delta[0] if squeeze else delta)

    # -- flat parameter plumbing ------------------------------------------

    def param_blocks(self):
        out = []
        for k in range(len(self.weights)):
            out.append(self.weights[k])
            out.append(self.biases[k])
        return out

    def set_param_blocks(self, blocks):
        it = iter(blocks)
        for k in range(len(self.weights)):
            self.weights[k] = np.asarray(next(it), dtype=np.float64)
            self.biases[k] = np.asarray(next(it), dtype=np.float64)


def gaussian_log_prob(actions, mean, log_std):
    """Row-wise log density of a diagonal Gaussian."""
    std = np.exp(log_std)
    z = (actions - mean) / std
    d = mean.shape[-1]
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * d * LOG_2PI


def gaussian_entropy(log_std):
    return float(np.sum(log_std) + 0.5 * log_std.size * (1.0 + LOG_2PI))


class ActorCritic:
    """Asymmetric pair: actor 57 -> 16 Gaussian head, critic 244 -> 1.

    The log-std vector is state independent and shared across the batch;
    the critic sees the actor observation plus the privileged terrain
    samples, the actor never does.
    """

    def __init__(self, actor_in=57, critic_in=244, action_dim=16,
                 hidden=(128, 64, 32), seed=0):
        ss = np.random.SeedSequence([int(seed), 0xAC])
        rng_a, rng_c = [np.random.default_rng(s) for s in ss.spawn(2)]
        self.actor = Mlp([actor_in, *hidden, action_dim], rng_a, head_scale=0.01)
        self.critic = Mlp([critic_in, *hidden, 1], rng_c)
        self.log_std = np.zeros(action_dim)
        self.hidden = tuple(int(h) for h in hidden)

    @property
    def action_dim(self):
        return self.actor.out_dim

    # -- inference ---------------------------------------------------------

    def act(self, obs_actor, rng):
        """Sample actions: returns (action, log_prob, mean)."""
        mean, _ = self.actor.forward(obs_actor)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(np.shape(mean))
        action = mean + std * noise
        return action, gaussian_log_prob(action, mean, self.log_std), mean

    def act_deterministic(self, obs_actor):
        mean, _ = self.actor.forward(obs_actor)
        return mean

    def value(self, obs_critic):
        v, _ = self.critic.forward(obs_critic)
        return v[..., 0]

    def evaluate(self, obs_actor, obs_critic, actions):
        """Log-probs, entropy, values and caches for a training minibatch."""
        mean, actor_cache = self.actor.forward(obs_actor)
        values, critic_cache = self.critic.forward(obs_critic)
        logp = gaussian_log_prob(actions, mean, self.log_std)
        return {
            "mean": mean,
            "values": values[..., 0],
            "log_prob": logp,
            "entropy": gaussian_entropy(self.log_std),
            "actor_cache": actor_cache,
            "critic_cache": critic_cache,
        }

    # -- parameters --------------------------------------------------------

    def param_blocks(self):
        return self.actor.param_blocks() + self.critic.param_blocks() + [self.log_std]

    def set_param_blocks(self, blocks):
        na = 2 * len(self.actor.weights)
        nc = 2 * len(self.critic.weights)
        self.actor.set_param_blocks(blocks[:na])
        self.critic.set_param_blocks(blocks[na:na + nc])
        self.log_std = np.asarray(blocks[na + nc], dtype=np.float64)

    def params_flat(self):
        return np.concatenate([b.ravel() for b in self.param_blocks()])

    def set_params_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        blocks = []
        off = 0
        for b in self.param_blocks():
            blocks.append(flat[off:off + b.size].reshape(b.shape).copy())
            off += b.size
        if off != flat.size:
            raise ValueError("flat parameter vector has the wrong length")
        self.set_param_blocks(blocks)

    # -- persistence -------------------------------------------------------
    #
    # Checkpoint byte layout (little endian throughout):
    #   0:4   magic b"WQCK"
    #   4:8   u32 format version (1)
    #   8:12  u32 header length L
    #   12:12+L UTF-8 JSON header: actor_sizes, critic_sizes, hidden,
    #           param_count, plus free-form "meta"
    #   12+L: param_count float64 values (flat parameter vector)

    def save(self, path, meta=None):
        flat = self.params_flat()
        header = json.dumps({
            "actor_sizes": self.actor.sizes,
            "critic_sizes": self.critic.sizes,
            "hidden": list(self.hidden),
            "param_count": int(flat.size),
            "meta": meta or {},
        }).encode()
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
            f.write(header)
            f.write(flat.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            magic = f.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise ValueError("not a checkpoint file")
            version, hlen = struct.unpack("<II", f.read(8))
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            header = json.loads(f.read(hlen).decode())
            flat = np.frombuffer(f.read(header["param_count"] * 8), dtype="<f8")
        a_sizes = header["actor_sizes"]
        c_sizes = header["critic_sizes"]
        net = cls(actor_in=a_sizes[0], critic_in=c_sizes[0],
                  action_dim=a_sizes[-1], hidden=header["hidden"])
        net.set_params_flat(flat.astype(np.float64))
        return net
