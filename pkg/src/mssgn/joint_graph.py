"""Joint-level module: joint-type semantics, per-frame adaptive graph, residual GCN layers."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .numerics import BatchNorm, Linear, MLPEmbed, Module, Tensor, one_hot
from .numerics import functional as F


class JointTypeEmbedder(MLPEmbed):
    """Embeds the one-hot joint type; depends on the type only, never on the frame."""

    def __init__(self, num_joints: int, c1: int = 64, rng=None, dtype=np.float32):
        super().__init__(num_joints, c1, c1, rng=rng, dtype=dtype)
        self.num_joints = num_joints

    def embed(self, joint_types=None) -> Tensor:
        types = np.arange(self.num_joints) if joint_types is None else np.asarray(joint_types)
        return self(Tensor(one_hot(types, self.num_joints, dtype=self.fc1.weight.dtype)))


class AdjacencyHead(Module):
    def __init__(self, din: int, c2: int = 256, rng=None, dtype=np.float32):
        self.theta = Linear(din, c2, rng=rng, dtype=dtype)
        self.phi = Linear(din, c2, rng=rng, dtype=dtype)


class GraphConvLayer(Module):
    """``relu(BN(G Z W_y + Z W_z))`` without biases."""

    def __init__(self, din: int, dout: int, rng=None, dtype=np.float32, bn_momentum=0.1, bn_eps=1e-5):
        self.w_y = Linear(din, dout, bias=False, rng=rng, dtype=dtype)
        self.w_z = Linear(din, dout, bias=False, rng=rng, dtype=dtype)
        self.bn = BatchNorm(dout, axis=-1, momentum=bn_momentum, eps=bn_eps, dtype=dtype)


def concat_joint_semantics(z: Tensor, embedder: JointTypeEmbedder, joint_types=None) -> Tensor:
    """Append the joint-type embedding to every joint's dynamics: ``[..., J, C1] -> [..., J, 2*C1]``."""
    jt = embedder.embed(joint_types)
    return F.concat([z, F.broadcast_to(jt, z.shape[:-1] + jt.shape[-1:])], axis=-1)


def build_adjacency(Z: Tensor, head: AdjacencyHead) -> Tensor:
    """Row-softmax of ``theta(z_i) . phi(z_j)`` for each frame: ``[..., J, D] -> [..., J, J]``."""
    th = head.theta(Z)
    ph = head.phi(Z)
    S = F.matmul(th, F.transpose(ph, tuple(range(ph.ndim - 2)) + (ph.ndim - 1, ph.ndim - 2)))
    return F.softmax_rows(S)


def gcn_layer(Z: Tensor, G: Tensor, layer: GraphConvLayer) -> Tensor:
    y = layer.w_y(F.matmul(G, Z))
    return F.relu(layer.bn(F.add(y, layer.w_z(Z))))


class JointLevel(Module):
    def __init__(self, num_joints: int, c1: int = 64, c2: int = 256, gcn_dims: Sequence[int] = (128, 256, 256),
                 graph_uses_joint_type: bool = True, passing_uses_joint_type: bool = True,
                 rng=None, dtype=np.float32, bn_momentum=0.1, bn_eps=1e-5):
        self.graph_uses_joint_type = graph_uses_joint_type
        self.passing_uses_joint_type = passing_uses_joint_type
        uses_jt = graph_uses_joint_type or passing_uses_joint_type
        self.joint_type = JointTypeEmbedder(num_joints, c1, rng=rng, dtype=dtype) if uses_jt else None
        self.adjacency = AdjacencyHead(2 * c1 if graph_uses_joint_type else c1, c2, rng=rng, dtype=dtype)
        dims = [2 * c1 if passing_uses_joint_type else c1] + list(gcn_dims)
        self.gcn = [GraphConvLayer(a, b, rng=rng, dtype=dtype, bn_momentum=bn_momentum, bn_eps=bn_eps)
                    for a, b in zip(dims[:-1], dims[1:])]

    @property
    def out_dim(self) -> int:
        return self.gcn[-1].w_y.weight.shape[0]

    def forward(self, z: Tensor, joint_types=None):
        """``[N, T, J, C1]`` -> (``[N, T, J, D]`` features, ``[N, T, J, J]`` graphs)."""
        Zjt = concat_joint_semantics(z, self.joint_type, joint_types) if self.joint_type is not None else None
        G = build_adjacency(Zjt if self.graph_uses_joint_type else z, self.adjacency)
        h = Zjt if self.passing_uses_joint_type else z
        for layer in self.gcn:
            h = gcn_layer(h, G, layer)
        return h, G


def jl_forward(z: Tensor, module: JointLevel, joint_types=None) -> Tensor:
    return module(z, joint_types)[0]
