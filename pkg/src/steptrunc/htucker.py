"""Hierarchical Tucker tensors: dimension trees, HOSVD truncation, arithmetic.

Format conventions
------------------
A tensor is represented on a binary dimension tree whose leaves are the
modes ``0..d-1`` and whose internal nodes carry contiguous, increasing mode
sets (children partition the parent, left child holds the smaller modes).
Each leaf ``k`` stores a frame ``U_k`` of shape ``(n_k, r_k)``; each
internal node stores a transfer tensor ``B`` of shape ``(r_left, r_right,
r_node)`` with the root rank pinned to 1.

The (never materialized, except at the root on demand) frame of an internal
node is

    ``U_node = kron(U_right, U_left) @ B.reshape(r_l * r_r, r_node, order="F")``

so that row ``i_left + n_left * i_right`` follows the same column-major
linearization as :mod:`steptrunc.dense`.  With contiguous mode sets this
makes the root frame exactly the column-major vectorization of the dense
tensor, which is what ties every contraction here to the dense oracle.

Truncation distributes a total tolerance ``eps`` uniformly over the
``2d - 2`` non-root nodes as ``eps / sqrt(2d - 2)``; per-node discards are
orthogonal projections derived from the tensor's own Gramians, so the
root-sum-square of all discarded eigenvalues bounds the true error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import dense
from .dense import DenseTensor, check_budget
from .errors import InputError

HT_FORMAT_VERSION = "steptrunc htensor v1"


def quasi_opt_factor(d):
    """Worst-case ratio between hierarchical-SVD and best truncation errors."""
    return float(np.sqrt(2 * d - 3))


@dataclass(frozen=True)
class TreeNode:
    modes: tuple
    left: int | None = None
    right: int | None = None
    parent: int | None = None

    @property
    def is_leaf(self):
        return self.left is None


class DimensionTree:
    """Binary dimension tree over modes 0..d-1 with contiguous splits.

    Nodes are stored in preorder; index 0 is the root.  Layers (root first)
    are available through :meth:`layers` for reporting.
    """

    def __init__(self, nodes):
        self.nodes = tuple(nodes)
        root = self.nodes[0]
        self.d = len(root.modes)
        if root.modes != tuple(range(self.d)):
            raise InputError("root node must cover all modes")
        self._leaf_of_mode = {
            node.modes[0]: i for i, node in enumerate(self.nodes) if node.is_leaf
        }

    @classmethod
    def balanced(cls, d):
        """Canonical tree: split mode ranges in half, larger half left."""
        return cls._build(d, lambda m: (m + 1) // 2)

    @classmethod
    def linear(cls, d):
        """Degenerate tree splitting one leading mode at a time (train-like)."""
        return cls._build(d, lambda m: 1)

    @classmethod
    def _build(cls, d, split_point):
        if d < 2:
            raise InputError(f"dimension trees need d >= 2, got d={d}")
        nodes = []

        def grow(modes, parent):
            idx = len(nodes)
            nodes.append(None)
            if len(modes) == 1:
                nodes[idx] = TreeNode(modes, parent=parent)
            else:
                h = split_point(len(modes))
                left = grow(modes[:h], idx)
                right = grow(modes[h:], idx)
                nodes[idx] = TreeNode(modes, left=left, right=right, parent=parent)
            return idx

        grow(tuple(range(d)), None)
        return cls(nodes)

    @classmethod
    def build(cls, d, kind="balanced"):
        if kind == "balanced":
            return cls.balanced(d)
        if kind == "linear":
            return cls.linear(d)
        raise InputError(f"unknown tree kind {kind!r}")

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, DimensionTree):
            return NotImplemented
        return [
            (n.modes, n.left, n.right) for n in self.nodes
        ] == [(n.modes, n.left, n.right) for n in other.nodes]

    def __hash__(self):
        return hash(tuple((n.modes, n.left, n.right) for n in self.nodes))

    @property
    def nonroot_count(self):
        return len(self.nodes) - 1

    def leaf_index(self, mode):
        return self._leaf_of_mode[mode]

    def postorder(self):
        """Node indices with children before parents."""
        out = []

        def rec(i):
            node = self.nodes[i]
            if not node.is_leaf:
                rec(node.left)
                rec(node.right)
            out.append(i)

        rec(0)
        return out

    def layers(self):
        """Lists of node indices per depth, root layer first."""
        out = [[0]]
        while True:
            nxt = []
            for i in out[-1]:
                node = self.nodes[i]
                if not node.is_leaf:
                    nxt.extend([node.left, node.right])
            if not nxt:
                return out
            out.append(nxt)

    def to_json(self):
        return json.dumps(
            [[list(n.modes), n.left, n.right, n.parent] for n in self.nodes]
        )

    @classmethod
    def from_json(cls, text):
        nodes = [
            TreeNode(tuple(modes), left, right, parent)
            for modes, left, right, parent in json.loads(text)
        ]
        return cls(nodes)


@dataclass(frozen=True)
class TruncationControl:
    """How to pick ranks: a total tolerance, per-node caps, or both.

    ``eps`` is an absolute Frobenius tolerance on the whole tensor.
    ``max_rank`` is a uniform int cap or a mapping from a node's mode tuple
    to its cap.
    """

    eps: float | None = None
    max_rank: object = None

    def __post_init__(self):
        if self.eps is None and self.max_rank is None:
            raise InputError("TruncationControl needs eps and/or max_rank")
        if self.eps is not None and self.eps < 0:
            raise InputError(f"tolerance must be >= 0, got {self.eps}")

    def cap_for(self, modes):
        if self.max_rank is None:
            return None
        if isinstance(self.max_rank, int):
            return max(1, self.max_rank)
        return max(1, int(self.max_rank[tuple(modes)]))


class HTensor:
    """A tensor in hierarchical Tucker form on a :class:`DimensionTree`.

    Instances are immutable by convention: every operation returns a new
    HTensor and never mutates frames or transfer tensors in place.
    """

    __slots__ = ("tree", "dims", "leaves", "transfers")

    def __init__(self, tree, leaves, transfers):
        self.tree = tree
        self.leaves = [np.asarray(u, dtype=float) for u in leaves]
        self.transfers = {i: np.asarray(b, dtype=float) for i, b in transfers.items()}
        if len(self.leaves) != tree.d:
            raise InputError("one leaf frame per mode is required")
        self.dims = tuple(u.shape[0] for u in self.leaves)
        root_b = self.transfers[0]
        if root_b.shape[2] != 1:
            raise InputError(f"root rank must be 1, got {root_b.shape[2]}")
        for i, node in enumerate(tree.nodes):
            if node.is_leaf:
                continue
            b = self.transfers[i]
            if b.ndim != 3:
                raise InputError(f"transfer tensor at node {i} must be 3-way")
            rl = self.rank(node.left)
            rr = self.rank(node.right)
            if b.shape[:2] != (rl, rr):
                raise InputError(
                    f"transfer shape {b.shape} at node {i} does not match "
                    f"child ranks ({rl}, {rr})"
                )

    def rank(self, node_index):
        node = self.tree.nodes[node_index]
        if node.is_leaf:
            return self.leaves[node.modes[0]].shape[1]
        return self.transfers[node_index].shape[2]

    def ranks(self):
        """Per-node ranks keyed by the node's mode tuple."""
        return {
            node.modes: self.rank(i) for i, node in enumerate(self.tree.nodes)
        }

    def ranks_in_node_order(self):
        return tuple(self.rank(i) for i in range(len(self.tree)))

    def max_rank(self):
        return max(self.ranks_in_node_order())

    def storage_size(self):
        """Number of stored floats (frames plus transfer tensors)."""
        return sum(u.size for u in self.leaves) + sum(
            b.size for b in self.transfers.values()
        )

    def copy(self):
        return HTensor(
            self.tree,
            [u.copy() for u in self.leaves],
            {i: b.copy() for i, b in self.transfers.items()},
        )

    def __repr__(self):
        return (
            f"HTensor(dims={self.dims}, max_rank={self.max_rank()}, "
            f"storage={self.storage_size()})"
        )

    # -- dense bridge -------------------------------------------------

    def node_frame(self, node_index):
        """Materialize the (column-major) frame of one node; budget-checked."""
        node = self.tree.nodes[node_index]
        if node.is_leaf:
            return self.leaves[node.modes[0]]
        rows = int(np.prod([self.dims[k] for k in node.modes]))
        check_budget((rows, self.rank(node_index)))
        ul = self.node_frame(node.left)
        ur = self.node_frame(node.right)
        b = self.transfers[node_index]
        out = np.einsum("il,jm,lmk->ijk", ul, ur, b)
        return out.reshape(ul.shape[0] * ur.shape[0], b.shape[2], order="F")

    def to_dense(self):
        check_budget(self.dims)
        vec = self.node_frame(0)[:, 0]
        return DenseTensor(vec.reshape(self.dims, order="F"))

    def norm(self):
        return float(np.sqrt(max(inner(self, self), 0.0)))

    # -- container format ---------------------------------------------

    def save(self, path):
        arrays = {
            "format": np.array(HT_FORMAT_VERSION),
            "tree": np.array(self.tree.to_json()),
            "dims": np.array(self.dims, dtype=np.int64),
        }
        for k, u in enumerate(self.leaves):
            arrays[f"leaf_{k}"] = u
        for i, b in self.transfers.items():
            arrays[f"transfer_{i}"] = b
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            if str(data["format"]) != HT_FORMAT_VERSION:
                raise InputError(f"unrecognized container format {data['format']}")
            tree = DimensionTree.from_json(str(data["tree"]))
            leaves = [data[f"leaf_{k}"] for k in range(tree.d)]
            transfers = {
                i: data[f"transfer_{i}"]
                for i, node in enumerate(tree.nodes)
                if not node.is_leaf
            }
        return cls(tree, leaves, transfers)


def rank_one(tree, vectors):
    """HTensor for the outer product of one vector per mode."""
    vectors = [np.asarray(v, dtype=float).reshape(-1, 1) for v in vectors]
    if len(vectors) != tree.d:
        raise InputError("need one vector per mode")
    transfers = {
        i: np.ones((1, 1, 1))
        for i, node in enumerate(tree.nodes)
        if not node.is_leaf
    }
    return HTensor(tree, vectors, transfers)


def scale(h, alpha):
    """alpha * h, folded into the root transfer tensor."""
    transfers = {i: b.copy() for i, b in h.transfers.items()}
    transfers[0] = alpha * transfers[0]
    return HTensor(h.tree, [u.copy() for u in h.leaves], transfers)


def zeros_like(h):
    return scale(h, 0.0)


def _check_compatible(h1, h2):
    if h1.tree != h2.tree:
        raise InputError("HTensors live on different dimension trees")
    if h1.dims != h2.dims:
        raise InputError(f"dims mismatch: {h1.dims} vs {h2.dims}")


def linear_combine(alpha, h1, beta, h2):
    """Exact alpha*h1 + beta*h2; node ranks add, nothing is truncated."""
    _check_compatible(h1, h2)
    if beta == 0.0:
        return scale(h1, alpha)
    if alpha == 0.0:
        return scale(h2, beta)
    tree = h1.tree
    leaves = [
        np.hstack([h1.leaves[k], h2.leaves[k]]) for k in range(tree.d)
    ]
    transfers = {}
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            continue
        b1, b2 = h1.transfers[i], h2.transfers[i]
        (l1, r1, t1), (l2, r2, t2) = b1.shape, b2.shape
        if i == 0:
            b = np.zeros((l1 + l2, r1 + r2, 1))
            b[:l1, :r1, :] = alpha * b1
            b[l1:, r1:, :] = beta * b2
        else:
            b = np.zeros((l1 + l2, r1 + r2, t1 + t2))
            b[:l1, :r1, :t1] = b1
            b[l1:, r1:, t1:] = b2
        transfers[i] = b
    return HTensor(tree, leaves, transfers)


def inner(h1, h2):
    """Inner product by tree contraction, without densifying."""
    _check_compatible(h1, h2)
    tree = h1.tree
    partial = {}
    for i in tree.postorder():
        node = tree.nodes[i]
        if node.is_leaf:
            k = node.modes[0]
            partial[i] = h1.leaves[k].T @ h2.leaves[k]
        else:
            ml = partial.pop(node.left)
            mr = partial.pop(node.right)
            partial[i] = np.einsum(
                "ijk,il,jm,lmn->kn", h1.transfers[i], ml, mr, h2.transfers[i]
            )
    return float(partial[0][0, 0])


def contract_all(h, vectors):
    """Contract every mode with a vector, yielding a scalar."""
    if len(vectors) != h.tree.d:
        raise InputError("need one vector per mode")
    return float(_contract_subtree(h, 0, vectors)[0])


def contract_subtree(h, node_index, vectors):
    """Contract all modes below `node_index`, returning a length-r_node vector.

    `vectors` may cover only the subtree's modes (a dict keyed by mode).
    """
    return _contract_subtree(h, node_index, vectors)


def _contract_subtree(h, node_index, vectors):
    node = h.tree.nodes[node_index]
    if node.is_leaf:
        k = node.modes[0]
        v = np.asarray(vectors[k], dtype=float)
        if v.shape != (h.dims[k],):
            raise InputError(f"vector for mode {k} must have length {h.dims[k]}")
        return v @ h.leaves[k]
    wl = _contract_subtree(h, node.left, vectors)
    wr = _contract_subtree(h, node.right, vectors)
    return np.einsum("ijk,i,j->k", h.transfers[node_index], wl, wr)


def orthogonalize(h):
    """Same tensor with every non-root frame/unfolding orthonormal.

    Bottom-up QR; each R factor is pushed into the parent transfer tensor,
    so ranks can only shrink (to the unfolding's row count) and the value
    is preserved to roundoff.
    """
    leaves = [u.copy() for u in h.leaves]
    transfers = {i: b.copy() for i, b in h.transfers.items()}
    tree = h.tree
    for i in tree.postorder():
        node = tree.nodes[i]
        if node.parent is None:
            continue
        if node.is_leaf:
            q, r = np.linalg.qr(leaves[node.modes[0]])
            leaves[node.modes[0]] = q
        else:
            b = transfers[i]
            rl, rr, rt = b.shape
            q, r = np.linalg.qr(b.reshape(rl * rr, rt, order="F"))
            transfers[i] = q.reshape(rl, rr, q.shape[1], order="F")
        parent = tree.nodes[node.parent]
        bp = transfers[node.parent]
        if parent.left == i:
            bp = np.einsum("kl,ljm->kjm", r, bp)
        else:
            bp = np.einsum("km,lmj->lkj", r, bp)
        transfers[node.parent] = bp
    return HTensor(tree, leaves, transfers)


def gramians(h):
    """Reduced Gramians per node for an orthogonalized tensor.

    The eigenvalues of a node's Gramian are the squared singular values of
    the corresponding matricization of the represented tensor.
    """
    tree = h.tree
    grams = {0: np.ones((1, 1))}
    for layer in tree.layers():
        for i in layer:
            node = tree.nodes[i]
            if node.is_leaf:
                continue
            b = h.transfers[i]
            g = grams[i]
            grams[node.left] = np.einsum("ijk,kl,mjl->im", b, g, b)
            grams[node.right] = np.einsum("ijk,kl,iml->jm", b, g, b)
    return grams


def truncate(h, ctrl):
    """Truncate onto smaller ranks; returns (HTensor, err_est, ranks).

    In tolerance mode the result is guaranteed within ``ctrl.eps`` of the
    input (Frobenius), with ``err_est`` the root-sum-square of discarded
    Gramian eigenvalues, an upper bound on the true error.  Rank caps, when
    present, are applied after the tolerance selection.  Ranks never drop
    below 1.
    """
    if not isinstance(ctrl, TruncationControl):
        ctrl = TruncationControl(eps=float(ctrl))
    horth = orthogonalize(h)
    grams = gramians(horth)
    tree = h.tree
    budget_sq = None
    if ctrl.eps is not None:
        budget_sq = (ctrl.eps / np.sqrt(tree.nonroot_count)) ** 2
    projections = {}
    total_tail = 0.0
    for i in range(len(tree)):
        if i == 0:
            continue
        lam, w = np.linalg.eigh(grams[i])
        lam = np.maximum(lam[::-1], 0.0)
        w = w[:, ::-1]
        keep = len(lam)
        tail = 0.0
        if budget_sq is not None:
            while keep > 1 and tail + lam[keep - 1] <= budget_sq:
                tail += lam[keep - 1]
                keep -= 1
        cap = ctrl.cap_for(tree.nodes[i].modes)
        if cap is not None:
            while keep > cap:
                keep -= 1
                tail += lam[keep]
        projections[i] = w[:, :keep]
        total_tail += tail
    leaves = list(horth.leaves)
    transfers = {}
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            leaves[node.modes[0]] = horth.leaves[node.modes[0]] @ projections[i]
        else:
            b = horth.transfers[i]
            b = np.einsum("ij,ikl->jkl", projections[node.left], b)
            b = np.einsum("kj,ikl->ijl", projections[node.right], b)
            if i != 0:
                b = np.einsum("lk,ijl->ijk", projections[i], b)
            transfers[i] = b
    out = HTensor(tree, leaves, transfers)
    return out, float(np.sqrt(total_tail)), out.ranks()


def from_dense(t, ctrl, tree=None):
    """Hierarchical SVD of a dense tensor; returns (HTensor, err_est).

    Per-node frames come from full SVDs of the matricizations of the input
    itself, so the root-sum-square of discarded singular values bounds the
    reconstruction error.  ``err_est`` is exactly that root-sum-square.
    """
    if not isinstance(t, DenseTensor):
        t = DenseTensor(t)
    if not isinstance(ctrl, TruncationControl):
        ctrl = TruncationControl(eps=float(ctrl))
    if tree is None:
        tree = DimensionTree.balanced(t.ndim)
    if len([n for n in tree.nodes if n.is_leaf]) != t.ndim:
        raise InputError("tree does not match tensor order")
    budget_sq = None
    if ctrl.eps is not None:
        budget_sq = (ctrl.eps / np.sqrt(tree.nonroot_count)) ** 2
    frames = {}
    total_tail = 0.0
    for i, node in enumerate(tree.nodes):
        if i == 0:
            continue
        m = dense.matricize(t, node.modes)
        u, s, _ = np.linalg.svd(m, full_matrices=False)
        lam = s**2
        keep = len(s)
        tail = 0.0
        if budget_sq is not None:
            while keep > 1 and tail + lam[keep - 1] <= budget_sq:
                tail += lam[keep - 1]
                keep -= 1
        cap = ctrl.cap_for(node.modes)
        if cap is not None:
            while keep > cap:
                keep -= 1
                tail += lam[keep]
        frames[i] = u[:, :keep]
        total_tail += tail
    leaves = [None] * tree.d
    transfers = {}
    for i, node in enumerate(tree.nodes):
        if node.is_leaf:
            leaves[node.modes[0]] = frames[i]
            continue
        ul, ur = frames[node.left], frames[node.right]
        nl, nr = ul.shape[0], ur.shape[0]
        if i == 0:
            w = dense.matricize(t, node.modes).reshape(nl, nr, order="F")
            transfers[i] = np.einsum("il,ij,jm->lm", ul, w, ur)[:, :, None]
        else:
            ut = frames[i]
            w = ut.reshape(nl, nr, ut.shape[1], order="F")
            transfers[i] = np.einsum("il,ijk,jm->lmk", ul, w, ur)
    h = HTensor(tree, leaves, transfers)
    return h, float(np.sqrt(total_tail))
