"""PUCT Monte Carlo tree search over token sequences.

Each edge carries visit count N, prior P, mean value Q and the last observed
intermediate reward R. Selection follows

    argmax_a  Q(s,a) + c * P(s,a) * sqrt(sum_b N(s,b)) / (1 + N(s,a))

with ties broken by higher prior, then lower token index. Expansion asks the
policy for priors masked to the legal set and renormalized. Rollouts sample
masked policy actions to termination; rollout transitions do not create tree
nodes. Backpropagation walks the selected path backwards, accumulating the
undiscounted return G (each edge's backup includes its own immediate reward
plus everything after it, bootstrapped from the rollout value at the leaf)
and updating Q as a running mean.

Selection re-steps the environment along the chosen path, so edge rewards
track the evolving pool, and selecting a terminal END edge re-runs the pool
update. Every completed episode (selected prefix plus rollout tail) lands in
the replay buffer.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .env import MdpState, MiningEnv, Trajectory, Transition
from .expr import Token, TokenKind, apply_token, is_complete


@dataclass
class Edge:
    prior: float
    child: "Node"
    visit_count: int = 0
    q_value: float = 0.0
    reward: float = 0.0  # last intermediate reward observed through this edge


@dataclass
class Node:
    state: MdpState
    edges: dict[Token, Edge] | None = None

    @property
    def expanded(self) -> bool:
        return self.edges is not None

    @property
    def terminal(self) -> bool:
        return self.state.done

    def visit_total(self) -> int:
        return sum(e.visit_count for e in self.edges.values()) if self.edges else 0


class ReplayBuffer:
    """Bounded FIFO of complete trajectories, iterated in insertion order."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: deque[Trajectory] = deque(maxlen=capacity)

    def append(self, traj: Trajectory) -> None:
        self._items.append(traj)

    def clear(self) -> None:
        self._items.clear()

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)


@dataclass
class SearchTree:
    """Tree rooted at [BEG]; rebuilt fresh at every outer iteration."""

    env: MiningEnv
    policy: object  # anything with probabilities(state, mask) -> vector
    c_puct: float = 1.0
    root: Node = field(init=False)

    def __post_init__(self):
        self.root = Node(self.env.reset())

    # -- phases ---------------------------------------------------------

    def select(self) -> tuple[list[tuple[Edge, Transition]], Node]:
        """Descend by PUCT from the root, stepping the env along the way."""
        node = self.root
        path: list[tuple[Edge, Transition]] = []
        while node.expanded and not node.terminal:
            token, edge = self._pick(node)
            transition = self.env.step(node.state, token)
            if token.kind is not TokenKind.END and is_complete(transition.next_state.stack):
                edge.reward = transition.reward
            path.append((edge, transition))
            node = edge.child
        return path, node

    def _pick(self, node: Node) -> tuple[Token, Edge]:
        sqrt_total = float(np.sqrt(node.visit_total()))
        best: tuple[float, float] | None = None
        best_pair: tuple[Token, Edge] | None = None
        for token, edge in node.edges.items():  # insertion order == vocab order
            score = edge.q_value + self.c_puct * edge.prior * sqrt_total / (1 + edge.visit_count)
            key = (score, edge.prior)
            if best is None or key > best:
                best = key
                best_pair = (token, edge)
        return best_pair  # type: ignore[return-value]

    def expand(self, node: Node) -> None:
        """Create edges with masked, renormalized policy priors."""
        if node.expanded or node.terminal:
            return
        mask = self.env.legal_mask(node.state)
        probs = np.where(mask, self.policy.probabilities(node.state, mask), 0.0)
        mass = probs.sum()
        if mass > 0:
            probs = probs / mass
        else:
            probs = mask / mask.sum()
        node.edges = {}
        for idx in np.flatnonzero(mask):
            token = self.env.vocab.tokens[idx]
            child_tokens = node.state.tokens + (token,)
            if token.kind is TokenKind.END:
                child = Node(MdpState(child_tokens, node.state.stack, done=True))
            else:
                child = Node(MdpState(child_tokens, apply_token(node.state.stack, token)))
            node.edges[token] = Edge(prior=float(probs[idx]), child=child)

    def backpropagate(self, path: list[tuple[Edge, Transition]], leaf_value: float) -> None:
        """Running-mean Q update with undiscounted reward-to-go."""
        g = leaf_value
        for edge, transition in reversed(path):
            g += transition.reward
            n = edge.visit_count
            edge.q_value = (n * edge.q_value + g) / (n + 1)
            edge.visit_count = n + 1

    # -- inspection -------------------------------------------------------

    def most_visited_path(self) -> list[Token]:
        """Greedy max-N walk from the root (search's favorite episode)."""
        node, out = self.root, []
        while node.expanded and not node.terminal and node.edges:
            token, edge = max(
                node.edges.items(),
                key=lambda kv: (kv[1].visit_count, kv[1].prior),
            )
            if edge.visit_count == 0:
                break
            out.append(token)
            node = edge.child
        return out

    def dump_lines(self) -> list[str]:
        """One TSV line per edge: state, action, N, P, Q, R."""
        lines = []

        def walk(node: Node):
            if not node.expanded:
                return
            state_text = " ".join(t.name for t in node.state.tokens)
            for token, edge in node.edges.items():
                lines.append(
                    f"{state_text}\t{token.name}\t{edge.visit_count}"
                    f"\t{edge.prior!r}\t{edge.q_value!r}\t{edge.reward!r}"
                )
                walk(edge.child)

        walk(self.root)
        return lines


def rollout(
    state: MdpState,
    policy,
    env: MiningEnv,
    rng: np.random.Generator,
) -> tuple[list[Transition], float]:
    """Sample masked policy actions to termination; value = reward-to-go."""
    transitions: list[Transition] = []
    value = 0.0
    while not state.done:
        mask = env.legal_mask(state)
        probs = policy.probabilities(state, mask)
        cdf = np.cumsum(probs)
        idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        idx = min(idx, len(probs) - 1)
        while not mask[idx]:  # numerical guard: land on a legal index
            idx = (idx + 1) % len(probs)
        transition = env.step(state, env.vocab.tokens[idx])
        transitions.append(transition)
        value += transition.reward
        state = transition.next_state
    return transitions, value


def search_cycle(
    tree: SearchTree,
    buffer: ReplayBuffer,
    rng: np.random.Generator,
) -> Trajectory:
    """One select/expand/rollout/backpropagate pass; buffers the episode."""
    tree.expand(tree.root)
    path, leaf = tree.select()
    if leaf.terminal:
        tail: list[Transition] = []
        leaf_value = 0.0
    else:
        tree.expand(leaf)
        tail, leaf_value = rollout(leaf.state, tree.policy, tree.env, rng)
    tree.backpropagate(path, leaf_value)
    trajectory = Trajectory([t for _, t in path] + tail)
    buffer.append(trajectory)
    return trajectory
