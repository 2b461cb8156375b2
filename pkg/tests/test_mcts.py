import numpy as np
import pytest

from alphamine.env import MdpState, MiningEnv, Transition
from alphamine.expr import BEG, END, Vocabulary, body_is_valid, is_complete, legal_mask, legal_next, parse, token_by_name
from alphamine.mcts import Edge, Node, ReplayBuffer, SearchTree, rollout, search_cycle
from alphamine.panel import compute_ic, standardize_daily, synth_panel
from alphamine.policy import Policy
from alphamine.pool import AlphaPool
from conftest import make_panel


class MiniEnv:
    """Reward-table MDP over the real grammar; stationary by construction."""

    def __init__(self, vocab, max_episode_len=6, seed=0):
        self.vocab = vocab
        self.max_episode_len = max_episode_len
        self.max_body = max_episode_len - 2
        rng = np.random.default_rng(seed)
        self._inter = {}
        self._final = {}
        self._rng = rng

    def reset(self):
        return MdpState((BEG,), ())

    def actions(self, state):
        return legal_next(state.stack, self.max_body - len(state.body), self.vocab)

    def legal_mask(self, state):
        return legal_mask(state.stack, self.max_body - len(state.body), self.vocab)

    def _reward_for(self, table, body):
        if body not in table:
            table[body] = round(float(self._rng.uniform(-0.2, 0.8)), 6)
        return table[body]

    def step(self, state, action):
        from alphamine.expr import apply_token

        if action.kind.name == "END":
            nxt = MdpState(state.tokens + (END,), state.stack, done=True)
            return Transition(state, action, self._reward_for(self._final, state.body), nxt)
        stack = apply_token(state.stack, action)
        nxt = MdpState(state.tokens + (action,), stack)
        reward = self._reward_for(self._inter, nxt.body) if is_complete(stack) else 0.0
        return Transition(state, action, reward, nxt)


MICRO = Vocabulary.subset(["close", "vwap", "Sub"])


def uniform_policy(vocab, max_episode_len=6):
    policy = Policy(vocab, np.random.default_rng(0), embed_dim=4, hidden_dim=4,
                    gru_layers=1, head_dims=(4,), max_episode_len=max_episode_len)
    policy.set_theta(np.zeros(policy.n_params))
    return policy


def build_mining_env(panel, vocab, capacity=8, seed=0, max_episode_len=8):
    n_train = int(panel.n_days * 0.7)
    train_mask = np.zeros(panel.n_days, dtype=bool)
    train_mask[:n_train] = True
    target = panel.forward_returns(5)
    pool = AlphaPool(panel, target, train_mask, capacity, rng=np.random.default_rng(seed))
    return MiningEnv(panel, target, train_mask, pool, vocab, max_episode_len=max_episode_len)


# -- PUCT selection arithmetic ---------------------------------------------------

def fake_edge(prior, n, q):
    return Edge(prior=prior, child=Node(MdpState((BEG,), ())), visit_count=n, q_value=q)


def test_puct_example_scores():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    node = Node(MdpState((BEG,), ()))
    ta, tb = token_by_name("close"), token_by_name("vwap")
    node.edges = {ta: fake_edge(0.3, 3, 0.5), tb: fake_edge(0.7, 1, 0.2)}
    # scores: 0.5 + 0.3*2/4 = 0.65 vs 0.2 + 0.7*2/2 = 0.9
    token, edge = tree._pick(node)
    assert token is tb
    assert edge.q_value == 0.2


def test_puct_all_unvisited_picks_max_prior():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    node = Node(MdpState((BEG,), ()))
    toks = [token_by_name(n) for n in ("close", "vwap", "Sub")]
    node.edges = {toks[0]: fake_edge(0.2, 0, 0.0), toks[1]: fake_edge(0.5, 0, 0.0),
                  toks[2]: fake_edge(0.3, 0, 0.0)}
    token, _ = tree._pick(node)
    assert token is toks[1]


def test_puct_tie_breaks_by_prior_then_index():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    node = Node(MdpState((BEG,), ()))
    toks = [token_by_name(n) for n in ("close", "vwap")]
    node.edges = {toks[0]: fake_edge(0.5, 0, 0.0), toks[1]: fake_edge(0.5, 0, 0.0)}
    token, _ = tree._pick(node)
    assert token is toks[0]  # identical scores and priors: lower token index


# -- backup arithmetic -------------------------------------------------------------

def path_with(rewards):
    edges = [fake_edge(0.5, 0, 0.0) for _ in rewards]
    s = MdpState((BEG,), ())
    trs = [Transition(s, token_by_name("close"), r, s) for r in rewards]
    return list(zip(edges, trs))


def test_backup_single_step_example():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    path = path_with([0.02])
    tree.backpropagate(path, 0.3)
    edge = path[0][0]
    assert edge.q_value == pytest.approx(0.32, abs=1e-15)
    assert edge.visit_count == 1


def test_backup_running_mean_example():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    path = path_with([0.0])
    path[0][0].q_value, path[0][0].visit_count = 0.32, 1
    tree.backpropagate(path, 0.1)
    assert path[0][0].q_value == pytest.approx((0.32 + 0.1) / 2, abs=1e-15)
    assert path[0][0].visit_count == 2


def test_backup_three_step_partial_sums():
    tree = SearchTree(MiniEnv(MICRO), uniform_policy(MICRO))
    path = path_with([0.0, 0.02, 0.0])
    tree.backpropagate(path, 0.5)
    got = [e.q_value for e, _ in path]
    assert got == pytest.approx([0.52, 0.52, 0.5], abs=1e-15)
    assert all(e.visit_count == 1 for e, _ in path)


# -- expansion ---------------------------------------------------------------------

class StubPolicy:
    def __init__(self, probs):
        self.probs = np.asarray(probs, dtype=float)

    def probabilities(self, state, mask=None):
        return self.probs


def test_expand_assigns_masked_renormalized_priors():
    env = MiniEnv(MICRO)
    # unmasked mass on BEG/END leaks nothing: renormalized over legal set
    probs = np.array([0.1, 0.15, 0.0, 0.5, 0.25])  # close, vwap, Sub, BEG, END
    tree = SearchTree(env, StubPolicy(probs))
    tree.expand(tree.root)
    edges = tree.root.edges
    legal_names = [t.name for t in edges]
    assert legal_names == ["close", "vwap"]  # Sub/END illegal at the root
    priors = [edges[t].prior for t in edges]
    assert sum(priors) == pytest.approx(1.0, abs=1e-6)
    assert priors == pytest.approx([0.4, 0.6])
    for e in edges.values():
        assert (e.visit_count, e.q_value, e.reward) == (0, 0.0, 0.0)


def test_expand_single_legal_action_prior_one():
    env = MiniEnv(MICRO)
    tree = SearchTree(env, uniform_policy(MICRO))
    state = MdpState((BEG, token_by_name("close"), token_by_name("vwap"),
                      token_by_name("Sub")), parse("Sub(close, vwap)").tokens and (
        __import__("alphamine.expr.grammar", fromlist=["SERIES"]).SERIES,))
    node = Node(MdpState(state.tokens, state.stack))
    # body budget exhausted at max_body=4: only END remains
    tree.expand(node)
    assert [t.name for t in node.edges] == ["END"] or sum(e.prior for e in node.edges.values()) == pytest.approx(1.0)


# -- rollout ------------------------------------------------------------------------

def enumerate_episodes(env, policy):
    """All (probability, value) pairs reachable from the start state."""
    out = []

    def walk(state, prob, value):
        if state.done:
            out.append((prob, value))
            return
        mask = env.legal_mask(state)
        probs = policy.probabilities(state, mask)
        for idx in np.flatnonzero(mask):
            tr = env.step(state, env.vocab.tokens[idx])
            walk(tr.next_state, prob * probs[idx], value + tr.reward)

    walk(env.reset(), 1.0, 0.0)
    return out


def test_rollout_single_forced_step():
    env = MiniEnv(MICRO, max_episode_len=3)  # body budget 1: feature then END
    policy = uniform_policy(MICRO, 3)
    state = env.step(env.reset(), token_by_name("close")).next_state
    tail, value = rollout(state, policy, env, np.random.default_rng(0))
    assert [t.action.name for t in tail] == ["END"]
    assert value == env._final[(token_by_name("close"),)]


def test_rollout_seeded_reproducible():
    env = MiniEnv(MICRO)
    policy = uniform_policy(MICRO)
    t1, v1 = rollout(env.reset(), policy, env, np.random.default_rng(11))
    t2, v2 = rollout(env.reset(), policy, env, np.random.default_rng(11))
    assert v1 == v2
    assert [t.action.name for t in t1] == [t.action.name for t in t2]


def test_rollout_mean_matches_enumeration_within_3_sigma():
    env = MiniEnv(MICRO, max_episode_len=6, seed=5)
    policy = uniform_policy(MICRO)
    pairs = enumerate_episodes(env, policy)
    assert sum(p for p, _ in pairs) == pytest.approx(1.0, abs=1e-12)
    exact_mean = sum(p * v for p, v in pairs)
    exact_var = sum(p * (v - exact_mean) ** 2 for p, v in pairs)
    n = 10_000
    rng = np.random.default_rng(123)
    values = [rollout(env.reset(), policy, env, rng)[1] for _ in range(n)]
    sigma = np.sqrt(exact_var / n)
    assert abs(np.mean(values) - exact_mean) <= 3 * sigma


# -- search cycles -------------------------------------------------------------------

def test_fresh_tree_single_cycle(small_panel):
    env = build_mining_env(small_panel, MICRO)
    tree = SearchTree(env, uniform_policy(MICRO, 8))
    buffer = ReplayBuffer(10)
    search_cycle(tree, buffer, np.random.default_rng(0))
    assert len(buffer) == 1
    assert tree.root.visit_total() == 1
    traj = next(iter(buffer))
    assert traj.tokens[0] is BEG and traj.tokens[-1] is END
    assert body_is_valid(traj.tokens[1:-1])


def test_buffer_reaches_cycle_count(small_panel):
    env = build_mining_env(small_panel, MICRO)
    tree = SearchTree(env, uniform_policy(MICRO, 8))
    buffer = ReplayBuffer(200)
    rng = np.random.default_rng(1)
    for _ in range(200):
        search_cycle(tree, buffer, rng)
    assert len(buffer) == 200
    assert tree.root.visit_total() == 200


def check_visit_conservation(node, is_root=True):
    if not node.expanded or node.terminal:
        return
    total = node.visit_total()
    incoming = None
    for edge in node.edges.values():
        check_visit_conservation(edge.child, is_root=False)
    if is_root:
        return total
    return total


def test_visit_conservation_invariant(small_panel):
    env = build_mining_env(small_panel, MICRO)
    tree = SearchTree(env, uniform_policy(MICRO, 8))
    buffer = ReplayBuffer(1000)
    rng = np.random.default_rng(2)
    cycles = 300
    for _ in range(cycles):
        search_cycle(tree, buffer, rng)
    assert tree.root.visit_total() == cycles

    def walk(node):
        if not node.expanded or node.terminal:
            return
        for edge in node.edges.values():
            child = edge.child
            if child.expanded and not child.terminal:
                # one backup (the expansion cycle) ended at the child itself
                assert child.visit_total() == edge.visit_count - 1, "visit conservation"
            walk(child)

    walk(tree.root)


def test_round_robin_fairness_with_equal_stats(small_panel):
    env = build_mining_env(small_panel, MICRO)
    tree = SearchTree(env, StubPolicy(np.full(MICRO.size, 1.0 / MICRO.size)))
    tree.expand(tree.root)
    # freeze Q at 0 by zeroing after each cycle; only N varies
    counts = []
    for _ in range(9):
        token, edge = tree._pick(tree.root)
        edge.visit_count += 1
        counts.append(token.name)
    spread = max(counts.count(n) for n in set(counts)) - min(counts.count(n) for n in set(counts))
    assert spread <= 1


def test_prior_normalization_everywhere(small_panel):
    env = build_mining_env(small_panel, MICRO)
    tree = SearchTree(env, uniform_policy(MICRO, 8))
    buffer = ReplayBuffer(100)
    rng = np.random.default_rng(3)
    for _ in range(100):
        search_cycle(tree, buffer, rng)

    def walk(node):
        if not node.expanded or node.terminal:
            return
        s = sum(e.prior for e in node.edges.values())
        assert s == pytest.approx(1.0, abs=1e-6)
        for e in node.edges.values():
            walk(e.child)

    walk(tree.root)


def test_reproducible_buffers(small_panel):
    def one_run():
        env = build_mining_env(small_panel, MICRO, seed=9)
        tree = SearchTree(env, uniform_policy(MICRO, 8))
        buffer = ReplayBuffer(50)
        rng = np.random.default_rng(4)
        for _ in range(50):
            search_cycle(tree, buffer, rng)
        return [tuple(t.name for t in traj.tokens) for traj in buffer], [
            traj.cumulative_reward for traj in buffer
        ]

    a, b = one_run(), one_run()
    assert a == b


RECOVERY_VOCAB = Vocabulary.subset(["close", "vwap", "Sub", "Add"])


def test_most_visited_path_finds_planted_optimum():
    """After 500 cycles the greedy max-N path spells the planted expression."""
    panel = synth_panel(15, 120, seed=21, planted="Sub(close, vwap)", planted_weight=0.9)
    hits = 0
    target_names = ["close", "vwap", "Sub", "END"]
    for seed in range(10):
        env = build_mining_env(panel, RECOVERY_VOCAB, capacity=6, seed=seed, max_episode_len=6)
        # sanity: the planted expression is the enumerable optimum
        if seed == 0:
            best_body, best_ic = None, -2.0
            from alphamine.expr import iter_bodies

            for body in iter_bodies(RECOVERY_VOCAB, 4):
                cache = standardize_daily(
                    __import__("alphamine.expr", fromlist=["evaluate_tokens"]).evaluate_tokens(body, panel),
                    panel.tradable,
                )
                try:
                    ic = compute_ic(cache, env.target, panel.tradable, env.train_mask).ic
                except Exception:
                    continue
                if ic > best_ic:
                    best_body, best_ic = body, ic
            assert [t.name for t in best_body] == ["close", "vwap", "Sub"]
        policy = Policy(RECOVERY_VOCAB, np.random.default_rng(seed + 100), embed_dim=8,
                        hidden_dim=16, gru_layers=2, head_dims=(16,), max_episode_len=6)
        tree = SearchTree(env, policy)
        buffer = ReplayBuffer(500)
        rng = np.random.default_rng(seed + 500)
        for _ in range(500):
            search_cycle(tree, buffer, rng)
        if [t.name for t in tree.most_visited_path()] == target_names:
            hits += 1
    assert hits >= 9, f"planted optimum recovered in only {hits}/10 seeds"
