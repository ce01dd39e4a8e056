import logging
import random
import sys
from collections import defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from biparse.corpus import ROOT, DependencyTree, ParsedSentence

TEMPLATES_TAG = "edge-v1"
ROOT_POS = "<root>"
BRUTE_FORCE_LIMIT = 7

FeatureVector = dict[str, float]


class LanguageMismatchError(ValueError):
    def __init__(self, expected, actual):
        super().__init__(f"Model for {expected!r} applied to a {actual!r} sentence")


def distance_bucket(distance: int) -> str:
    sign = "+" if distance > 0 else "-"
    magnitude = abs(distance)
    return f"{sign}{magnitude}" if magnitude < 5 else f"{sign}5+"


def _edge_feature_names(sentence: ParsedSentence, head: int, dep: int) -> tuple[str, ...]:
    n = sentence.n
    if not 1 <= dep <= n or not 0 <= head <= n:
        raise ValueError(f"Edge {(head, dep)} out of range for a sentence of length {n}")
    if head == dep:
        raise ValueError(f"Edge {(head, dep)} is a self-loop")

    d = sentence.token(dep)
    if head == ROOT:
        hpos = ROOT_POS
        names = ["root", f"root&dform={d.form}"]
    else:
        h = sentence.token(head)
        hpos = h.pos
        names = [f"hform={h.form}", f"hf&df={h.form}|{d.form}"]

    distance = dep - head
    direction = "right" if distance > 0 else "left"
    bucket = distance_bucket(distance)
    names += [
        f"hpos={hpos}",
        f"dform={d.form}",
        f"dpos={d.pos}",
        f"hp&dp={hpos}|{d.pos}",
        f"dist={bucket}",
        f"dir={direction}",
        f"hp&dp&dir={hpos}|{d.pos}|{direction}",
        f"hp&dp&dist={hpos}|{d.pos}|{bucket}",
    ]
    low, high = min(head, dep), max(head, dep)
    if high - low > 1:
        first = sentence.token(low + 1).pos
        last = sentence.token(high - 1).pos
        names.append(f"between={first}|{last}")
    return tuple(sys.intern(name) for name in names)


def extract_edge_features(sentence: ParsedSentence, head: int, dep: int) -> FeatureVector:
    return {name: 1.0 for name in _edge_feature_names(sentence, head, dep)}


def edge_feature_table(sentence: ParsedSentence) -> dict[tuple[int, int], tuple[str, ...]]:
    n = sentence.n
    return {
        (h, d): _edge_feature_names(sentence, h, d)
        for h in range(n + 1)
        for d in range(1, n + 1)
        if h != d
    }


def dot(weights: Mapping[str, float], features: Mapping[str, float]) -> float:
    return sum(weights.get(name, 0.0) * value for name, value in features.items())


@dataclass(frozen=True)
class EdgeFactoredModel:
    lang: str
    weights: Mapping[str, float] = field(default_factory=dict)
    templates: str = TEMPLATES_TAG

    def score(self, features: Mapping[str, float]) -> float:
        return dot(self.weights, features)

    @property
    def is_zero(self) -> bool:
        return not any(self.weights.values())


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """
    Edge scores s[h][d] for h in 0..n and d in 1..n,
    column 0 and the diagonal hold -inf
    """

    scores: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "ScoreMatrix":
        return cls.from_function(n, lambda h, d: 0.0)

    @classmethod
    def from_function(cls, n: int, fn: Callable[[int, int], float]) -> "ScoreMatrix":
        scores = np.full((n + 1, n + 1), -np.inf)
        for h in range(n + 1):
            for d in range(1, n + 1):
                if h != d:
                    scores[h, d] = fn(h, d)
        return cls(scores)

    @property
    def n(self) -> int:
        return self.scores.shape[0] - 1

    def __getitem__(self, key):
        return self.scores[key]

    def tree_score(self, tree: DependencyTree) -> float:
        return sum(float(self.scores[h, d]) for h, d in tree.edges())

    def shifted(self, constant: float) -> "ScoreMatrix":
        return ScoreMatrix(self.scores + constant)

    def plus(self, other: np.ndarray) -> "ScoreMatrix":
        return ScoreMatrix(self.scores + other)


def score_edges(model: EdgeFactoredModel, sentence: ParsedSentence) -> ScoreMatrix:
    if model.lang != sentence.lang:
        raise LanguageMismatchError(model.lang, sentence.lang)
    return _table_scores(edge_feature_table(sentence), model.weights, sentence.n)


def _table_scores(table, weights: Mapping[str, float], n: int) -> ScoreMatrix:
    scores = np.full((n + 1, n + 1), -np.inf)
    for (h, d), names in table.items():
        scores[h, d] = sum(weights.get(name, 0.0) for name in names)
    return ScoreMatrix(scores)


def _tie_break(head: int, dep: int, n: int) -> int:
    # lower heads win, earlier dependents dominate later ones
    return -head * (n + 1) ** (n - dep)


def _find_cycle(heads: dict[int, int]) -> Optional[list[int]]:
    done: set[int] = set()
    for start in heads:
        trail: dict[int, int] = {}
        order: list[int] = []
        node = start
        while node in heads and node not in done and node not in trail:
            trail[node] = len(order)
            order.append(node)
            node = heads[node]
        if node in trail:
            return order[trail[node]:]
        done.update(order)
    return None


def _chu_liu_edmonds(nodes: list[int], edges: dict[tuple[int, int], tuple[float, int]]) -> dict[int, int]:
    best_in: dict[int, int] = {}
    for (h, d), weight in edges.items():
        if d not in best_in or weight > edges[(best_in[d], d)]:
            best_in[d] = h

    cycle = _find_cycle(best_in)
    if cycle is None:
        return best_in

    in_cycle = set(cycle)
    contracted_node = max(nodes) + 1
    contracted: dict[tuple[int, int], tuple[float, int]] = {}
    origin: dict[tuple[int, int], tuple[int, int]] = {}
    for (h, d), weight in edges.items():
        if h in in_cycle and d in in_cycle:
            continue
        if d in in_cycle:
            key = (h, contracted_node)
            dropped = edges[(best_in[d], d)]
            weight = (weight[0] - dropped[0], weight[1] - dropped[1])
        elif h in in_cycle:
            key = (contracted_node, d)
        else:
            key = (h, d)
        if key not in contracted or weight > contracted[key]:
            contracted[key] = weight
            origin[key] = (h, d)

    remaining = [v for v in nodes if v not in in_cycle] + [contracted_node]
    heads = {}
    for d, h in _chu_liu_edmonds(remaining, contracted).items():
        original_head, original_dep = origin[(h, d)]
        heads[original_dep] = original_head
    for v in cycle:
        heads.setdefault(v, best_in[v])
    return heads


def decode_mst(scores: ScoreMatrix) -> DependencyTree:
    n = scores.n
    if n < 1:
        raise ValueError("Cannot decode an empty sentence")
    edges = {}
    for h in range(n + 1):
        for d in range(1, n + 1):
            value = float(scores[h, d])
            if h != d and np.isfinite(value):
                edges[(h, d)] = (value, _tie_break(h, d, n))
    missing = [d for d in range(1, n + 1) if not any((h, d) in edges for h in range(n + 1))]
    if missing:
        raise ValueError(f"Tokens {missing} have no finite incoming edge")

    heads = _chu_liu_edmonds(list(range(n + 1)), edges)
    return DependencyTree(tuple(heads[d] for d in range(1, n + 1)))


@lru_cache(maxsize=None)
def enumerate_arborescences(n: int) -> np.ndarray:
    """
    All head arrays over n tokens that form an arborescence rooted at 0,
    one per row, in lexicographic order
    """
    if not 1 <= n <= BRUTE_FORCE_LIMIT:
        raise ValueError(f"Exhaustive enumeration supports 1..{BRUTE_FORCE_LIMIT} tokens, got {n}")
    grid = np.indices((n + 1,) * n, dtype=np.int8).reshape(n, -1).T
    with_root = np.concatenate([np.zeros((len(grid), 1), dtype=np.int8), grid], axis=1)
    rows = np.arange(len(grid))[:, None]
    position = np.tile(np.arange(n + 1, dtype=np.int8), (len(grid), 1))
    for _ in range(n):
        position = with_root[rows, position]
    trees = grid[(position == 0).all(axis=1)].astype(np.int64)
    trees.setflags(write=False)
    return trees


def brute_force_decode(scores: ScoreMatrix) -> DependencyTree:
    n = scores.n
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(f"Brute-force decoding is limited to {BRUTE_FORCE_LIMIT} tokens, got {n}")
    trees = enumerate_arborescences(n)
    totals = scores.scores[trees, np.arange(1, n + 1)].sum(axis=1)
    best = int(np.argmax(totals))
    return DependencyTree(tuple(int(h) for h in trees[best]))


class AveragedWeights:
    """
    Perceptron weights with lazy averaging: the running sum of
    weight vectors is recovered as w - u / c
    """

    def __init__(self):
        self.weights: dict[str, float] = defaultdict(float)
        self._accumulated: dict[str, float] = defaultdict(float)
        self._counter = 1
        self.updates = 0

    def update(self, delta: Mapping[str, float], scale: float = 1.0):
        changed = False
        for name, value in delta.items():
            if value:
                self.weights[name] += scale * value
                self._accumulated[name] += self._counter * scale * value
                changed = True
        if changed:
            self.updates += 1

    def tick(self):
        self._counter += 1

    def averaged(self) -> dict[str, float]:
        result = {}
        for name, value in self.weights.items():
            average = value - self._accumulated[name] / self._counter
            if average != 0.0:
                result[name] = average
        return result


def tree_features(table, tree: DependencyTree) -> dict[str, float]:
    phi: dict[str, float] = defaultdict(float)
    for edge in tree.edges():
        for name in table[edge]:
            phi[name] += 1.0
    return phi


def train_parser(
    treebank: Iterable[tuple[ParsedSentence, DependencyTree]],
    epochs: int,
    seed: int = 0,
    lang: Optional[str] = None,
    shuffle: bool = False,
    on_epoch: Optional[Callable[[int, float], None]] = None,
) -> EdgeFactoredModel:
    if epochs < 0:
        raise ValueError(f"Expected epochs {epochs} to be >= 0")
    treebank = list(treebank)
    for number, (sentence, tree) in enumerate(treebank, start=1):
        if tree is None or len(tree) != sentence.n:
            raise ValueError(f"Sentence {number}: missing or mismatched gold tree")
    if lang is None:
        lang = treebank[0][0].lang if treebank else "und"

    weights = AveragedWeights()
    tables = [edge_feature_table(sentence) for sentence, _ in treebank]
    order = list(range(len(treebank)))
    rng = random.Random(seed)

    for epoch in range(1, epochs + 1):
        if shuffle:
            rng.shuffle(order)
        correct = total = 0
        for idx in order:
            sentence, gold = treebank[idx]
            table = tables[idx]
            predicted = decode_mst(_table_scores(table, weights.weights, sentence.n))
            correct += sum(p == g for p, g in zip(predicted.heads, gold.heads))
            total += sentence.n
            if predicted != gold:
                delta = tree_features(table, gold)
                for name, value in tree_features(table, predicted).items():
                    delta[name] -= value
                weights.update(delta)
            weights.tick()
        accuracy = correct / total if total else 1.0
        logging.info("%s parser epoch %s: training attachment accuracy %.4f", lang, epoch, accuracy)
        if on_epoch:
            on_epoch(epoch, accuracy)

    return EdgeFactoredModel(lang, weights.averaged())
