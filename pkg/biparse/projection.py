import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

from biparse.corpus import ROOT, Alignment, BitextPair, DependencyTree
from biparse.parser import AveragedWeights, FeatureVector, dot

MAX_PATH_LENGTH = 5
PATH_LENGTHS = (1, 2, 3, 4, 5)
PREDICTED_LENGTHS = (2, 3, 4, 5)

Edge = tuple[int, int]


class Direction(str, Enum):
    SRC_TO_TGT = "src2tgt"
    TGT_TO_SRC = "tgt2src"


@dataclass(frozen=True)
class ProjectedPath:
    nodes: tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError(f"Path {self.nodes} needs at least one edge")
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError(f"Path {self.nodes} is not simple")
        if self.length > MAX_PATH_LENGTH:
            raise ValueError(f"Path {self.nodes} is longer than {MAX_PATH_LENGTH}")

    @property
    def length(self) -> int:
        return len(self.nodes) - 1

    @property
    def endpoints(self) -> Edge:
        return self.nodes[0], self.nodes[-1]

    def edges(self) -> list[Edge]:
        return list(zip(self.nodes, self.nodes[1:]))

    def undirected_edges(self) -> frozenset[Edge]:
        return frozenset((min(a, b), max(a, b)) for a, b in self.edges())


@dataclass(frozen=True)
class PathLengthModel:
    # weights[k - 1] is the one-vs-rest classifier for length k
    weights: tuple[Mapping[str, float], ...] = tuple({} for _ in PATH_LENGTHS)

    def __post_init__(self):
        if len(self.weights) != len(PATH_LENGTHS):
            raise ValueError(f"Expected {len(PATH_LENGTHS)} weight vectors, got {len(self.weights)}")

    def scores(self, features: Mapping[str, float]) -> list[float]:
        return [dot(w, features) for w in self.weights]

    @property
    def is_zero(self) -> bool:
        return not any(any(w.values()) for w in self.weights)


@dataclass(frozen=True)
class PathPredictorModel:
    weights: Mapping[int, Mapping[str, float]] = field(
        default_factory=lambda: {k: {} for k in PREDICTED_LENGTHS}
    )

    def __post_init__(self):
        if sorted(self.weights) != list(PREDICTED_LENGTHS):
            raise ValueError(f"Expected weight vectors for lengths {PREDICTED_LENGTHS}")

    @property
    def is_zero(self) -> bool:
        return not any(any(w.values()) for w in self.weights.values())


def tree_path(tree: DependencyTree, a: int, b: int) -> list[int]:
    if a == b:
        return []

    def to_root(node):
        chain = [node]
        while node != ROOT:
            node = tree.head(node)
            chain.append(node)
        return chain

    up_from_a = to_root(a)
    up_from_b = to_root(b)
    position_in_b = {node: i for i, node in enumerate(up_from_b)}
    for i, node in enumerate(up_from_a):
        if node in position_in_b:
            return up_from_a[: i + 1] + up_from_b[: position_in_b[node]][::-1]
    raise ValueError(f"Tokens {a} and {b} are not connected")


def project_endpoints(edge: Edge, alignment: Alignment, direction=Direction.SRC_TO_TGT) -> Optional[Edge]:
    """
    Maps both endpoints of an edge through the alignment.
    Multiple links resolve to the smallest index; an unaligned
    endpoint or two endpoints landing on one token give None
    """
    lookup = alignment.targets_of if direction is Direction.SRC_TO_TGT else alignment.sources_of
    i, i2 = edge
    if ROOT in (i, i2):
        return None
    aligned, aligned2 = lookup(i), lookup(i2)
    if not aligned or not aligned2:
        return None
    j, j2 = aligned[0], aligned2[0]
    if j == j2:
        return None
    return j, j2


def _target_distance(j: int, j2: int) -> str:
    distance = abs(j - j2)
    return str(distance) if distance < MAX_PATH_LENGTH else f"{MAX_PATH_LENGTH}+"


def four_node_features(
    src_edge: Edge, tgt_pair: Edge, pair: BitextPair, direction=Direction.SRC_TO_TGT
) -> FeatureVector:
    if direction is Direction.SRC_TO_TGT:
        edge_side, path_side = pair.src, pair.tgt
    else:
        edge_side, path_side = pair.tgt, pair.src
    try:
        s0, s1 = edge_side.token(src_edge[0]), edge_side.token(src_edge[1])
        t0, t1 = path_side.token(tgt_pair[0]), path_side.token(tgt_pair[1])
    except IndexError as err:
        raise ValueError(f"Four-node features for {src_edge} / {tgt_pair}: {err}")

    names = (
        "bias",
        f"s0.form={s0.form}",
        f"s0.pos={s0.pos}",
        f"s1.form={s1.form}",
        f"s1.pos={s1.pos}",
        f"t0.form={t0.form}",
        f"t0.pos={t0.pos}",
        f"t1.form={t1.form}",
        f"t1.pos={t1.pos}",
        f"s.pp={s0.pos}|{s1.pos}",
        f"t.pp={t0.pos}|{t1.pos}",
        f"t.dist={_target_distance(*tgt_pair)}",
    )
    return {name: 1.0 for name in names}


def predict_path_length(model: PathLengthModel, features: Mapping[str, float]) -> int:
    scores = model.scores(features)
    best = max(range(len(scores)), key=lambda k: (scores[k], -k))
    return PATH_LENGTHS[best]


def best_path(endpoints: Edge, k: int, edge_scorer: Callable[[int, int], float], n: int) -> ProjectedPath:
    """
    Highest scoring simple path with exactly k edges between the endpoints
    over the complete graph on 1..n; ties go to the lexicographically
    smallest interior sequence
    """
    j, j2 = endpoints
    if j == j2:
        raise ValueError(f"Path endpoints {endpoints} must differ")
    if not 1 <= k <= MAX_PATH_LENGTH:
        raise ValueError(f"Path length {k} outside 1..{MAX_PATH_LENGTH}")
    if k == 1:
        return ProjectedPath((j, j2))
    if k > n - 1:
        raise ValueError(f"No simple path with {k} edges among {n} tokens")

    candidates = [v for v in range(1, n + 1) if v not in endpoints]
    memo: dict[Edge, float] = {}

    def score(a, b):
        if (a, b) not in memo:
            memo[(a, b)] = edge_scorer(a, b)
        return memo[(a, b)]

    best_nodes: Optional[list[int]] = None
    best_score = 0.0

    def extend(nodes, total):
        nonlocal best_nodes, best_score
        if len(nodes) == k:
            total = total + score(nodes[-1], j2)
            if best_nodes is None or total > best_score:
                best_nodes, best_score = nodes + [j2], total
            return
        for v in candidates:
            if v not in nodes:
                extend(nodes + [v], total + score(nodes[-1], v))

    extend([j], 0)
    return ProjectedPath(tuple(best_nodes))


def path_edge_score(
    model: PathPredictorModel,
    k: int,
    src_edge: Edge,
    tgt_edge: Edge,
    pair: BitextPair,
    direction=Direction.SRC_TO_TGT,
) -> float:
    if k not in model.weights:
        raise ValueError(f"No path predictor for length {k}")
    return dot(model.weights[k], four_node_features(src_edge, tgt_edge, pair, direction))


@dataclass(frozen=True)
class ProjectionModels:
    """Scores paths in the other language for edges of one language"""

    length: PathLengthModel = field(default_factory=PathLengthModel)
    predictor: PathPredictorModel = field(default_factory=PathPredictorModel)

    def edge_score(self, k, src_edge, tgt_edge, pair, direction=Direction.SRC_TO_TGT) -> float:
        # a direct edge is scored by the length-1 classifier
        if k == 1:
            return dot(self.length.weights[0], four_node_features(src_edge, tgt_edge, pair, direction))
        return path_edge_score(self.predictor, k, src_edge, tgt_edge, pair, direction)

    def path_score(self, nodes: Sequence[int], src_edge, pair, direction=Direction.SRC_TO_TGT) -> float:
        k = len(nodes) - 1
        return sum(
            self.edge_score(k, src_edge, (a, b), pair, direction)
            for a, b in zip(nodes, nodes[1:])
        )

    @property
    def is_zero(self) -> bool:
        return self.length.is_zero and self.predictor.is_zero


@dataclass(frozen=True)
class LengthInstance:
    features: Mapping[str, float]
    length: int


@dataclass(frozen=True)
class PathInstance:
    # pair oriented so that src_edge indexes pair.src and the path pair.tgt
    pair: BitextPair
    src_edge: Edge
    gold: ProjectedPath

    @property
    def endpoints(self) -> Edge:
        return self.gold.endpoints


@dataclass
class ProjectionInstances:
    lengths: list[LengthInstance] = field(default_factory=list)
    paths: list[PathInstance] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)


def extract_projection_training(
    corpus: Iterable[BitextPair], direction=Direction.SRC_TO_TGT
) -> ProjectionInstances:
    instances = ProjectionInstances()
    for pair in corpus:
        if not pair.has_trees:
            raise ValueError(f"Pair {pair.pair_id}: both trees are required for training extraction")
        oriented = pair if direction is Direction.SRC_TO_TGT else pair.flipped()
        for edge in oriented.src_tree.edges():
            if edge[0] == ROOT:
                instances.skipped["root_edge"] += 1
                continue
            endpoints = project_endpoints(edge, oriented.alignment)
            if endpoints is None:
                instances.skipped["unprojectable"] += 1
                continue
            nodes = tree_path(oriented.tgt_tree, *endpoints)
            if ROOT in nodes:
                instances.skipped["through_root"] += 1
                continue
            if len(nodes) - 1 > MAX_PATH_LENGTH:
                instances.skipped["too_long"] += 1
                continue
            path = ProjectedPath(tuple(nodes))
            features = four_node_features(edge, endpoints, oriented)
            instances.lengths.append(LengthInstance(features, path.length))
            if path.length >= 2:
                instances.paths.append(PathInstance(oriented, edge, path))

    logging.info(
        "%s projection instances: %s length, %s path, skipped %s",
        direction.value, len(instances.lengths), len(instances.paths), dict(instances.skipped),
    )
    return instances


def train_path_length(
    instances: Sequence[LengthInstance], epochs: int, seed: int = 0, shuffle: bool = False
) -> PathLengthModel:
    if not instances:
        raise ValueError("Cannot train the path-length classifiers without instances")
    for instance in instances:
        if instance.length not in PATH_LENGTHS:
            raise ValueError(f"Path length label {instance.length} outside {PATH_LENGTHS}")

    classifiers = [AveragedWeights() for _ in PATH_LENGTHS]
    order = list(range(len(instances)))
    rng = random.Random(seed)
    for epoch in range(1, epochs + 1):
        if shuffle:
            rng.shuffle(order)
        mistakes = 0
        for idx in order:
            instance = instances[idx]
            current = PathLengthModel(tuple(c.weights for c in classifiers))
            if predict_path_length(current, instance.features) != instance.length:
                mistakes += 1
            for k, classifier in zip(PATH_LENGTHS, classifiers):
                label = 1.0 if instance.length == k else -1.0
                if label * dot(classifier.weights, instance.features) <= 0:
                    classifier.update(instance.features, scale=label)
                classifier.tick()
        logging.info("path-length epoch %s: %s training errors", epoch, mistakes)

    return PathLengthModel(tuple(c.averaged() for c in classifiers))


def _path_features(instance: PathInstance, path: ProjectedPath, cache: dict) -> dict[str, float]:
    phi: dict[str, float] = defaultdict(float)
    for edge in path.edges():
        if edge not in cache:
            cache[edge] = four_node_features(instance.src_edge, edge, instance.pair)
        for name, value in cache[edge].items():
            phi[name] += value
    return phi


def train_path_predictor(
    instances: Sequence[PathInstance], epochs: int, seed: int = 0, shuffle: bool = False
) -> PathPredictorModel:
    for instance in instances:
        if instance.gold.length not in PREDICTED_LENGTHS:
            raise ValueError(
                f"Gold path {instance.gold.nodes} has length outside {PREDICTED_LENGTHS}"
            )

    predictors = {k: AveragedWeights() for k in PREDICTED_LENGTHS}
    caches: list[dict] = [{} for _ in instances]
    order = list(range(len(instances)))
    rng = random.Random(seed)
    for epoch in range(1, epochs + 1):
        if shuffle:
            rng.shuffle(order)
        mistakes = 0
        for idx in order:
            instance, cache = instances[idx], caches[idx]
            k = instance.gold.length
            weights = predictors[k].weights

            def scorer(a, b):
                if (a, b) not in cache:
                    cache[(a, b)] = four_node_features(instance.src_edge, (a, b), instance.pair)
                return dot(weights, cache[(a, b)])

            predicted = best_path(instance.endpoints, k, scorer, instance.pair.tgt.n)
            if predicted != instance.gold:
                mistakes += 1
                delta = _path_features(instance, instance.gold, cache)
                for name, value in _path_features(instance, predicted, cache).items():
                    delta[name] -= value
                predictors[k].update(delta)
            predictors[k].tick()
        logging.info("path-predictor epoch %s: %s training errors", epoch, mistakes)

    total_updates = sum(p.updates for p in predictors.values())
    if total_updates == 0:
        logging.warning("Path predictors received no updates")
    return PathPredictorModel({k: p.averaged() for k, p in predictors.items()})


def write_length_instances(instances: Iterable[LengthInstance]) -> str:
    lines = []
    for instance in instances:
        names = sorted(name for name, value in instance.features.items() if value)
        if any(instance.features[name] != 1.0 for name in names):
            raise ValueError("Only binary features can be written to an instance file")
        lines.append("\t".join([str(instance.length)] + names))
    return "".join(line + "\n" for line in lines)


def read_length_instances(text: str) -> list[LengthInstance]:
    instances = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        label, *names = line.split("\t")
        if not label.isdigit() or int(label) not in PATH_LENGTHS:
            raise ValueError(f"instance line {line_no}: label {label!r} outside {PATH_LENGTHS}")
        instances.append(LengthInstance({name: 1.0 for name in names if name}, int(label)))
    return instances
