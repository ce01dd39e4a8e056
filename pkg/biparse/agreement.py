import logging
import multiprocessing
from dataclasses import dataclass, field
from functools import lru_cache, partial
from typing import Callable, Mapping, Optional

import numpy as np

from biparse.corpus import ROOT, BitextPair, DependencyTree, ParsedSentence
from biparse.parser import (
    EdgeFactoredModel,
    ScoreMatrix,
    decode_mst,
    enumerate_arborescences,
    score_edges,
)
from biparse.projection import (
    MAX_PATH_LENGTH,
    Direction,
    ProjectedPath,
    ProjectionModels,
    best_path,
    four_node_features,
    predict_path_length,
    project_endpoints,
    tree_path,
)

ALPHA_SCHEDULES = ("constant", "harmonic")
CONVERGENCE_MODES = ("either", "both")
DUAL_UPDATES = ("inclusion", "equality")

Edge = tuple[int, int]


@dataclass(frozen=True)
class LanguageModels:
    """
    Parser for one language plus the projection models for
    that language's edges projected onto the other language
    """

    parser: EdgeFactoredModel
    projection: ProjectionModels = field(default_factory=ProjectionModels)


@dataclass(frozen=True)
class AgreementConfig:
    outer_iters: int = 30
    inner_iters: int = 100
    alpha0: float = 0.1
    alpha_schedule: str = "constant"
    convergence_mode: str = "either"
    dual_update: str = "inclusion"
    abstain: bool = True

    def __post_init__(self):
        if self.outer_iters < 1 or self.inner_iters < 1:
            raise ValueError(
                f"Iteration counts must be >= 1, got outer={self.outer_iters} inner={self.inner_iters}"
            )
        if not self.alpha0 > 0:
            raise ValueError(f"Expected alpha0 {self.alpha0} to be > 0")
        for name, allowed in (
            ("alpha_schedule", ALPHA_SCHEDULES),
            ("convergence_mode", CONVERGENCE_MODES),
            ("dual_update", DUAL_UPDATES),
        ):
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")

    def step_size(self, iteration: int) -> float:
        if self.alpha_schedule == "harmonic":
            return self.alpha0 / iteration
        return self.alpha0


@dataclass
class DualState:
    # u[(t, (i, j))], absent keys read as 0
    u: dict[tuple[Edge, Edge], float] = field(default_factory=dict)
    alpha: float = 0.1
    iteration: int = 0

    def get(self, t: Edge, pair: Edge) -> float:
        return self.u.get((t, pair), 0.0)

    def undirected(self, t: Edge, a: int, b: int) -> float:
        return self.get(t, (a, b)) + self.get(t, (b, a))

    def add(self, t: Edge, pair: Edge, delta: float, clip_positive: bool = False):
        value = self.get(t, pair) + delta
        if clip_positive:
            value = min(value, 0.0)
        if value:
            self.u[(t, pair)] = value
        else:
            self.u.pop((t, pair), None)

    def tree_penalty(self, n: int) -> np.ndarray:
        penalty = np.zeros((n + 1, n + 1))
        for (_, (i, j)), value in self.u.items():
            penalty[i, j] += value
            penalty[j, i] += value
        penalty[:, ROOT] = 0.0
        np.fill_diagonal(penalty, 0.0)
        return penalty


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    dual_value: float
    disagreements: int
    tree_changed: bool
    active_paths: int

    def as_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "dual_value": self.dual_value,
            "disagreements": self.disagreements,
            "tree_changed": self.tree_changed,
            "active_paths": self.active_paths,
        }


@dataclass
class ProjectResult:
    tree: DependencyTree
    converged: bool
    iterations: int
    diagnostics: list[IterationRecord]
    dual: DualState
    # None marks an abstaining source edge
    paths: dict[Edge, Optional[ProjectedPath]]


@dataclass
class AgreementResult:
    src_tree: DependencyTree
    tgt_tree: DependencyTree
    converged: tuple[bool, bool]
    outer_iterations: int
    stopped: bool
    baseline: tuple[DependencyTree, DependencyTree]
    history: list[tuple[DependencyTree, DependencyTree]] = field(default_factory=list)
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def visited(self) -> list[tuple[DependencyTree, DependencyTree]]:
        return [self.baseline] + self.history

    def trees_after(self, rounds: int) -> tuple[DependencyTree, DependencyTree]:
        if rounds < 1:
            return self.baseline
        return self.history[min(rounds, len(self.history)) - 1]


def projected_path_score(
    edge: Edge, tree: DependencyTree, pair: BitextPair, models: ProjectionModels, direction: Direction
) -> float:
    endpoints = project_endpoints(edge, pair.alignment, direction)
    if endpoints is None:
        return 0.0
    nodes = tree_path(tree, *endpoints)
    if ROOT in nodes or len(nodes) - 1 > MAX_PATH_LENGTH:
        return 0.0
    return models.path_score(nodes, edge, pair, direction)


def r_score(candidate: Edge, source_tree: DependencyTree, pair: BitextPair, models: ProjectionModels) -> float:
    """
    Score of the source-tree path between the images of a target candidate
    edge; pair.tgt is the target and models score target edges
    """
    if candidate[0] == ROOT:
        return 0.0
    return projected_path_score(candidate, source_tree, pair, models, Direction.TGT_TO_SRC)


def agreement_holds(tree: DependencyTree, paths: Mapping[Edge, Optional[ProjectedPath]]) -> bool:
    tree_edges = tree.undirected_edges()
    return all(path.undirected_edges() <= tree_edges for path in paths.values() if path is not None)


def _r_matrix(source_tree, target, pair, models: ProjectionModels) -> np.ndarray:
    n = target.n
    r = np.zeros((n + 1, n + 1))
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i != j:
                r[i, j] = r_score((i, j), source_tree, pair, models)
    return r


@dataclass
class _SourceEdge:
    edge: Edge
    endpoints: Edge
    length: int
    phi: Callable[[int, int], float]
    # decided once from phi alone, u never retires a path
    abstains: bool = False


def _phi_scorer(models: ProjectionModels, length: int, edge: Edge, pair: BitextPair):
    @lru_cache(maxsize=None)
    def phi(a, b):
        return models.edge_score(length, edge, (a, b), pair)

    return phi


def _source_edges(source_tree, pair, models: ProjectionModels, abstain: bool = True) -> list[_SourceEdge]:
    result = []
    for edge in source_tree.edges():
        if edge[0] == ROOT:
            continue
        endpoints = project_endpoints(edge, pair.alignment)
        if endpoints is None:
            continue
        predicted = predict_path_length(models.length, four_node_features(edge, endpoints, pair))
        length = min(predicted, pair.tgt.n - 1)
        source = _SourceEdge(edge, endpoints, length, _phi_scorer(models, length, edge, pair))
        if abstain:
            path = best_path(endpoints, length, source.phi, pair.tgt.n)
            source.abstains = sum(source.phi(a, b) for a, b in path.edges()) <= 0
        result.append(source)
    return result


def project(
    source_tree: DependencyTree,
    target: ParsedSentence,
    pair: BitextPair,
    models_src: LanguageModels,
    models_tgt: LanguageModels,
    cfg: AgreementConfig,
) -> ProjectResult:
    """
    Re-decodes the target tree so that it agrees with the projected paths
    of the source tree's edges. pair must be oriented with pair.src as the
    source side and pair.tgt == target
    """
    if target != pair.tgt:
        raise ValueError(f"Pair {pair.pair_id}: target sentence is not the pair's tgt side")
    if len(source_tree) != pair.src.n:
        raise ValueError(
            f"Pair {pair.pair_id}: source tree of length {len(source_tree)} "
            f"for a sentence of length {pair.src.n}"
        )

    theta = score_edges(models_tgt.parser, target)
    base = theta.plus(_r_matrix(source_tree, target, pair, models_tgt.projection))
    source_edges = _source_edges(source_tree, pair, models_src.projection, cfg.abstain)
    dual = DualState(alpha=cfg.alpha0)
    diagnostics: list[IterationRecord] = []
    previous = decode_mst(theta)
    tree, paths = previous, {}

    for iteration in range(1, cfg.inner_iters + 1):
        dual.iteration = iteration
        modified = base.plus(-dual.tree_penalty(target.n))
        tree = decode_mst(modified)
        dual_value = modified.tree_score(tree)

        paths = {}
        for source in source_edges:
            t = source.edge
            if source.abstains:
                paths[t] = None
                continue

            def scorer(a, b, source=source, t=t):
                return source.phi(a, b) + dual.undirected(t, a, b)

            path = best_path(source.endpoints, source.length, scorer, target.n)
            paths[t] = path
            dual_value += sum(scorer(a, b) for a, b in path.edges())

        tree_edges = tree.undirected_edges()
        disagreements = sum(
            len(path.undirected_edges() - tree_edges) for path in paths.values() if path is not None
        )
        record = IterationRecord(
            iteration=iteration,
            dual_value=dual_value,
            disagreements=disagreements,
            tree_changed=tree != previous,
            active_paths=sum(path is not None for path in paths.values()),
        )
        diagnostics.append(record)
        logging.debug("pair %s %s: %s", pair.pair_id, target.lang, record)
        previous = tree

        if disagreements == 0:
            return ProjectResult(tree, True, iteration, diagnostics, dual, paths)

        dual.alpha = cfg.step_size(iteration)
        oriented = {(min(h, d), max(h, d)): (h, d) for h, d in tree.edges() if h != ROOT}
        clip = cfg.dual_update == "inclusion"
        for t, path in paths.items():
            path_edges = path.undirected_edges() if path is not None else frozenset()
            for key in path_edges | oriented.keys():
                in_path = 1.0 if key in path_edges else 0.0
                in_tree = 1.0 if key in oriented else 0.0
                if in_path != in_tree:
                    dual.add(t, oriented.get(key, key), -dual.alpha * (in_path - in_tree), clip)

    logging.info(
        "pair %s %s: no agreement after %s inner iterations", pair.pair_id, target.lang, cfg.inner_iters
    )
    return ProjectResult(tree, False, cfg.inner_iters, diagnostics, dual, paths)


def baseline_trees(pair: BitextPair, models_e: LanguageModels, models_h: LanguageModels):
    return (
        decode_mst(score_edges(models_e.parser, pair.src)),
        decode_mst(score_edges(models_h.parser, pair.tgt)),
    )


def coordinate_descent(
    pair: BitextPair, models_e: LanguageModels, models_h: LanguageModels, cfg: AgreementConfig
) -> AgreementResult:
    """
    Alternately projects each side's tree onto the other until the
    configured stopping rule holds or outer_iters rounds ran
    """
    tree_e, tree_h = baseline_trees(pair, models_e, models_h)
    result = AgreementResult(
        src_tree=tree_e,
        tgt_tree=tree_h,
        converged=(False, False),
        outer_iterations=0,
        stopped=False,
        baseline=(tree_e, tree_h),
    )
    flipped = pair.flipped()

    for outer in range(1, cfg.outer_iters + 1):
        projected_e = project(tree_h, pair.src, flipped, models_h, models_e, cfg)
        projected_h = project(tree_e, pair.tgt, pair, models_e, models_h, cfg)
        unchanged_e = projected_e.tree == tree_e
        unchanged_h = projected_h.tree == tree_h
        tree_e, tree_h = projected_e.tree, projected_h.tree

        result.history.append((tree_e, tree_h))
        for side, projected in ((pair.src.lang, projected_e), (pair.tgt.lang, projected_h)):
            for record in projected.diagnostics:
                result.diagnostics.append({"pair": pair.pair_id, "side": side, "outer": outer, **record.as_dict()})
        result.converged = (projected_e.converged, projected_h.converged)
        result.outer_iterations = outer

        if cfg.convergence_mode == "both":
            stop = unchanged_e and unchanged_h
        else:
            stop = unchanged_e or unchanged_h
        if stop:
            result.stopped = True
            break

    result.src_tree, result.tgt_tree = tree_e, tree_h
    logging.debug(
        "pair %s: %s outer rounds, stopped=%s", pair.pair_id, result.outer_iterations, result.stopped
    )
    return result


def run_corpus(
    pairs: list[BitextPair],
    models_e: LanguageModels,
    models_h: LanguageModels,
    cfg: AgreementConfig,
    jobs: int = 1,
) -> list[AgreementResult]:
    """Runs coordinate descent per pair; results keep the input order"""
    logging.info("running agreement inference on %s pairs with %s worker(s)", len(pairs), jobs)
    infer = partial(coordinate_descent, models_e=models_e, models_h=models_h, cfg=cfg)
    if jobs <= 1 or len(pairs) < 2:
        return [infer(pair) for pair in pairs]
    with multiprocessing.Pool(processes=jobs) as pool:
        return pool.map(infer, pairs)


def joint_objective(
    tree_e: DependencyTree,
    tree_h: DependencyTree,
    pair: BitextPair,
    models_e: LanguageModels,
    models_h: LanguageModels,
) -> float:
    total = score_edges(models_e.parser, pair.src).tree_score(tree_e)
    total += score_edges(models_h.parser, pair.tgt).tree_score(tree_h)
    total += sum(
        projected_path_score(edge, tree_h, pair, models_e.projection, Direction.SRC_TO_TGT)
        for edge in tree_e.edges()
        if edge[0] != ROOT
    )
    total += sum(
        projected_path_score(edge, tree_e, pair, models_h.projection, Direction.TGT_TO_SRC)
        for edge in tree_h.edges()
        if edge[0] != ROOT
    )
    return total


def _candidate_edges(n: int) -> list[Edge]:
    return [(h, d) for d in range(1, n + 1) for h in range(1, n + 1) if h != d]


def _incidence(trees: np.ndarray, edges: list[Edge]) -> np.ndarray:
    column = {edge: c for c, edge in enumerate(edges)}
    incidence = np.zeros((len(trees), len(edges)))
    for row, heads in enumerate(trees):
        for dep, head in enumerate(heads, start=1):
            if head != ROOT:
                incidence[row, column[(int(head), dep)]] = 1.0
    return incidence


def _cross_scores(edges, other_trees, pair, models: ProjectionModels, direction) -> np.ndarray:
    scores = np.zeros((len(edges), len(other_trees)))
    cache: dict = {}
    for col, heads in enumerate(other_trees):
        tree = DependencyTree(tuple(int(h) for h in heads))
        for row, edge in enumerate(edges):
            endpoints = project_endpoints(edge, pair.alignment, direction)
            if endpoints is None:
                continue
            nodes = tuple(tree_path(tree, *endpoints))
            if (edge, nodes) not in cache:
                if ROOT in nodes or len(nodes) - 1 > MAX_PATH_LENGTH:
                    cache[(edge, nodes)] = 0.0
                else:
                    cache[(edge, nodes)] = models.path_score(nodes, edge, pair, direction)
            scores[row, col] = cache[(edge, nodes)]
    return scores


def exhaustive_joint_maximum(pair: BitextPair, models_e: LanguageModels, models_h: LanguageModels):
    """
    Maximum of joint_objective over every pair of arborescences, for
    sentences short enough to enumerate. Returns (value, tree_e, tree_h)
    """
    trees_e = enumerate_arborescences(pair.src.n)
    trees_h = enumerate_arborescences(pair.tgt.n)
    theta_e = score_edges(models_e.parser, pair.src).scores
    theta_h = score_edges(models_h.parser, pair.tgt).scores
    tree_scores_e = theta_e[trees_e, np.arange(1, pair.src.n + 1)].sum(axis=1)
    tree_scores_h = theta_h[trees_h, np.arange(1, pair.tgt.n + 1)].sum(axis=1)

    edges_e = _candidate_edges(pair.src.n)
    edges_h = _candidate_edges(pair.tgt.n)
    cross_e = _cross_scores(edges_e, trees_h, pair, models_e.projection, Direction.SRC_TO_TGT)
    cross_h = _cross_scores(edges_h, trees_e, pair, models_h.projection, Direction.TGT_TO_SRC)

    joint = (
        tree_scores_e[:, None]
        + tree_scores_h[None, :]
        + _incidence(trees_e, edges_e) @ cross_e
        + (_incidence(trees_h, edges_h) @ cross_h).T
    )
    row, col = np.unravel_index(int(np.argmax(joint)), joint.shape)
    return (
        float(joint[row, col]),
        DependencyTree(tuple(int(h) for h in trees_e[row])),
        DependencyTree(tuple(int(h) for h in trees_h[col])),
    )
