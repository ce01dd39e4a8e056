import itertools
import random
from collections import deque
from dataclasses import replace
from unittest.mock import Mock

import pytest

from biparse.corpus import Alignment, BitextPair, DependencyTree, ParsedSentence
from biparse.fixtures import EN_VERB_HEADS, pp_fixture_set, pp_projection_models, random_tree
from biparse.projection import (
    Direction,
    LengthInstance,
    PathInstance,
    PathLengthModel,
    PathPredictorModel,
    ProjectedPath,
    ProjectionModels,
    best_path,
    extract_projection_training,
    four_node_features,
    path_edge_score,
    predict_path_length,
    project_endpoints,
    read_length_instances,
    train_path_length,
    train_path_predictor,
    tree_path,
    write_length_instances,
)


@pytest.fixture(scope="module")
def noun_pair():
    # "I washed the jeans with pockets" / "maine jeb waali jeans dhoyee"
    return pp_fixture_set().pairs[0]


def bfs_path(tree, a, b):
    neighbours = {v: set() for v in range(len(tree) + 1)}
    for h, d in tree.edges():
        neighbours[h].add(d)
        neighbours[d].add(h)
    parent = {a: None}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        for other in neighbours[node]:
            if other not in parent:
                parent[other] = node
                queue.append(other)
    path = [b]
    while path[-1] != a:
        path.append(parent[path[-1]])
    return path[::-1]


class TestTreePath:
    def test_noun_attachment_path(self):
        tree = DependencyTree((2, 0, 4, 2, 4, 5))
        assert tree_path(tree, 2, 5) == [2, 4, 5]
        assert tree_path(tree, 6, 1) == [6, 5, 4, 2, 1]

    def test_same_node(self):
        assert tree_path(DependencyTree((0,)), 1, 1) == []

    def test_through_root(self):
        assert tree_path(DependencyTree((0, 0)), 1, 2) == [1, 0, 2]

    def test_matches_breadth_first_search(self):
        rng = random.Random(11)
        for _ in range(500):
            n = rng.randint(1, 10)
            tree = random_tree(n, rng)
            a, b = rng.randint(0, n), rng.randint(0, n)
            if a == b:
                continue
            assert tree_path(tree, a, b) == bfs_path(tree, a, b)


class TestProjectEndpoints:
    @pytest.mark.parametrize("links, edge, expected", [
        ([(1, 1), (2, 2), (3, 3), (4, 4)], (2, 4), (2, 4)),
        ([(2, 2)], (2, 4), None),
        ([(2, 5), (4, 5)], (2, 4), None),
        ([(2, 5), (2, 3), (4, 1)], (2, 4), (3, 1)),
        ([(1, 1)], (0, 1), None),
    ])
    def test_source_to_target(self, links, edge, expected):
        assert project_endpoints(edge, Alignment.of(links)) == expected

    def test_target_to_source(self):
        alignment = Alignment.of([(1, 2), (3, 4)])
        assert project_endpoints((2, 4), alignment, Direction.TGT_TO_SRC) == (1, 3)
        assert project_endpoints((2, 4), alignment) is None


class TestFourNodeFeatures:
    def test_names(self, noun_pair):
        features = four_node_features((4, 5), (4, 3), noun_pair)
        for name in [
            "bias", "s0.form=jeans", "s1.form=with", "t0.form=jeans", "t1.form=waali",
            "s0.pos=NN", "s1.pos=IN", "t0.pos=NN", "t1.pos=PSP",
            "s.pp=NN|IN", "t.pp=NN|PSP", "t.dist=1",
        ]:
            assert features[name] == 1.0
        assert len(features) == 12

    def test_target_to_source_reads_edge_from_target(self, noun_pair):
        features = four_node_features((3, 2), (5, 6), noun_pair, Direction.TGT_TO_SRC)
        assert "s0.form=waali" in features
        assert "t1.form=pockets" in features

    def test_distance_distinguishes_repeated_words(self):
        tgt = ParsedSentence.from_pairs("hi", [("the", "DT"), ("x", "NN"), ("the", "DT"), ("y", "NN"),
                                               ("z", "NN"), ("w", "NN"), ("the", "DT")])
        pair = BitextPair(ParsedSentence.from_pairs("en", [("a", "DT"), ("b", "NN")]), tgt, Alignment())
        near = four_node_features((1, 2), (2, 1), pair)
        far = four_node_features((1, 2), (2, 7), pair)
        assert near["t.dist=1"] == 1.0
        assert far["t.dist=5+"] == 1.0
        assert near.keys() - far.keys() == {"t.dist=1"}

    def test_out_of_range(self, noun_pair):
        with pytest.raises(ValueError):
            four_node_features((4, 5), (4, 9), noun_pair)


class TestPathLength:
    def test_zero_model_predicts_one(self):
        assert predict_path_length(PathLengthModel(), {"bias": 1.0}) == 1

    def test_highest_classifier_wins(self):
        model = PathLengthModel(({}, {}, {"bias": 2.0}, {"bias": 1.0}, {}))
        assert predict_path_length(model, {"bias": 1.0}) == 3

    def test_ties_go_to_shortest(self):
        model = PathLengthModel(({}, {"bias": 2.0}, {"bias": 2.0}, {}, {}))
        assert predict_path_length(model, {"bias": 1.0}) == 2

    def test_pp_models(self, noun_pair):
        english, _ = pp_projection_models()
        verb_edge = four_node_features((2, 5), (5, 3), noun_pair)
        noun_edge = four_node_features((4, 5), (4, 3), noun_pair)
        assert predict_path_length(english.length, verb_edge) == 2
        assert predict_path_length(english.length, noun_edge) == 1

    def test_wrong_number_of_classifiers(self):
        with pytest.raises(ValueError):
            PathLengthModel(({}, {}))

    def test_training_on_separable_lengths(self):
        instances = [
            LengthInstance({"bias": 1.0, f"marker=L{k}": 1.0}, k)
            for _ in range(4)
            for k in (1, 2, 3, 4, 5)
        ]
        model = train_path_length(instances, epochs=50)
        for instance in instances:
            assert predict_path_length(model, instance.features) == instance.length

    def test_zero_epochs(self):
        model = train_path_length([LengthInstance({"bias": 1.0}, 3)], epochs=0)
        assert model.is_zero

    @pytest.mark.parametrize("instances", [[], [LengthInstance({"bias": 1.0}, 6)]])
    def test_bad_training_input(self, instances):
        with pytest.raises(ValueError):
            train_path_length(instances, epochs=1)


class TestBestPath:
    def test_direct_edge_skips_scoring(self):
        scorer = Mock(return_value=1.0)
        assert best_path((2, 5), 1, scorer, 6).nodes == (2, 5)
        scorer.assert_not_called()

    def test_uniform_scores_pick_smallest_interior(self):
        assert best_path((1, 5), 2, lambda a, b: 1.0, 5).nodes == (1, 2, 5)
        assert best_path((1, 5), 3, lambda a, b: 0.0, 5).nodes == (1, 2, 3, 5)

    def test_scores_decide(self):
        table = {(1, 3): 2.0, (3, 4): 1.0}
        assert best_path((1, 4), 2, lambda a, b: table.get((a, b), 0.0), 4).nodes == (1, 3, 4)

    @pytest.mark.parametrize("endpoints, k, n", [((1, 2), 3, 3), ((1, 2), 6, 10), ((2, 2), 2, 5), ((1, 2), 0, 5)])
    def test_invalid(self, endpoints, k, n):
        with pytest.raises(ValueError):
            best_path(endpoints, k, lambda a, b: 0.0, n)

    def test_matches_exhaustive_search(self):
        rng = random.Random(5)
        for _ in range(500):
            n = rng.randint(3, 8)
            k = rng.randint(1, min(5, n - 1))
            j, j2 = rng.sample(range(1, n + 1), 2)
            table = {(a, b): rng.choice([rng.uniform(-3, 3), float(rng.randint(-2, 2))])
                     for a in range(1, n + 1) for b in range(1, n + 1) if a != b}

            others = [v for v in range(1, n + 1) if v not in (j, j2)]
            best_nodes, best_score = None, 0.0
            for interior in itertools.permutations(others, k - 1):
                nodes = (j, *interior, j2)
                total = 0
                for a, b in zip(nodes, nodes[1:]):
                    total += table[(a, b)]
                if best_nodes is None or total > best_score:
                    best_nodes, best_score = nodes, total

            assert best_path((j, j2), k, lambda a, b: table[(a, b)], n).nodes == best_nodes


class TestPathScores:
    def test_zero_model(self, noun_pair):
        assert path_edge_score(PathPredictorModel(), 2, (2, 5), (5, 4), noun_pair) == 0.0

    def test_single_feature(self, noun_pair):
        model = PathPredictorModel({2: {"t.pp=VM|NN": 1.5}, 3: {}, 4: {}, 5: {}})
        assert path_edge_score(model, 2, (2, 5), (5, 4), noun_pair) == 1.5
        assert path_edge_score(model, 2, (2, 5), (4, 3), noun_pair) == 0.0

    def test_unknown_length(self, noun_pair):
        with pytest.raises(ValueError):
            path_edge_score(PathPredictorModel(), 1, (2, 5), (5, 4), noun_pair)

    def test_path_score_sums_edges(self, noun_pair):
        english, _ = pp_projection_models()
        assert english.path_score((5, 4, 3), (2, 5), noun_pair) == 2.0
        assert english.path_score((5, 3), (2, 5), noun_pair) == 4.0
        assert ProjectionModels().path_score((5, 4, 3), (2, 5), noun_pair) == 0.0


class TestProjectedPath:
    @pytest.mark.parametrize("nodes", [(1,), (1, 2, 1), (1, 2, 3, 4, 5, 6, 7)])
    def test_invalid(self, nodes):
        with pytest.raises(ValueError):
            ProjectedPath(nodes)

    def test_edges(self):
        path = ProjectedPath((5, 4, 3))
        assert path.length == 2
        assert path.endpoints == (5, 3)
        assert path.edges() == [(5, 4), (4, 3)]
        assert path.undirected_edges() == {(4, 5), (3, 4)}


class TestExtraction:
    def test_verb_attached_english_over_noun_attached_hindi(self, noun_pair):
        pair = replace(noun_pair, src_tree=DependencyTree(EN_VERB_HEADS))
        instances = extract_projection_training([pair])

        assert sorted(i.length for i in instances.lengths) == [1, 1, 1, 2]
        assert instances.skipped == {"root_edge": 1, "unprojectable": 1}
        [path] = instances.paths
        assert path.src_edge == (2, 5)
        assert path.gold.nodes == (5, 4, 3)

    def test_isomorphic_trees(self, noun_pair):
        instances = extract_projection_training([noun_pair])
        assert {i.length for i in instances.lengths} == {1}
        assert instances.paths == []

    def test_reverse_direction(self, noun_pair):
        instances = extract_projection_training([noun_pair], Direction.TGT_TO_SRC)
        assert [i.length for i in instances.lengths] == [1, 1, 1, 1]
        assert instances.skipped["root_edge"] == 1

    def test_unaligned_preposition(self, noun_pair):
        links = noun_pair.alignment.links - {(5, 3)}
        instances = extract_projection_training([replace(noun_pair, alignment=Alignment(links))])
        assert instances.skipped["unprojectable"] == 3

    def test_path_through_root(self):
        pair = BitextPair(
            ParsedSentence.from_pairs("en", [("a", "DT"), ("b", "NN")]),
            ParsedSentence.from_pairs("hi", [("c", "DT"), ("d", "NN")]),
            Alignment.identity(2),
            src_tree=DependencyTree((2, 0)),
            tgt_tree=DependencyTree((0, 0)),
        )
        instances = extract_projection_training([pair])
        assert instances.skipped["through_root"] == 1
        assert instances.lengths == []

    def test_missing_trees(self, noun_pair):
        with pytest.raises(ValueError, match="both trees"):
            extract_projection_training([replace(noun_pair, tgt_tree=None)])


def predictor_instances(rng, count):
    src = ParsedSentence.from_pairs("en", [("s", "S"), ("t", "T")])
    instances = []
    for _ in range(count):
        k = rng.randint(2, 4)
        n = k + 3
        positions = list(range(1, n + 1))
        rng.shuffle(positions)
        tags = ["X"] * n
        gold = [positions[0]] + positions[2:k + 1] + [positions[1]]
        tags[gold[0] - 1] = "A"
        tags[gold[-1] - 1] = "B"
        for step, node in enumerate(gold[1:-1], start=1):
            tags[node - 1] = f"M{step}"
        tgt = ParsedSentence.from_pairs("hi", [(tag.lower(), tag) for tag in tags])
        instances.append(PathInstance(BitextPair(src, tgt, Alignment()), (1, 2), ProjectedPath(tuple(gold))))
    return instances


class TestPathPredictor:
    def test_learns_separable_paths(self):
        instances = predictor_instances(random.Random(2), 40)
        model = ProjectionModels(predictor=train_path_predictor(instances, epochs=50))
        for instance in instances:
            k = instance.gold.length

            def scorer(a, b):
                return model.edge_score(k, instance.src_edge, (a, b), instance.pair)

            assert best_path(instance.endpoints, k, scorer, instance.pair.tgt.n) == instance.gold

    def test_zero_epochs(self):
        model = train_path_predictor(predictor_instances(random.Random(2), 3), epochs=0)
        assert model.is_zero

    def test_direct_edge_rejected(self, noun_pair):
        with pytest.raises(ValueError):
            train_path_predictor([PathInstance(noun_pair, (4, 5), ProjectedPath((4, 3)))], epochs=1)

    def test_empty_training_set(self):
        assert train_path_predictor([], epochs=5).is_zero


class TestInstanceFile:
    def test_round_trip(self):
        instances = [LengthInstance({"bias": 1.0, "t.dist=2": 1.0}, 2), LengthInstance({"bias": 1.0}, 1)]
        text = write_length_instances(instances)
        assert text == "2\tbias\tt.dist=2\n1\tbias\n"
        assert read_length_instances(text) == instances

    def test_comments_and_blank_lines(self):
        assert read_length_instances("# label\tfeatures\n\n3\tbias\n") == [LengthInstance({"bias": 1.0}, 3)]

    @pytest.mark.parametrize("text", ["7\tbias\n", "x\tbias\n"])
    def test_bad_label(self, text):
        with pytest.raises(ValueError, match="line 1"):
            read_length_instances(text)

    def test_non_binary_feature(self):
        with pytest.raises(ValueError):
            write_length_instances([LengthInstance({"bias": 2.0}, 1)])
