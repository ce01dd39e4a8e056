import pytest

from biparse.agreement import baseline_trees
from biparse.config import load_config
from biparse.corpus import ROOT, read_bitext
from biparse.evaluation import attachment_accuracy, read_pp_gold
from biparse.fixtures import (
    EN_VERB_HEADS,
    PREP_INDEX,
    LexicalWeights,
    all_fixture_sets,
    identity_fixture_set,
    pp_fixture_set,
    reduction_fixture_set,
    synthetic_treebank,
    write_fixture_set,
    write_treebank_fixture,
)
from biparse.store import ModelStore


def test_conflicting_weights_rejected():
    weights = LexicalWeights("en")
    weights.edge("washed", "with", 10.5)
    weights.edge("washed", "with", 10.5)
    with pytest.raises(ValueError, match="set to 10.5 and 10.0"):
        weights.edge("washed", "with", 10.0)


class TestPPFixture:
    def test_shape(self):
        fixture = pp_fixture_set()
        assert len(fixture.pairs) == 20
        assert sum(pair.src_tree.head(PREP_INDEX) == 4 for pair in fixture.pairs) == 10
        assert all(pair.src.token(PREP_INDEX).form == "with" for pair in fixture.pairs)

    def test_baseline_misses_every_noun_attachment(self):
        fixture = pp_fixture_set()
        baselines = [baseline_trees(pair, fixture.models_e, fixture.models_h) for pair in fixture.pairs]
        assert all(tree_e.heads == EN_VERB_HEADS for tree_e, _ in baselines)
        assert all(tree_h == pair.tgt_tree for (_, tree_h), pair in zip(baselines, fixture.pairs))
        score = attachment_accuracy([tree_e for tree_e, _ in baselines], fixture.instances)
        assert (score.correct, score.total) == (10, 20)


class TestIdentityFixture:
    def test_sides_mirror_each_other(self):
        for pair in identity_fixture_set(10, seed=3).pairs:
            assert pair.src.forms() == pair.tgt.forms()
            assert pair.src_tree == pair.tgt_tree
            assert len(pair.alignment.links) == pair.src.n

    def test_instances_point_at_prepositions(self):
        fixture = identity_fixture_set(10, seed=3)
        for instance in fixture.instances:
            pair = fixture.pairs[instance.sentence_id - 1]
            assert pair.src.token(instance.prep_index).pos == "IN"
            assert instance.gold_head != ROOT


def test_reduction_fixture_has_zero_projection():
    fixture = reduction_fixture_set(10, seed=1)
    assert len(fixture.pairs) == 10
    assert fixture.models_e.projection.is_zero
    assert fixture.models_h.projection.is_zero
    assert not fixture.instances


def test_synthetic_treebank_rules():
    for sentence, tree in synthetic_treebank(size=50, seed=1):
        for token in sentence.tokens:
            head = tree.head(token.index)
            if token.pos == "VBD":
                assert head == ROOT
            elif token.pos in ("DT", "JJ"):
                assert sentence.token(head).pos == "NN"
            elif token.pos == "IN":
                assert sentence.token(head).pos == "VBD"


def test_fixture_sets_are_deterministic():
    first, second = all_fixture_sets(seed=5), all_fixture_sets(seed=5)
    assert [f.name for f in first] == ["pp", "multiround", "identity", "reduction"]
    assert [f.pairs for f in first] == [f.pairs for f in second]


def test_written_fixture_reads_back(tmp_path):
    fixture = pp_fixture_set()
    write_fixture_set(fixture, tmp_path)

    config = load_config(tmp_path / "run.conf")
    config.validate(required=("src_conll", "tgt_conll", "alignments", "gold", "model_dir"))
    pairs = read_bitext(
        config.src_conll.read_text(encoding="utf-8"),
        config.tgt_conll.read_text(encoding="utf-8"),
        config.alignments.read_text(encoding="utf-8"),
    )
    assert pairs == fixture.pairs
    assert read_pp_gold(config.gold.read_text(encoding="utf-8")) == fixture.instances

    store = ModelStore(config.model_dir)
    assert store.load_language("en", "hi") == fixture.models_e
    assert store.load_language("hi", "en") == fixture.models_h


def test_treebank_fixture(tmp_path):
    conll, conf = write_treebank_fixture(tmp_path, size=20, seed=2)
    config = load_config(conf)
    assert config.treebank == conll
    assert config.epochs == 50
