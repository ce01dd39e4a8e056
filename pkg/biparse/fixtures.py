import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from biparse.agreement import LanguageModels
from biparse.corpus import (
    ROOT,
    Alignment,
    BitextPair,
    DependencyTree,
    ParsedSentence,
    read_alignments,
    write_alignments,
    write_conll,
)
from biparse.evaluation import PPInstance, write_pp_gold
from biparse.parser import ROOT_POS, EdgeFactoredModel, edge_feature_table
from biparse.projection import PathLengthModel, PathPredictorModel, ProjectionModels
from biparse.store import ModelStore

GOLD_EDGE = 10.0

# (english verb, hindi verb)
VERBS = [
    ("washed", "dhoyee"),
    ("bought", "khareeda"),
    ("saw", "dekha"),
    ("carried", "uthaaya"),
    ("cleaned", "chamkaaya"),
]
# (english object, hindi object, english pp noun, hindi pp noun) where the pp modifies the object
NOUN_ATTACHMENTS = [
    ("jeans", "jeans", "pockets", "jeb"),
    ("shirt", "kameez", "buttons", "batan"),
    ("bag", "thaila", "handles", "hatthe"),
    ("house", "ghar", "windows", "khidkiyaan"),
    ("book", "kitaab", "pictures", "tasveeren"),
    ("jeans", "jeans", "patches", "paiband"),
    ("shirt", "kameez", "stripes", "dhaariyaan"),
    ("bag", "thaila", "wheels", "pahiye"),
    ("house", "ghar", "balconies", "chhajje"),
    ("book", "kitaab", "maps", "naqshe"),
]
# the pp modifies the verb
VERB_ATTACHMENTS = [
    ("jeans", "jeans", "soap", "saabun"),
    ("shirt", "kameez", "water", "paani"),
    ("bag", "thaila", "care", "dhyaan"),
    ("house", "ghar", "friends", "doston"),
    ("book", "kitaab", "money", "paison"),
    ("jeans", "jeans", "detergent", "sarf"),
    ("shirt", "kameez", "brush", "burush"),
    ("bag", "thaila", "effort", "mehnat"),
    ("house", "ghar", "binoculars", "doorbeen"),
    ("book", "kitaab", "interest", "ruchi"),
]
MULTIROUND_VERB = ("scrubbed", "ragdi")
MULTIROUND_NOUN = [
    ("shirt", "kameez", "collars", "kolar"),
    ("coat", "kot", "pockets", "jeb"),
    ("jeans", "jeans", "stains", "daag"),
    ("cap", "topi", "badges", "billey"),
]
MULTIROUND_VERB_ATTACHMENTS = [
    ("shirt", "kameez", "soap", "saabun"),
    ("coat", "kot", "brush", "burush"),
]

# "I <verb> the <object> with <pp>"
EN_NOUN_HEADS = (2, 0, 4, 2, 4, 5)
EN_VERB_HEADS = (2, 0, 4, 2, 2, 5)
# "maine <pp> waali|se <object> <verb>"
HI_NOUN_HEADS = (5, 3, 4, 5, 0)
HI_VERB_HEADS = (5, 3, 5, 5, 0)
PP_ALIGNMENT = "0-0 1-4 3-3 4-2 5-1"
PREP_INDEX = 5


@dataclass
class FixtureSet:
    name: str
    pairs: list[BitextPair]
    models_e: LanguageModels
    models_h: LanguageModels
    instances: list[PPInstance] = field(default_factory=list)
    config: dict[str, str] = field(default_factory=dict)
    src_lang: str = "en"
    tgt_lang: str = "hi"


class LexicalWeights:
    """Parser weights on head/dependent form pairs; conflicting assignments are rejected"""

    def __init__(self, lang: str):
        self.lang = lang
        self.weights: dict[str, float] = {}

    def _set(self, name: str, value: float):
        if self.weights.get(name, value) != value:
            raise ValueError(f"{self.lang} feature {name!r} set to {self.weights[name]} and {value}")
        self.weights[name] = value

    def edge(self, head: str, dep: str, value: float = GOLD_EDGE):
        self._set(f"hf&df={head}|{dep}", value)

    def root(self, pos: str, value: float = GOLD_EDGE):
        self._set(f"hp&dp={ROOT_POS}|{pos}", value)

    def root_form(self, form: str, value: float = GOLD_EDGE):
        self._set(f"root&dform={form}", value)

    def model(self) -> EdgeFactoredModel:
        return EdgeFactoredModel(self.lang, dict(self.weights))


def _english(verb, obj, pp) -> ParsedSentence:
    return ParsedSentence.from_pairs(
        "en",
        [("I", "PRP"), (verb, "VBD"), ("the", "DT"), (obj, "NN"), ("with", "IN"), (pp, "NN")],
    )


def _hindi(verb, obj, pp, marker) -> ParsedSentence:
    return ParsedSentence.from_pairs(
        "hi",
        [("maine", "PRP"), (pp, "NN"), (marker, "PSP"), (obj, "NN"), (verb, "VM")],
    )


def pp_projection_models() -> tuple[ProjectionModels, ProjectionModels]:
    """
    English edges: a verb edge landing on "waali" spans two Hindi edges,
    two-edge paths prefer adjacent tokens. Hindi edges: a noun-marker
    edge spans two English edges
    """
    english = ProjectionModels(
        PathLengthModel(({"bias": 4.0}, {"t1.form=waali": 3.0, "t0.pos=VM": 3.0}, {}, {}, {})),
        PathPredictorModel({2: {"t.dist=1": 1.0}, 3: {}, 4: {}, 5: {}}),
    )
    hindi = ProjectionModels(
        PathLengthModel(({"bias": 4.0}, {}, {}, {}, {})),
        PathPredictorModel({2: {"s.pp=NN|PSP": 3.0}, 3: {}, 4: {}, 5: {}}),
    )
    return english, hindi


def _pp_pair(pair_id, verb, entry, noun_attachment) -> BitextPair:
    en_verb, hi_verb = verb
    obj, obj_hi, pp, pp_hi = entry
    marker = "waali" if noun_attachment else "se"
    return BitextPair(
        src=_english(en_verb, obj, pp),
        tgt=_hindi(hi_verb, obj_hi, pp_hi, marker),
        alignment=read_alignments(PP_ALIGNMENT)[0],
        src_tree=DependencyTree(EN_NOUN_HEADS if noun_attachment else EN_VERB_HEADS),
        tgt_tree=DependencyTree(HI_NOUN_HEADS if noun_attachment else HI_VERB_HEADS),
        pair_id=pair_id,
    )


def _pp_instance(pair: BitextPair) -> PPInstance:
    return PPInstance(pair.pair_id, PREP_INDEX, pair.src_tree.head(PREP_INDEX))


def _base_weights(english: LexicalWeights, hindi: LexicalWeights, pair: BitextPair):
    en, hi = pair.src.forms(), pair.tgt.forms()
    english.edge(en[1], en[0])
    english.edge(en[1], en[3])
    english.edge(en[3], en[2])
    english.edge(en[4], en[5])
    english.root("VBD")
    hindi.edge(hi[4], hi[0])
    hindi.edge(hi[4], hi[3])
    hindi.edge(hi[2], hi[1])
    hindi.root("VM")


def pp_fixture_set() -> FixtureSet:
    """
    Twenty pairs alternating noun and verb attachments. The English parser
    prefers the verb for every "with", so it misses all ten noun
    attachments; the Hindi case markers make every Hindi tree correct
    """
    english, hindi = LexicalWeights("en"), LexicalWeights("hi")
    pairs = []
    for idx in range(len(NOUN_ATTACHMENTS)):
        verb = VERBS[idx % len(VERBS)]
        for noun_attachment, entries in ((True, NOUN_ATTACHMENTS), (False, VERB_ATTACHMENTS)):
            pair = _pp_pair(len(pairs) + 1, verb, entries[idx], noun_attachment)
            pairs.append(pair)
            _base_weights(english, hindi, pair)
            en, hi = pair.src.forms(), pair.tgt.forms()
            english.edge(en[1], "with", 10.5)
            english.edge(en[3], "with", 10.0)
            if noun_attachment:
                hindi.edge(hi[3], "waali")
            else:
                hindi.edge(hi[4], "se")

    projection_e, projection_h = pp_projection_models()
    return FixtureSet(
        name="pp",
        pairs=pairs,
        models_e=LanguageModels(english.model(), projection_e),
        models_h=LanguageModels(hindi.model(), projection_h),
        instances=[_pp_instance(pair) for pair in pairs],
    )


def multiround_fixture_set() -> FixtureSet:
    """
    The Hindi parser repeats the English mistake on noun attachments.
    The Hindi tree is repaired in the first round and the English one
    only in the second, so these pairs need convergence_mode=both
    """
    english, hindi = LexicalWeights("en"), LexicalWeights("hi")
    pairs = []
    entries = [(True, entry) for entry in MULTIROUND_NOUN] + [(False, entry) for entry in MULTIROUND_VERB_ATTACHMENTS]
    for noun_attachment, entry in entries:
        pair = _pp_pair(len(pairs) + 1, MULTIROUND_VERB, entry, noun_attachment)
        pairs.append(pair)
        _base_weights(english, hindi, pair)
        en, hi = pair.src.forms(), pair.tgt.forms()
        english.edge(en[1], "with", 11.5)
        english.edge(en[3], "with", 10.0)
        if noun_attachment:
            hindi.edge(hi[4], "waali", 10.5)
            hindi.edge(hi[3], "waali", 10.0)
        else:
            hindi.edge(hi[4], "se")

    projection_e, projection_h = pp_projection_models()
    return FixtureSet(
        name="multiround",
        pairs=pairs,
        models_e=LanguageModels(english.model(), projection_e),
        models_h=LanguageModels(hindi.model(), projection_h),
        instances=[_pp_instance(pair) for pair in pairs],
        config={"convergence_mode": "both"},
    )


def random_tree(n: int, rng: random.Random) -> DependencyTree:
    order = list(range(1, n + 1))
    rng.shuffle(order)
    heads = [0] * n
    for position, dep in enumerate(order[1:], start=1):
        heads[dep - 1] = rng.choice(order[:position])
    return DependencyTree(tuple(heads))


IDENTITY_TAGS = ["NN", "VBD", "DT", "JJ", "IN", "PRP"]


def identity_fixture_set(count: int = 10, seed: int = 0) -> FixtureSet:
    """Pairs whose sides share structure and words, aligned token to token"""
    rng = random.Random(seed)
    english, hindi = LexicalWeights("en"), LexicalWeights("hi")
    pairs, instances = [], []
    for pair_id in range(1, count + 1):
        n = rng.randint(3, 7)
        tags = [rng.choice(IDENTITY_TAGS) for _ in range(n)]
        if "IN" not in tags:
            tags[rng.randrange(1, n)] = "IN"
        forms = [f"{tag.lower()}{pair_id}x{i}" for i, tag in enumerate(tags, start=1)]
        tree = random_tree(n, rng)
        pair = BitextPair(
            src=ParsedSentence.from_pairs("en", zip(forms, tags)),
            tgt=ParsedSentence.from_pairs("hi", zip(forms, tags)),
            alignment=Alignment.identity(n),
            src_tree=tree,
            tgt_tree=tree,
            pair_id=pair_id,
        )
        pairs.append(pair)
        for weights in (english, hindi):
            for head, dep in tree.edges():
                if head == ROOT:
                    weights.root_form(forms[dep - 1])
                else:
                    weights.edge(forms[head - 1], forms[dep - 1])
        instances += [
            PPInstance(pair_id, i, tree.head(i))
            for i, tag in enumerate(tags, start=1)
            if tag == "IN" and tree.head(i) != ROOT
        ]

    length = PathLengthModel(({"bias": 4.0}, {}, {}, {}, {}))
    return FixtureSet(
        name="identity",
        pairs=pairs,
        models_e=LanguageModels(english.model(), ProjectionModels(length)),
        models_h=LanguageModels(hindi.model(), ProjectionModels(length)),
        instances=instances,
    )


REDUCTION_VOCAB = {
    "en": [("the", "DT"), ("dog", "NN"), ("saw", "VBD"), ("in", "IN"), ("park", "NN"), ("big", "JJ"), ("she", "PRP")],
    "hi": [("kutte", "NN"), ("ne", "PSP"), ("dekha", "VM"), ("mein", "PSP"), ("baag", "NN"), ("bada", "JJ"), ("vah", "PRP")],
}


def _random_weights(lang: str, sentences: list[ParsedSentence], rng: random.Random) -> EdgeFactoredModel:
    names = set()
    for sentence in sentences:
        for features in edge_feature_table(sentence).values():
            names.update(features)
    return EdgeFactoredModel(lang, {name: round(rng.uniform(-2.0, 2.0), 3) for name in sorted(names)})


def reduction_fixture_set(count: int = 50, seed: int = 0) -> FixtureSet:
    """Random tagged pairs with random parser weights and zero projection models"""
    rng = random.Random(seed)
    pairs = []
    for pair_id in range(1, count + 1):
        sides = []
        for lang in ("en", "hi"):
            n = rng.randint(2, 8)
            sides.append(ParsedSentence.from_pairs(lang, [rng.choice(REDUCTION_VOCAB[lang]) for _ in range(n)]))
        src, tgt = sides
        links = {(i, rng.randint(1, tgt.n)) for i in range(1, src.n + 1) if rng.random() < 0.8}
        pairs.append(BitextPair(src, tgt, Alignment.of(links), pair_id=pair_id))

    return FixtureSet(
        name="reduction",
        pairs=pairs,
        models_e=LanguageModels(_random_weights("en", [p.src for p in pairs], rng)),
        models_h=LanguageModels(_random_weights("hi", [p.tgt for p in pairs], rng)),
    )


TREEBANK_NOUNS = ["dog", "cat", "man", "park", "house", "boy", "ball", "garden"]
TREEBANK_VERBS = ["saw", "liked", "chased", "found", "kicked"]
TREEBANK_ADJS = ["big", "small", "old", "red"]
TREEBANK_DETS = ["the", "a"]
TREEBANK_PREPS = ["in", "near", "with", "behind"]


def _noun_phrase(rng: random.Random, tokens: list, heads: list) -> int:
    """Appends [DT] [JJ] NN and returns the noun's index; modifiers attach to the noun"""
    modifiers = []
    if rng.random() < 0.6:
        modifiers.append(len(tokens) + 1)
        tokens.append((rng.choice(TREEBANK_DETS), "DT"))
        heads.append(None)
    if rng.random() < 0.4:
        modifiers.append(len(tokens) + 1)
        tokens.append((rng.choice(TREEBANK_ADJS), "JJ"))
        heads.append(None)
    tokens.append((rng.choice(TREEBANK_NOUNS), "NN"))
    heads.append(None)
    noun = len(tokens)
    for modifier in modifiers:
        heads[modifier - 1] = noun
    return noun


def synthetic_treebank(size: int = 200, seed: int = 0, lang: str = "en") -> list[tuple[ParsedSentence, DependencyTree]]:
    """
    Sentences [DT] [JJ] NN VBD [DT] [JJ] NN [IN [DT] NN] whose heads follow
    POS rules: modifiers to their noun, nouns and IN to the verb, the
    prepositional object to IN, the verb to the root
    """
    rng = random.Random(seed)
    treebank = []
    for _ in range(size):
        tokens: list[tuple[str, str]] = []
        heads: list[Optional[int]] = []
        subject = _noun_phrase(rng, tokens, heads)
        tokens.append((rng.choice(TREEBANK_VERBS), "VBD"))
        heads.append(ROOT)
        verb = len(tokens)
        heads[subject - 1] = verb
        obj = _noun_phrase(rng, tokens, heads)
        heads[obj - 1] = verb
        if rng.random() < 0.5:
            tokens.append((rng.choice(TREEBANK_PREPS), "IN"))
            heads.append(verb)
            prep = len(tokens)
            if rng.random() < 0.5:
                tokens.append((rng.choice(TREEBANK_DETS), "DT"))
                heads.append(len(tokens) + 1)
            tokens.append((rng.choice(TREEBANK_NOUNS), "NN"))
            heads.append(prep)
        treebank.append((ParsedSentence.from_pairs(lang, tokens), DependencyTree(tuple(heads))))
    return treebank


def write_fixture_set(fixture: FixtureSet, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []

    def put(name, text):
        path = directory / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    put("src.conll", write_conll((p.src, p.src_tree) for p in fixture.pairs))
    put("tgt.conll", write_conll((p.tgt, p.tgt_tree) for p in fixture.pairs))
    put("align.txt", write_alignments(p.alignment for p in fixture.pairs))
    config = {
        "src_conll": "src.conll",
        "tgt_conll": "tgt.conll",
        "alignments": "align.txt",
        "model_dir": "models",
        "src_lang": fixture.src_lang,
        "tgt_lang": fixture.tgt_lang,
    }
    if fixture.instances:
        put("gold.tsv", write_pp_gold(fixture.instances))
        config["gold"] = "gold.tsv"
    config.update(fixture.config)
    put("run.conf", "".join(f"{key} = {value}\n" for key, value in config.items()))

    store = ModelStore(directory / "models")
    written += store.save_language(fixture.src_lang, fixture.tgt_lang, fixture.models_e)
    written += store.save_language(fixture.tgt_lang, fixture.src_lang, fixture.models_h)
    logging.info("fixture %s: %s pairs written to %s", fixture.name, len(fixture.pairs), directory)
    return written


def write_treebank_fixture(directory, size: int = 200, seed: int = 0, lang: str = "en") -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{lang}.conll"
    path.write_text(write_conll(synthetic_treebank(size, seed, lang)), encoding="utf-8")
    conf = directory / "run.conf"
    conf.write_text(f"treebank = {path.name}\nsrc_lang = {lang}\nmodel_dir = models\nepochs = 50\n", encoding="utf-8")
    return [path, conf]


def all_fixture_sets(seed: int = 0) -> list[FixtureSet]:
    return [
        pp_fixture_set(),
        multiround_fixture_set(),
        identity_fixture_set(10, seed),
        reduction_fixture_set(50, seed),
    ]
