import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional

ROOT = 0
CONLL_COLUMNS = 10
UNDERSCORE = "_"


class ConllFormatError(ValueError):
    def __init__(self, line_no, details):
        super().__init__(f"line {line_no}: {details}")
        self.line_no = line_no


class AlignmentFormatError(ValueError):
    def __init__(self, line_no, details):
        super().__init__(f"alignment line {line_no}: {details}")
        self.line_no = line_no


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    pos: str
    # LEMMA, CPOSTAG, FEATS, DEPREL, PHEAD, PDEPREL as read from the file
    extra: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"Expected token index {self.index!r} to be >= 1")
        if not self.form:
            raise ValueError(f"Token {self.index}: form cannot be empty")
        if not self.pos:
            raise ValueError(f"Token {self.index}: pos cannot be empty")


@dataclass(frozen=True)
class ParsedSentence:
    lang: str
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError(f"Sentence ({self.lang}) must have at least one token")
        for expected, token in enumerate(self.tokens, start=1):
            if token.index != expected:
                raise ValueError(
                    f"Expected token indices 1..{len(self.tokens)}, got {token.index} at {expected}"
                )

    @classmethod
    def from_pairs(cls, lang: str, pairs: Iterable[tuple[str, str]]) -> "ParsedSentence":
        return cls(lang, tuple(Token(i, form, pos) for i, (form, pos) in enumerate(pairs, start=1)))

    def __len__(self):
        return len(self.tokens)

    @property
    def n(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        if not 1 <= index <= self.n:
            raise IndexError(f"Token index {index} out of range 1..{self.n}")
        return self.tokens[index - 1]

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]


def arborescence_violation(heads: tuple[int, ...]) -> Optional[str]:
    """
    Returns a description of the first arborescence violation
    or None when heads encode a tree rooted at 0
    """
    n = len(heads)
    for dep, head in enumerate(heads, start=1):
        if not 0 <= head <= n:
            return f"head {head} of token {dep} out of range 0..{n}"
        if head == dep:
            return f"token {dep} is its own head"

    reaches_root = [False] * (n + 1)
    reaches_root[ROOT] = True
    for start in range(1, n + 1):
        chain = []
        node = start
        while not reaches_root[node]:
            if node in chain:
                return f"cycle through token {node}"
            chain.append(node)
            node = heads[node - 1]
        for visited in chain:
            reaches_root[visited] = True
    return None


@dataclass(frozen=True)
class DependencyTree:
    heads: tuple[int, ...]

    def __post_init__(self):
        if not self.heads:
            raise ValueError("Tree must cover at least one token")
        violation = arborescence_violation(self.heads)
        if violation:
            raise ValueError(f"Not an arborescence: {violation}")

    @classmethod
    def of(cls, heads: Iterable[int]) -> "DependencyTree":
        return cls(tuple(int(h) for h in heads))

    def __len__(self):
        return len(self.heads)

    def head(self, dep: int) -> int:
        return self.heads[dep - 1]

    def edges(self) -> Iterator[tuple[int, int]]:
        for dep, head in enumerate(self.heads, start=1):
            yield head, dep

    def undirected_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset((min(h, d), max(h, d)) for h, d in self.edges())

    def root_children(self) -> list[int]:
        return [d for h, d in self.edges() if h == ROOT]

    def validate(self, strict_single_root=False):
        if strict_single_root and len(self.root_children()) != 1:
            raise ValueError(
                f"Expected a single root child, got {self.root_children()}"
            )


@dataclass(frozen=True)
class Alignment:
    links: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        for i, j in self.links:
            if i < 1 or j < 1:
                raise ValueError(f"Alignment link {(i, j)} must be 1-based")

    @classmethod
    def of(cls, links: Iterable[tuple[int, int]]) -> "Alignment":
        return cls(frozenset((int(i), int(j)) for i, j in links))

    @classmethod
    def identity(cls, n: int) -> "Alignment":
        return cls(frozenset((k, k) for k in range(1, n + 1)))

    def check_bounds(self, n_src: int, n_tgt: int):
        for i, j in sorted(self.links):
            if not (1 <= i <= n_src and 1 <= j <= n_tgt):
                raise ValueError(
                    f"Alignment link {(i, j)} outside [1..{n_src}]x[1..{n_tgt}]"
                )

    def targets_of(self, i: int) -> list[int]:
        return sorted(j for a, j in self.links if a == i)

    def sources_of(self, j: int) -> list[int]:
        return sorted(i for i, b in self.links if b == j)

    def reversed(self) -> "Alignment":
        return Alignment(frozenset((j, i) for i, j in self.links))


@dataclass(frozen=True)
class BitextPair:
    src: ParsedSentence
    tgt: ParsedSentence
    alignment: Alignment
    src_tree: Optional[DependencyTree] = None
    tgt_tree: Optional[DependencyTree] = None
    pair_id: int = 1

    def __post_init__(self):
        self.alignment.check_bounds(self.src.n, self.tgt.n)
        for sentence, tree in ((self.src, self.src_tree), (self.tgt, self.tgt_tree)):
            if tree is not None and len(tree) != sentence.n:
                raise ValueError(
                    f"Pair {self.pair_id}: tree of length {len(tree)} "
                    f"for {sentence.lang} sentence of length {sentence.n}"
                )

    def flipped(self) -> "BitextPair":
        return BitextPair(
            src=self.tgt,
            tgt=self.src,
            alignment=self.alignment.reversed(),
            src_tree=self.tgt_tree,
            tgt_tree=self.src_tree,
            pair_id=self.pair_id,
        )

    @property
    def has_trees(self) -> bool:
        return self.src_tree is not None and self.tgt_tree is not None


def _parse_block(block: list[tuple[int, str]], lang: str):
    tokens = []
    heads = []
    for expected, (line_no, line) in enumerate(block, start=1):
        columns = line.split("\t")
        if len(columns) != CONLL_COLUMNS:
            raise ConllFormatError(
                line_no, f"expected {CONLL_COLUMNS} tab-separated columns, got {len(columns)}"
            )
        if not re.fullmatch(r"\d+", columns[0]) or int(columns[0]) != expected:
            raise ConllFormatError(line_no, f"expected ID {expected}, got {columns[0]!r}")
        form, pos = columns[1], columns[4]
        if not form or not pos:
            raise ConllFormatError(line_no, "FORM and POSTAG cannot be empty")
        extra = (columns[2], columns[3], columns[5], columns[7], columns[8], columns[9])
        tokens.append(Token(expected, form, pos, extra))

        head = columns[6]
        if head == UNDERSCORE:
            heads.append(None)
        elif re.fullmatch(r"\d+", head):
            heads.append((line_no, int(head)))
        else:
            raise ConllFormatError(line_no, f"HEAD {head!r} is not an integer")

    n = len(tokens)
    sentence = ParsedSentence(lang, tuple(tokens))
    if any(h is None for h in heads):
        return sentence, None

    for dep, (line_no, head) in enumerate(heads, start=1):
        if head > n:
            raise ConllFormatError(line_no, f"HEAD {head} out of range 0..{n}")
        if head == dep:
            raise ConllFormatError(line_no, f"token {dep} is its own head")
    try:
        tree = DependencyTree(tuple(h for _, h in heads))
    except ValueError as err:
        raise ConllFormatError(block[0][0], str(err))
    return sentence, tree


def read_conll(text: str, lang: str = "und") -> list[tuple[ParsedSentence, Optional[DependencyTree]]]:
    sentences = []
    block: list[tuple[int, str]] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if line.strip() == "":
            if block:
                sentences.append(_parse_block(block, lang))
                block = []
            continue
        block.append((line_no, line))
    if block:
        sentences.append(_parse_block(block, lang))
    return sentences


def write_conll(
    sentences: Iterable[tuple[ParsedSentence, Optional[DependencyTree]]], keep_extra=False
) -> str:
    """A missing tree is written with "_" in every HEAD column"""
    blocks = []
    for sentence, tree in sentences:
        if tree is not None and len(tree) != sentence.n:
            raise ValueError(
                f"Tree of length {len(tree)} for sentence of length {sentence.n}"
            )
        heads = tree.heads if tree is not None else (UNDERSCORE,) * sentence.n
        lines = []
        for token, head in zip(sentence.tokens, heads):
            if keep_extra and len(token.extra) == 6:
                lemma, cpos, feats, deprel, phead, pdeprel = token.extra
            else:
                lemma = cpos = feats = deprel = phead = pdeprel = UNDERSCORE
            columns = [
                str(token.index), token.form, lemma, cpos, token.pos,
                feats, str(head), deprel, phead, pdeprel,
            ]
            lines.append("\t".join(columns))
        blocks.append("\n".join(lines) + "\n\n")
    return "".join(blocks)


def read_alignments(text: str) -> list[Alignment]:
    alignments = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        links = set()
        for item in line.split():
            match = re.fullmatch(r"(-?\d+)-(-?\d+)", item)
            if not match:
                raise AlignmentFormatError(line_no, f"malformed pair {item!r}")
            i, j = int(match.group(1)), int(match.group(2))
            if i < 0 or j < 0:
                raise AlignmentFormatError(line_no, f"negative index in {item!r}")
            links.add((i + 1, j + 1))
        alignments.append(Alignment(frozenset(links)))
    return alignments


def write_alignments(alignments: Iterable[Alignment]) -> str:
    lines = []
    for alignment in alignments:
        lines.append(" ".join(f"{i - 1}-{j - 1}" for i, j in sorted(alignment.links)))
    return "".join(line + "\n" for line in lines)


def read_bitext(src_text, tgt_text, align_text, src_lang="en", tgt_lang="hi") -> list[BitextPair]:
    src = read_conll(src_text, src_lang)
    tgt = read_conll(tgt_text, tgt_lang)
    alignments = read_alignments(align_text)
    if not (len(src) == len(tgt) == len(alignments)):
        raise ValueError(
            f"Parallel inputs disagree: {len(src)} {src_lang} sentences, "
            f"{len(tgt)} {tgt_lang} sentences, {len(alignments)} alignment lines"
        )
    pairs = []
    for pair_id, ((s, s_tree), (t, t_tree), alignment) in enumerate(
        zip(src, tgt, alignments), start=1
    ):
        try:
            pairs.append(BitextPair(s, t, alignment, s_tree, t_tree, pair_id))
        except ValueError as err:
            raise ValueError(f"Sentence pair {pair_id}: {err}")
    return pairs
