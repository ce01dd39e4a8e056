import logging
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Iterable, Sequence

from biparse.agreement import AgreementConfig, AgreementResult, LanguageModels, run_corpus
from biparse.corpus import BitextPair, DependencyTree, ParsedSentence

DEFAULT_PREP_TAG = "IN"
DEFAULT_SWEEP = (10, 20, 30, 40, 50, 60)


class EvaluationError(ValueError):
    def __init__(self, details):
        super().__init__(f"Evaluation failed: {details}")


@dataclass(frozen=True)
class PPInstance:
    sentence_id: int
    prep_index: int
    gold_head: int

    def __post_init__(self):
        for name in ("sentence_id", "prep_index", "gold_head"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ValueError(f"Expected {name} {value!r} to be a 1-based index")


@dataclass(frozen=True)
class Verdict:
    instance: PPInstance
    predicted_head: int

    @property
    def correct(self) -> bool:
        return self.predicted_head == self.instance.gold_head


def percent(correct: int, total: int) -> Fraction:
    return Fraction(100 * correct, total) if total else Fraction(0)


def render_percent(value: Fraction) -> str:
    exact = Decimal(value.numerator) / Decimal(value.denominator)
    return str(exact.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class AttachmentScore:
    verdicts: tuple[Verdict, ...]

    @property
    def total(self) -> int:
        return len(self.verdicts)

    @property
    def correct(self) -> int:
        return sum(v.correct for v in self.verdicts)

    @property
    def accuracy(self) -> Fraction:
        return percent(self.correct, self.total)


@dataclass(frozen=True)
class EvalReport:
    baseline: AttachmentScore
    dd: AttachmentScore

    def __post_init__(self):
        if [v.instance for v in self.baseline.verdicts] != [v.instance for v in self.dd.verdicts]:
            raise EvaluationError("baseline and agreement scores cover different instances")

    @property
    def total(self) -> int:
        return self.baseline.total

    @property
    def correct_baseline(self) -> int:
        return self.baseline.correct

    @property
    def correct_dd(self) -> int:
        return self.dd.correct

    @property
    def accuracy_baseline(self) -> Fraction:
        return self.baseline.accuracy

    @property
    def accuracy_dd(self) -> Fraction:
        return self.dd.accuracy


def find_pp_candidates(sentence: ParsedSentence, prep_tag: str = DEFAULT_PREP_TAG) -> list[int]:
    return [token.index for token in sentence.tokens if token.pos == prep_tag]


def read_pp_gold(text: str) -> list[PPInstance]:
    instances = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 3:
            raise EvaluationError(f"gold line {line_no}: expected 3 tab-separated columns")
        try:
            instances.append(PPInstance(*(int(c) for c in columns)))
        except ValueError as err:
            raise EvaluationError(f"gold line {line_no}: {err}")
    return instances


def write_pp_gold(instances: Iterable[PPInstance]) -> str:
    lines = ["# sentence_id\tprep_index\tgold_head"]
    lines += [f"{i.sentence_id}\t{i.prep_index}\t{i.gold_head}" for i in instances]
    return "".join(line + "\n" for line in lines)


def validate_instances(
    instances: Iterable[PPInstance], sentences: Sequence[ParsedSentence], prep_tag: str = DEFAULT_PREP_TAG
):
    for instance in instances:
        if not 1 <= instance.sentence_id <= len(sentences):
            raise EvaluationError(f"no sentence with id {instance.sentence_id}")
        sentence = sentences[instance.sentence_id - 1]
        if instance.prep_index > sentence.n or instance.gold_head > sentence.n:
            raise EvaluationError(f"{instance} out of range for a sentence of length {sentence.n}")
        pos = sentence.token(instance.prep_index).pos
        if pos != prep_tag:
            raise EvaluationError(
                f"sentence {instance.sentence_id} token {instance.prep_index} is tagged {pos!r}, not {prep_tag!r}"
            )


def attachment_accuracy(predictions: Sequence[DependencyTree], instances: Sequence[PPInstance]) -> AttachmentScore:
    """Predictions are indexed by sentence id - 1"""
    if not instances:
        raise EvaluationError("no instances")
    verdicts = []
    for instance in instances:
        if not 1 <= instance.sentence_id <= len(predictions):
            raise EvaluationError(f"no prediction for sentence {instance.sentence_id}")
        tree = predictions[instance.sentence_id - 1]
        if instance.prep_index > len(tree):
            raise EvaluationError(
                f"preposition {instance.prep_index} outside sentence {instance.sentence_id} of length {len(tree)}"
            )
        verdicts.append(Verdict(instance, tree.head(instance.prep_index)))
    return AttachmentScore(tuple(verdicts))


def compare(
    baseline: Sequence[DependencyTree], dd: Sequence[DependencyTree], instances: Sequence[PPInstance]
) -> EvalReport:
    if len(baseline) != len(dd):
        raise EvaluationError(f"{len(baseline)} baseline trees against {len(dd)} agreement trees")
    return EvalReport(attachment_accuracy(baseline, instances), attachment_accuracy(dd, instances))


def render_table(report: EvalReport) -> str:
    rows = [
        ("", "Baseline", "Dual Decomposition"),
        ("Total PP instances", str(report.total), str(report.total)),
        ("Correct attachments", str(report.correct_baseline), str(report.correct_dd)),
        ("Accuracy (%)", render_percent(report.accuracy_baseline), render_percent(report.accuracy_dd)),
    ]
    widths = [max(len(row[c]) for row in rows) for c in range(3)]
    return "".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() + "\n" for row in rows
    )


def report_tsv(report: EvalReport) -> str:
    rows = [
        ("metric", "baseline", "dd"),
        ("total", report.total, report.total),
        ("correct", report.correct_baseline, report.correct_dd),
        ("accuracy", render_percent(report.accuracy_baseline), render_percent(report.accuracy_dd)),
    ]
    return "".join("\t".join(str(cell) for cell in row) + "\n" for row in rows)


def unlabeled_attachment_score(predictions: Sequence[DependencyTree], gold: Sequence[DependencyTree]) -> Fraction:
    if len(predictions) != len(gold):
        raise EvaluationError(f"{len(predictions)} predicted trees against {len(gold)} gold trees")
    correct = total = 0
    for predicted, expected in zip(predictions, gold):
        if len(predicted) != len(expected):
            raise EvaluationError("predicted and gold trees differ in length")
        correct += sum(p == g for p, g in zip(predicted.heads, expected.heads))
        total += len(expected)
    return percent(correct, total)


@dataclass(frozen=True)
class SweepRow:
    n: int
    correct: int
    total: int

    @property
    def accuracy(self) -> Fraction:
        return percent(self.correct, self.total)


@dataclass
class SweepResult:
    rows: list[SweepRow]
    results: list[AgreementResult] = field(default_factory=list)

    def tsv(self) -> str:
        lines = ["N\tcorrect\taccuracy"]
        lines += [f"{row.n}\t{row.correct}\t{render_percent(row.accuracy)}" for row in self.rows]
        return "".join(line + "\n" for line in lines)


def iteration_sweep(
    pairs: Sequence[BitextPair],
    models_e: LanguageModels,
    models_h: LanguageModels,
    instances: Sequence[PPInstance],
    n_values: Sequence[int],
    cfg: AgreementConfig,
    jobs: int = 1,
) -> SweepResult:
    """
    One row per N. A single run with the largest N is enough: a run
    with fewer outer rounds is a prefix of it
    """
    if not n_values:
        raise EvaluationError("no iteration counts to sweep")
    if min(n_values) < 1:
        raise EvaluationError(f"iteration counts must be >= 1, got {list(n_values)}")

    longest = replace(cfg, outer_iters=max(n_values))
    results = run_corpus(list(pairs), models_e, models_h, longest, jobs=jobs)
    rows = []
    for n in n_values:
        trees = [result.trees_after(n)[0] for result in results]
        score = attachment_accuracy(trees, instances)
        rows.append(SweepRow(n, score.correct, score.total))
        logging.info("sweep N=%s: %s/%s correct", n, score.correct, score.total)
    return SweepResult(rows, results)
