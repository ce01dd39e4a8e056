import functools
import logging
from pathlib import Path
from typing import Iterable, Mapping

from biparse.agreement import LanguageModels
from biparse.parser import EdgeFactoredModel
from biparse.projection import (
    PATH_LENGTHS,
    PREDICTED_LENGTHS,
    PathLengthModel,
    PathPredictorModel,
    ProjectionModels,
)

PARSER_MAGIC = "biparse-model"
PATHLEN_MAGIC = "biparse-pathlen"
PATHPRED_MAGIC = "biparse-pathpred"
FORMAT_VERSION = "v1"


class StoreError(Exception):
    def __init__(self, method_name, details):
        super().__init__(f"Error in {method_name}: {details}")


class ModelNotFoundError(StoreError):
    pass


def store_error_catcher(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except FileNotFoundError as error:
            raise ModelNotFoundError(func.__name__, str(error))
        except (OSError, ValueError) as error:
            raise StoreError(func.__name__, str(error))

    return wrapper


def _format_weight(value: float) -> str:
    return format(value, ".17g")


def _weight_lines(weights: Mapping[str, float], prefix: str = "") -> list[str]:
    return [
        f"{prefix}{name}\t{_format_weight(value)}"
        for name, value in sorted(weights.items())
        if value != 0.0
    ]


def _body(text: str, expected_header: str, source: str) -> Iterable[tuple[int, list[str]]]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != expected_header:
        found = lines[0] if lines else ""
        raise ValueError(f"{source} line 1: expected header {expected_header!r}, got {found!r}")
    for line_no, line in enumerate(lines[1:], start=2):
        if line.strip():
            yield line_no, line.split("\t")


def _parse_weight(value: str, source: str, line_no: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ValueError(f"{source} line {line_no}: weight {value!r} is not a number")


def dump_parser_model(model: EdgeFactoredModel) -> str:
    lines = [f"{PARSER_MAGIC} {FORMAT_VERSION} {model.lang} {model.templates}"]
    lines += _weight_lines(model.weights)
    return "".join(line + "\n" for line in lines)


def load_parser_model(text: str, source: str = "<string>") -> EdgeFactoredModel:
    first = text.split("\n", 1)[0].split()
    if len(first) != 4 or first[:2] != [PARSER_MAGIC, FORMAT_VERSION]:
        raise ValueError(f"{source} line 1: expected '{PARSER_MAGIC} {FORMAT_VERSION} <lang> <templates>'")
    lang, templates = first[2], first[3]
    weights = {}
    for line_no, columns in _body(text, " ".join(first), source):
        if len(columns) != 2:
            raise ValueError(f"{source} line {line_no}: expected feature<TAB>weight")
        weights[columns[0]] = _parse_weight(columns[1], source, line_no)
    return EdgeFactoredModel(lang, weights, templates)


def dump_path_length_model(model: PathLengthModel) -> str:
    lines = [f"{PATHLEN_MAGIC} {FORMAT_VERSION}"]
    for k, weights in zip(PATH_LENGTHS, model.weights):
        lines += _weight_lines(weights, prefix=f"{k}\t")
    return "".join(line + "\n" for line in lines)


def load_path_length_model(text: str, source: str = "<string>") -> PathLengthModel:
    weights: list[dict[str, float]] = [{} for _ in PATH_LENGTHS]
    for line_no, columns in _body(text, f"{PATHLEN_MAGIC} {FORMAT_VERSION}", source):
        if len(columns) != 3:
            raise ValueError(f"{source} line {line_no}: expected k<TAB>feature<TAB>weight")
        k, name, value = columns
        if k not in {str(length) for length in PATH_LENGTHS}:
            raise ValueError(f"{source} line {line_no}: path length {k!r} outside {PATH_LENGTHS}")
        weights[int(k) - 1][name] = _parse_weight(value, source, line_no)
    return PathLengthModel(tuple(weights))


def dump_path_predictor(weights: Mapping[str, float], k: int) -> str:
    lines = [f"{PATHPRED_MAGIC} {FORMAT_VERSION} k={k}"]
    lines += _weight_lines(weights)
    return "".join(line + "\n" for line in lines)


def load_path_predictor(text: str, k: int, source: str = "<string>") -> dict[str, float]:
    weights = {}
    for line_no, columns in _body(text, f"{PATHPRED_MAGIC} {FORMAT_VERSION} k={k}", source):
        if len(columns) != 2:
            raise ValueError(f"{source} line {line_no}: expected feature<TAB>weight")
        weights[columns[0]] = _parse_weight(columns[1], source, line_no)
    return weights


class ModelStore:
    """
    Model files under one directory:
    <lang>.parser, <src>-<tgt>.pathlen and <src>-<tgt>.pathpred<k>
    """

    def __init__(self, model_dir):
        self.model_dir = Path(model_dir)

    def parser_path(self, lang: str) -> Path:
        return self.model_dir / f"{lang}.parser"

    def pathlen_path(self, src: str, tgt: str) -> Path:
        return self.model_dir / f"{src}-{tgt}.pathlen"

    def pathpred_path(self, src: str, tgt: str, k: int) -> Path:
        return self.model_dir / f"{src}-{tgt}.pathpred{k}"

    def _write(self, path: Path, text: str):
        self.model_dir.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
        logging.info("wrote %s", path)

    @store_error_catcher
    def save_parser(self, model: EdgeFactoredModel) -> Path:
        path = self.parser_path(model.lang)
        self._write(path, dump_parser_model(model))
        return path

    @store_error_catcher
    def load_parser(self, lang: str) -> EdgeFactoredModel:
        path = self.parser_path(lang)
        model = load_parser_model(path.read_text(encoding="utf-8"), source=str(path))
        if model.lang != lang:
            raise ValueError(f"{path} holds a model for {model.lang!r}")
        return model

    @store_error_catcher
    def save_projection(self, src: str, tgt: str, models: ProjectionModels) -> list[Path]:
        paths = [self.pathlen_path(src, tgt)]
        self._write(paths[0], dump_path_length_model(models.length))
        for k in PREDICTED_LENGTHS:
            paths.append(self.pathpred_path(src, tgt, k))
            self._write(paths[-1], dump_path_predictor(models.predictor.weights[k], k))
        return paths

    @store_error_catcher
    def load_projection(self, src: str, tgt: str) -> ProjectionModels:
        path = self.pathlen_path(src, tgt)
        length = load_path_length_model(path.read_text(encoding="utf-8"), source=str(path))
        predictors = {}
        for k in PREDICTED_LENGTHS:
            path = self.pathpred_path(src, tgt, k)
            predictors[k] = load_path_predictor(path.read_text(encoding="utf-8"), k, source=str(path))
        return ProjectionModels(length, PathPredictorModel(predictors))

    def save_language(self, lang: str, other: str, models: LanguageModels) -> list[Path]:
        return [self.save_parser(models.parser)] + self.save_projection(lang, other, models.projection)

    def load_language(self, lang: str, other: str, with_projection: bool = True) -> LanguageModels:
        parser = self.load_parser(lang)
        if not with_projection:
            return LanguageModels(parser)
        return LanguageModels(parser, self.load_projection(lang, other))
