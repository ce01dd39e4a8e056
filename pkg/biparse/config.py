import abc
from pathlib import Path
from typing import Mapping, Optional

from dotenv import dotenv_values

from biparse.agreement import ALPHA_SCHEDULES, CONVERGENCE_MODES, DUAL_UPDATES, AgreementConfig

TRUE_VALUES = ("1", "true", "yes", "on")
FALSE_VALUES = ("0", "false", "no", "off")


class Field(abc.ABC):

    def __init__(self, required=False, nullable=True, default=None):
        self.required = required
        self.nullable = nullable
        self.default = default

    def __set_name__(self, owner, name):
        self.name = name
        self.private_name = "_" + name

    def __get__(self, obj, objtype=None):
        if obj is None:
            return self
        return getattr(obj, self.private_name, self.default)

    def __set__(self, obj, value):
        if isinstance(value, str):
            value = self.coerce(value.strip())
        self.validate(value)
        setattr(obj, self.private_name, value)

    def coerce(self, value: str):
        return value

    @abc.abstractmethod
    def validate(self, value):
        pass


class CharField(Field):
    def validate(self, value):
        if value is None and self.nullable:
            return
        if not isinstance(value, str):
            raise TypeError(f"Expected {value!r} to be an str")
        if not value:
            raise ValueError(f"{self.name} cannot be empty")


class PathField(Field):
    def __init__(self, required=False, nullable=True, must_exist=True):
        super().__init__(required, nullable)
        self.must_exist = must_exist

    def coerce(self, value):
        return Path(value) if value else None

    def validate(self, value):
        if value is None and self.nullable:
            return
        if not isinstance(value, Path):
            raise TypeError(f"Expected {value!r} to be a path")


class IntField(Field):
    def __init__(self, default=None, min_value=None, max_value=None):
        super().__init__(nullable=False, default=default)
        self.min_value = min_value
        self.max_value = max_value

    def coerce(self, value):
        try:
            return int(value)
        except ValueError:
            raise ValueError(f"Expected {self.name} {value!r} to be an integer")

    def validate(self, value):
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError(f"Expected {value!r} to be an integer")
        if self.min_value is not None and value < self.min_value:
            raise ValueError(f"Expected {self.name} {value} to be >= {self.min_value}")
        if self.max_value is not None and value > self.max_value:
            raise ValueError(f"Expected {self.name} {value} to be <= {self.max_value}")


class FloatField(Field):
    def __init__(self, default=None, greater_than=None):
        super().__init__(nullable=False, default=default)
        self.greater_than = greater_than

    def coerce(self, value):
        try:
            return float(value)
        except ValueError:
            raise ValueError(f"Expected {self.name} {value!r} to be a number")

    def __set__(self, obj, value):
        if isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        super().__set__(obj, value)

    def validate(self, value):
        if not isinstance(value, float):
            raise TypeError(f"Expected {value!r} to be a float")
        if self.greater_than is not None and not value > self.greater_than:
            raise ValueError(f"Expected {self.name} {value} to be > {self.greater_than}")


class ChoiceField(Field):
    def __init__(self, choices, default=None):
        super().__init__(nullable=False, default=default)
        self.choices = tuple(choices)

    def validate(self, value):
        if value not in self.choices:
            raise ValueError(f"Expected {self.name} to be one of {list(self.choices)}, got {value!r}")


class BoolField(Field):
    def __init__(self, default=None):
        super().__init__(nullable=False, default=default)

    def coerce(self, value):
        if value.lower() in TRUE_VALUES:
            return True
        if value.lower() in FALSE_VALUES:
            return False
        raise ValueError(f"Expected {self.name} {value!r} to be a boolean")

    def validate(self, value):
        if not isinstance(value, bool):
            raise TypeError(f"Expected {value!r} to be a bool")


class IntListField(Field):
    def __init__(self, default=None, min_value=None):
        super().__init__(nullable=False, default=default)
        self.min_value = min_value

    def coerce(self, value):
        try:
            return tuple(int(item) for item in value.split(",") if item.strip())
        except ValueError:
            raise ValueError(f"Expected {self.name} {value!r} to be a comma-separated list of integers")

    def __set__(self, obj, value):
        if isinstance(value, list):
            value = tuple(value)
        super().__set__(obj, value)

    def validate(self, value):
        if not isinstance(value, tuple):
            raise TypeError(f"Expected {value!r} to be a list or tuple")
        if not value:
            raise ValueError(f"Expected {self.name} to be not empty")
        for item in value:
            if isinstance(item, bool) or not isinstance(item, int):
                raise TypeError(f"Expected {self.name} item {item!r} to be an integer")
            if self.min_value is not None and item < self.min_value:
                raise ValueError(f"Expected {self.name} item {item} to be >= {self.min_value}")


class RunConfig:
    treebank = PathField()
    src_conll = PathField()
    tgt_conll = PathField()
    alignments = PathField()
    gold = PathField()
    model_dir = PathField(must_exist=False)
    out_dir = PathField(must_exist=False)
    src_lang = CharField(nullable=False, default="en")
    tgt_lang = CharField(nullable=False, default="hi")
    epochs = IntField(default=10, min_value=0, max_value=1000)
    seed = IntField(default=0, min_value=0)
    outer_iters = IntField(default=30, min_value=1, max_value=1000)
    inner_iters = IntField(default=100, min_value=1, max_value=10000)
    alpha0 = FloatField(default=0.1, greater_than=0.0)
    alpha_schedule = ChoiceField(ALPHA_SCHEDULES, default="constant")
    convergence_mode = ChoiceField(CONVERGENCE_MODES, default="either")
    dual_update = ChoiceField(DUAL_UPDATES, default="inclusion")
    abstain = BoolField(default=True)
    strict_root = BoolField(default=False)
    prep_tag = CharField(nullable=False, default="IN")
    iters = IntListField(default=(10, 20, 30, 40, 50, 60), min_value=1)
    jobs = IntField(default=1, min_value=1, max_value=256)

    @classmethod
    def fields(cls) -> dict[str, Field]:
        return {name: value for name, value in cls.__dict__.items() if isinstance(value, Field)}

    @classmethod
    def from_mapping(cls, data: Mapping[str, object]) -> "RunConfig":
        instance = cls()
        known = cls.fields()
        for key, value in data.items():
            if key not in known:
                raise ValueError(f"{cls.__name__}: unknown option {key!r}")
            if value is None:
                if not known[key].nullable:
                    raise ValueError(f"{cls.__name__} - got None for not nullable field {key}")
                continue
            setattr(instance, key, value)
        return instance

    def update(self, overrides: Mapping[str, object]) -> "RunConfig":
        known = self.fields()
        for key, value in overrides.items():
            if key not in known:
                raise ValueError(f"{type(self).__name__}: unknown option {key!r}")
            if value is not None:
                setattr(self, key, value)
        return self

    def validate(self, required=()):
        for name, field in self.fields().items():
            value = getattr(self, name)
            if value is None and (name in required or field.required):
                raise ValueError(f"{type(self).__name__}: {name} is required")
            if isinstance(field, PathField) and value is not None and field.must_exist and not value.exists():
                raise ValueError(f"{type(self).__name__}: {name} {str(value)!r} does not exist")

    def agreement(self) -> AgreementConfig:
        return AgreementConfig(
            outer_iters=self.outer_iters,
            inner_iters=self.inner_iters,
            alpha0=self.alpha0,
            alpha_schedule=self.alpha_schedule,
            convergence_mode=self.convergence_mode,
            dual_update=self.dual_update,
            abstain=self.abstain,
        )

    def as_dict(self) -> dict[str, object]:
        return {name: getattr(self, name) for name in self.fields()}


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, object]] = None) -> RunConfig:
    """Defaults, then the key = value file, then non-None overrides"""
    data: dict[str, object] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ValueError(f"Config file {str(path)!r} does not exist")
        data = {
            key: value
            for key, value in dotenv_values(path, interpolate=False, encoding="utf-8").items()
            if value is not None
        }
        # relative paths in the file are relative to the file itself
        path_fields = {name for name, f in RunConfig.fields().items() if isinstance(f, PathField)}
        for key in path_fields & data.keys():
            if data[key] and not Path(data[key]).is_absolute():
                data[key] = str(path.parent / data[key])
    config = RunConfig.from_mapping(data)
    return config.update(overrides or {})
