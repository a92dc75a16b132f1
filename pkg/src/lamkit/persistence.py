"""JSON persistence for trained models.

Every file carries ``schema_version`` and a ``kind`` discriminator so the
loader can rebuild the right wrapper. Floats round-trip exactly through
``json`` (shortest-repr formatting).
"""

from __future__ import annotations

import json

from .binning import BinningTransform
from .ensemble import Arm1Model, MixtureModel, RawLinearModel, TwoLayerModel
from .errors import DataValidationError
from .glm import AdditiveModel

SCHEMA_VERSION = 1

Model = Arm1Model | RawLinearModel | TwoLayerModel | MixtureModel


def model_to_dict(model: Model, classifier: str | None = None) -> dict:
    out: dict = {"schema_version": SCHEMA_VERSION}
    if classifier:
        out["classifier"] = classifier
    if isinstance(model, Arm1Model):
        out.update(
            kind="arm1",
            feature_names=list(model.feature_names),
            transform=model.transform.to_dict(),
            model=model.model.to_dict(),
        )
    elif isinstance(model, RawLinearModel):
        out.update(
            kind="nnlr",
            feature_names=list(model.feature_names),
            model=model.model.to_dict(),
        )
    elif isinstance(model, TwoLayerModel):
        out.update(
            kind="arm2",
            feature_names=list(model.feature_names),
            subscale_names=list(model.subscale_names),
            submodels={
                name: model_to_dict(sub) for name, sub in model.submodels.items()
            },
            outer=model.outer.to_dict(),
        )
    elif isinstance(model, MixtureModel):
        out.update(
            kind="mixture",
            feature_names=list(model.feature_names),
            weights={k: float(v) for k, v in model.weights.items()},
            seed=model.seed,
            submodels={
                name: model_to_dict(sub) for name, sub in model.submodels.items()
            },
        )
    else:
        raise DataValidationError(f"cannot serialise model of type {type(model).__name__}")
    return out


def model_from_dict(raw: dict) -> Model:
    kind = raw.get("kind")
    if kind == "arm1":
        return Arm1Model(
            feature_names=tuple(raw["feature_names"]),
            transform=BinningTransform.from_dict(raw["transform"]),
            model=AdditiveModel.from_dict(raw["model"]),
        )
    if kind == "nnlr":
        return RawLinearModel(
            feature_names=tuple(raw["feature_names"]),
            model=AdditiveModel.from_dict(raw["model"]),
        )
    if kind == "arm2":
        return TwoLayerModel(
            feature_names=tuple(raw["feature_names"]),
            subscale_names=tuple(raw["subscale_names"]),
            submodels={k: model_from_dict(v) for k, v in raw["submodels"].items()},
            outer=AdditiveModel.from_dict(raw["outer"]),
        )
    if kind == "mixture":
        return MixtureModel(
            feature_names=tuple(raw["feature_names"]),
            weights={k: float(v) for k, v in raw["weights"].items()},
            submodels={k: model_from_dict(v) for k, v in raw["submodels"].items()},
            seed=int(raw["seed"]),
        )
    raise DataValidationError(f"unknown model kind {kind!r}")


def save_model(model: Model, path: str, classifier: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, classifier), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"model file {path}: invalid JSON ({exc})") from None
    return model_from_dict(raw)
