"""Minimal estimator base following the scikit-learn parameter protocol.

Estimators in this package expose ``get_params`` / ``set_params`` and the
fitted-attribute trailing-underscore convention so they compose with
scikit-learn pipelines and cloning without importing scikit-learn.
"""

from __future__ import annotations

import inspect

from .errors import NotFittedError

__all__ = ["ParamsMixin", "check_is_fitted"]


class ParamsMixin:
    """get_params/set_params over the keyword arguments of ``__init__``."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        skip = (inspect.Parameter.VAR_POSITIONAL, inspect.Parameter.VAR_KEYWORD)
        return sorted(
            p.name
            for p in sig.parameters.values()
            if p.name != "self" and p.kind not in skip
        )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters: {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_is_fitted(estimator, attribute: str) -> None:
    """Raise :class:`NotFittedError` unless ``estimator`` carries ``attribute``."""
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} instance is not fitted yet; call fit() first"
        )
