# SPDX-FileCopyrightText: 2024 Benedict Harcourt <ben.harcourt@harcourtprogramming.co.uk>
#
# SPDX-License-Identifier: BSD-2-Clause

from __future__ import annotations as _future_annotations

from .fields import DEFAULT_ACTIVE, Component, Parameter, ResidualPair, StateField, parse_active
from .grid import (
    DEFAULT_A_MIN,
    Array,
    DiscreteOperators,
    SpaceTimeGrid,
    SymmetricTridiagonal,
    assemble_operators,
    build_grid,
    stiffness_coefficient_gradient,
    stiffness_operator,
)
from .products import (
    SpaceTag,
    apply_I_X,
    apply_riesz_DU,
    apply_riesz_DU_inv,
    apply_v_gram,
    dual_norm_v,
    inner,
    norm,
    parameter_gram,
    parameter_inner,
    v_representer,
    velocity,
    velocity_functional,
)

__all__ = (
    "DEFAULT_ACTIVE",
    "DEFAULT_A_MIN",
    "Array",
    "Component",
    "DiscreteOperators",
    "Parameter",
    "ResidualPair",
    "SpaceTag",
    "SpaceTimeGrid",
    "StateField",
    "SymmetricTridiagonal",
    "apply_I_X",
    "apply_riesz_DU",
    "apply_riesz_DU_inv",
    "apply_v_gram",
    "assemble_operators",
    "build_grid",
    "dual_norm_v",
    "inner",
    "norm",
    "parameter_gram",
    "parameter_inner",
    "parse_active",
    "stiffness_coefficient_gradient",
    "stiffness_operator",
    "v_representer",
    "velocity",
    "velocity_functional",
)
