"""Batch expression evaluation kernels.

Scoring one candidate benchmark costs millions of objective evaluations
(2 algorithms x trials x population x generations), so expressions are
compiled once into a flat postfix program and evaluated over whole
batches of points.  Two interchangeable backends implement identical
semantics:

* a numba ``@njit`` stack machine looping over points (default), and
* a pure-numpy vectorized interpreter used as fallback.

Set ``EBG_NUMBA=0`` to force the numpy path; the numba path is also
skipped automatically when numba is not importable.  Causes mirror
:mod:`ebg.expressions`: the first failing operation in postorder wins.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .expressions import (
    CAUSE_DIV_ZERO,
    CAUSE_FRACTIONAL_POWER,
    CAUSE_INFINITE,
    CAUSE_NAN,
    CAUSE_SQRT_NEGATIVE,
    CAUSE_ZERO_NEGATIVE_POWER,
    INTEGER_POWER_TOLERANCE,
    Binary,
    Constant,
    Expression,
    Unary,
    Variable,
)

# opcode layout: leaf ops, then unaries, then binaries
OP_CONST = 0
OP_VAR = 1
OP_NEG = 2
OP_SQRT = 3
OP_SIN = 4
OP_COS = 5
OP_TAN = 6
OP_SINH = 7
OP_COSH = 8
OP_TANH = 9
OP_ABS = 10
OP_ADD = 11
OP_SUB = 12
OP_MUL = 13
OP_DIV = 14
OP_POW = 15

_UNARY_CODES = {
    "neg": OP_NEG,
    "sqrt": OP_SQRT,
    "sin": OP_SIN,
    "cos": OP_COS,
    "tan": OP_TAN,
    "sinh": OP_SINH,
    "cosh": OP_COSH,
    "tanh": OP_TANH,
    "abs": OP_ABS,
}
_BINARY_CODES = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV, "pow": OP_POW}

# integer cause codes shared by both backends
CAUSE_OK = 0
_CAUSE_STRINGS = {
    1: CAUSE_NAN,
    2: CAUSE_INFINITE,
    3: CAUSE_SQRT_NEGATIVE,
    4: CAUSE_DIV_ZERO,
    5: CAUSE_FRACTIONAL_POWER,
    6: CAUSE_ZERO_NEGATIVE_POWER,
}


def cause_string(code: int) -> str | None:
    """Map a kernel cause code to the textual cause (None when valid)."""
    return _CAUSE_STRINGS.get(int(code))


@dataclass(frozen=True)
class Program:
    """Flat postfix form of one expression."""

    codes: np.ndarray  # int64, one opcode per instruction
    operands: np.ndarray  # float64, constant value or variable index
    stack_need: int
    dimension: int


def compile_program(expr: Expression) -> Program:
    codes: list[int] = []
    operands: list[float] = []

    def emit(node) -> int:
        # returns the stack depth needed to evaluate this subtree
        if isinstance(node, Constant):
            codes.append(OP_CONST)
            operands.append(node.value)
            return 1
        if isinstance(node, Variable):
            codes.append(OP_VAR)
            operands.append(float(node.index))
            return 1
        if isinstance(node, Unary):
            need = emit(node.operand)
            codes.append(_UNARY_CODES[node.op])
            operands.append(0.0)
            return need
        need_left = emit(node.left)
        need_right = emit(node.right)
        codes.append(_BINARY_CODES[node.op])
        operands.append(0.0)
        return max(need_left, need_right + 1)

    need = emit(expr.root)
    return Program(
        codes=np.asarray(codes, dtype=np.int64),
        operands=np.asarray(operands, dtype=np.float64),
        stack_need=need,
        dimension=expr.dimension,
    )


# ------------------------------------------------------------- numba path


def _eval_program_scalar(codes, operands, X, stack_need):  # pragma: no cover - jit twin below
    n = X.shape[0]
    m = codes.shape[0]
    values = np.empty(n, dtype=np.float64)
    causes = np.zeros(n, dtype=np.int8)
    stack = np.empty(stack_need, dtype=np.float64)
    for p in range(n):
        sp = 0
        cause = 0
        for k in range(m):
            op = codes[k]
            if op == OP_CONST:
                stack[sp] = operands[k]
                sp += 1
                continue
            if op == OP_VAR:
                r = X[p, int(operands[k])]
            elif op <= OP_ABS:
                a = stack[sp - 1]
                sp -= 1
                if op == OP_NEG:
                    r = -a
                elif op == OP_SQRT:
                    if a < 0.0:
                        cause = 3
                        break
                    r = math.sqrt(a)
                elif op == OP_SIN:
                    r = math.sin(a)
                elif op == OP_COS:
                    r = math.cos(a)
                elif op == OP_TAN:
                    r = math.tan(a)
                elif op == OP_SINH:
                    r = math.sinh(a)
                elif op == OP_COSH:
                    r = math.cosh(a)
                elif op == OP_TANH:
                    r = math.tanh(a)
                else:
                    r = abs(a)
            else:
                b = stack[sp - 1]
                a = stack[sp - 2]
                sp -= 2
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    if b == 0.0:
                        cause = 4
                        break
                    r = a / b
                else:
                    if a < 0.0:
                        nb = np.rint(b)
                        if abs(b - nb) > INTEGER_POWER_TOLERANCE:
                            cause = 5
                            break
                        mag = (-a) ** nb
                        r = -mag if nb % 2.0 != 0.0 else mag
                    elif a == 0.0 and b < 0.0:
                        cause = 6
                        break
                    else:
                        r = a ** b
            if np.isnan(r):
                cause = 1
                break
            if np.isinf(r):
                cause = 2
                break
            stack[sp] = r
            sp += 1
        if cause == 0:
            values[p] = stack[0]
        else:
            values[p] = np.nan
        causes[p] = cause
    return values, causes


def _numba_enabled() -> bool:
    flag = os.environ.get("EBG_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


HAS_NUMBA = False
_eval_program_jit = None
if _numba_enabled():
    try:
        import numba

        _eval_program_jit = numba.njit(cache=True, nogil=True)(_eval_program_scalar)
        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False


# ------------------------------------------------------------- numpy path


def _set_cause(causes: np.ndarray, mask: np.ndarray, code: int) -> None:
    np.putmask(causes, mask & (causes == CAUSE_OK), code)


def _eval_program_vectorized(codes, operands, X):
    n = X.shape[0]
    causes = np.zeros(n, dtype=np.int8)
    stack: list[np.ndarray] = []
    with np.errstate(all="ignore"):
        for k in range(codes.shape[0]):
            op = int(codes[k])
            if op == OP_CONST:
                stack.append(np.full(n, operands[k]))
                continue
            if op == OP_VAR:
                r = X[:, int(operands[k])].astype(np.float64, copy=True)
            elif op <= OP_ABS:
                a = stack.pop()
                if op == OP_NEG:
                    r = -a
                elif op == OP_SQRT:
                    bad = a < 0.0
                    _set_cause(causes, bad, 3)
                    r = np.sqrt(np.where(bad, 0.0, a))
                elif op == OP_SIN:
                    r = np.sin(a)
                elif op == OP_COS:
                    r = np.cos(a)
                elif op == OP_TAN:
                    r = np.tan(a)
                elif op == OP_SINH:
                    r = np.sinh(a)
                elif op == OP_COSH:
                    r = np.cosh(a)
                elif op == OP_TANH:
                    r = np.tanh(a)
                else:
                    r = np.abs(a)
            else:
                b = stack.pop()
                a = stack.pop()
                if op == OP_ADD:
                    r = a + b
                elif op == OP_SUB:
                    r = a - b
                elif op == OP_MUL:
                    r = a * b
                elif op == OP_DIV:
                    bad = b == 0.0
                    _set_cause(causes, bad, 4)
                    r = a / np.where(bad, 1.0, b)
                else:
                    neg = a < 0.0
                    nearest = np.rint(b)
                    fractional = neg & (np.abs(b - nearest) > INTEGER_POWER_TOLERANCE)
                    _set_cause(causes, fractional, 5)
                    zero_neg = (a == 0.0) & (b < 0.0)
                    _set_cause(causes, zero_neg, 6)
                    base = np.where(neg, -a, np.where(zero_neg, 1.0, a))
                    expo = np.where(neg, nearest, b)
                    mag = np.power(base, expo)
                    odd = neg & (np.fmod(nearest, 2.0) != 0.0)
                    r = np.where(odd, -mag, mag)
            fresh = ~np.isfinite(r) & (causes == CAUSE_OK)
            _set_cause(causes, fresh & np.isnan(r), 1)
            _set_cause(causes, fresh & np.isinf(r), 2)
            stack.append(r)
    values = stack[0]
    values[causes != CAUSE_OK] = np.nan
    return values, causes


# ------------------------------------------------------------- dispatcher


def backend_name() -> str:
    return "numba" if HAS_NUMBA else "numpy"


def eval_program_numpy(program: Program, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _eval_program_vectorized(program.codes, program.operands, X)


def eval_program_numba(program: Program, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if not HAS_NUMBA:
        raise RuntimeError("numba backend is unavailable (EBG_NUMBA=0 or numba missing)")
    X = np.ascontiguousarray(X, dtype=np.float64)
    return _eval_program_jit(program.codes, program.operands, X, program.stack_need)


def eval_program(program: Program, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate at a batch of points; returns (values, cause codes).

    ``X`` has shape (n, dimension).  Invalid points carry NaN in
    ``values`` and a nonzero entry in ``causes``.
    """
    if X.ndim != 2 or X.shape[1] != program.dimension:
        raise ValueError(f"batch shape {X.shape} does not match dimension {program.dimension}")
    if HAS_NUMBA:
        return eval_program_numba(program, X)
    return eval_program_numpy(program, X)


def eval_expression(expr: Expression, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """One-shot convenience: compile and evaluate in a single call."""
    return eval_program(compile_program(expr), X)
