"""Expression alphabet, grammar, parsing and panel evaluation."""
from .evaluator import evaluate, evaluate_tokens
from .expression import Expression, parse
from .grammar import (
    DELTA,
    MAX_BODY_TOKENS,
    SCALAR,
    SERIES,
    StackType,
    apply_token,
    body_is_valid,
    completion_cost,
    is_alive,
    is_complete,
    iter_bodies,
    legal_mask,
    legal_next,
    random_body,
    stack_of,
)
from .tokens import (
    ARITY,
    BEG,
    CONSTANTS,
    DELTAS,
    END,
    FEATURES,
    Token,
    TokenKind,
    Vocabulary,
    token_by_name,
    token_vocabulary,
)

__all__ = [
    "evaluate",
    "evaluate_tokens",
    "Expression",
    "parse",
    "DELTA",
    "MAX_BODY_TOKENS",
    "SCALAR",
    "SERIES",
    "StackType",
    "apply_token",
    "body_is_valid",
    "completion_cost",
    "is_alive",
    "is_complete",
    "iter_bodies",
    "legal_mask",
    "legal_next",
    "random_body",
    "stack_of",
    "ARITY",
    "BEG",
    "CONSTANTS",
    "DELTAS",
    "END",
    "FEATURES",
    "Token",
    "TokenKind",
    "Vocabulary",
    "token_by_name",
    "token_vocabulary",
]
