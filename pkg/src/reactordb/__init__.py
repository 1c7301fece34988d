"""reactordb: an in-memory database of transactional actors (reactors)."""

from .deployment import DeploymentPlan, build_strategy, parse_plan, serialize_plan
from .errors import (ConflictAbort, DangerousStructure, DuplicateKey, PlanError, ReactorDBError,
                     TransactionAborted, UserAbort)
from .runtime import (Database, Future, Outcome, ReactorType, SubTxn, instantiate_database)
from .storage import TableSchema

__version__ = "0.1.0"

__all__ = [
    "ConflictAbort", "DangerousStructure", "Database", "DeploymentPlan", "DuplicateKey", "Future",
    "Outcome", "PlanError", "ReactorDBError", "ReactorType", "SubTxn", "TableSchema",
    "TransactionAborted", "UserAbort", "build_strategy", "instantiate_database", "parse_plan",
    "serialize_plan",
]
