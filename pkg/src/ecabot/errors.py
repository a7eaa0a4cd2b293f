"""Exception types shared across the package."""

from __future__ import annotations


class EcabotError(Exception):
    """Base class for all package errors."""


class FixtureError(EcabotError):
    """A fixture, script, or rules document failed to parse or validate.

    The message carries a locus (field path, step index, or line) so the
    offending spot can be found without a debugger.
    """


class UnknownEntityError(EcabotError):
    def __init__(self, entity_id: str):
        super().__init__(f"unknown entity: {entity_id!r}")
        self.entity_id = entity_id


class UnknownAttributeError(EcabotError):
    def __init__(self, entity_id: str, attribute: str):
        super().__init__(f"entity {entity_id!r} has no attribute {attribute!r}")
        self.entity_id = entity_id
        self.attribute = attribute


class UnknownServiceError(EcabotError):
    def __init__(self, entity_id: str, service: str):
        super().__init__(f"entity {entity_id!r} has no service {service!r}")
        self.entity_id = entity_id
        self.service = service


class SchemaViolationError(EcabotError):
    """A value does not satisfy its attribute or parameter schema."""


class UnknownRuleError(EcabotError):
    def __init__(self, rule_id: str):
        super().__init__(f"unknown rule: {rule_id!r}")
        self.rule_id = rule_id


class DuplicateRuleIdError(EcabotError):
    def __init__(self, rule_id: str):
        super().__init__(f"rule id already in store: {rule_id!r}")
        self.rule_id = rule_id


class RuleValidationError(EcabotError):
    """A rule was rejected by validation; carries the individual findings."""

    def __init__(self, findings):
        super().__init__("; ".join(str(f) for f in findings))
        self.findings = list(findings)


class CascadeLimitError(EcabotError):
    """Event cascade exceeded the configured depth limit.

    Firing records accumulated before the halt are retained on the exception.
    """

    def __init__(self, limit: int, records):
        super().__init__(f"cascade depth limit {limit} exceeded")
        self.limit = limit
        self.records = list(records)


class ProviderError(EcabotError):
    """Base class for completion-provider failures."""


class ProviderTimeoutError(ProviderError):
    pass


class ProviderTransportError(ProviderError):
    pass


class ReplySchemaError(ProviderError):
    """The provider reply failed the requested response schema (after repair)."""


class ScriptNoMatchError(ProviderError):
    def __init__(self, message: str):
        super().__init__(f"no scripted step matches user message: {message!r}")
        self.user_message = message


class RoutingFailureError(EcabotError):
    """The router reply could not be mapped to a dialogue stage."""


class BudgetTooSmallError(EcabotError):
    pass


class EmptyDraftError(EcabotError):
    pass


class ExportNotReadyError(EcabotError):
    """Export was requested but the draft is incomplete or unconfirmed."""

    def __init__(self, reason: str, findings=None):
        super().__init__(reason)
        self.findings = list(findings or [])


class ConfigError(EcabotError):
    """Bad CLI/service configuration (exit code 2 territory)."""
