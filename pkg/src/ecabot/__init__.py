"""Conversational authoring of event-condition-action automations."""

__version__ = "0.1.0"
