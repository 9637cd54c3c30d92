"""
Console error reporting for the pyramid toolkit.

Subcommands and loaders route failures through ErrorHandler so a bad
checkpoint, a malformed image and a diverged run all print the same way.
"""

import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional

from .error_types import ERROR_CONFIG, CnpError, ConfigurationError, ContextTypes


class ErrorHandler:
    """Static helpers for reporting and raising toolkit errors."""

    @staticmethod
    def log_error(message: str, error: Optional[Exception] = None,
                  context: Optional[Dict[str, Any]] = None,
                  details: Optional[List[str]] = None) -> None:
        """
        Print an error with its context and up to max_context_lines details.

        Args:
            message: Primary error message
            error: Original exception, if any
            context: Key/value pairs printed under the message; None values are skipped
            details: Extra lines, e.g. the failing gradient checks
        """
        if not ERROR_CONFIG['logging']['enabled']:
            return

        emoji = ERROR_CONFIG['emojis']['error'] if ERROR_CONFIG['formatting']['use_emojis'] else ''
        print(f"{emoji} {message}")

        if error and str(error):
            print(f"   Original error: {error}")

        if context and ERROR_CONFIG['formatting']['include_context']:
            for key, value in context.items():
                if value is not None:
                    print(f"   {key}: {value}")

        if details:
            limit = ERROR_CONFIG['logging']['max_context_lines']
            for detail in details[:limit]:
                print(f"   • {detail}")
            if len(details) > limit:
                print(f"   ... and {len(details) - limit} more details")

        if error and ERROR_CONFIG['formatting']['include_stack_trace']:
            print("   Stack trace:")
            traceback.print_exc()

    @staticmethod
    def log_app_error(message: str, component: str, error: Optional[Exception] = None,
                      context: Optional[Dict[str, Any]] = None) -> None:
        """Report a subcommand failure; toolkit exceptions add their type and context."""
        app_context = {'component': component}
        if isinstance(error, CnpError):
            app_context['error_type'] = error.error_type
            app_context.update(error.context)
        if context:
            app_context.update(context)

        ErrorHandler.log_error(message, error, app_context)

    @staticmethod
    def log_warning(message: str) -> None:
        if not ERROR_CONFIG['logging']['enabled']:
            return
        emoji = ERROR_CONFIG['emojis']['warning'] if ERROR_CONFIG['formatting']['use_emojis'] else ''
        print(f"{emoji}  {message}")

    @staticmethod
    def raise_if_problems(problems: List[str], component: str) -> None:
        """
        Turn a list of validation problems into a ConfigurationError.

        Args:
            problems: Human-readable problem descriptions (empty means valid)
            component: Name of the configuration being validated
        """
        if problems:
            raise ConfigurationError(
                f"Invalid {component}: " + "; ".join(problems),
                {'context_type': ContextTypes.CONFIGURATION, 'component': component})

    @staticmethod
    def build_file_context(file_path: str, additional_info: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Context for errors about a file: path, existence and, when present, size and suffix."""
        path = Path(file_path) if file_path else None
        context = {
            'context_type': ContextTypes.FILE,
            'file_path': str(file_path),
            'file_exists': bool(path and path.exists()),
        }
        if path and path.is_file():
            context.update({'file_size': path.stat().st_size, 'file_extension': path.suffix})
        if additional_info:
            context.update(additional_info)
        return context
