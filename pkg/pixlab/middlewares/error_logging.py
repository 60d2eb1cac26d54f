import logging

import click

logger = logging.getLogger(__name__)


class ErrorLoggingGroup(click.Group):
    """
    Click group that turns unexpected exceptions into a logged failure.

    Usage errors keep click's exit code 2; anything else is written to the
    log with its traceback, reported on stderr and exits with code 1.
    """

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except Exception as e:
            command = ctx.invoked_subcommand or "?"
            logger.exception(f"Command '{command}' failed")
            click.echo(f"error: {e}", err=True)
            ctx.exit(1)
