import argparse


def comma_list(cast=str):
    """argparse type for comma separated values, e.g. --sigma 0,0.1,0.25."""

    def parse(value):
        items = [item.strip() for item in value.split(",") if item.strip()]
        if not items:
            raise argparse.ArgumentTypeError("expected a comma separated list")
        try:
            return [cast(item) for item in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse
