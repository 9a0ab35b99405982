from typing import Any


class ColorCodes:
    DEFAULT = "\x1b[0m"
    RED = "\x1b[31m"
    GREEN = "\x1b[32m"
    YELLOW = "\x1b[33m"
    DARK_GREY = "\x1b[90m"


def color(text: Any, color_code: str | None = ColorCodes.GREEN) -> str:
    """Wrap text in an ANSI color code

    :param text: The original text to color
    :param color_code: ANSI color code. No color is added when None
    """
    if not color_code:
        return str(text)
    return color_code + str(text) + ColorCodes.DEFAULT
