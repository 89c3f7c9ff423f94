import os
import sys
from typing import Tuple


ANSI_RESET = "\033[0m"
ANSI_BOLD = "\033[1m"
ANSI_DIM = "\033[2m"
ANSI_RED = "\033[31m"
ANSI_GREEN = "\033[32m"
ANSI_YELLOW = "\033[33m"
ANSI_CYAN = "\033[36m"


def supports_ansi() -> bool:
    if not sys.stdout.isatty():
        return False
    if os.environ.get("NO_COLOR"):
        return False
    return True


def colorize(text: str, color: str) -> str:
    if supports_ansi():
        return f"{color}{text}{ANSI_RESET}"
    return text


def bold(text: str) -> str:
    if supports_ansi():
        return f"{ANSI_BOLD}{text}{ANSI_RESET}"
    return text


def dim(text: str) -> str:
    if supports_ansi():
        return f"{ANSI_DIM}{text}{ANSI_RESET}"
    return text


class IterationProgress:
    """
    Solver progress callback: rewrites one terminal line every ``every`` iterations.
    Without ANSI support only every ``every``-th line is printed.
    """

    def __init__(self, label: str, every: int = 10):
        self.label = label
        self.every = max(1, every)
        self.last_iteration = 0

    def format(self, iteration: int, objective: float, residuals: Tuple[float, ...]) -> str:
        detail = " ".join(f"{r:.2e}" for r in residuals)
        return f"{bold(self.label)} iter {iteration:>5}  objective {objective:.6e}  " + dim(f"residuals {detail}")

    def __call__(self, iteration: int, objective: float, residuals: Tuple[float, ...]) -> None:
        self.last_iteration = iteration
        if iteration % self.every == 0 or iteration == 1:
            self._rewrite(self.format(iteration, objective, residuals))

    def _rewrite(self, text: str) -> None:
        if supports_ansi():
            sys.stdout.write("\r\033[2K" + text)
            sys.stdout.flush()
        else:
            print(text)

    def finish(self, converged: bool) -> None:
        if supports_ansi():
            sys.stdout.write("\r\033[2K")
        status = colorize("converged", ANSI_GREEN) if converged else colorize("max_iter reached", ANSI_YELLOW)
        print(f"{bold(self.label)} {status} after {self.last_iteration} iterations")
