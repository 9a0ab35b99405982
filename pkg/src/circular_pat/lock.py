from pathlib import Path

from filelock import FileLock, Timeout

from circular_pat.exceptions import CommandError
from circular_pat.logging import get_logger
from circular_pat.signals import register_exit_handler

logger = get_logger(__name__)


class OutputLock:
    """Serialize the writers of one output directory among processes

    Usage:
        with OutputLock(out_dir):
            write_volume(out_dir / "sinogram.rvl", ...)
    """

    LOCK_FILE = ".circular-pat.lock"

    def __init__(self, out_dir: str | Path, timeout: float = -1):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self._lock_file = self.out_dir / self.LOCK_FILE
        self._lock = FileLock(self._lock_file, timeout=timeout)
        register_exit_handler(self.cleanup)

    def __enter__(self):
        if not self._lock.is_locked:
            logger.debug(f"Acquiring lock: {self._lock_file}")
        try:
            self._lock.acquire()
        except Timeout as e:
            raise CommandError(f"Output directory {self.out_dir} is in use by another run") from e
        except FileNotFoundError:
            self._lock = FileLock(self._lock_file)
            self._lock.acquire()
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self._lock.release()
        if not self._lock.is_locked:
            logger.debug(f"Released lock: {self._lock_file}")
            self.cleanup()

    @property
    def is_locked(self) -> bool:
        return self._lock.is_locked

    def cleanup(self):
        """Remove the lock file unless this process still holds the lock"""
        if not self._lock.is_locked:
            self._lock_file.unlink(missing_ok=True)
