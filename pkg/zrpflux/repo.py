from pathlib import Path
from typing import Optional

import git

import zrpflux
from zrpflux.common import logger


class GitRepo:
    """The git checkout the package runs from, used to stamp manifests and cache keys."""

    def __init__(self, repo_path):
        self.repo = git.Repo(repo_path, search_parent_directories=True, odbt=git.GitDB)
        self.root = Path(self.repo.working_dir).resolve()

    @classmethod
    def of_package(cls) -> Optional["GitRepo"]:
        try:
            return cls(Path(zrpflux.__file__).parent)
        except (git.InvalidGitRepositoryError, git.NoSuchPathError, git.GitCommandNotFound):
            return None

    def head_commit(self) -> Optional[str]:
        try:
            return self.repo.head.commit.hexsha
        except ValueError:
            # no commits yet
            return None

    def is_dirty(self) -> bool:
        return self.repo.is_dirty()


def code_version() -> str:
    """
    `<commit>` or `<commit>+dirty` for a git checkout, `unknown` otherwise
    (e.g. an installed wheel).
    """
    repo = GitRepo.of_package()
    if repo is None:
        return "unknown"
    commit = repo.head_commit()
    if commit is None:
        return "unknown"
    try:
        dirty = repo.is_dirty()
    except git.GitCommandError as e:
        logger.warning(f"Could not determine working tree state: {e}")
        dirty = False
    return commit + ("+dirty" if dirty else "")
