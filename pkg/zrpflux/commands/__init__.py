from .base import Command, CommonInput, ConfigInput
from .exact import GapCommand, KvCommand, LdpCommand, MomentsCommand, PsiCommand, TailCommand
from .exclusion import ExclusionCommand, MapCommand
from .hurst import HurstCommand
from .she import CompareCommand, SheCommand
from .simulate import SimulateCommand

COMMANDS = [
    SimulateCommand(),
    GapCommand(),
    PsiCommand(),
    LdpCommand(),
    TailCommand(),
    MomentsCommand(),
    KvCommand(),
    SheCommand(),
    CompareCommand(),
    HurstCommand(),
    MapCommand(),
    ExclusionCommand(),
]
