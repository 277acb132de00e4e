import argparse
import typing
from typing import Any, Dict, Literal, Optional, Type

from pydantic import BaseModel, Field, ValidationError

from zrpflux.common import configure_logging, logger
from zrpflux.common.exceptions import ConfigError

from .io import OutputBundle


class CommonInput(BaseModel):
    seed: Optional[int] = Field(None, description="Master seed (overrides the config file).")
    out: Optional[str] = Field(None, description="Output directory.")
    format: Optional[Literal["csv", "json"]] = Field(None, description="Table format (default csv).")
    verbose: bool = Field(False, description="Log run milestones.")
    debug: bool = Field(False, description="Log everything.")


class ConfigInput(CommonInput):
    config: str = Field(description="Experiment config file.", json_schema_extra={"positional": True})


def _unwrap(annotation):
    """Strip Optional[...] and report (inner type, is_list)."""
    args = [a for a in typing.get_args(annotation) if a is not type(None)]
    if typing.get_origin(annotation) is typing.Union and len(args) == 1:
        annotation = args[0]
    if typing.get_origin(annotation) in (list, typing.List):
        return typing.get_args(annotation)[0], True
    return annotation, False


class Command:
    """
    One CLI subcommand: a name, a help text and a pydantic input schema. The argparse
    options are derived from the schema; values are validated by the schema before `run`.
    """

    name: str = ""
    description: str = ""
    args_schema: Type[CommonInput] = CommonInput

    def add_to(self, subparsers):
        parser = subparsers.add_parser(self.name, help=self.description, description=self.description)
        for field_name, info in self.args_schema.model_fields.items():
            extra = info.json_schema_extra or {}
            inner, is_list = _unwrap(info.annotation)
            kwargs: Dict[str, Any] = {"help": info.description, "default": argparse.SUPPRESS}
            if extra.get("positional"):
                if info.is_required():
                    parser.add_argument(field_name, help=info.description)
                else:
                    parser.add_argument(field_name, nargs="?", **kwargs)
                continue
            flag = "--" + field_name.replace("_", "-")
            if inner is bool:
                kwargs["action"] = argparse.BooleanOptionalAction
            elif is_list:
                kwargs["nargs"] = "+"
            elif typing.get_origin(inner) is Literal:
                kwargs["choices"] = list(typing.get_args(inner))
            parser.add_argument(flag, dest=field_name, **kwargs)
        parser.set_defaults(command=self)
        return parser

    def parse(self, values: Dict[str, Any]) -> CommonInput:
        values = {k: v for k, v in values.items() if k in self.args_schema.model_fields}
        try:
            return self.args_schema.model_validate(values)
        except ValidationError as e:
            err = e.errors()[0]
            field = ".".join(str(p) for p in err["loc"]) or None
            raise ConfigError(f"{self.name}: {err['msg']}", field=field)

    def invoke(self, values: Dict[str, Any]) -> int:
        args = self.parse(values)
        configure_logging(verbose=args.verbose, debug=args.debug)
        logger.debug(f"{self.name}: {args.model_dump()}")
        return self.run(args) or 0

    def bundle(self, args: CommonInput, out: Optional[str] = None, format: Optional[str] = None) -> OutputBundle:
        return OutputBundle(args.out or out, args.format or format or "csv")

    def run(self, args) -> Optional[int]:
        raise NotImplementedError
