# Core libraries
import argparse
import json
import sys

# Custom libraries
from serum.ModelConfig import ModelConfig, loadPreset

# Constants
COMMANDS = ("gen", "pretrain", "finetune", "eval", "infer", "bench-alpha")
MODES = ("total", "prompt", "vqa", "seg")
DEFAULT_ALPHAS = (0.1, 0.5, 1.0)


def stringList(value) -> list:
    '''
    Comma-separated flag values, or a list given in the JSON config.
    '''

    if isinstance(value, (list, tuple)):
        return [str(item) for item in value]

    return [item.strip() for item in value.split(",") if item.strip()]


def floatList(value) -> list:
    try:
        return [float(item) for item in stringList(value)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Expected a comma-separated list of numbers, got '{value}'")


def parseArgs(argv=None) -> argparse.Namespace:
    '''
    Read in the CLI arguments for a serum command.
    A JSON configuration file with the same arguments can be provided as well, the function can read from both,
    with flags taking precedence over the file. A "model" block in the file overrides preset model fields.

    :param argv: Arguments to parse, defaults to sys.argv.
    :returns: The inputted arguments.
    '''

    # First parser: just for --config so it can be detected without the other arguments
    configFileParser = argparse.ArgumentParser(add_help=False)
    configFileParser.add_argument("-f", "--config",
                                  type=str,
                                  help="Path to a JSON config file.",
                                  default=None)

    prelimArgs, remainingArgv = configFileParser.parse_known_args(argv)

    # Second parser: the full command line
    argParser = argparse.ArgumentParser(prog="serum",
                                        description="Query-aware token selection for end-to-end document understanding")

    argParser.add_argument("command",
                           choices=COMMANDS,
                           help="What to run.")

    # Include --config here too so it shows up in --help
    argParser.add_argument("-f", "--config",
                           type=str,
                           help="Path to a JSON config file.",
                           default=None)

    argParser.add_argument("-p", "--preset",
                           type=str,
                           default="toy",
                           help="Named model preset to start from.")

    argParser.add_argument("-s", "--seed",
                           type=int,
                           default=0)

    argParser.add_argument("--data",
                           type=str,
                           help="Dataset directory or annotation file.")

    argParser.add_argument("-o", "--out",
                           type=str,
                           help="Output directory.")

    argParser.add_argument("--ckpt",
                           type=str,
                           help="Checkpoint to start from or evaluate.")

    argParser.add_argument("--mode",
                           choices=MODES,
                           default="prompt",
                           help="Generation manner, or seg to evaluate mask quality.")

    argParser.add_argument("--alpha",
                           type=float,
                           default=None,
                           help="Token keep ratio at inference, defaults to the manner's configured ratio.")

    argParser.add_argument("--alphas",
                           type=floatList,
                           default=list(DEFAULT_ALPHAS),
                           help="Comma-separated token keep ratios to benchmark.")

    argParser.add_argument("--keys",
                           type=stringList,
                           default=None,
                           help="Comma-separated keys to extract, defaults to the schema.")

    argParser.add_argument("--tasks",
                           type=stringList,
                           default=None,
                           help="Comma-separated pretraining subtasks to draw from.")

    argParser.add_argument("--steps",
                           type=int,
                           default=0)

    argParser.add_argument("--count",
                           type=int,
                           default=0,
                           help="Number of documents to generate.")

    argParser.add_argument("--samples",
                           type=int,
                           default=None,
                           help="Use only the first this many samples of the dataset.")

    argParser.add_argument("--images",
                           nargs="+",
                           default=[],
                           help="PNG files to run inference on.")

    argParser.add_argument("--batch-size",
                           type=int,
                           default=None)

    argParser.add_argument("--learning-rate",
                           type=float,
                           default=None)

    argParser.add_argument("--checkpoint-every",
                           type=int,
                           default=0,
                           help="Also write the checkpoint every this many steps.")

    argParser.add_argument("--blur-radius",
                           type=float,
                           default=0.0)

    argParser.add_argument("--salt-pepper",
                           type=float,
                           default=0.0)

    argParser.add_argument("--overlays",
                           action="store_true",
                           help="Write a mask overlay PNG per evaluated sample.")

    argParser.add_argument("--timestamps",
                           action="store_true",
                           help="Add wall-clock times to report rows.")

    argParser.add_argument("--device",
                           type=str,
                           default="cpu")

    argParser.add_argument("--log-level",
                           choices=("debug", "info", "warning", "error"),
                           default="info")

    argParser.set_defaults(model={})

    # If a JSON config was passed in via the preliminary parse, load it and set those values as defaults
    if prelimArgs.config:
        try:
            with open(prelimArgs.config, "r") as configFile:
                configData = json.load(configFile)

        except FileNotFoundError:
            sys.exit(f"Error: The file '{prelimArgs.config}' was not found.")

        except json.JSONDecodeError as error:
            sys.exit(f"Error: The file '{prelimArgs.config}' is not valid JSON: {error}")

        # Config files spell flags with underscores
        configData = {name.replace("-", "_"): value for name, value in configData.items()}
        for name in ("alphas", "keys", "tasks"):
            if isinstance(configData.get(name), str):
                configData[name] = stringList(configData[name])
        if "alphas" in configData:
            configData["alphas"] = [float(alpha) for alpha in configData["alphas"]]

        argParser.set_defaults(**configData)

    # Now parse again (fully), so that CLI overrides JSON if both are specified
    args = argParser.parse_args(remainingArgv)

    if args.config is None:
        args.config = prelimArgs.config

    return args


def buildModelConfig(args: argparse.Namespace) -> ModelConfig:
    '''
    Merge the preset, the config file's "model" block and the flags into one model configuration.

    :param args: Parsed arguments.
    :returns: The validated configuration.
    '''

    fields = dict(loadPreset(args.preset))
    fields.update(args.model or {})

    flagFields = {"batch_size": args.batch_size, "learning_rate": args.learning_rate,
                  "keys": args.keys, "pretrain_tasks": args.tasks}
    fields.update({name: value for name, value in flagFields.items() if value is not None})

    return ModelConfig.fromDict(fields)


def generateRunName(args: argparse.Namespace) -> str:
    '''
    Name a run so that repeated runs of the same configuration land in the same place.
    '''

    name = f"{args.command}_{args.preset}_s{args.seed}"

    if args.command in ("finetune", "eval", "bench-alpha"):
        name += f"_{args.mode}"

    if args.command == "eval" and args.alpha is not None:
        name += f"_a{args.alpha}"

    return name
