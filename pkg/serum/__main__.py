# Core libraries
import logging
import sys

# Custom libraries
from serum.ConfigParser import buildModelConfig, generateRunName, parseArgs
from serum.Errors import SerumError
from serum.experiment.Experiment import COMMANDS

logger = logging.getLogger("serum")


def setLogLevel(level: str) -> None:
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s", level=level.upper())


def main(argv=None):
    '''
    Entry into the program. Build the configuration and run the requested command.
    '''

    # Grab command-line arguments and the config file they point to
    args = parseArgs(argv)

    # Set the logging level
    setLogLevel(args.log_level)

    try:
        config = buildModelConfig(args)
        logger.info(f"Run name = {generateRunName(args)}")

        return COMMANDS[args.command](args, config)

    except SerumError as error:
        sys.exit(f"Error: {error}")


if __name__ == "__main__":
    main()
