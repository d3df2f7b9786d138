"""
Punto de entrada principal de la línea de comandos.
Crea la aplicación con create_app() y expone los comandos registrados por los
blueprints (phantom, train, segment, capacity, evaluate, midline, biomarker, gridsearch).

Uso: python main.py <comando> [opciones]
"""
import sys

import click
from flask.cli import FlaskGroup

from app import create_app
from app.errors import EXIT_USAGE

cli = FlaskGroup(create_app=create_app, add_default_commands=False, load_dotenv=False,
                 help="Segmentación de hemisferios cerebrales en volúmenes 3D.")


def main():
    try:
        return cli.main(standalone_mode=False)
    except click.ClickException as e:
        e.show()
        sys.exit(EXIT_USAGE if isinstance(e, click.UsageError) else e.exit_code)
    except click.Abort:
        click.echo("Abortado.", err=True)
        sys.exit(EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main() or 0)
