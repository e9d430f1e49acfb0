#!/usr/bin/env python3
"""
Validate every experiment config in a directory.
"""

import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

# Make the nlslab package importable when run from a checkout
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from nlslab.errors import ConfigValidationError, OutputError
from nlslab.validation import ConfigValidator, load_document


def validate_config_file(file_path: Path, command: Optional[str] = None) -> Tuple[bool, List[str]]:
    """Validate a single config file."""
    errors = []

    try:
        data = load_document(file_path)
    except ConfigValidationError as e:
        return False, list(e.errors)
    except OutputError as e:
        return False, [e.message]

    is_valid, error_msg, validation_errors = ConfigValidator.validate_experiment(data, command)
    if not is_valid:
        errors.append(f"Config validation failed: {error_msg}")
        if validation_errors:
            errors.extend(validation_errors)
        return False, errors

    name = data.get("name", "")
    if not name:
        errors.append("Missing name field")
        return False, errors

    return True, errors


def main():
    """Main validation function."""
    if len(sys.argv) not in (2, 3):
        print("Usage: python validate_configs.py <configs_directory> [command]")
        sys.exit(1)

    configs_dir = Path(sys.argv[1])
    command = sys.argv[2] if len(sys.argv) == 3 else None

    if not configs_dir.is_dir():
        print(f"Error: '{configs_dir}' is not a directory")
        sys.exit(1)

    config_files = sorted(configs_dir.glob("*.cfg"))
    if not config_files:
        print(f"No .cfg files found in '{configs_dir}'")
        sys.exit(0)

    print(f"Validating {len(config_files)} config files...")

    results = {}
    for config_file in config_files:
        is_valid, errors = validate_config_file(config_file, command)
        results[config_file.name] = (is_valid, errors)
        print(f"  {'ok  ' if is_valid else 'FAIL'} {config_file.name}")
        for error in errors:
            print(f"    - {error}")

    valid_count = sum(1 for is_valid, _ in results.values() if is_valid)
    print("\n" + "=" * 50)
    print(f"Total configs: {len(results)}")
    print(f"Valid: {valid_count}")
    print(f"Invalid: {len(results) - valid_count}")

    sys.exit(0 if valid_count == len(results) else 1)


if __name__ == "__main__":
    main()
