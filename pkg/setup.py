"""
Optimistic MBRL Toolkit - Setup Script
Bootstrap a workspace: settings file, numeric stack, run directories, validated configs
"""

import glob
import os
import shutil
import subprocess
import sys

CONFIG_DIR = "configs"
DEFAULTS_NAME = "defaults.json"


def write_settings():
    """Copy .env.example to .env once and echo the effective HUCRL_* settings"""
    if os.path.exists(".env"):
        print("   ℹ️ .env present, leaving it untouched")
    elif os.path.exists(".env.example"):
        shutil.copyfile(".env.example", ".env")
        print("   ✅ .env created from .env.example")
    else:
        print("   ⚠️ No .env.example to copy; built-in defaults apply")

    from config import Config
    for key, value in (("HUCRL_OUTPUT_DIR", Config.OUTPUT_DIR), ("HUCRL_LOG_LEVEL", Config.LOG_LEVEL),
                       ("HUCRL_WORKERS", Config.WORKERS), ("HUCRL_RFF_FEATURES", Config.RFF_FEATURES)):
        print(f"   {key} = {value}")
    return True


def ensure_numeric_stack():
    """Install requirements.txt only when the health check finds a missing library"""
    try:
        from monitoring import health_check
        missing = [name for name, check in health_check(".").get("checks", {}).items()
                   if name != "output_dir" and check["status"] != "healthy"]
    except ImportError as e:
        missing = [str(e)]

    if not missing:
        print("   ✅ numpy, scipy, scikit-learn and pandas importable")
        return True

    print(f"   📦 Missing {', '.join(missing)}; installing requirements.txt")
    result = subprocess.run([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"])
    if result.returncode != 0:
        print(f"   ❌ pip exited with {result.returncode}")
        return False
    return True


def make_workspace(root="."):
    """Run output root, log directory and config directory"""
    from config import Config
    for name in (Config.OUTPUT_DIR, "logs", CONFIG_DIR):
        path = os.path.join(root, name)
        existed = os.path.isdir(path)
        os.makedirs(path, exist_ok=True)
        print(f"   {'ℹ️' if existed else '✅'} {path}/")
    return True


def validate_configs(config_dir=CONFIG_DIR):
    """Strictly load every shipped config; materialize defaults.json when absent"""
    from config import ConfigError, RunConfig, config_hash, load_config, save_config

    defaults = os.path.join(config_dir, DEFAULTS_NAME)
    if not os.path.exists(defaults):
        save_config(RunConfig(episodes=20), defaults)
        print(f"   ✅ Wrote {defaults}")

    failures = []
    for path in sorted(glob.glob(os.path.join(config_dir, "*.json"))):
        try:
            print(f"   ✅ {path} ({config_hash(load_config(path))[:12]})")
        except ConfigError as e:
            print(f"   ❌ {path}: {e}")
            failures.append(path)
    return not failures


def main():
    print("🚀 Optimistic MBRL Toolkit - Setup")
    print("=" * 50)

    results = []
    for title, step in (("Settings", write_settings), ("Numeric stack", ensure_numeric_stack),
                        ("Workspace", make_workspace), ("Run configs", validate_configs)):
        print(f"\n{title}")
        try:
            results.append(step())
        except Exception as e:
            print(f"   ❌ {title} failed: {e}")
            results.append(False)

    if all(results):
        print("\n🎉 Ready. Next:")
        print("   python test_system.py")
        print("   python cli.py run --config configs/minimal.json --seed 0")
        print("   python cli.py matrix --config configs/matrix.json --workers 4")
    else:
        print("\n⚠️ Setup finished with errors, see above.")
    return all(results)


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
