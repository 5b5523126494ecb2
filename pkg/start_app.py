import subprocess
import sys
import os

from esdmix.config import API_HOST, API_PORT


def main():
    """Start the esdmix HTTP service"""
    print("Starting esdmix service...")

    # Change to the project directory
    project_dir = os.path.dirname(os.path.abspath(__file__))
    os.chdir(project_dir)

    try:
        subprocess.run([
            sys.executable, "-m", "uvicorn",
            "esdmix.app:app",
            "--host", API_HOST,
            "--port", str(API_PORT),
        ], env={**os.environ, "PYTHONPATH": project_dir}, check=True)
    except subprocess.CalledProcessError as e:
        print(f"Error starting the service: {e}")
        sys.exit(1)
    except KeyboardInterrupt:
        print("\nShutting down the service...")
        sys.exit(0)


if __name__ == "__main__":
    main()
