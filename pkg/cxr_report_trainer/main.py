# cxr_report_trainer/main.py
import sys

from cxr_report_trainer.core.launcher import main

if __name__ == "__main__":
    sys.exit(main())
