"""Job-array submission scripts for PBS Pro and SLURM.

Both schedulers run the same per-task command; only the directive block and
the variable holding the array index differ.
"""

from __future__ import annotations

import shlex

from ..errors import ConfigError
from ..scenario import batch_count, expand_matrix
from .config import CampaignConfig

SCHEDULERS = ("pbs", "slurm")
ARRAY_INDEX_VAR = {"pbs": "PBS_ARRAY_INDEX", "slurm": "SLURM_ARRAY_TASK_ID"}


def task_command(cfg: CampaignConfig, config_path: str, batch_ref: str = '"$BATCH"') -> str:
    sched = cfg.scheduler
    return (f"{sched.command} run --config {shlex.quote(str(config_path))} --mode {cfg.mode.value}"
            f" --workers {sched.cpus_per_task} --batch {batch_ref} --out {shlex.quote(cfg.output_dir)}")


def _slurm(cfg: CampaignConfig, n: int, config_path: str) -> list[str]:
    s = cfg.scheduler
    lines = [
        "#!/bin/bash",
        f"#SBATCH --job-name={s.job_name}",
        f"#SBATCH --array=1-{n}",
        "#SBATCH --nodes=1",
        "#SBATCH --ntasks=1",
        f"#SBATCH --cpus-per-task={s.cpus_per_task}",
        f"#SBATCH --mem={s.mem_gb}G",
        f"#SBATCH --time={s.walltime}",
        f"#SBATCH --output={s.job_name}_%A_%a.out",
    ]
    if s.partition:
        lines.append(f"#SBATCH --partition={s.partition}")
    if s.account:
        lines.append(f"#SBATCH --account={s.account}")
    lines += ["", "set -euo pipefail", 'cd "${SLURM_SUBMIT_DIR:-.}"', "BATCH=${SLURM_ARRAY_TASK_ID}"]
    return lines


def _pbs(cfg: CampaignConfig, n: int, config_path: str) -> list[str]:
    s = cfg.scheduler
    lines = [
        "#!/bin/bash",
        f"#PBS -N {s.job_name}",
        f"#PBS -l select=1:ncpus={s.cpus_per_task}:mem={s.mem_gb}gb",
        f"#PBS -l walltime={s.walltime}",
        "#PBS -j oe",
    ]
    if n > 1:
        lines.insert(2, f"#PBS -J 1-{n}")
    else:
        # PBS Pro rejects single-index arrays, so a one-batch campaign is a plain job running batch 1
        lines.insert(2, "# single batch: submitted as a plain job (array of size 1)")
    if s.queue:
        lines.append(f"#PBS -q {s.queue}")
    if s.account:
        lines.append(f"#PBS -A {s.account}")
    lines += ["", "set -euo pipefail", 'cd "${PBS_O_WORKDIR:-.}"', "BATCH=${PBS_ARRAY_INDEX:-1}"]
    return lines


def emit_job_script(cfg: CampaignConfig, scheduler: str, config_path: str | None = None) -> str:
    scheduler = scheduler.lower()
    if scheduler not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler {scheduler!r}; expected one of {SCHEDULERS}")
    n = max(1, batch_count(len(expand_matrix(cfg.matrix, tables=cfg.condition_tables)), cfg.matrix.batch_size))
    config_path = config_path or cfg.source or "campaign.yaml"
    header = _slurm(cfg, n, config_path) if scheduler == "slurm" else _pbs(cfg, n, config_path)
    return "\n".join(header + [task_command(cfg, config_path)]) + "\n"
