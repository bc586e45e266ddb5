"""Campaign configuration, the local job-array runner, traces, streaming and scheduler scripts."""
