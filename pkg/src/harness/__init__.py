# Scenario schema, runner, sweeps and artifact writers (harness-cli).
