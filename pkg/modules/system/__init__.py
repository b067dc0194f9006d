# System-level modules (model files, simulation, verification, telemetry, sysmon)
