#pragma once

#include "tvec/config.hpp"

namespace tvec {

// Subcommand entry points shared by the CLI and the tests. Each throws on
// failure and echoes the effective configuration to <out>/config.echo.
void cmd_synth(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);

}  // namespace tvec
