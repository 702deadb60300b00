#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace metaalign::cli {

int CmdGenSynth(const RunConfig& config, std::ostream& out);
int CmdTrain(const RunConfig& config, std::ostream& out);
int CmdEval(const RunConfig& config, std::ostream& out);
int CmdAblate(const RunConfig& config, std::ostream& out);
int CmdSweep(const RunConfig& config, std::ostream& out);

/// Full command-line entry point; args excludes the program name. Returns
/// the process exit code. Failures print one "error: <kind>: <reason>" line
/// to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace metaalign::cli
