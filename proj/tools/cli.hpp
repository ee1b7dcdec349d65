#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "l3s/guidance.hpp"
#include "l3s/sketch.hpp"

namespace l3s::cli {

/// Runs the command line `args` (without the program name). Metrics and
/// output paths go to `out`, diagnostics to `err`. Returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Resolved hyperparameters as written into run records.
nlohmann::json config_snapshot(const GuidanceConfig& guidance, const SketchConfig& sketch);

}  // namespace l3s::cli
