#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "progfuse/pipeline.hpp"

namespace progfuse::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,
    kBackendUnreachable = 3,
    kPipelineAbort = 4,
};

// Entry point behind the `progfuse` binary; argv[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

nlohmann::json config_to_json(const PipelineConfig& config);

}  // namespace progfuse::cli
