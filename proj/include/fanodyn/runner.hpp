// runner.hpp - executes a Scenario's tasks in dependency order, writes CSV
// outputs and a JSON run report.

#pragma once

#include <string>
#include <vector>

#include "fanodyn/scenario.hpp"

namespace fanodyn::cli {

struct TaskReport {
    std::string name;
    std::string status;  // ok | error | skipped
    double wall_ms = 0.0;
    std::vector<std::string> warnings;
    std::string error;
};

struct FileReport {
    std::string name;
    std::string fnv1a64;  // hex checksum of the file bytes
};

struct RunReport {
    std::string scenario_path;
    std::string output_directory;
    int threads = 1;
    std::vector<TaskReport> tasks;
    std::vector<FileReport> files;
    int exit_code = 0;  // 0 ok, 2 validation failure, 3 numerical failure

    std::string to_json() const;
};

struct RunOptions {
    std::string out_dir;  // overrides scenario/output and FANODYN_OUT
    int threads = 1;
    std::string scenario_path = "<inline>";
};

RunReport run(const Scenario& scenario, const RunOptions& opts = {});

} // namespace fanodyn::cli
