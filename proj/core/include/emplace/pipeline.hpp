#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "emplace/config.hpp"

namespace emplace::pipeline {

struct CommandOptions {
  /// Test setups for eval-order; empty means SI-1..SI-4.
  std::vector<std::string> test_si;
  /// Use the configured detector threshold even when a calibrated one exists.
  bool threshold_override = false;
  /// Number of detection heatmaps to export as PNG.
  std::size_t heatmaps = 0;
};

const std::vector<std::string>& commands();

/// Model tag: SI name plus "_fixed" / "_nocf" for the ablation variants.
std::string artifact_tag(const config::PipelineConfig& cfg);

/// Runs one pipeline stage. Progress goes to `log`; failures surface as
/// emplace::Error subclasses.
void run_command(const std::string& command, const config::PipelineConfig& cfg, const CommandOptions& opts,
                 std::ostream& log);

}  // namespace emplace::pipeline
