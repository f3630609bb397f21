#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "synthpii/cli.hpp"

namespace synthpii::cli {

/// What a stage wrote and the figures it contributes to summary.json.
struct StageResult {
    std::vector<std::string> outputs; ///< file names inside the output directory
    io::Json summary = io::Json::object();
    int exit_code = kExitOk;
};

StageResult stage_filter(const RunConfig &config);
StageResult stage_import_annotations(const RunConfig &config);
StageResult stage_iaa(const RunConfig &config);
/// `calibrate` runs the temperature sweep first and generates at the winner.
StageResult stage_generate(const RunConfig &config, bool calibrate);
StageResult stage_calibrate(const RunConfig &config);
StageResult stage_metrics(const RunConfig &config);
StageResult stage_unlink(const RunConfig &config);
StageResult stage_survey(const RunConfig &config);
StageResult stage_eval_classifier(const RunConfig &config);
StageResult stage_proportions(const RunConfig &config);
/// Every evaluation stage whose inputs are configured, failures isolated.
StageResult stage_report(const RunConfig &config);

/// Writes run_config.json for `command` into the output directory.
void write_snapshot(const RunConfig &config, const std::string &command);

} // namespace synthpii::cli
