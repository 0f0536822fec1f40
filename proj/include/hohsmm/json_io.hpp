#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "hohsmm/data_features.hpp"
#include "hohsmm/decoder.hpp"
#include "hohsmm/model.hpp"
#include "hohsmm/rul.hpp"
#include "hohsmm/sampler.hpp"

namespace hohsmm {

// States, segment boundaries, and latent classes are 1-based in every file
// this module reads or writes; in-memory indices are 0-based.

nlohmann::json model_to_json(const HohsmmModel& model);
HohsmmModel model_from_json(const nlohmann::json& j);

void save_model(const HohsmmModel& model, const std::string& path);
HohsmmModel load_model(const std::string& path);

nlohmann::json draw_to_json(const Draw& draw);
Draw draw_from_json(const nlohmann::json& j);

/// Newline-delimited JSON, one stored draw per line.
void save_trace(const PosteriorDraws& draws, const std::string& path);
/// Rebuilds the draw list (only what decoding needs; chain diagnostics live
/// in the report).
PosteriorDraws load_trace(const std::string& path);

nlohmann::json decode_result_to_json(const DecodeResult& result);
nlohmann::json rul_estimate_to_json(const RulEstimate& estimate);
nlohmann::json ground_truth_to_json(const SyntheticConfig& config,
                                    const SyntheticGroundTruth& truth);

nlohmann::json pca_rule_to_json(const PcaRule& rule);
PcaRule pca_rule_from_json(const nlohmann::json& j);

nlohmann::json fit_report_to_json(const PosteriorDraws& draws,
                                  const HohsmmModel& model);

/// Writes via a temp file in the same directory plus an atomic rename.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);
nlohmann::json load_json_file(const std::string& path);
void save_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace hohsmm
