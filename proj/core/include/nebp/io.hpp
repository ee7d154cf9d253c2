#pragma once

#include "nebp/bp_tracker.hpp"
#include "nebp/mlp.hpp"
#include "nebp/model.hpp"
#include "nebp/nebp.hpp"
#include "nebp/simulator.hpp"
#include "nebp/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace nebp {

/// Flat JSON object; missing fields keep their defaults. Infinite values are written as "inf".
nlohmann::json to_json(const ModelParams& p);
ModelParams model_params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioConfig& c);
ScenarioConfig scenario_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ScenarioFamily& f);
ScenarioFamily scenario_family_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

/// frame,id,px,py,vx,vy,score,shape_0..shape_{D-1}; id is the source object or -1 for clutter.
std::string measurements_csv(const std::vector<MeasurementFrame>& frames);

/// frame,track_id,px,py,vx,vy,existence,score
std::string estimates_csv(const std::vector<std::vector<Estimate>>& frames);
/// Parses estimates_csv output; `n_frames` fixes the sequence length (frames without rows are empty).
std::vector<std::vector<Estimate>> estimates_from_csv(const std::string& text, std::size_t n_frames);

/// Networks plus Adam state. Doubles are written with round-trip precision, so loading is bit exact.
nlohmann::json checkpoint_json(const NebpNetworks& nets, const Adam* adam = nullptr);
NebpNetworks networks_from_checkpoint(const nlohmann::json& j);
/// Restores the Adam configuration and step counter (moments live in the networks).
Adam adam_from_checkpoint(const nlohmann::json& j, const AdamConfig& fallback = {});

/// {"classes": {label: {"temperature": T, "delta": d}}}
nlohmann::json calibration_json(const Calibration& cal, const std::string& label = "default");
Calibration calibration_from_json(const nlohmann::json& j, const std::string& label = "default");

nlohmann::json to_json(const PotentialObject& po);
/// Snapshot of a tracker (objects, id counter, frame). The RNG state is stored as text.
nlohmann::json tracker_snapshot(const TrackerState& s);

nlohmann::json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a hash in hex.
std::string fnv1a_hex(const std::string& text);

}  // namespace nebp
