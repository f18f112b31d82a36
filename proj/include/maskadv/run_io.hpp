#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskadv/constraints.hpp"
#include "maskadv/pipeline.hpp"

namespace maskadv {

// 12 random hex digits.
std::string new_job_id();

// report.json as written to disk (two-space indent, trailing newline).
std::string report_json_text(const AttackResult& result);

// wall_ms, deepfool_ms, bb_ms.
nlohmann::json timing_json(const AttackResult& result);

/// Writes output_root/{UTC timestamp}-{job_id}/ with report.json,
/// timing.json, clean.png, mask.png and, on success, adversarial.png and
/// delta.png (|delta| heat map). Returns the run directory.
std::filesystem::path write_run(const std::filesystem::path& output_root, const std::string& job_id,
                                const AttackResult& result, const Tensor& x0, InputRange range);

// Region from PNG bytes: any non-zero sample marks the pixel.
RegionMask region_from_png(const std::vector<std::uint8_t>& bytes);

/// Region from a PNG or a tensor-JSON file of 0/1 values, shaped (H, W) or
/// (H, W, 1). Checked against the expected image size.
RegionMask load_region_mask(const std::filesystem::path& path, std::size_t height, std::size_t width);

}  // namespace maskadv
