#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "maskadv/network.hpp"
#include "maskadv/tensor.hpp"

namespace maskadv {

// Model document:
//   { "input_shape": [...], "input_range": [lo, hi], "num_classes": K,
//     "layers": [ {"kind": "dense", "weight": <tensor>, "bias": <tensor>},
//                 {"kind": "conv2d", "kernel": <tensor>, "bias": <tensor>,
//                  "stride": [sh, sw], "padding": [ph, pw]},
//                 {"kind": "relu"}, {"kind": "sigmoid"}, {"kind": "flatten"},
//                 {"kind": "residual_add", "from": j} ] }
// with <tensor> = { "shape": [...], "data": [...] } in row-major order.

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j, const std::string& context = "tensor");

nlohmann::json model_to_json(const NetworkModel& model);
NetworkModel model_from_json(const nlohmann::json& j);

// Throws ParseError on unreadable/truncated JSON and LoadError on content problems.
NetworkModel load_model(const std::filesystem::path& path);
void save_model(const NetworkModel& model, const std::filesystem::path& path);

Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

// Parses text into JSON, mapping syntax errors to ParseError.
nlohmann::json parse_json_text(const std::string& text, const std::string& source);

}  // namespace maskadv
