#include "maskadv/model_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "maskadv/errors.hpp"

namespace maskadv {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

const json& field(const json& j, const char* name, const std::string& context) {
  if (!j.is_object() || !j.contains(name))
    throw LoadError(LoadError::Kind::missing_field, context + ": missing \"" + name + "\"");
  return j.at(name);
}

std::array<std::size_t, 2> pair_field(const json& j, const char* name, const std::string& context,
                                      std::size_t fallback) {
  if (!j.contains(name)) return {fallback, fallback};
  const json& v = j.at(name);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number_unsigned() || !v[1].is_number_unsigned())
    throw LoadError(LoadError::Kind::bad_value, context + ": \"" + name + "\" must be two non-negative integers");
  return {v[0].get<std::size_t>(), v[1].get<std::size_t>()};
}

}  // namespace

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", t.vec()}};
}

Tensor tensor_from_json(const json& j, const std::string& context) {
  const json& shape = field(j, "shape", context);
  const json& data = field(j, "data", context);
  if (!shape.is_array() || shape.empty())
    throw LoadError(LoadError::Kind::bad_value, context + ": shape must be a non-empty array");
  Shape s;
  for (const auto& d : shape) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0)
      throw LoadError(LoadError::Kind::bad_value, context + ": shape entries must be positive integers");
    s.push_back(d.get<std::size_t>());
  }
  if (!data.is_array()) throw LoadError(LoadError::Kind::bad_value, context + ": data must be an array");
  if (data.size() != shape_size(s))
    throw LoadError(LoadError::Kind::shape_mismatch,
                    context + ": shape " + shape_to_string(s) + " needs " +
                        std::to_string(shape_size(s)) + " values, found " + std::to_string(data.size()));
  std::vector<double> values;
  values.reserve(data.size());
  for (const auto& v : data) {
    if (!v.is_number() || !std::isfinite(v.get<double>()))
      throw LoadError(LoadError::Kind::bad_value, context + ": data must be finite numbers");
    values.push_back(v.get<double>());
  }
  return Tensor(std::move(s), std::move(values));
}

json model_to_json(const NetworkModel& model) {
  json layers = json::array();
  for (const Layer& layer : model.layers()) {
    json l{{"kind", layer_kind(layer)}};
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      l["weight"] = tensor_to_json(d->weight);
      l["bias"] = tensor_to_json(d->bias);
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      l["kernel"] = tensor_to_json(c->kernel);
      l["bias"] = tensor_to_json(c->bias);
      l["stride"] = c->stride;
      l["padding"] = c->padding;
    } else if (const auto* r = std::get_if<ResidualAddLayer>(&layer)) {
      l["from"] = r->from;
    }
    layers.push_back(std::move(l));
  }
  return json{{"input_shape", model.input_shape()},
              {"input_range", {model.input_range().lo, model.input_range().hi}},
              {"num_classes", model.num_classes()},
              {"layers", std::move(layers)}};
}

NetworkModel model_from_json(const json& j) {
  const std::string ctx = "model";
  const json& in_shape = field(j, "input_shape", ctx);
  const json& range = field(j, "input_range", ctx);
  const json& classes = field(j, "num_classes", ctx);
  const json& layers_json = field(j, "layers", ctx);

  Shape input_shape;
  if (!in_shape.is_array() || in_shape.empty())
    throw LoadError(LoadError::Kind::bad_value, "model: input_shape must be a non-empty array");
  for (const auto& d : in_shape) {
    if (!d.is_number_unsigned() || d.get<std::size_t>() == 0)
      throw LoadError(LoadError::Kind::bad_value, "model: input_shape entries must be positive integers");
    input_shape.push_back(d.get<std::size_t>());
  }
  if (!range.is_array() || range.size() != 2 || !range[0].is_number() || !range[1].is_number())
    throw LoadError(LoadError::Kind::bad_value, "model: input_range must be [lo, hi]");
  if (!classes.is_number_unsigned())
    throw LoadError(LoadError::Kind::bad_value, "model: num_classes must be a positive integer");
  if (!layers_json.is_array())
    throw LoadError(LoadError::Kind::bad_value, "model: layers must be an array");

  std::vector<Layer> layers;
  for (std::size_t i = 0; i < layers_json.size(); ++i) {
    const json& l = layers_json[i];
    const std::string lctx = "layer " + std::to_string(i);
    const json& kind_json = field(l, "kind", lctx);
    if (!kind_json.is_string()) throw LoadError(LoadError::Kind::bad_value, lctx + ": kind must be a string");
    const std::string kind = kind_json.get<std::string>();
    const std::string kctx = lctx + " (" + kind + ")";
    if (kind == "dense") {
      layers.emplace_back(DenseLayer{tensor_from_json(field(l, "weight", kctx), kctx + " weight"),
                                     tensor_from_json(field(l, "bias", kctx), kctx + " bias")});
    } else if (kind == "conv2d") {
      Conv2dLayer c;
      c.kernel = tensor_from_json(field(l, "kernel", kctx), kctx + " kernel");
      c.bias = tensor_from_json(field(l, "bias", kctx), kctx + " bias");
      c.stride = pair_field(l, "stride", kctx, 1);
      c.padding = pair_field(l, "padding", kctx, 0);
      layers.emplace_back(std::move(c));
    } else if (kind == "relu") {
      layers.emplace_back(ReluLayer{});
    } else if (kind == "sigmoid") {
      layers.emplace_back(SigmoidLayer{});
    } else if (kind == "flatten") {
      layers.emplace_back(FlattenLayer{});
    } else if (kind == "residual_add") {
      const json& from = field(l, "from", kctx);
      if (!from.is_number_integer())
        throw LoadError(LoadError::Kind::bad_value, kctx + ": from must be an integer");
      layers.emplace_back(ResidualAddLayer{from.get<int>()});
    } else {
      throw LoadError(LoadError::Kind::unsupported_layer, lctx + ": unsupported layer kind \"" + kind + "\"");
    }
  }

  try {
    return NetworkModel(std::move(input_shape), {range[0].get<double>(), range[1].get<double>()},
                        classes.get<std::size_t>(), std::move(layers));
  } catch (const InputError& e) {
    throw LoadError(LoadError::Kind::shape_mismatch, e.what());
  }
}

json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
}

NetworkModel load_model(const std::filesystem::path& path) {
  return model_from_json(parse_json_text(read_file(path), path.string()));
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
  write_file(path, model_to_json(model).dump());
}

Tensor load_tensor(const std::filesystem::path& path) {
  return tensor_from_json(parse_json_text(read_file(path), path.string()), path.string());
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  write_file(path, tensor_to_json(t).dump());
}

}  // namespace maskadv
