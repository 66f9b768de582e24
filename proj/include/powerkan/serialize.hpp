#pragma once

// Model JSON (format_version 1):
// {
//   "format_version": 1, "kind": "kan" | "powermlp" | "mlp", "k": 3,
//   "input_dim": 2, "name": "...", "seed": 42,
//   "layers": [ ...per-kind objects, matrices as flat row-major arrays... ]
// }
// kan layer:      n_in, n_out, grid {k, G, knots}, u, v, coeffs
// powermlp layer: n_in, n_out, units, final, omega, gamma, [alpha], [beta]
// mlp layer:      n_in, n_out, relu, weight, bias
//
// Doubles are written in shortest round-trip decimal form, so reading a
// written model reproduces every parameter bit for bit.

#include <cmath>
#include <fstream>
#include <string>

#include <json.hpp>

#include "powerkan/error.hpp"
#include "powerkan/layers.hpp"

namespace powerkan {

inline constexpr int kModelFormatVersion = 1;

namespace detail {

using json = nlohmann::json;

inline json tensor_to_json(const Tensor& t, const std::string& field) {
  json arr = json::array();
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw NumericError("cannot serialize non-finite value in '" + field + "'");
    arr.push_back(v);
  }
  return arr;
}

inline const json& require_field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  return obj.at(key);
}

template <typename T>
T get_field(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require_field(obj, key, where);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw InputError(where + ": field '" + key + "' has the wrong type");
  }
}

inline Tensor tensor_from_json(const json& obj, const std::string& key, std::size_t rows, std::size_t cols,
                               const std::string& where) {
  const json& arr = require_field(obj, key, where);
  if (!arr.is_array()) throw InputError(where + ": field '" + key + "' must be an array");
  if (arr.size() != rows * cols) {
    throw InputError(where + ": field '" + key + "' must hold " + std::to_string(rows * cols) +
                     " numbers, got " + std::to_string(arr.size()));
  }
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) throw InputError(where + ": field '" + key + "' holds a non-number");
    t.data()[i] = arr[i].get<double>();
  }
  return t;
}

}  // namespace detail

inline nlohmann::json network_to_json(const Network& net) {
  using detail::json;
  using detail::tensor_to_json;
  json layers = json::array();
  for (const auto& l : net.layers) {
    json j;
    j["n_in"] = layer_n_in(l);
    j["n_out"] = layer_n_out(l);
    if (const auto* kan = std::get_if<KanLayer>(&l)) {
      json grid;
      grid["k"] = kan->grid.order();
      grid["G"] = kan->grid.grid_count();
      grid["knots"] = json(std::vector<double>(kan->grid.knots().begin(), kan->grid.knots().end()));
      j["grid"] = grid;
      j["u"] = tensor_to_json(kan->u, "u");
      j["v"] = tensor_to_json(kan->v, "v");
      j["coeffs"] = tensor_to_json(kan->coeffs, "coeffs");
    } else if (const auto* pm = std::get_if<PowerMlpLayer>(&l)) {
      j["units"] = pm->units();
      j["final"] = pm->is_final;
      j["omega"] = tensor_to_json(pm->omega, "omega");
      j["gamma"] = tensor_to_json(pm->gamma, "gamma");
      if (!pm->alpha.empty()) j["alpha"] = tensor_to_json(pm->alpha, "alpha");
      if (!pm->beta.empty()) j["beta"] = tensor_to_json(pm->beta, "beta");
    } else {
      const auto& d = std::get<DenseLayer>(l);
      j["relu"] = d.relu;
      j["weight"] = tensor_to_json(d.weight, "weight");
      j["bias"] = tensor_to_json(d.bias, "bias");
    }
    layers.push_back(std::move(j));
  }
  json out;
  out["format_version"] = kModelFormatVersion;
  out["kind"] = to_string(net.kind);
  out["k"] = net.k;
  out["input_dim"] = net.input_dim;
  out["name"] = net.name;
  out["seed"] = net.seed;
  out["layers"] = std::move(layers);
  return out;
}

inline Network network_from_json(const nlohmann::json& doc) {
  using detail::get_field;
  using detail::json;
  using detail::tensor_from_json;
  if (!doc.is_object()) throw InputError("model: document must be a JSON object");
  const int version = get_field<int>(doc, "format_version", "model");
  if (version != kModelFormatVersion) {
    throw InputError("model: unsupported format_version " + std::to_string(version));
  }
  Network net;
  net.kind = parse_network_kind(get_field<std::string>(doc, "kind", "model"));
  net.k = get_field<int>(doc, "k", "model");
  net.input_dim = get_field<std::size_t>(doc, "input_dim", "model");
  net.name = doc.value("name", std::string());
  net.seed = doc.value("seed", std::uint64_t{0});
  const json& layers = detail::require_field(doc, "layers", "model");
  if (!layers.is_array()) throw InputError("model: field 'layers' must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = "model.layers[" + std::to_string(i) + "]";
    const json& j = layers[i];
    const auto n_in = get_field<std::size_t>(j, "n_in", where);
    const auto n_out = get_field<std::size_t>(j, "n_out", where);
    switch (net.kind) {
      case NetworkKind::kKan: {
        const json& g = detail::require_field(j, "grid", where);
        const int gk = get_field<int>(g, "k", where + ".grid");
        const int gc = get_field<int>(g, "G", where + ".grid");
        const auto knots = get_field<std::vector<double>>(g, "knots", where + ".grid");
        KnotGrid grid = [&] {
          try {
            return KnotGrid(gk, gc, knots);
          } catch (const InputError& e) {
            throw InputError(where + ".grid: " + e.what());
          }
        }();
        const auto nb = static_cast<std::size_t>(grid.basis_count());
        KanLayer layer{std::move(grid), tensor_from_json(j, "u", n_out, n_in, where),
                       tensor_from_json(j, "v", n_out, n_in, where),
                       tensor_from_json(j, "coeffs", n_out * n_in, nb, where)};
        net.layers.emplace_back(std::move(layer));
        break;
      }
      case NetworkKind::kPowerMlp: {
        PowerMlpLayer layer;
        layer.k = net.k;
        layer.is_final = get_field<bool>(j, "final", where);
        const auto units = j.contains("units") ? get_field<std::size_t>(j, "units", where) : n_out;
        layer.omega = tensor_from_json(j, "omega", units, n_in, where);
        layer.gamma = tensor_from_json(j, "gamma", 1, units, where);
        if (j.contains("alpha")) layer.alpha = tensor_from_json(j, "alpha", n_out, n_in, where);
        if (j.contains("beta")) {
          layer.beta = tensor_from_json(j, "beta", n_out, units, where);
        } else if (units != n_out) {
          throw InputError(where + ": units differs from n_out but no 'beta' is given");
        }
        net.layers.emplace_back(std::move(layer));
        break;
      }
      case NetworkKind::kMlp: {
        DenseLayer layer{tensor_from_json(j, "weight", n_out, n_in, where),
                         tensor_from_json(j, "bias", 1, n_out, where), get_field<bool>(j, "relu", where)};
        net.layers.emplace_back(std::move(layer));
        break;
      }
    }
  }
  net.validate();
  return net;
}

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write model file '" + path + "'");
  out << network_to_json(net).dump(1) << '\n';
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read model file '" + path + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("model file '" + path + "' is not valid JSON: " + e.what());
  }
  return network_from_json(doc);
}

}  // namespace powerkan
