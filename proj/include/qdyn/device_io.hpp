#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdyn/device.hpp"

// Device-parameter files: JSON with a "units" header, one object per qubit and per edge.
// Edges refer to qubit labels (the physical qubit numbers), not positions.
//
//   {
//     "format": "qdyn-device/1",
//     "units": {"time": "us", "frequency": "Hz", "coupling": "kHz"},
//     "topology": "chain" | "ring" | "general",
//     "qubits": [{"label": 22, "t1": 123, "t2": 84, "nu": 3308, "delta": -9088}, ...],
//     "edges": [{"qubits": [22, 23], "zeta": -39.4}, ...]
//   }
//
// Optional per-qubit keys: even_fraction (default: file-level "even_fraction", else 0.5),
// heating_fraction (default 0). Keys ending in "_err" hold quoted uncertainties and are
// carried through without entering the model.
namespace qdyn {

namespace detail {

inline double number_at(const nlohmann::json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) throw ParseError(path + "." + key + ": required field missing");
  const auto& v = obj.at(key);
  if (!v.is_number()) throw ParseError(path + "." + key + ": expected a number");
  return v.get<double>();
}

inline std::string unit_at(const nlohmann::json& units, const std::string& key, const std::string& fallback) {
  if (!units.contains(key)) return fallback;
  if (!units.at(key).is_string()) throw ParseError("units." + key + ": expected a string");
  return units.at(key).get<std::string>();
}

}  // namespace detail

inline DeviceModel device_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("device: top level must be an object");
  const nlohmann::json units = doc.value("units", nlohmann::json::object());
  const double t_scale = time_scale_to_us(detail::unit_at(units, "time", "us"));
  const double f_scale = frequency_scale_to_hz(detail::unit_at(units, "frequency", "Hz"));
  const double z_scale = frequency_scale_to_hz(detail::unit_at(units, "coupling", "kHz"));

  TopologyKind kind = TopologyKind::general;
  const std::string topo = doc.value("topology", std::string("general"));
  if (topo == "chain") kind = TopologyKind::chain;
  else if (topo == "ring") kind = TopologyKind::ring;
  else if (topo != "general") throw ParseError("topology: unknown kind '" + topo + "'");

  const double default_b = doc.contains("even_fraction") ? detail::number_at(doc, "even_fraction", "device") : 0.5;

  if (!doc.contains("qubits") || !doc.at("qubits").is_array())
    throw ParseError("qubits: required array missing");
  std::vector<QubitParams> qubits;
  std::vector<int> labels;
  const auto& qs = doc.at("qubits");
  for (std::size_t i = 0; i < qs.size(); ++i) {
    const std::string path = "qubits[" + std::to_string(i) + "]";
    const auto& q = qs[i];
    if (!q.is_object()) throw ParseError(path + ": expected an object");
    QubitParams p;
    p.t1 = detail::number_at(q, "t1", path) * t_scale;
    p.t2 = detail::number_at(q, "t2", path) * t_scale;
    p.nu = detail::number_at(q, "nu", path) * f_scale;
    p.delta = detail::number_at(q, "delta", path) * f_scale;
    p.even_fraction = q.contains("even_fraction") ? detail::number_at(q, "even_fraction", path) : default_b;
    p.heating_fraction = q.contains("heating_fraction") ? detail::number_at(q, "heating_fraction", path) : 0.0;
    validate(p, path);
    qubits.push_back(p);
    labels.push_back(q.contains("label") ? static_cast<int>(detail::number_at(q, "label", path)) : static_cast<int>(i));
  }

  std::vector<CouplingParams> edges;
  if (doc.contains("edges")) {
    const auto& es = doc.at("edges");
    if (!es.is_array()) throw ParseError("edges: expected an array");
    for (std::size_t k = 0; k < es.size(); ++k) {
      const std::string path = "edges[" + std::to_string(k) + "]";
      const auto& e = es[k];
      if (!e.is_object() || !e.contains("qubits") || !e.at("qubits").is_array() || e.at("qubits").size() != 2)
        throw ParseError(path + ".qubits: expected a pair of qubit labels");
      CouplingParams c;
      std::size_t ends[2];
      for (int s = 0; s < 2; ++s) {
        const auto& lab = e.at("qubits")[s];
        if (!lab.is_number_integer()) throw ParseError(path + ".qubits: labels must be integers");
        auto it = std::find(labels.begin(), labels.end(), lab.get<int>());
        if (it == labels.end())
          throw ValidationError(path + ".qubits: unknown qubit label " + std::to_string(lab.get<int>()));
        ends[s] = static_cast<std::size_t>(it - labels.begin());
      }
      c.edge = {ends[0], ends[1]};
      c.zeta = detail::number_at(e, "zeta", path) * z_scale;
      edges.push_back(c);
    }
  }
  return DeviceModel(std::move(qubits), std::move(edges), kind, std::move(labels));
}

inline DeviceModel load_device(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("device: ") + e.what());
  }
  return device_from_json(doc);
}

inline DeviceModel load_device_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open device file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_device(ss.str());
}

// Canonical serialisation (Hz, us, kHz), used for run manifests.
inline nlohmann::json device_to_json(const DeviceModel& d) {
  nlohmann::json doc;
  doc["format"] = "qdyn-device/1";
  doc["units"] = {{"time", "us"}, {"frequency", "Hz"}, {"coupling", "kHz"}};
  doc["topology"] = to_string(d.topology());
  doc["qubits"] = nlohmann::json::array();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& q = d.qubit(i);
    doc["qubits"].push_back({{"label", d.labels()[i]},
                             {"t1", q.t1},
                             {"t2", q.t2},
                             {"nu", q.nu},
                             {"delta", q.delta},
                             {"even_fraction", q.even_fraction},
                             {"heating_fraction", q.heating_fraction}});
  }
  doc["edges"] = nlohmann::json::array();
  for (const auto& e : d.edges())
    doc["edges"].push_back({{"qubits", {d.labels()[e.edge.first], d.labels()[e.edge.second]}}, {"zeta", e.zeta * 1e-3}});
  return doc;
}

}  // namespace qdyn
