#pragma once

// Model files:
//   {"dimension": d,
//    "offspring": [[{"counts": [..], "p": ..}, ...], ...],   one list per parent type
//    "immigration": [{"counts": [..], "p": ..}, ...]}        optional

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gwlab/model.hpp"

namespace gwlab {

struct ModelSpec {
  OffspringLaw law;
  std::optional<ImmigrationLaw> immigration;
};

namespace detail {

inline std::vector<Atom> parse_atoms(const nlohmann::json& arr, std::size_t d, const std::string& where) {
  if (!arr.is_array()) throw std::invalid_argument(where + ": expected an array of {counts, p}");
  std::vector<Atom> atoms;
  for (const auto& e : arr) {
    if (!e.contains("counts") || !e.contains("p")) throw std::invalid_argument(where + ": entry needs counts and p");
    Atom a;
    for (const auto& c : e.at("counts")) {
      if (!c.is_number_integer() || c.get<long long>() < 0)
        throw std::invalid_argument(where + ": counts must be nonnegative integers");
      a.counts.push_back(c.get<std::uint64_t>());
    }
    if (a.counts.size() != d) throw std::invalid_argument(where + ": counts length must equal dimension");
    a.p = e.at("p").get<double>();
    if (!(a.p >= 0.0)) throw std::invalid_argument(where + ": negative probability");
    atoms.push_back(std::move(a));
  }
  return atoms;
}

inline nlohmann::json atoms_to_json(const std::vector<Atom>& atoms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : atoms) arr.push_back({{"counts", a.counts}, {"p", a.p}});
  return arr;
}

}  // namespace detail

inline ModelSpec parse_model(const nlohmann::json& j) {
  if (!j.contains("dimension") || !j.contains("offspring"))
    throw std::invalid_argument("model: fields 'dimension' and 'offspring' are required");
  const auto d = j.at("dimension").get<std::size_t>();
  if (d == 0) throw std::invalid_argument("model: dimension must be at least 1");
  const auto& off = j.at("offspring");
  if (!off.is_array() || off.size() != d)
    throw std::invalid_argument("model: 'offspring' must hold one entry list per type");
  std::vector<std::vector<Atom>> per_type;
  for (std::size_t k = 0; k < d; ++k)
    per_type.push_back(detail::parse_atoms(off[k], d, "offspring[" + std::to_string(k) + "]"));
  ModelSpec spec{OffspringLaw::from_atoms(std::move(per_type)), std::nullopt};
  if (j.contains("immigration") && !j.at("immigration").is_null())
    spec.immigration = ImmigrationLaw(d, detail::parse_atoms(j.at("immigration"), d, "immigration"));
  return spec;
}

inline ModelSpec load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return parse_model(j);
}

inline nlohmann::json model_to_json(const OffspringLaw& law, const ImmigrationLaw* ilaw = nullptr) {
  nlohmann::json j;
  j["dimension"] = law.dim();
  j["offspring"] = nlohmann::json::array();
  for (const auto& t : law.types()) j["offspring"].push_back(detail::atoms_to_json(t.atoms()));
  if (ilaw) j["immigration"] = detail::atoms_to_json(ilaw->distribution().atoms());
  return j;
}

/// Comma-separated reals, e.g. "0.9,0.8".
inline std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace gwlab
