#include "sketchtomo/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sketchtomo {

namespace {

[[noreturn]] void malformed(const std::string& what, const std::string& detail) {
  throw std::runtime_error(what + ": " + detail);
}

template <typename Fn>
auto guarded(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    malformed(what, e.what());
  } catch (const std::invalid_argument& e) {
    malformed(what, e.what());
  }
}

}  // namespace

json mps_to_json(const MPS& psi) {
  json comps = json::array();
  for (const auto& f : psi.components()) {
    json site = json::array();
    for (std::size_t a = 0; a < f.dim(0); ++a) {
      json phys = json::array();
      for (std::size_t s = 0; s < 2; ++s) {
        json right = json::array();
        for (std::size_t b = 0; b < f.dim(2); ++b) right.push_back({f(a, s, b).real(), f(a, s, b).imag()});
        phys.push_back(std::move(right));
      }
      site.push_back(std::move(phys));
    }
    comps.push_back(std::move(site));
  }
  return json{{"n", psi.size()}, {"bonds", psi.bonds()}, {"components", std::move(comps)}};
}

MPS mps_from_json(const json& j) {
  return guarded("mps_from_json", [&] {
    const int n = j.at("n").get<int>();
    const auto& comps = j.at("components");
    if (!comps.is_array() || static_cast<int>(comps.size()) != n) malformed("mps_from_json", "component count differs from n");
    std::vector<DenseTensor> out;
    for (const auto& site : comps) {
      const std::size_t l = site.size();
      if (l == 0 || site.at(0).size() != 2) malformed("mps_from_json", "components must have physical dimension 2");
      const std::size_t r = site.at(0).at(0).size();
      DenseTensor f({l, 2, r});
      for (std::size_t a = 0; a < l; ++a)
        for (std::size_t s = 0; s < 2; ++s) {
          const auto& row = site.at(a).at(s);
          if (row.size() != r) malformed("mps_from_json", "ragged component");
          for (std::size_t b = 0; b < r; ++b) {
            const auto& z = row.at(b);
            if (z.size() != 2) malformed("mps_from_json", "entries must be [re, im]");
            f(a, s, b) = cplx(z.at(0).get<double>(), z.at(1).get<double>());
          }
        }
      out.push_back(std::move(f));
    }
    MPS psi(std::move(out));
    if (j.contains("bonds") && j.at("bonds").get<std::vector<std::size_t>>() != psi.bonds()) {
      malformed("mps_from_json", "bonds do not match the components");
    }
    return psi;
  });
}

json tt_to_json(const TTCoeff& c) {
  json comps = json::array();
  for (const auto& g : c.components()) {
    json site = json::array();
    for (std::size_t a = 0; a < g.dim(0); ++a) {
      json phys = json::array();
      for (std::size_t i = 0; i < 4; ++i) {
        json right = json::array();
        for (std::size_t b = 0; b < g.dim(2); ++b) right.push_back(g(a, i, b));
        phys.push_back(std::move(right));
      }
      site.push_back(std::move(phys));
    }
    comps.push_back(std::move(site));
  }
  return json{{"n", c.size()}, {"ranks", c.ranks()}, {"components", std::move(comps)}};
}

TTCoeff tt_from_json(const json& j) {
  return guarded("tt_from_json", [&] {
    const int n = j.at("n").get<int>();
    const auto& comps = j.at("components");
    if (!comps.is_array() || static_cast<int>(comps.size()) != n) malformed("tt_from_json", "component count differs from n");
    std::vector<RealTensor> out;
    for (const auto& site : comps) {
      const std::size_t l = site.size();
      if (l == 0 || site.at(0).size() != 4) malformed("tt_from_json", "components must have Pauli dimension 4");
      const std::size_t r = site.at(0).at(0).size();
      RealTensor g({l, 4, r});
      for (std::size_t a = 0; a < l; ++a)
        for (std::size_t i = 0; i < 4; ++i) {
          const auto& row = site.at(a).at(i);
          if (row.size() != r) malformed("tt_from_json", "ragged component");
          for (std::size_t b = 0; b < r; ++b) g(a, i, b) = row.at(b).get<double>();
        }
      out.push_back(std::move(g));
    }
    return TTCoeff(std::move(out));
  });
}

json pauli_sum_to_json(const PauliSum& obs) {
  json out = json::array();
  for (const auto& s : obs) {
    json string = json::object();
    for (const auto& [site, label] : s.support) string[std::to_string(site + 1)] = std::string(1, pauli_char(label));
    out.push_back(json{{"coefficient", s.coefficient}, {"string", std::move(string)}});
  }
  return out;
}

PauliSum pauli_sum_from_json(const json& j) {
  return guarded("pauli_sum_from_json", [&] {
    PauliSum out;
    for (const auto& term : j) {
      std::map<int, Pauli> support;
      for (const auto& [key, value] : term.at("string").items()) {
        const int site = std::stoi(key) - 1;
        const auto label = value.get<std::string>();
        if (site < 0 || label.size() != 1) malformed("pauli_sum_from_json", "bad site label '" + key + "'");
        support.emplace(site, pauli_from_char(label[0]));
      }
      out.emplace_back(std::move(support), term.at("coefficient").get<double>());
    }
    return out;
  });
}

json family_to_json(const SketchFamily& f) {
  json cuts = json::array();
  for (std::size_t c = 0; c < f.left.size(); ++c) {
    json left = json::array(), right = json::array();
    for (const auto& obs : f.left[c]) left.push_back(pauli_sum_to_json(obs));
    for (const auto& obs : f.right[c]) right.push_back(pauli_sum_to_json(obs));
    cuts.push_back(json{{"left", std::move(left)}, {"right", std::move(right)}});
  }
  return json{{"n", f.n}, {"window", f.window}, {"seed", f.seed}, {"geometry", geometry_name(f.geometry)}, {"cuts", std::move(cuts)}};
}

SketchFamily family_from_json(const json& j) {
  return guarded("family_from_json", [&] {
    SketchFamily f;
    f.n = j.at("n").get<int>();
    f.window = j.at("window").get<int>();
    f.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("geometry")) f.geometry = geometry_from_name(j.at("geometry").get<std::string>());
    for (const auto& cut : j.at("cuts")) {
      f.left.emplace_back();
      f.right.emplace_back();
      for (const auto& obs : cut.at("left")) f.left.back().push_back(pauli_sum_from_json(obs));
      for (const auto& obs : cut.at("right")) f.right.back().push_back(pauli_sum_from_json(obs));
    }
    f.validate();
    return f;
  });
}

json report_to_json(const TomographyReport& r) {
  json spectra = json::array();
  for (const auto& s : r.spectra) spectra.push_back(std::vector<double>(s.data(), s.data() + s.size()));
  json out{{"recovered", tt_to_json(r.recovered)},
           {"ranks", r.ranks},
           {"spectra", std::move(spectra)},
           {"residuals", r.residuals},
           {"warnings", r.warnings}};
  if (r.c_z) out["c_z"] = *r.c_z;
  if (r.c_g) out["c_g"] = *r.c_g;
  return out;
}

TomographyReport report_from_json(const json& j) {
  return guarded("report_from_json", [&] {
    TomographyReport r;
    r.recovered = tt_from_json(j.at("recovered"));
    r.ranks = j.at("ranks").get<std::vector<std::size_t>>();
    for (const auto& s : j.at("spectra")) {
      const auto v = s.get<std::vector<double>>();
      r.spectra.push_back(Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    r.residuals = j.at("residuals").get<std::vector<double>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (j.contains("c_z")) r.c_z = j.at("c_z").get<double>();
    if (j.contains("c_g")) r.c_g = j.at("c_g").get<double>();
    return r;
  });
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

}  // namespace sketchtomo
