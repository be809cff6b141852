#include "sketchtomo/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sketchtomo/pauli_tt.hpp"
#include "sketchtomo/random.hpp"

namespace sketchtomo {

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw std::invalid_argument("config: " + field + " " + why);
}

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) bad(where, "must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; })) {
      bad(where + "." + key, "is not a recognised key");
    }
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

bool is_hamiltonian(const std::string& type) { return type == "heisenberg-1d" || type == "tfim-1d"; }

std::vector<int> to_zero_based(std::vector<int> sites) {
  for (auto& s : sites) --s;
  return sites;
}

std::vector<int> to_one_based(std::vector<int> sites) {
  for (auto& s : sites) ++s;
  return sites;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ---- config ----------------------------------------------------------------

void ExperimentConfig::validate() const {
  const int n = model.n;
  if (model.type != "random-mps" && !is_hamiltonian(model.type)) bad("model.type", "must be random-mps, heisenberg-1d or tfim-1d");
  if (n < 2) bad("model.n", "must be >= 2");
  if (is_hamiltonian(model.type) && n > kDenseMaxSites) {
    bad("model.n", "must be <= " + std::to_string(kDenseMaxSites) + " for exact ground states");
  }
  if (n > kStatevectorMaxSites) bad("model.n", "must be <= " + std::to_string(kStatevectorMaxSites));
  if (model.bond < 1) bad("model.bond", "must be >= 1");
  if (model.type == "heisenberg-1d" && model.periodic && n < 3) bad("model.periodic", "needs n >= 3");

  if (shadow.count == 0) bad("shadow.count", "must be positive");
  if (shadow.w_groups == 0 || shadow.count % shadow.w_groups != 0) bad("shadow.w_groups", "must divide shadow.count");

  if (sketch.window < 1 || sketch.window > kMaxSketchWindow) {
    bad("sketch.window", "must be in 1.." + std::to_string(kMaxSketchWindow));
  }
  if (sketch.r_tilde < 1) bad("sketch.r_tilde", "must be >= 1");
  if (sketch.rank_mode == RankMode::kFixed && sketch.ranks.size() != static_cast<std::size_t>(n - 1)) {
    bad("sketch.ranks", "needs one rank per cut (" + std::to_string(n - 1) + ")");
  }
  if (sketch.rank_mode == RankMode::kThreshold && !(sketch.threshold > 0.0 && sketch.threshold < 1.0)) {
    bad("sketch.threshold", "must be in (0, 1)");
  }

  if (mle) {
    if (!(mle->learning_rate >= 0.0)) bad("mle.learning_rate", "must be >= 0");
    if (mle->max_sweeps < 0) bad("mle.max_sweeps", "must be >= 0");
    if (mle->bond && *mle->bond < 1) bad("mle.bond", "must be >= 1");
  }

  if (evaluation.renyi_max_size < 0 || evaluation.renyi_max_size > 4) bad("evaluation.renyi_max_size", "must be in 0..4");
  for (const auto& a : evaluation.subsystems) {
    if (a.empty() || a.size() > 4) bad("evaluation.subsystems", "entries must have 1..4 sites");
    if (!std::is_sorted(a.begin(), a.end()) || std::adjacent_find(a.begin(), a.end()) != a.end()) {
      bad("evaluation.subsystems", "sites must be strictly increasing");
    }
    if (a.front() < 0 || a.back() >= n) bad("evaluation.subsystems", "site out of range");
  }
  if (evaluation.shadow_w_groups == 0 || shadow.count % evaluation.shadow_w_groups != 0) {
    bad("evaluation.shadow_w_groups", "must divide shadow.count");
  }
  for (const auto& id : evaluation.observables) parse_observable(id, n);

  if (scaling.seeds < 1) bad("scaling.seeds", "must be >= 1");
  for (auto c : scaling.counts) {
    if (c == 0 || c % shadow.w_groups != 0) bad("scaling.counts", "entries must be positive multiples of shadow.w_groups");
  }
}

json config_to_json(const ExperimentConfig& cfg) {
  json sketch{{"r_tilde", cfg.sketch.r_tilde},
              {"window", cfg.sketch.window},
              {"seed", cfg.sketch.seed},
              {"geometry", geometry_name(cfg.sketch.geometry)},
              {"threshold", cfg.sketch.threshold},
              {"median_of_means", cfg.sketch.median_of_means}};
  switch (cfg.sketch.rank_mode) {
    case RankMode::kThreshold: sketch["ranks"] = nullptr; break;
    case RankMode::kFixed: sketch["ranks"] = cfg.sketch.ranks; break;
    case RankMode::kTruth: sketch["ranks"] = "truth"; break;
  }
  json subsystems = json::array();
  for (const auto& a : cfg.evaluation.subsystems) subsystems.push_back(to_one_based(a));
  json out{{"model",
            {{"type", cfg.model.type},
             {"n", cfg.model.n},
             {"bond", cfg.model.bond},
             {"J", cfg.model.J},
             {"h", cfg.model.h},
             {"periodic", cfg.model.periodic},
             {"seed", cfg.model.seed}}},
           {"shadow", {{"count", cfg.shadow.count}, {"w_groups", cfg.shadow.w_groups}, {"seed", cfg.shadow.seed}}},
           {"sketch", std::move(sketch)},
           {"evaluation",
            {{"observables", cfg.evaluation.observables},
             {"renyi_max_size", cfg.evaluation.renyi_max_size},
             {"subsystems", std::move(subsystems)},
             {"shadow_w_groups", cfg.evaluation.shadow_w_groups}}},
           {"scaling", {{"counts", cfg.scaling.counts}, {"seeds", cfg.scaling.seeds}}}};
  if (cfg.mle) {
    const auto& m = *cfg.mle;
    json mle{{"learning_rate", m.learning_rate}, {"max_sweeps", m.max_sweeps}, {"seed", m.seed}};
    if (m.target_truth) mle["target_nll"] = "truth";
    else if (m.target_nll) mle["target_nll"] = *m.target_nll;
    else mle["target_nll"] = nullptr;
    if (m.bond) mle["bond"] = *m.bond;
    else mle["bond"] = "truth";
    out["mle"] = std::move(mle);
  }
  return out;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    reject_unknown(j, "config", {"model", "shadow", "sketch", "mle", "evaluation", "scaling"});
    if (j.contains("model")) {
      const auto& m = j.at("model");
      reject_unknown(m, "model", {"type", "n", "bond", "J", "h", "periodic", "seed"});
      read_opt(m, "type", cfg.model.type);
      read_opt(m, "n", cfg.model.n);
      read_opt(m, "bond", cfg.model.bond);
      read_opt(m, "J", cfg.model.J);
      read_opt(m, "h", cfg.model.h);
      read_opt(m, "periodic", cfg.model.periodic);
      read_opt(m, "seed", cfg.model.seed);
    }
    if (j.contains("shadow")) {
      const auto& s = j.at("shadow");
      reject_unknown(s, "shadow", {"count", "w_groups", "seed"});
      read_opt(s, "count", cfg.shadow.count);
      read_opt(s, "w_groups", cfg.shadow.w_groups);
      read_opt(s, "seed", cfg.shadow.seed);
    }
    if (j.contains("sketch")) {
      const auto& s = j.at("sketch");
      reject_unknown(s, "sketch", {"r_tilde", "window", "seed", "geometry", "ranks", "threshold", "median_of_means"});
      read_opt(s, "r_tilde", cfg.sketch.r_tilde);
      read_opt(s, "window", cfg.sketch.window);
      read_opt(s, "seed", cfg.sketch.seed);
      if (s.contains("geometry")) cfg.sketch.geometry = geometry_from_name(s.at("geometry").get<std::string>());
      read_opt(s, "threshold", cfg.sketch.threshold);
      read_opt(s, "median_of_means", cfg.sketch.median_of_means);
      if (s.contains("ranks")) {
        const auto& r = s.at("ranks");
        if (r.is_null()) {
          cfg.sketch.rank_mode = RankMode::kThreshold;
        } else if (r.is_string()) {
          if (r.get<std::string>() != "truth") bad("sketch.ranks", "must be null, \"truth\" or a list");
          cfg.sketch.rank_mode = RankMode::kTruth;
        } else {
          cfg.sketch.rank_mode = RankMode::kFixed;
          cfg.sketch.ranks = r.get<std::vector<std::size_t>>();
        }
      }
    }
    if (j.contains("mle") && !j.at("mle").is_null()) {
      const auto& m = j.at("mle");
      reject_unknown(m, "mle", {"learning_rate", "max_sweeps", "target_nll", "bond", "seed"});
      MLESection s;
      read_opt(m, "learning_rate", s.learning_rate);
      read_opt(m, "max_sweeps", s.max_sweeps);
      read_opt(m, "seed", s.seed);
      if (m.contains("target_nll")) {
        const auto& t = m.at("target_nll");
        if (t.is_string()) {
          if (t.get<std::string>() != "truth") bad("mle.target_nll", "must be a number, null or \"truth\"");
          s.target_truth = true;
        } else {
          s.target_truth = false;
          if (!t.is_null()) s.target_nll = t.get<double>();
        }
      }
      if (m.contains("bond")) {
        const auto& b = m.at("bond");
        if (b.is_string()) {
          if (b.get<std::string>() != "truth") bad("mle.bond", "must be an integer or \"truth\"");
          s.bond.reset();
        } else {
          s.bond = b.get<int>();
        }
      }
      cfg.mle = s;
    }
    if (j.contains("evaluation")) {
      const auto& e = j.at("evaluation");
      reject_unknown(e, "evaluation", {"observables", "renyi_max_size", "subsystems", "shadow_w_groups"});
      read_opt(e, "observables", cfg.evaluation.observables);
      read_opt(e, "renyi_max_size", cfg.evaluation.renyi_max_size);
      read_opt(e, "shadow_w_groups", cfg.evaluation.shadow_w_groups);
      if (e.contains("subsystems")) {
        for (const auto& a : e.at("subsystems")) cfg.evaluation.subsystems.push_back(to_zero_based(a.get<std::vector<int>>()));
      }
    }
    if (j.contains("scaling")) {
      const auto& s = j.at("scaling");
      reject_unknown(s, "scaling", {"counts", "seeds"});
      read_opt(s, "counts", cfg.scaling.counts);
      read_opt(s, "seeds", cfg.scaling.seeds);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig read_config_file(const std::filesystem::path& path) {
  try {
    return config_from_json(read_json_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

// ---- states ------------------------------------------------------------------

ModelState make_model_state(const ModelConfig& model) {
  ModelState out;
  if (model.type == "random-mps") {
    out.psi = random_mps(model.n, model.bond, model.seed);
    out.psi.normalize();
    return out;
  }
  const auto ham = model.type == "heisenberg-1d" ? heisenberg_1d(model.n, model.periodic) : tfim_1d(model.n, model.J, model.h);
  auto gs = exact_ground_state(ham);
  out.psi = std::move(gs.psi);
  out.psi.normalize();
  out.energy = mps_expectation(out.psi, ham.terms);
  out.degenerate = gs.degenerate;
  return out;
}

json cmd_gen_state(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto st = make_model_state(cfg.model);
  json meta{{"model", cfg.model.type},
            {"n", cfg.model.n},
            {"seed", cfg.model.seed},
            {"bonds", st.psi.bonds()},
            {"energy", st.energy ? json(*st.energy) : json(nullptr)},
            {"degenerate", st.degenerate}};
  return json{{"state", mps_to_json(st.psi)}, {"metadata", std::move(meta)}};
}

MPS state_from_json(const json& j) { return mps_from_json(j.contains("state") ? j.at("state") : j); }

ShadowBatch cmd_shadow(const ExperimentConfig& cfg, const MPS& psi, int workers) {
  cfg.validate();
  if (psi.size() != cfg.model.n) throw std::invalid_argument("shadow: state has " + std::to_string(psi.size()) + " sites, config says " + std::to_string(cfg.model.n));
  MPS unit = psi;
  unit.normalize();
  return sample_shadows(unit, cfg.shadow.count, cfg.shadow.w_groups, cfg.shadow.seed, workers);
}

// ---- tomography --------------------------------------------------------------

SketchFamily family_for(const ExperimentConfig& cfg) {
  return default_sketch_family(cfg.model.n, cfg.sketch.r_tilde, cfg.sketch.window, cfg.sketch.seed, cfg.sketch.geometry);
}

RankRule rank_rule_for(const SketchConfig& sketch, const SketchFamily& family, const MPS* truth) {
  switch (sketch.rank_mode) {
    case RankMode::kThreshold: return RankRule::relative(sketch.threshold);
    case RankMode::kFixed: return RankRule::fixed(sketch.ranks);
    case RankMode::kTruth: {
      if (truth == nullptr) throw std::invalid_argument("sketch.ranks = \"truth\" needs the true state");
      const auto bonds = canonicalize(*truth, 0).bonds();
      std::vector<std::size_t> r;
      for (int c = 0; c + 1 < family.n; ++c) {
        const std::size_t a = bonds[static_cast<std::size_t>(c + 1)];
        r.push_back(std::min(a * a, family.r_tilde(c)));
      }
      return RankRule::fixed(std::move(r));
    }
  }
  throw std::logic_error("rank_rule_for: unhandled mode");
}

json cmd_tomo(const ExperimentConfig& cfg, const TomoInputs& in) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto family = family_for(cfg);
  TomographyOptions opts;
  opts.rank_rule = rank_rule_for(cfg.sketch, family, in.state);
  opts.median_of_means = cfg.sketch.median_of_means;
  opts.workers = in.workers;
  const double t_family = seconds_since(t0);

  TomographyReport report;
  if (in.noiseless) {
    if (in.state == nullptr) throw std::invalid_argument("tomo: noiseless mode needs a state file");
    if (in.state->size() != cfg.model.n) throw std::invalid_argument("tomo: state size differs from model.n");
    MPS unit = *in.state;
    unit.normalize();
    report = sketch_tomography_exact(unit, family, opts);
  } else {
    if (in.batch == nullptr) throw std::invalid_argument("tomo: a shadow file is required");
    if (in.batch->n() != cfg.model.n) throw std::invalid_argument("tomo: shadow batch size differs from model.n");
    const TraceTable table(*in.batch);
    report = sketch_tomography(table, family, opts);
  }
  json out = report_to_json(report);
  out["mode"] = in.noiseless ? "noiseless" : "shadow";
  out["count"] = in.noiseless ? 0 : in.batch->count();
  out["family"] = json{{"kind", "default (identity-anchored random local Pauli combinations)"},
                       {"geometry", geometry_name(family.geometry)},
                       {"window", family.window},
                       {"seed", family.seed},
                       {"r_tilde", family.r_tilde()}};
  if (in.timings) out["timings"] = json{{"family_seconds", t_family}, {"total_seconds", seconds_since(t0)}};
  return out;
}

// ---- MLE ---------------------------------------------------------------------

MLEOutput cmd_mle(const ExperimentConfig& cfg, const ShadowBatch& batch, const MPS* truth, int workers) {
  cfg.validate();
  if (!cfg.mle) throw std::invalid_argument("mle: the config has no mle section");
  const auto& sec = *cfg.mle;
  if (batch.n() != cfg.model.n) throw std::invalid_argument("mle: shadow batch size differs from model.n");
  if ((sec.target_truth || !sec.bond) && truth == nullptr) {
    throw std::invalid_argument("mle: \"truth\" settings need the true state");
  }
  if (truth != nullptr && truth->size() != cfg.model.n) throw std::invalid_argument("mle: state size differs from model.n");

  MLEConfig mc;
  mc.learning_rate = sec.learning_rate;
  mc.max_sweeps = sec.max_sweeps;
  mc.seed = sec.seed;
  mc.workers = workers;
  mc.bond = sec.bond ? *sec.bond : static_cast<int>(canonicalize(*truth, 0).max_bond());
  if (sec.target_truth) {
    MPS unit = *truth;
    unit.normalize();
    mc.target_nll = nll(unit, batch, nullptr, workers);
  } else {
    mc.target_nll = sec.target_nll;
  }
  mc.validate();

  MPS phi0 = random_mps(cfg.model.n, mc.bond, mc.seed);
  phi0.normalize();
  auto res = train(phi0, batch, mc);
  res.state.normalize();

  std::ostringstream csv;
  csv << "sweep,site,nll\n";
  for (const auto& s : res.trace) csv << s.sweep << ',' << (s.site + 1) << ',' << format_number(s.nll) << '\n';
  json meta{{"sweeps", res.sweeps},
            {"reached_target", res.reached_target},
            {"target_nll", mc.target_nll ? json(*mc.target_nll) : json(nullptr)},
            {"final_nll", res.trace.empty() ? json(nullptr) : json(res.trace.back().nll)},
            {"bond", mc.bond},
            {"seed", mc.seed},
            {"learning_rate", mc.learning_rate},
            {"clamped", res.clamped}};
  return MLEOutput{json{{"state", mps_to_json(res.state)}, {"metadata", std::move(meta)}}, csv.str()};
}

// ---- evaluation --------------------------------------------------------------

std::vector<std::pair<std::string, PauliSum>> parse_observable(const std::string& id, int n) {
  const auto colon = id.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("unknown observable id '" + id + "'");
  const std::string kind = id.substr(0, colon), arg = id.substr(colon + 1);
  auto index = [&](int lo, int hi) {
    std::vector<int> out;
    if (arg == "*") {
      for (int i = lo; i <= hi; ++i) out.push_back(i);
      return out;
    }
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(arg, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != arg.size() || arg.empty()) throw std::invalid_argument("bad index in observable id '" + id + "'");
    if (v < lo || v > hi) {
      throw std::invalid_argument("observable id '" + id + "': index must be in " + std::to_string(lo) + ".." + std::to_string(hi));
    }
    out.push_back(v);
    return out;
  };

  std::vector<std::pair<std::string, PauliSum>> out;
  if (kind == "pauli") {
    PauliString p = PauliString::parse(arg);
    check_support(p, n);
    out.emplace_back(id, PauliSum{p});
  } else if (kind == "heis2pt") {
    for (int i : index(2, n)) {
      PauliSum s;
      for (Pauli p : {Pauli::X, Pauli::Y, Pauli::Z}) s.push_back(PauliString({{0, p}, {i - 1, p}}, 1.0 / 3.0));
      out.emplace_back(kind + ":" + std::to_string(i), std::move(s));
    }
  } else if (kind == "xprod") {
    for (int k : index(1, n)) {
      std::map<int, Pauli> sup;
      for (int i = 0; i < k; ++i) sup.emplace(i, Pauli::X);
      out.emplace_back(kind + ":" + std::to_string(k), PauliSum{PauliString(std::move(sup))});
    }
  } else if (kind == "tfim_zxz") {
    for (int k : index(2, n)) {
      std::map<int, Pauli> sup{{0, Pauli::Z}, {n - 1, Pauli::Z}};
      for (int i = 1; i < k - 1; ++i) sup.emplace(i, Pauli::X);
      out.emplace_back(kind + ":" + std::to_string(k), PauliSum{PauliString(std::move(sup))});
    }
  } else if (kind == "zz") {
    for (int j : index(1, n - 1)) {
      out.emplace_back(kind + ":" + std::to_string(j), PauliSum{PauliString({{j - 1, Pauli::Z}, {j, Pauli::Z}})});
    }
  } else {
    throw std::invalid_argument("unknown observable id '" + id + "'");
  }
  return out;
}

namespace {

std::vector<std::vector<int>> renyi_subsystems(const EvaluationConfig& e, int n) {
  if (!e.subsystems.empty()) return e.subsystems;
  std::vector<std::vector<int>> out;
  // Subsets in lexicographic order, sizes 1..renyi_max_size.
  std::vector<int> cur;
  auto rec = [&](auto&& self, int start) -> void {
    if (!cur.empty()) out.push_back(cur);
    if (static_cast<int>(cur.size()) == e.renyi_max_size) return;
    for (int s = start; s < n; ++s) {
      cur.push_back(s);
      self(self, s + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.size() < b.size(); });
  return out;
}

std::string subsystem_id(const std::vector<int>& a) {
  std::string s = "renyi2:";
  for (std::size_t i = 0; i < a.size(); ++i) s += (i ? "_" : "") + std::to_string(a[i] + 1);
  return s;
}

double purity_to_renyi(double purity) { return -std::log(std::max(purity, kPurityFloor)); }

double dense_renyi(const MPS& psi, const std::vector<int>& a) {
  const MatrixXcd r = mps_reduced_density(psi, a);
  return purity_to_renyi((r * r).trace().real() / std::pow(r.trace().real(), 2));
}

// Plug-in purity 2^{-|A|} sum_P <P>^2 over all strings on A, with shadow
// estimates for the non-identity strings.
double shadow_renyi(const TraceTable& table, const std::vector<int>& a) {
  const std::size_t m = a.size();
  double sum = 1.0;
  for (std::size_t code = 1; code < (std::size_t{1} << (2 * m)); ++code) {
    std::map<int, Pauli> sup;
    for (std::size_t s = 0; s < m; ++s) {
      const auto label = static_cast<Pauli>((code >> (2 * s)) & 3U);
      if (label != Pauli::I) sup.emplace(a[s], label);
    }
    const double v = shadow_pauli_estimate(table, PauliString(std::move(sup)), true);
    sum += v * v;
  }
  return purity_to_renyi(sum / std::pow(2.0, static_cast<double>(m)));
}

}  // namespace

std::vector<EvalRow> evaluate(const ExperimentConfig& cfg, const MPS& truth, const EvalInputs& in) {
  cfg.validate();
  const int n = cfg.model.n;
  if (truth.size() != n) throw std::invalid_argument("eval: state size differs from model.n");
  if (in.sketch && in.sketch->size() != n) throw std::invalid_argument("eval: report size differs from model.n");
  if (in.mle && in.mle->size() != n) throw std::invalid_argument("eval: MLE state size differs from model.n");
  if (in.batch && in.batch->n() != n) throw std::invalid_argument("eval: shadow batch size differs from model.n");

  MPS unit = truth;
  unit.normalize();
  std::optional<MPS> mle;
  if (in.mle) {
    mle = *in.mle;
    mle->normalize();
  }
  std::optional<TraceTable> table;
  if (in.batch) table.emplace(in.batch->with_groups(cfg.evaluation.shadow_w_groups));

  std::optional<double> sketch_trace;
  if (in.sketch) {
    const double t = tt_trace(*in.sketch);
    if (t > 0.0) sketch_trace = t;
  }

  std::vector<EvalRow> rows;
  for (const auto& id : cfg.evaluation.observables) {
    for (auto& [row_id, obs] : parse_observable(id, n)) {
      EvalRow r;
      r.id = row_id;
      r.exact = mps_expectation(unit, obs);
      if (table) r.shadow = shadow_weighted_estimate(*table, obs, true);
      if (in.sketch) r.sketch = tt_pauli_expectation(*in.sketch, obs);
      if (sketch_trace) r.sketch_rescaled = *r.sketch / *sketch_trace;
      if (mle) r.mle = mps_expectation(*mle, obs);
      rows.push_back(std::move(r));
    }
  }
  if (cfg.evaluation.renyi_max_size > 0 || !cfg.evaluation.subsystems.empty()) {
    for (const auto& a : renyi_subsystems(cfg.evaluation, n)) {
      EvalRow r;
      r.id = subsystem_id(a);
      r.exact = dense_renyi(unit, a);
      if (table) r.shadow = shadow_renyi(*table, a);
      if (in.sketch) r.sketch = tt_renyi2(*in.sketch, a);
      if (sketch_trace) r.sketch_rescaled = purity_to_renyi(tt_purity(*in.sketch, a) / (*sketch_trace * *sketch_trace));
      if (mle) r.mle = dense_renyi(*mle, a);
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string eval_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream out;
  out << "id,exact,shadow,sketch,sketch_rescaled,mle,err_shadow,err_sketch,err_sketch_rescaled,err_mle\n";
  auto cell = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  auto err = [](const std::optional<double>& v, double exact) {
    return v ? format_number(std::abs(*v - exact)) : std::string();
  };
  for (const auto& r : rows) {
    out << r.id << ',' << format_number(r.exact) << ',' << cell(r.shadow) << ',' << cell(r.sketch) << ','
        << cell(r.sketch_rescaled) << ',' << cell(r.mle) << ',' << err(r.shadow, r.exact) << ','
        << err(r.sketch, r.exact) << ',' << err(r.sketch_rescaled, r.exact) << ',' << err(r.mle, r.exact) << '\n';
  }
  return out.str();
}

std::string cmd_eval(const ExperimentConfig& cfg, const MPS& truth, const EvalInputs& in) {
  return eval_csv(evaluate(cfg, truth, in));
}

// ---- scaling -----------------------------------------------------------------

std::optional<double> loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("loglog_slope: size mismatch");
  std::set<double> distinct(x.begin(), x.end());
  if (distinct.size() < 2) return std::nullopt;
  const double k = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("loglog_slope: values must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (k * sxy - sx * sy) / (k * sxx - sx * sx);
}

ScalingResult run_scaling(const ExperimentConfig& cfg, int workers) {
  cfg.validate();
  if (cfg.scaling.counts.empty()) throw std::invalid_argument("scaling: no counts given");
  const auto family = family_for(cfg);

  struct Trial {
    MPS psi;
    TTCoeff truth;
    RankRule rule;
  };
  std::vector<Trial> trials;
  for (int s = 0; s < cfg.scaling.seeds; ++s) {
    ModelConfig m = cfg.model;
    m.seed = cfg.model.seed + static_cast<std::uint64_t>(s);
    auto st = make_model_state(m);
    auto rule = rank_rule_for(cfg.sketch, family, &st.psi);
    auto truth = mps_to_tt_coeff(st.psi);
    trials.push_back(Trial{std::move(st.psi), std::move(truth), std::move(rule)});
  }

  ScalingResult out;
  std::vector<double> xs, ys;
  for (std::size_t ci = 0; ci < cfg.scaling.counts.size(); ++ci) {
    const std::size_t count = cfg.scaling.counts[ci];
    std::vector<double> errs;
    for (int s = 0; s < cfg.scaling.seeds; ++s) {
      const auto& t = trials[static_cast<std::size_t>(s)];
      const auto seed = hash_key(cfg.shadow.seed, count, static_cast<std::uint64_t>(s));
      const auto batch = sample_shadows(t.psi, count, cfg.shadow.w_groups, seed, workers);
      TomographyOptions opts;
      opts.rank_rule = t.rule;
      opts.median_of_means = cfg.sketch.median_of_means;
      opts.workers = workers;
      const auto rep = sketch_tomography(TraceTable(batch), family, opts);
      errs.push_back(tt_frobenius_distance(rep.recovered, t.truth));
    }
    double mean = 0;
    for (double e : errs) mean += e;
    mean /= static_cast<double>(errs.size());
    double var = 0;
    for (double e : errs) var += (e - mean) * (e - mean);
    const double sd = errs.size() > 1 ? std::sqrt(var / static_cast<double>(errs.size() - 1)) : 0.0;
    out.rows.push_back(ScalingRow{count, mean, sd / std::sqrt(static_cast<double>(errs.size()))});
    xs.push_back(static_cast<double>(count));
    ys.push_back(mean);
  }
  out.slope = loglog_slope(xs, ys);
  return out;
}

std::string scaling_csv(const ScalingResult& r) {
  std::ostringstream out;
  out << "count,mean_error,std_error,slope\n";
  for (const auto& row : r.rows) {
    out << row.count << ',' << format_number(row.mean_error) << ',' << format_number(row.std_error) << ','
        << (r.slope ? format_number(*r.slope) : std::string()) << '\n';
  }
  return out.str();
}

std::string cmd_scaling(const ExperimentConfig& cfg, int workers) { return scaling_csv(run_scaling(cfg, workers)); }

}  // namespace sketchtomo
