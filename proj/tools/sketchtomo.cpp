// Command-line driver for the experiment pipeline.

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <optional>

#include "sketchtomo/harness.hpp"

using namespace sketchtomo;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int workers = 1;
};

void add_common(CLI::App* app, Common& c, bool with_seed, bool with_workers) {
  app->add_option("--config", c.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output path")->required();
  if (with_seed) app->add_option("--seed", c.seed, "Override the command's seed");
  if (with_workers) app->add_option("--workers", c.workers, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
}

MPS load_state(const std::string& path) { return state_from_json(read_json_file(path)); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch tomography experiments on small spin chains"};
  app.require_subcommand(1);

  Common gen, sh, tomo, mle, ev, sc;
  std::string sh_state, tomo_shadow, tomo_state, mle_shadow, mle_state, mle_trace, ev_state, ev_report, ev_shadow,
      ev_mle;
  bool noiseless = false, timings = false;

  auto* c_gen = app.add_subcommand("gen-state", "Prepare the target state");
  add_common(c_gen, gen, true, false);

  auto* c_sh = app.add_subcommand("shadow", "Simulate random Pauli measurements");
  add_common(c_sh, sh, true, true);
  c_sh->add_option("--state", sh_state, "State file from gen-state")->required()->check(CLI::ExistingFile);

  auto* c_tomo = app.add_subcommand("tomo", "Sketch tomography from a shadow file");
  add_common(c_tomo, tomo, true, true);
  c_tomo->add_option("--shadow", tomo_shadow, "Shadow file")->check(CLI::ExistingFile);
  c_tomo->add_option("--state", tomo_state, "State file (noiseless mode, or ranks = \"truth\")")->check(CLI::ExistingFile);
  c_tomo->add_flag("--noiseless", noiseless, "Use exact moments of --state instead of shadows");
  c_tomo->add_flag("--timings", timings, "Record wall-clock timings in the report");

  auto* c_mle = app.add_subcommand("mle", "Maximum-likelihood MPS baseline");
  add_common(c_mle, mle, true, true);
  c_mle->add_option("--shadow", mle_shadow, "Shadow file")->required()->check(CLI::ExistingFile);
  c_mle->add_option("--state", mle_state, "True state (for \"truth\" settings)")->check(CLI::ExistingFile);
  c_mle->add_option("--trace", mle_trace, "NLL trace CSV (default: <out>.trace.csv)");

  auto* c_ev = app.add_subcommand("eval", "Compare estimates against exact values");
  add_common(c_ev, ev, false, true);
  c_ev->add_option("--state", ev_state, "True state")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--report", ev_report, "Tomography report")->check(CLI::ExistingFile);
  c_ev->add_option("--shadow", ev_shadow, "Shadow file")->check(CLI::ExistingFile);
  c_ev->add_option("--mle-state", ev_mle, "MLE state")->check(CLI::ExistingFile);

  auto* c_sc = app.add_subcommand("scaling", "Reconstruction error against sample count");
  add_common(c_sc, sc, true, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_gen->parsed()) {
      auto cfg = read_config_file(gen.config);
      if (gen.seed) cfg.model.seed = *gen.seed;
      write_json_file(gen.out, cmd_gen_state(cfg));
    } else if (c_sh->parsed()) {
      auto cfg = read_config_file(sh.config);
      if (sh.seed) cfg.shadow.seed = *sh.seed;
      write_shadow_file(sh.out, cmd_shadow(cfg, load_state(sh_state), sh.workers));
    } else if (c_tomo->parsed()) {
      auto cfg = read_config_file(tomo.config);
      if (tomo.seed) cfg.sketch.seed = *tomo.seed;
      std::optional<MPS> psi;
      std::optional<ShadowBatch> batch;
      if (!tomo_state.empty()) psi = load_state(tomo_state);
      if (!noiseless) {
        if (tomo_shadow.empty()) throw std::invalid_argument("tomo: --shadow is required unless --noiseless is given");
        batch = read_shadow_file(tomo_shadow);
      } else if (!psi) {
        throw std::invalid_argument("tomo: --noiseless needs --state");
      }
      TomoInputs in;
      in.batch = batch ? &*batch : nullptr;
      in.state = psi ? &*psi : nullptr;
      in.noiseless = noiseless;
      in.timings = timings;
      in.workers = tomo.workers;
      write_json_file(tomo.out, cmd_tomo(cfg, in));
    } else if (c_mle->parsed()) {
      auto cfg = read_config_file(mle.config);
      if (mle.seed) {
        if (!cfg.mle) cfg.mle = MLESection{};
        cfg.mle->seed = *mle.seed;
      }
      std::optional<MPS> psi;
      if (!mle_state.empty()) psi = load_state(mle_state);
      const auto batch = read_shadow_file(mle_shadow);
      const auto res = cmd_mle(cfg, batch, psi ? &*psi : nullptr, mle.workers);
      write_json_file(mle.out, res.state);
      write_text_file(mle_trace.empty() ? mle.out + ".trace.csv" : mle_trace, res.trace_csv);
    } else if (c_ev->parsed()) {
      const auto cfg = read_config_file(ev.config);
      const auto psi = load_state(ev_state);
      std::optional<TTCoeff> sketch;
      std::optional<ShadowBatch> batch;
      std::optional<MPS> mle_psi;
      if (!ev_report.empty()) sketch = report_from_json(read_json_file(ev_report)).recovered;
      if (!ev_shadow.empty()) batch = read_shadow_file(ev_shadow);
      if (!ev_mle.empty()) mle_psi = load_state(ev_mle);
      EvalInputs in;
      in.batch = batch ? &*batch : nullptr;
      in.sketch = sketch ? &*sketch : nullptr;
      in.mle = mle_psi ? &*mle_psi : nullptr;
      in.workers = ev.workers;
      write_text_file(ev.out, cmd_eval(cfg, psi, in));
    } else if (c_sc->parsed()) {
      auto cfg = read_config_file(sc.config);
      if (sc.seed) cfg.shadow.seed = *sc.seed;
      write_text_file(sc.out, cmd_scaling(cfg, sc.workers));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
