#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <unsupported/Eigen/SparseExtra>

#include "ppt/bounds.hpp"
#include "ppt/config.hpp"
#include "ppt/ctmc.hpp"
#include "ppt/engine.hpp"
#include "ppt/error.hpp"
#include "ppt/intensity.hpp"
#include "ppt/rng.hpp"
#include "ppt/sample.hpp"
#include "ppt/transport.hpp"
#include "ppt/validate.hpp"

namespace ppt::cli {

enum ExitCode : int { ok = 0, usage = 1, validation_failed = 2 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, path + ": " + e.what());
  }
}

/// Opens `path` for writing, or hands back `fallback` when path is empty.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw UsageError("cannot write '" + path + "'");
      out_ = &file_;
    }
  }
  std::ostream& stream() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

/// {"rate": c} or {"breaks": [...], "values": [...]}.
inline IntensityFunction intensity_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("rate")) return IntensityFunction::constant(j.at("rate").get<double>());
    return IntensityFunction::piecewise_constant(j.at("breaks").get<std::vector<double>>(),
                                                 j.at("values").get<std::vector<double>>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse_error, std::string("intensity: ") + e.what());
  }
}

inline std::vector<Configuration> read_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  std::vector<Configuration> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back(configuration_from_json(j.is_object() ? j.at("points") : j));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse_error, path + ": " + e.what());
    }
  }
  if (out.empty()) throw UsageError("'" + path + "' holds no samples");
  return out;
}

inline void emit(std::ostream& os, const nlohmann::json& j) { os << j.dump(2) << '\n'; }

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Distance bounds between point-process laws", "ppt_cli"};
  app.set_config("--config", "", "TOML/INI file with option values (flags on the command line win)");
  app.require_subcommand(1);

  std::function<int()> action;
  auto bind = [&](CLI::App* sub, std::function<int()> f) {
    sub->callback([&action, f = std::move(f)] { action = f; });
  };

  // simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Draw samples (one JSON object per line)");
  simulate->require_subcommand(1);
  struct {
    double rate = 0.0, T = 1.0;
    std::string intensity, model, out;
    std::size_t n = 1;
    std::uint64_t seed = 0;
  } sim;
  auto* sim_poisson = simulate->add_subcommand("poisson", "Poisson process on [0, T]");
  auto* sim_mmpp = simulate->add_subcommand("mmpp", "Markov-modulated Poisson process on [0, T]");
  for (auto* s : {sim_poisson, sim_mmpp}) {
    s->add_option("--T", sim.T, "Horizon")->check(CLI::PositiveNumber);
    s->add_option("--n", sim.n, "Number of samples")->check(CLI::PositiveNumber);
    s->add_option("--seed", sim.seed, "64-bit seed")->required();
    s->add_option("--out", sim.out, "Output file (default stdout)");
  }
  auto* rate_opt = sim_poisson->add_option("--rate", sim.rate, "Constant intensity");
  auto* int_opt = sim_poisson->add_option("--intensity", sim.intensity, "Intensity JSON file");
  rate_opt->excludes(int_opt);
  sim_mmpp->add_option("--model", sim.model, "MMPP model JSON")->required();

  bind(sim_poisson, [&] {
    if (sim.intensity.empty() && !(sim.rate > 0.0)) throw UsageError("--rate or --intensity is required");
    const auto h = sim.intensity.empty() ? IntensityFunction::constant(sim.rate)
                                         : intensity_from_json(read_json_file(sim.intensity));
    const auto w = Window::horizon(sim.T);
    Sink sink(sim.out, out);
    for (std::size_t i = 0; i < sim.n; ++i) {
      Rng rng = Rng(sim.seed).split(i);
      const auto c = sample_poisson_inhomogeneous(h, w, rng);
      sink.stream() << nlohmann::json{{"sample", i}, {"points", to_json_value(c)}}.dump() << '\n';
    }
    return ok;
  });
  bind(sim_mmpp, [&] {
    const auto model = ctmc_model_from_json(read_json_file(sim.model));
    Sink sink(sim.out, out);
    for (std::size_t i = 0; i < sim.n; ++i) {
      Rng rng = Rng(sim.seed).split(i);
      const auto s = sample_mmpp(model, sim.T, rng);
      nlohmann::json path{{"initial", s.path.initial_state()},
                          {"jump_times", s.path.jump_times()},
                          {"states", s.path.states()}};
      sink.stream() << nlohmann::json{{"sample", i}, {"path", path}, {"points", to_json_value(s.points)}}.dump()
                    << '\n';
    }
    return ok;
  });

  // stationary ---------------------------------------------------------------
  auto* stationary = app.add_subcommand("stationary", "Stationary law and rate summaries of a model");
  std::string stat_model;
  stationary->add_option("--model", stat_model, "MMPP model JSON")->required();
  bind(stationary, [&] {
    const auto model = ctmc_model_from_json(read_json_file(stat_model));
    const auto& pi = model.stationary();
    nlohmann::json j{{"pi", std::vector<double>(pi.data(), pi.data() + pi.size())},
                     {"mean_rate", mean_rate(model)},
                     {"second_moment_rate", second_moment_rate(model)},
                     {"variance_rate", variance_rate(model)}};
    j["burstiness"] = mean_rate(model) > 0.0 ? nlohmann::json(burstiness(model)) : nlohmann::json(nullptr);
    emit(out, j);
    return ok;
  });

  // bound ---------------------------------------------------------------------
  auto* bound = app.add_subcommand("bound", "Evaluate a distance bound (BoundReport JSON)");
  bound->require_subcommand(1);
  struct {
    std::string variant = "derived", model, engine, intensity;
    double C = 1.0, lambda = 1.0, T = 1.0, h = 1.0, ref = 1.0;
    std::vector<double> hv;
    std::size_t paths = 10000, mc = 0, inner = 1;
    std::uint64_t seed = 0;
  } bo;
  auto* b_poisson = bound->add_subcommand("poisson", "Poisson(ref) against Poisson(h) on [0, T]");
  auto* b_mmpp = bound->add_subcommand("mmpp", "MMPP against Poisson(lambda) on [0, T]");
  auto* b_res = bound->add_subcommand("resolvent", "Resolvent bound on a finite-carrier engine");
  // --h is taken by the target intensity, so help is long-form only here.
  for (auto* s : {b_poisson, b_res}) s->set_help_flag("--help", "Print this help message and exit");
  for (auto* s : {b_poisson, b_mmpp, b_res})
    s->add_option("--C", bo.C, "Constant in front of the bound")->check(CLI::PositiveNumber);
  for (auto* s : {b_poisson, b_mmpp})
    s->add_option("--variant", bo.variant, "paper|derived")->check(CLI::IsMember({"paper", "derived"}));
  b_poisson->add_option("--T", bo.T, "Horizon")->check(CLI::PositiveNumber);
  auto* h_opt = b_poisson->add_option("--h", bo.h, "Constant target intensity");
  b_poisson->add_option("--intensity", bo.intensity, "Target intensity JSON file")->excludes(h_opt);
  b_poisson->add_option("--ref", bo.ref, "Reference intensity")->check(CLI::PositiveNumber);
  b_mmpp->add_option("--model", bo.model, "MMPP model JSON")->required();
  b_mmpp->add_option("--lambda", bo.lambda, "Poisson intensity")->required()->check(CLI::PositiveNumber);
  b_mmpp->add_option("--T", bo.T, "Horizon")->required()->check(CLI::PositiveNumber);
  b_mmpp->add_option("--paths", bo.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
  b_mmpp->add_option("--seed", bo.seed, "64-bit seed")->required();
  b_res->add_option("--engine", bo.engine, "Engine JSON {weights, K}")->required();
  b_res->add_option("--h", bo.hv, "Density ratio per atom")->required()->delimiter(',');
  auto* mc_opt = b_res->add_option("--mc", bo.mc, "Monte Carlo outer samples (exact solve if absent)");
  b_res->add_option("--inner", bo.inner, "Resolvent draws per outer sample")->check(CLI::PositiveNumber);
  auto* res_seed = b_res->add_option("--seed", bo.seed, "64-bit seed");
  mc_opt->needs(res_seed);

  bind(b_poisson, [&] {
    const auto h = bo.intensity.empty() ? IntensityFunction::constant(bo.h)
                                        : intensity_from_json(read_json_file(bo.intensity));
    emit(out, to_json_value(poisson_bound_closed_form(h, Window::horizon(bo.T), bo.ref,
                                                      parse_variant(bo.variant), bo.C)));
    return ok;
  });
  bind(b_mmpp, [&] {
    const auto model = ctmc_model_from_json(read_json_file(bo.model));
    emit(out, to_json_value(mmpp_bound_mc(model, bo.lambda, bo.T, parse_variant(bo.variant), bo.paths,
                                          bo.seed, bo.C)));
    return ok;
  });
  bind(b_res, [&] {
    const auto model = finite_carrier_from_json(read_json_file(bo.engine));
    if (bo.mc > 0) {
      Rng rng(bo.seed);
      emit(out, to_json_value(resolvent_bound_mc(model, bo.hv, bo.mc, rng, bo.C, bo.inner)));
    } else {
      const Engine engine(model);
      emit(out, to_json_value(resolvent_bound_exact(engine, bo.hv, bo.C)));
    }
    return ok;
  });

  // optimize ----------------------------------------------------------------
  auto* optimize = app.add_subcommand("optimize", "Choose the Poisson intensity for an MMPP bound");
  struct {
    std::string model, mode = "asymptotic", variant = "derived";
    double T = 1.0;
    std::size_t paths = 10000;
    std::optional<std::uint64_t> seed;
  } op;
  optimize->add_option("--model", op.model, "MMPP model JSON")->required();
  optimize->add_option("--T", op.T, "Horizon")->required()->check(CLI::PositiveNumber);
  optimize->add_option("--mode", op.mode, "asymptotic|finite_T_mc")
      ->check(CLI::IsMember({"asymptotic", "finite_T_mc"}));
  optimize->add_option("--paths", op.paths, "Monte Carlo paths (finite_T_mc)")->check(CLI::PositiveNumber);
  optimize->add_option("--seed", op.seed, "64-bit seed (finite_T_mc)");
  optimize->add_option("--variant", op.variant, "paper|derived")->check(CLI::IsMember({"paper", "derived"}));
  bind(optimize, [&] {
    const auto model = ctmc_model_from_json(read_json_file(op.model));
    if (op.mode == "asymptotic") {
      auto j = to_json_value(optimize_lambda(model, op.T));
      j["asymptotic_bound"] = asymptotic_bound(model, op.T);
      emit(out, j);
    } else {
      if (!op.seed) throw UsageError("--seed is required for --mode finite_T_mc");
      FiniteHorizonObjective f;
      f.n_paths = op.paths;
      f.seed = *op.seed;
      f.variant = parse_variant(op.variant);
      emit(out, to_json_value(optimize_lambda(model, op.T, f)));
    }
    return ok;
  });

  // estimate ----------------------------------------------------------------
  auto* estimate = app.add_subcommand("estimate", "Transport distance estimates");
  estimate->set_help_flag("--help", "Print this help message and exit");
  struct {
    std::string a, b, metric = "d1", cost_out, engine, plan_out;
    double d0 = 1.0, rate_a = 1.0, rate_b = 1.0, T = 1.0;
    std::size_t n = 500, bootstrap = 50;
    std::vector<double> h;
    std::optional<std::uint64_t> seed;
    bool coupled = false;
  } es;
  auto* a_opt = estimate->add_option("--a", es.a, "Samples of the first law (JSON lines)");
  auto* b_opt = estimate->add_option("--b", es.b, "Samples of the second law (JSON lines)");
  a_opt->needs(b_opt);
  b_opt->needs(a_opt);
  auto* coupled_flag = estimate->add_flag("--coupled", es.coupled,
                                          "Draw coupled Poisson(rate-a), Poisson(rate-b) samples on [0, T]");
  coupled_flag->excludes(a_opt);
  estimate->add_option("--rate-a", es.rate_a, "First intensity (coupled)")->check(CLI::NonNegativeNumber);
  estimate->add_option("--rate-b", es.rate_b, "Second intensity (coupled)")->check(CLI::NonNegativeNumber);
  estimate->add_option("--T", es.T, "Horizon (coupled)")->check(CLI::PositiveNumber);
  estimate->add_option("--n", es.n, "Samples per law (coupled)")->check(CLI::PositiveNumber);
  auto* eng_opt = estimate->add_option("--engine", es.engine,
                                       "Exact transport between mu and L mu on this engine");
  eng_opt->excludes(a_opt)->excludes(coupled_flag);
  estimate->add_option("--h", es.h, "Density ratio per atom (engine)")->delimiter(',');
  estimate->add_option("--metric", es.metric, "d1|d2")->check(CLI::IsMember({"d1", "d2"}));
  estimate->add_option("--d0", es.d0, "Point-distance truncation for d2")->check(CLI::PositiveNumber);
  estimate->add_option("--bootstrap", es.bootstrap, "Bootstrap resamples")->check(CLI::Range(50, 100000));
  estimate->add_option("--seed", es.seed, "64-bit seed");
  estimate->add_option("--cost-out", es.cost_out, "Write the cost matrix as CSV");
  estimate->add_option("--plan-out", es.plan_out, "Write the transport plan as CSV (engine)");
  bind(estimate, [&] {
    if (!es.engine.empty()) {
      const auto model = finite_carrier_from_json(read_json_file(es.engine));
      if (es.h.size() != model.atoms()) throw UsageError("--h needs one value per engine atom");
      const Engine engine(model);
      std::vector<CountVector> states;
      for (std::size_t k = 0; k < model.state_count(); ++k) states.push_back(model.counts(k));
      const auto cost = cost_matrix(states, states);
      const auto mu = DiscreteLaw::on_grid(model, engine.reference_law());
      const auto nu = DiscreteLaw::on_grid(
          model, engine.reference_law().cwiseProduct(girsanov_table(model, es.h).values()));
      const auto res = exact_kantorovich(mu, nu, cost);
      if (!es.cost_out.empty()) {
        Sink s(es.cost_out, out);
        write_cost_csv(s.stream(), cost);
      }
      if (!es.plan_out.empty()) {
        Sink s(es.plan_out, out);
        write_plan_csv(s.stream(), res.plan);
      }
      emit(out, {{"metric", "d1"},
                 {"method", "exact"},
                 {"value", res.value},
                 {"dual_value", res.dual_value},
                 {"gap", res.gap},
                 {"states", model.state_count()}});
      return ok;
    }
    if (!es.seed) throw UsageError("--seed is required for empirical estimates");
    Rng rng(*es.seed);
    std::vector<Configuration> a, b;
    if (es.coupled) {
      const auto w = Window::horizon(es.T);
      const auto ha = IntensityFunction::constant(es.rate_a), hb = IntensityFunction::constant(es.rate_b);
      Rng draw = rng.split(0);
      for (std::size_t i = 0; i < es.n; ++i) {
        auto [x, y] = sample_poisson_coupled(ha, hb, w, draw);
        a.push_back(std::move(x));
        b.push_back(std::move(y));
      }
      rng = rng.split(1);
    } else if (!es.a.empty()) {
      a = read_samples(es.a);
      b = read_samples(es.b);
    } else {
      throw UsageError("one of --a/--b, --coupled or --engine is required");
    }
    const auto spec = es.metric == "d1" ? GroundMetricSpec::total_variation() : GroundMetricSpec::matching(es.d0);
    const auto r = empirical_rubinstein(EmpiricalLaw(a), EmpiricalLaw(b), spec, rng, es.bootstrap);
    if (!es.cost_out.empty()) {
      Sink s(es.cost_out, out);
      write_cost_csv(s.stream(), cost_matrix(a, b, spec));
    }
    emit(out, {{"metric", es.metric},
               {"method", "assignment"},
               {"estimate", r.estimate},
               {"bootstrap_se", r.bootstrap_se},
               {"n", r.n},
               {"n_bootstrap", r.n_bootstrap}});
    return ok;
  });

  // validate ------------------------------------------------------------------
  auto* validate = app.add_subcommand("validate", "Run the engine verification suites");
  struct {
    std::string engine, generator_out, residuals_out;
    std::uint64_t seed = 1;
    std::size_t mc = 20000;
  } va;
  validate->add_option("--engine", va.engine, "Engine JSON {weights, K}")->required();
  validate->add_option("--seed", va.seed, "64-bit seed for the randomized suites (default 1)");
  validate->add_option("--mc", va.mc, "Samples for the Monte Carlo resolvent check")->check(CLI::PositiveNumber);
  validate->add_option("--generator-out", va.generator_out, "Write the generator as Matrix Market");
  validate->add_option("--residuals-out", va.residuals_out, "Write chaos residuals as CSV");
  bind(validate, [&] {
    const Engine engine(finite_carrier_from_json(read_json_file(va.engine)));
    ValidationOptions opt;
    opt.seed = va.seed;
    opt.mc_samples = va.mc;
    const auto rep = validate_engine(engine, opt);
    if (!va.generator_out.empty() && !Eigen::saveMarket(engine.generator(), va.generator_out))
      throw UsageError("cannot write '" + va.generator_out + "'");
    if (!va.residuals_out.empty()) {
      Sink s(va.residuals_out, out);
      write_residuals_csv(s.stream(), rep);
    }
    emit(out, to_json_value(rep));
    return rep.ok() ? ok : validation_failed;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }
  try {
    return action ? action() : usage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return usage;
  } catch (const Error& e) {
    err << e.what() << '\n';
    return usage;
  }
}

}  // namespace ppt::cli
