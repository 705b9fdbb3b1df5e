// charstoch: command-line runner for the stochastic-characteristics
// solvers. Exit codes: 0 success, 2 configuration error, 3 numerical
// failure; errors are reported as one JSON object on stderr.

#include <charstoch/charstoch.hpp>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace charstoch;

namespace {

struct GlobalOptions {
  std::string config;
  std::string out = ".";
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;
};

class Runner {
public:
  Runner(const GlobalOptions& opt, std::string subcommand) : opt_(opt), sub_(std::move(subcommand)) {
    std::ifstream in(opt.config, std::ios::binary);
    if (!in) throw SchemaError("cannot read config file '" + opt.config + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    ProblemConfig cfg = parse_config(ss.str());
    if (opt.seed) cfg.rng_seed = *opt.seed;
    spec_ = std::make_unique<ProblemSpec>(build_problem(cfg));
    fs::create_directories(opt.out);
    start_ = std::chrono::steady_clock::now();
    spdlog::info("{}: loaded {} (n = {}, sigma = {})", sub_, opt.config, spec_->n(), spec_->sigma());
  }

  const ProblemSpec& spec() const { return *spec_; }

  void write(const std::string& name, const std::string& content) {
    const fs::path p = fs::path(opt_.out) / name;
    std::ofstream f(p, std::ios::binary);
    if (!f) throw SchemaError("cannot write '" + p.string() + "'");
    f << content;
    files_.push_back(name);
    spdlog::info("wrote {}", p.string());
  }

  void finish() {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    nlohmann::json m;
    m["subcommand"] = sub_;
    m["config"] = opt_.config;
    m["out"] = opt_.out;
    m["spec_digest"] = digest(config_to_json(spec_->config()).dump());
    m["version"] = kVersion;
    m["duration_s"] = secs;
    m["files"] = files_;
    std::ofstream f(fs::path(opt_.out) / "manifest.json", std::ios::binary);
    f << m.dump(2) << "\n";
  }

private:
  // FNV-1a 64-bit of the canonical config text.
  static std::string digest(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  GlobalOptions opt_;
  std::string sub_;
  std::unique_ptr<ProblemSpec> spec_;
  std::vector<std::string> files_;
  std::chrono::steady_clock::time_point start_;
};

void require_before_blowup(const ProblemSpec& spec, double t) {
  if (t == 0.0) return;
  const BlowupReport b = blow_up_time(spec);
  if (b.finite && t >= b.t_star)
    throw NearBlowup("t = " + fmt_num(t) + " is not before the blow-up time " + fmt_num(b.t_star));
}

std::vector<Resolution> parse_resolutions(const std::vector<std::string>& items) {
  std::vector<Resolution> out;
  for (const auto& s : items) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw SchemaError("resolution '" + s + "' must be h:dt");
    try {
      out.push_back({std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))});
    } catch (const std::exception&) {
      throw SchemaError("resolution '" + s + "' must be h:dt");
    }
  }
  return out;
}

int report_error(const std::string& kind, const std::string& message, int code) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_logger_st("charstoch");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* lvl = std::getenv("CHARSTOCH_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));

  CLI::App app{"Stochastic-characteristics solvers for scalar conservation laws"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "Problem config (JSON)")->required();
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker cap (0 = all cores)");
  app.add_option("--seed", g.seed, "RNG seed override");

  auto* solve = app.add_subcommand("solve", "Field grids at each time point");
  std::string method = "quadrature";
  std::vector<double> times;
  std::size_t particles = 100000;
  double bandwidth = 0.0;
  std::size_t steps = 0;
  bool dump = false;
  solve->add_option("--method", method)->check(CLI::IsMember({"quadrature", "characteristics", "montecarlo"}));
  solve->add_option("--t", times, "Times (default: config time_points)")->delimiter(',');
  solve->add_option("--particles", particles, "Monte Carlo particle count");
  solve->add_option("--bandwidth", bandwidth, "Monte Carlo kernel bandwidth (default rule if 0)");
  solve->add_option("--steps", steps, "Euler-Maruyama steps (0 = exact sampling)");
  solve->add_flag("--dump-ensemble", dump, "Write the particle ensemble CSV");

  auto* blowup = app.add_subcommand("blowup", "Gradient blow-up time");

  auto* converge = app.add_subcommand("converge", "Errors against the classical solution as sigma -> 0");
  std::vector<double> sigmas;
  double t_eval = 0.0;
  std::string compare = "characteristics";
  converge->add_option("--sigmas", sigmas)->delimiter(',')->required();
  converge->add_option("--t", t_eval)->required();
  converge->add_option("--compare", compare)->check(CLI::IsMember({"characteristics"}));

  auto* residuals = app.add_subcommand("residuals", "Balance-law residuals under refinement");
  std::string system = "sigma";
  std::vector<double> window;
  std::vector<std::string> res_text;
  residuals->add_option("--system", system)->check(CLI::IsMember({"sigma", "pressureless"}));
  residuals->add_option("--window", window, "t0,t1")->delimiter(',')->expected(2)->required();
  residuals->add_option("--resolutions", res_text, "h:dt list, coarse to fine")->delimiter(',')->required();

  auto* iterms = app.add_subcommand("iterms", "Sup-norms of the correction integrals per sigma");
  iterms->add_option("--sigmas", sigmas)->delimiter(',')->required();
  iterms->add_option("--t", t_eval)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report_error("UsageError", e.what(), 2);
  }

  set_max_threads(g.threads);
  try {
    if (*solve) {
      Runner run(g, "solve");
      const ProblemSpec& spec = run.spec();
      if (times.empty()) times = spec.time_points();
      std::optional<ParticleEnsemble> init;
      for (std::size_t k = 0; k < times.size(); ++k) {
        const double t = times[k];
        const std::string stem = "solve_" + method + "_t" + std::to_string(k) + "_";
        if (method == "quadrature") {
          for (FieldKind f : {FieldKind::Rho, FieldKind::U, FieldKind::A})
            run.write(stem + field_name(f) + ".csv", field_grid_csv(eval_field_grid(spec, t, f)));
        } else if (method == "characteristics") {
          require_before_blowup(spec, t);
          for (FieldKind f : {FieldKind::Rho, FieldKind::U, FieldKind::A})
            run.write(stem + field_name(f) + ".csv", field_grid_csv(char_field_grid(spec, t, f)));
        } else {
          if (!init) init = sample_initial(spec, particles);
          const ParticleEnsemble ens = steps ? evolve_em(*init, spec, t, steps) : evolve_exact(*init, spec, t);
          const double h = bandwidth > 0.0 ? bandwidth : default_bandwidth(spec, t);
          const auto [rho, u] = estimate_field_grids(ens, spec, h);
          run.write(stem + "rho.csv", field_grid_csv(rho));
          run.write(stem + "u.csv", field_grid_csv(u));
          if (dump) run.write(stem + "ensemble.csv", ensemble_csv(ens));
        }
      }
      run.finish();
    } else if (*blowup) {
      Runner run(g, "blowup");
      run.write("blowup.json", blowup_json(blow_up_time(run.spec())).dump(2) + "\n");
      run.finish();
    } else if (*converge) {
      Runner run(g, "converge");
      run.write("converge.csv", convergence_csv(convergence_table(run.spec(), sigmas, t_eval)));
      run.finish();
    } else if (*residuals) {
      Runner run(g, "residuals");
      const Interval w{window.at(0), window.at(1)};
      const auto res = parse_resolutions(res_text);
      const auto reps = system == "sigma"
                            ? residual_refinement(run.spec(), w, res, residual_sigma_system)
                            : residual_refinement(run.spec(), w, res, residual_pressureless);
      run.write("residuals_" + system + ".csv", residual_csv(reps));
      run.finish();
    } else if (*iterms) {
      Runner run(g, "iterms");
      run.write("iterms.csv", iterm_csv(i_term_persistence(run.spec(), sigmas, t_eval)));
      run.finish();
    }
  } catch (const Error& e) {
    return report_error(e.kind(), e.what(), e.category() == ErrorCategory::Config ? 2 : 3);
  } catch (const std::exception& e) {
    return report_error("InternalError", e.what(), 3);
  }
  return 0;
}
