// Command-line front end for DDAE stability analysis and controller synthesis.
//
// Exit codes: 0 ok, 1 not strongly stable after synthesis, 2 parse or input
// error, 3 assumption violation, 4 infeasible barrier problem.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ddae/ddae.hpp"
#include "ddae/io.hpp"

namespace fs = std::filesystem;
using ddae::io::json;

namespace {

struct Config {
  std::string input;
  std::string command;
  int order = 0;
  double min_real_part = -ddae::kInf;
  int N = 0;
  int N_max = 400;
  std::uint64_t seed = 1;
  int starts = 5;
  double r = 1e-3;
  double gamma = 1.0 - 1e-3;
  std::string out;
  bool with_raw = false;
};

ddae::RootOptions root_options(const Config& cfg) {
  ddae::RootOptions o;
  o.minimal_real_part = cfg.min_real_part;
  o.N = cfg.N;
  o.N_max = cfg.N_max;
  return o;
}

void write_file(const Config& cfg, const std::string& name, const std::function<void(std::ostream&)>& body) {
  if (cfg.out.empty()) return;
  fs::create_directories(cfg.out);
  std::ofstream os(fs::path(cfg.out) / name);
  body(os);
}

int cmd_roots(const Config& cfg, const ddae::io::SystemFile& file, bool need_controller) {
  if (need_controller && !file.controller) throw ddae::io::ParseError("closed-loop-roots needs a \"controller\" block");
  const ddae::DdaeSystem sys = file.analysis_system();
  const ddae::RootSet rs = ddae::compute_roots(sys, root_options(cfg));
  write_file(cfg, "roots.csv", [&](std::ostream& os) { ddae::io::write_roots_csv(os, rs, cfg.with_raw); });
  json summary{{"count", rs.corrected.size()},
               {"abscissa", ddae::io::detail::number_or_string(rs.abscissa())},
               {"C_D", ddae::io::detail::number_or_string(rs.C_D)},
               {"N", rs.N_used},
               {"warning", rs.cd_ge_c ? "C_D>=c" : ""}};
  std::cout << summary.dump(2) << '\n';
  if (cfg.out.empty()) ddae::io::write_roots_csv(std::cout, rs, cfg.with_raw);
  return 0;
}

int cmd_report(const Config& cfg, const ddae::io::SystemFile& file) {
  const ddae::StrongStabilityReport r = ddae::strong_stability(file.analysis_system(), root_options(cfg));
  const json j = ddae::io::report_to_json(r);
  write_file(cfg, "report.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_stabilize(const Config& cfg, const ddae::io::SystemFile& file, bool barrier) {
  if (!file.plant) throw ddae::io::ParseError("synthesis needs a \"plant\" block");
  ddae::SolveOptions o;
  o.seed = cfg.seed;
  o.starts = cfg.starts;
  o.gamma = cfg.gamma;
  o.barrier_r = {cfg.r, cfg.r / 10.0, cfg.r / 100.0};
  o.roots = root_options(cfg);
  o.roots.cd_warning = false;
  const ddae::SynthesisResult res =
      barrier ? ddae::stabilization_barrier(*file.plant, cfg.order, o, file.fixed_mask, file.fixed_values)
              : ddae::stabilization_max(*file.plant, cfg.order, o, file.fixed_mask, file.fixed_values);
  const json doc = ddae::io::synthesis_to_json(*file.plant, res);
  write_file(cfg, "controller.sys", [&](std::ostream& os) { os << doc.dump(2) << '\n'; });
  write_file(cfg, "report.json", [&](std::ostream& os) { os << doc.at("report").dump(2) << '\n'; });
  write_file(cfg, "trace.csv", [&](std::ostream& os) { ddae::io::write_trace_csv(os, res.trace); });
  std::cout << doc.dump(2) << '\n';
  return res.report.strongly_stable ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  Config cfg;
  CLI::App app{"Stability analysis and fixed-order stabilization of delay-differential algebraic systems"};
  app.add_option("--input", cfg.input, "system file (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--command", cfg.command, "analysis or synthesis command")
      ->required()
      ->check(CLI::IsMember({"roots", "abscissa", "gamma0", "strong-stability", "stabilize-max",
                             "stabilize-barrier", "closed-loop-roots"}));
  app.add_option("--order", cfg.order, "controller order")->check(CLI::NonNegativeNumber);
  app.add_option("--min-real-part", cfg.min_real_part, "report roots with real part at least this");
  app.add_option("--N", cfg.N, "discretization points (0: heuristic)")->check(CLI::NonNegativeNumber);
  app.add_option("--Nmax", cfg.N_max, "cap on the heuristic number of points")->check(CLI::Range(5, 100000));
  app.add_option("--seed", cfg.seed, "random seed for synthesis");
  app.add_option("--starts", cfg.starts, "number of random initial controllers")->check(CLI::PositiveNumber);
  app.add_option("--r", cfg.r, "initial barrier weight")->check(CLI::PositiveNumber);
  app.add_option("--gamma", cfg.gamma, "bound on gamma0 in the barrier method")->check(CLI::Range(0.0, 1.0));
  app.add_option("--out", cfg.out, "output directory");
  app.add_flag("--with-raw", cfg.with_raw, "also list the uncorrected discretization roots");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    const ddae::io::SystemFile file = ddae::io::read_system_file(cfg.input);
    const std::string& c = cfg.command;
    if (c == "roots") return cmd_roots(cfg, file, false);
    if (c == "closed-loop-roots") return cmd_roots(cfg, file, true);
    if (c == "strong-stability") return cmd_report(cfg, file);
    if (c == "abscissa") {
      const double v = ddae::spectral_abscissa(file.analysis_system(), root_options(cfg));
      std::cout << json{{"c", ddae::io::detail::number_or_string(v)}}.dump() << '\n';
      return 0;
    }
    if (c == "gamma0") {
      const double v = ddae::gamma0(ddae::decompose(file.analysis_system()));
      std::cout << json{{"gamma0", v}}.dump() << '\n';
      return 0;
    }
    return cmd_stabilize(cfg, file, c == "stabilize-barrier");
  } catch (const ddae::io::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const ddae::AssumptionViolation& e) {
    std::cerr << "assumption violated: " << e.what() << '\n';
    return 3;
  } catch (const ddae::Infeasible& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 4;
  } catch (const ddae::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
