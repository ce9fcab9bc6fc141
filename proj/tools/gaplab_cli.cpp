#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gaplab/gaplab.h"

namespace {

// Exit codes: 0 success, 1 usage or config error, 2 numerical failure.
constexpr int kUsage = 1;
constexpr int kNumerical = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code(int status) {
  switch (status) {
    case GAPLAB_ERR_INVALID_ARGUMENT:
    case GAPLAB_ERR_CONFIG:
    case GAPLAB_ERR_INVARIANT:
    case GAPLAB_ERR_IO:
      return kUsage;
    default:
      return kNumerical;
  }
}

void check(int status) {
  if (status != GAPLAB_OK) throw Failure{exit_code(status), gaplab_last_error()};
}

struct StringDeleter {
  void operator()(char* s) const { gaplab_string_free(s); }
};
using CString = std::unique_ptr<char, StringDeleter>;

std::string take(char* s) { return std::string(CString(s).get()); }

using Config = std::unique_ptr<gaplab_config, decltype(&gaplab_config_free)>;
using Field = std::unique_ptr<gaplab_field, decltype(&gaplab_field_free)>;
using Table = std::unique_ptr<gaplab_table, decltype(&gaplab_table_free)>;

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string table;
};

Config load_config(const Options& o) {
  gaplab_config* raw = nullptr;
  check(gaplab_config_load(o.config.c_str(), &raw));
  Config cfg(raw, gaplab_config_free);
  if (o.workers) check(gaplab_config_set(cfg.get(), "sweep.workers", std::to_string(*o.workers).c_str()));
  if (o.seed) {
    check(gaplab_config_set(cfg.get(), "barrier.seed", std::to_string(*o.seed).c_str()));
    check(gaplab_config_set(cfg.get(), "transform.seed", std::to_string(*o.seed).c_str()));
  }
  if (o.out) check(gaplab_config_set(cfg.get(), "output.dir", o.out->c_str()));
  for (const auto& kv : o.overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw Failure{kUsage, "--set expects section.key=value, got '" + kv + "'"};
    check(gaplab_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return cfg;
}

std::string get(const gaplab_config* cfg, const char* key) {
  char* v = nullptr;
  check(gaplab_config_get(cfg, key, &v));
  return take(v);
}

std::filesystem::path out_dir(const gaplab_config* cfg) {
  std::filesystem::path dir = get(cfg, "output.dir");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Failure{kUsage, "cannot create output directory '" + dir.string() + "': " + ec.message()};
  return dir;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Failure{kUsage, "cannot write '" + path.string() + "'"};
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kUsage, "cannot open '" + path.string() + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const gaplab_config* cfg, const char* command) {
  char* m = nullptr;
  check(gaplab_manifest(cfg, command, &m));
  return nlohmann::json::parse(take(m));
}

int cmd_solve(const Options& o) {
  Config cfg = load_config(o);
  auto dir = out_dir(cfg.get());
  gaplab_field* raw = nullptr;
  check(gaplab_solve(cfg.get(), &raw));
  Field field(raw, gaplab_field_free);
  check(gaplab_field_save(field.get(), (dir / "field.json").string().c_str()));
  char* s = nullptr;
  check(gaplab_field_summary(field.get(), &s));
  auto summary = nlohmann::json::parse(take(s));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  auto man = manifest(cfg.get(), "solve");
  man["outputs"] = {"field.json", "summary.json"};
  man["summary"] = summary;
  write_file(dir / "manifest.json", man.dump(2) + "\n");
  std::cout << "max|Du| = " << summary["max_grad"].get<double>() << "\n"
            << "energy = " << summary["energy"].get<double>() << "\n"
            << "iterations = " << summary["iterations"].get<int>() << "\n"
            << "converged = " << (summary["converged"].get<bool>() ? "yes" : "no") << "\n"
            << "container = " << (dir / "field.json").string() << "\n";
  if (!summary["converged"].get<bool>()) {
    std::cerr << "error: solver did not converge: " << summary["message"].get<std::string>() << "\n";
    return kNumerical;
  }
  return 0;
}

// Fits and plots the table; returns the fit report, or nullopt with a reason.
std::optional<nlohmann::json> fit_and_plot(const gaplab_config* cfg, const gaplab_table* table,
                                           const std::filesystem::path& dir, nlohmann::json& outputs,
                                           std::string& reason) {
  char* f = nullptr;
  int st = gaplab_table_fit(table, cfg, &f);
  if (st != GAPLAB_OK) {
    if (st != GAPLAB_ERR_INVALID_ARGUMENT) check(st);
    reason = gaplab_last_error();
    return std::nullopt;
  }
  auto report = nlohmann::json::parse(take(f));
  write_file(dir / "fit.json", report.dump(2) + "\n");
  outputs.push_back("fit.json");
  if (get(cfg, "output.plot") == "true") {
    char* svg = nullptr;
    char* csv = nullptr;
    check(gaplab_table_plot(table, cfg, &svg, &csv));
    write_file(dir / "rates.svg", take(svg));
    write_file(dir / "rates_plot.csv", take(csv));
    outputs.push_back("rates.svg");
    outputs.push_back("rates_plot.csv");
  }
  return report;
}

void print_fit(const nlohmann::json& report) {
  const auto& fit = report["fit"];
  std::cout << "slope = " << fit["slope"].get<double>() << " +/- " << fit["stderr"].get<double>()
            << " (R^2 = " << fit["r2"].get<double>() << ", " << fit["window"].size() << " points)\n";
  const auto& t = report["targets"];
  if (!t["lower_exponent"].is_null()) std::cout << "target lower = " << t["lower_exponent"].get<double>() << "\n";
  if (!t["upper_exponent"].is_null()) std::cout << "target upper = " << t["upper_exponent"].get<double>() << "\n";
}

int cmd_sweep(const Options& o) {
  Config cfg = load_config(o);
  auto dir = out_dir(cfg.get());
  gaplab_table* raw = nullptr;
  check(gaplab_sweep(cfg.get(), &raw));
  Table table(raw, gaplab_table_free);
  char* csv = nullptr;
  check(gaplab_table_csv(table.get(), &csv));
  write_file(dir / "rates.csv", take(csv));
  nlohmann::json outputs = {"rates.csv"};
  std::string reason;
  auto report = fit_and_plot(cfg.get(), table.get(), dir, outputs, reason);
  auto man = manifest(cfg.get(), "sweep");
  size_t rows = 0;
  check(gaplab_table_rows(table.get(), &rows));
  man["rows"] = rows;
  if (report) {
    man["fit"] = (*report)["fit"];
    man["targets"] = (*report)["targets"];
    if (get(cfg.get(), "sweep.check_resolution") == "true") {
      char* r = nullptr;
      check(gaplab_table_resolution(table.get(), cfg.get(), &r));
      man["resolution"] = nlohmann::json::parse(take(r));
    }
  } else {
    man["fit"] = nullptr;
    man["fit_skipped"] = reason;
  }
  man["outputs"] = outputs;
  outputs.push_back("manifest.json");
  write_file(dir / "manifest.json", man.dump(2) + "\n");
  std::cout << "rows = " << rows << "\n";
  if (report)
    print_fit(*report);
  else
    std::cout << "fit skipped: " << reason << "\n";
  if (man.contains("resolution"))
    std::cout << "under-resolved = " << (man["resolution"]["under_resolved"].get<bool>() ? "yes" : "no") << "\n";
  std::cout << "table = " << (dir / "rates.csv").string() << "\n";
  return 0;
}

int cmd_fit(const Options& o) {
  Config cfg = load_config(o);
  auto dir = out_dir(cfg.get());
  std::filesystem::path table_path = o.table.empty() ? dir / "rates.csv" : std::filesystem::path(o.table);
  gaplab_table* raw = nullptr;
  check(gaplab_table_load_csv(table_path.string().c_str(), &raw));
  Table table(raw, gaplab_table_free);
  nlohmann::json outputs = nlohmann::json::array();
  std::string reason;
  auto report = fit_and_plot(cfg.get(), table.get(), dir, outputs, reason);
  if (!report) throw Failure{kUsage, reason};
  // Append the fit to an existing manifest, or start one.
  nlohmann::json man;
  auto mpath = dir / "manifest.json";
  if (std::filesystem::exists(mpath)) {
    try {
      man = nlohmann::json::parse(read_file(mpath));
    } catch (const nlohmann::json::exception&) {
      throw Failure{kUsage, "existing manifest '" + mpath.string() + "' is not valid JSON"};
    }
  } else {
    man = manifest(cfg.get(), "fit");
  }
  man["fit"] = (*report)["fit"];
  man["targets"] = (*report)["targets"];
  man["fit_config_hash"] = manifest(cfg.get(), "fit")["config_hash"];
  write_file(mpath, man.dump(2) + "\n");
  print_fit(*report);
  return 0;
}

int cmd_certify(const Options& o) {
  Config cfg = load_config(o);
  auto dir = out_dir(cfg.get());
  char* j = nullptr;
  check(gaplab_certify(cfg.get(), &j));
  auto report = nlohmann::json::parse(take(j));
  report["config_hash"] = manifest(cfg.get(), "certify")["config_hash"];
  write_file(dir / "certificate.json", report.dump(2) + "\n");
  if (report["kind"] == "sign_certificate") {
    std::cout << "variant = " << report["spec"]["variant"].get<std::string>() << "\n"
              << "admissible = " << (report["admissible"].get<bool>() ? "yes" : "no") << "\n"
              << "samples = " << report["samples"]["interior"].get<std::size_t>() << " interior, "
              << report["samples"]["boundary"].get<std::size_t>() << " boundary\n"
              << "violations = " << report["violation_count"].get<std::size_t>() << "\n";
  } else {
    std::cout << "variant = " << report["spec"]["variant"].get<std::string>() << "\n"
              << "kappa measured = [" << report["kappa1_measured"].get<double>() << ", "
              << report["kappa2_measured"].get<double>() << "]\n"
              << "bound holds (s = 2) = " << report["fraction_s2"].get<double>() << " of "
              << report["count_s2"].get<std::size_t>() << "\n"
              << "bound holds (s = p) = " << report["fraction_sp"].get<double>() << " of "
              << report["count_sp"].get<std::size_t>() << "\n";
  }
  std::cout << "report = " << (dir / "certificate.json").string() << "\n";
  return 0;
}

int cmd_check_transform(const Options& o) {
  Config cfg = load_config(o);
  auto dir = out_dir(cfg.get());
  char* j = nullptr;
  check(gaplab_check_transform(cfg.get(), &j));
  auto report = nlohmann::json::parse(take(j));
  report["config_hash"] = manifest(cfg.get(), "check-transform")["config_hash"];
  write_file(dir / "transform.json", report.dump(2) + "\n");
  for (const auto& r : report["reports"])
    std::cout << "r = " << r["r"].get<double>() << ": C_jacobian = " << r["C_jacobian"].get<double>()
              << ", max|b~| = " << r["C_btilde"].get<double>() << ", r max|b~| = " << r["C_btilde_scaled"].get<double>()
              << "\n";
  if (!report["trend"].is_null())
    std::cout << "slope log C_jacobian vs log(1/r) = " << report["trend"]["C_jacobian_slope"].get<double>() << "\n"
              << "slope log max|b~| vs log(1/r) = " << report["trend"]["C_btilde_slope"].get<double>() << "\n";
  std::cout << "parallelism residual = " << report["parallelism_residual_max"].get<double>() << "\n"
            << "report = " << (dir / "transform.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for p-Laplace gradient blow-up in thin insulator gaps"};
  app.set_version_flag("--version", gaplab_version());
  app.require_subcommand(1);
  Options o;
  std::uint64_t seed = 0;
  int workers = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (overrides output.dir)");
    sub->add_option("--workers", workers, "Worker threads for sweeps (default GAPLAB_WORKERS)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", seed, "Seed for sampled certificates and transform checks");
    sub->add_option("--set", o.overrides, "Override a config value, section.key=value (repeatable)");
  };
  auto* solve = app.add_subcommand("solve", "Solve one gap problem and write the field container");
  auto* sweep = app.add_subcommand("sweep", "Run an epsilon sweep, write the rate table, fit and plot");
  auto* fit = app.add_subcommand("fit", "Fit and plot an existing rate table without re-solving");
  auto* certify = app.add_subcommand("certify", "Certify barrier signs or evaluate Bernstein quantities");
  auto* transform = app.add_subcommand("check-transform", "Measure the annular transform's coefficient bounds");
  for (auto* s : {solve, sweep, fit, certify, transform}) add_common(s);
  fit->add_option("--table", o.table, "Rate table CSV (default <out>/rates.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }
  if (workers > 0) o.workers = workers;
  for (auto* s : {solve, sweep, fit, certify, transform})
    if (s->count("--seed")) o.seed = seed;

  try {
    if (*solve) return cmd_solve(o);
    if (*sweep) return cmd_sweep(o);
    if (*fit) return cmd_fit(o);
    if (*certify) return cmd_certify(o);
    if (*transform) return cmd_check_transform(o);
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
  return kUsage;
}
