#include "gaplab/gaplab.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <string>

#include "gaplab/commands.hpp"
#include "gaplab/error.hpp"

struct gaplab_config {
  gaplab::RunConfig cfg;
};

struct gaplab_field {
  gaplab::DiscreteField field;
};

struct gaplab_table {
  gaplab::RateTable table;
};

namespace {

thread_local std::string last_error;

int status_of(gaplab::ErrorKind k) {
  switch (k) {
    case gaplab::ErrorKind::InvalidArgument:
      return GAPLAB_ERR_INVALID_ARGUMENT;
    case gaplab::ErrorKind::Config:
      return GAPLAB_ERR_CONFIG;
    case gaplab::ErrorKind::Domain:
      return GAPLAB_ERR_DOMAIN;
    case gaplab::ErrorKind::Invariant:
      return GAPLAB_ERR_INVARIANT;
    case gaplab::ErrorKind::Numerical:
      return GAPLAB_ERR_NUMERICAL;
    case gaplab::ErrorKind::Io:
      return GAPLAB_ERR_IO;
  }
  return GAPLAB_ERR_INTERNAL;
}

template <class F>
int guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return GAPLAB_OK;
  } catch (const gaplab::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("malformed document: ") + e.what();
    return GAPLAB_ERR_IO;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return GAPLAB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return GAPLAB_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return GAPLAB_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw gaplab::InvalidArgument(std::string(what) + " must not be null");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* gaplab_version(void) { return gaplab::kVersion; }

const char* gaplab_last_error(void) { return last_error.c_str(); }

const char* gaplab_status_name(int status) {
  switch (status) {
    case GAPLAB_OK:
      return "ok";
    case GAPLAB_ERR_INVALID_ARGUMENT:
      return "invalid argument";
    case GAPLAB_ERR_CONFIG:
      return "config error";
    case GAPLAB_ERR_DOMAIN:
      return "domain error";
    case GAPLAB_ERR_INVARIANT:
      return "invariant violation";
    case GAPLAB_ERR_NUMERICAL:
      return "numerical failure";
    case GAPLAB_ERR_IO:
      return "i/o error";
    default:
      return "internal error";
  }
}

void gaplab_string_free(char* s) { std::free(s); }

int gaplab_config_default(gaplab_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new gaplab_config{};
  });
}

int gaplab_config_load(const char* path, gaplab_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gaplab_config{gaplab::RunConfig::load(path)};
  });
}

int gaplab_config_parse(const char* text, gaplab_config** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = new gaplab_config{gaplab::RunConfig::parse(text)};
  });
}

int gaplab_config_set(gaplab_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    gaplab::RunConfig next = cfg->cfg;
    next.set(key, value);
    next.validate();
    cfg->cfg = std::move(next);
  });
}

int gaplab_config_get(const gaplab_config* cfg, const char* key, char** value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    *value = dup(cfg->cfg.get(key));
  });
}

int gaplab_config_hash(const gaplab_config* cfg, char** hex) {
  return guarded([&] {
    require(cfg, "config");
    require(hex, "hex");
    *hex = dup(cfg->cfg.hash());
  });
}

int gaplab_config_canonical(const gaplab_config* cfg, char** text) {
  return guarded([&] {
    require(cfg, "config");
    require(text, "text");
    *text = dup(cfg->cfg.canonical());
  });
}

int gaplab_config_to_ini(const gaplab_config* cfg, char** text) {
  return guarded([&] {
    require(cfg, "config");
    require(text, "text");
    *text = dup(cfg->cfg.to_ini());
  });
}

void gaplab_config_free(gaplab_config* cfg) { delete cfg; }

int gaplab_solve(const gaplab_config* cfg, gaplab_field** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    *out = new gaplab_field{gaplab::solve(cfg->cfg.geometry.build(), cfg->cfg.solver)};
  });
}

int gaplab_field_load(const char* path, gaplab_field** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    auto j = nlohmann::json::parse(gaplab::read_text_file(path));
    *out = new gaplab_field{gaplab::DiscreteField::from_json(j)};
  });
}

int gaplab_field_save(const gaplab_field* field, const char* path) {
  return guarded([&] {
    require(field, "field");
    require(path, "path");
    gaplab::write_text_file(path, field->field.to_json().dump() + "\n");
  });
}

int gaplab_field_converged(const gaplab_field* field, int* converged) {
  return guarded([&] {
    require(field, "field");
    require(converged, "converged");
    *converged = field->field.diagnostics.converged ? 1 : 0;
  });
}

int gaplab_field_size(const gaplab_field* field, size_t* nodes) {
  return guarded([&] {
    require(field, "field");
    require(nodes, "nodes");
    *nodes = field->field.size();
  });
}

int gaplab_field_values(const gaplab_field* field, double* values, size_t capacity) {
  return guarded([&] {
    require(field, "field");
    require(values, "values");
    const size_t n = std::min(capacity, field->field.size());
    for (size_t i = 0; i < n; ++i) values[i] = field->field.values[static_cast<Eigen::Index>(i)];
  });
}

int gaplab_field_max_grad(const gaplab_field* field, double* max_grad) {
  return guarded([&] {
    require(field, "field");
    require(max_grad, "max_grad");
    *max_grad = gaplab::gradient_field(field->field).max();
  });
}

int gaplab_field_summary(const gaplab_field* field, char** json) {
  return guarded([&] {
    require(field, "field");
    require(json, "json");
    *json = dup(gaplab::solve_summary(field->field).dump(2));
  });
}

void gaplab_field_free(gaplab_field* field) { delete field; }

int gaplab_sweep(const gaplab_config* cfg, gaplab_table** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    const auto& c = cfg->cfg;
    *out = new gaplab_table{gaplab::sweep_epsilon(c.geometry.build(), c.solver, c.sweep)};
  });
}

int gaplab_table_parse_csv(const char* csv, gaplab_table** out) {
  return guarded([&] {
    require(csv, "csv");
    require(out, "out");
    *out = new gaplab_table{gaplab::RateTable::from_csv(csv)};
  });
}

int gaplab_table_load_csv(const char* path, gaplab_table** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new gaplab_table{gaplab::RateTable::from_csv(gaplab::read_text_file(path))};
  });
}

int gaplab_table_csv(const gaplab_table* table, char** csv) {
  return guarded([&] {
    require(table, "table");
    require(csv, "csv");
    *csv = dup(table->table.to_csv());
  });
}

int gaplab_table_rows(const gaplab_table* table, size_t* rows) {
  return guarded([&] {
    require(table, "table");
    require(rows, "rows");
    *rows = table->table.rows.size();
  });
}

int gaplab_table_fit(const gaplab_table* table, const gaplab_config* cfg, char** json) {
  return guarded([&] {
    require(table, "table");
    require(cfg, "config");
    require(json, "json");
    gaplab::RateFit fit = gaplab::fit_rate(table->table, gaplab::fit_window(cfg->cfg));
    *json = dup(gaplab::fit_report(table->table, fit, cfg->cfg).dump(2));
  });
}

int gaplab_table_resolution(const gaplab_table* table, const gaplab_config* cfg, char** json) {
  return guarded([&] {
    require(table, "table");
    require(cfg, "config");
    require(json, "json");
    const auto& c = cfg->cfg;
    gaplab::RateFit base = gaplab::fit_rate(table->table, gaplab::fit_window(c));
    gaplab::SolverConfig fine = c.solver;
    fine.grid_nt *= 2;
    gaplab::RateTable refined = gaplab::sweep_epsilon(c.geometry.build(), fine, c.sweep);
    auto check = gaplab::compare_resolution(base, gaplab::fit_rate(refined, gaplab::fit_window(c)));
    *json = dup(check.to_json().dump(2));
  });
}

int gaplab_table_plot(const gaplab_table* table, const gaplab_config* cfg, char** svg, char** csv) {
  return guarded([&] {
    require(table, "table");
    require(cfg, "config");
    require(svg, "svg");
    require(csv, "csv");
    gaplab::RateFit fit = gaplab::fit_rate(table->table, gaplab::fit_window(cfg->cfg));
    std::string s = gaplab::rate_plot_svg(table->table, fit, gaplab::plot_options(cfg->cfg));
    std::string c = gaplab::rate_plot_csv(table->table, fit);
    *svg = dup(s);
    try {
      *csv = dup(c);
    } catch (...) {
      std::free(*svg);
      *svg = nullptr;
      throw;
    }
  });
}

void gaplab_table_free(gaplab_table* table) { delete table; }

int gaplab_certify(const gaplab_config* cfg, char** json) {
  return guarded([&] {
    require(cfg, "config");
    require(json, "json");
    *json = dup(gaplab::run_certify(cfg->cfg).dump(2));
  });
}

int gaplab_check_transform(const gaplab_config* cfg, char** json) {
  return guarded([&] {
    require(cfg, "config");
    require(json, "json");
    *json = dup(gaplab::run_check_transform(cfg->cfg).dump(2));
  });
}

int gaplab_manifest(const gaplab_config* cfg, const char* command, char** json) {
  return guarded([&] {
    require(cfg, "config");
    require(command, "command");
    require(json, "json");
    *json = dup(gaplab::make_manifest(cfg->cfg, command).dump(2));
  });
}

}  // extern "C"
