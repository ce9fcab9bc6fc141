#include <doctest.h>

#include <gaplab/gaplab.h>

#include <string>
#include <vector>

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  gaplab_string_free(s);
  return out;
}

struct Config {
  gaplab_config* h = nullptr;
  explicit Config(const char* text) { REQUIRE(gaplab_config_parse(text, &h) == GAPLAB_OK); }
  ~Config() { gaplab_config_free(h); }
};

const char* kSmall = "[geometry]\nepsilon = 1e-2\n[solver]\ngrid_ns = 16\ngrid_nt = 8\n";

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::string(gaplab_version()) == "0.1.0");
  CHECK(std::string(gaplab_status_name(GAPLAB_ERR_CONFIG)) == "config error");
  CHECK(std::string(gaplab_status_name(99)) == "internal error");
}

TEST_CASE("config errors carry the key path") {
  gaplab_config* c = nullptr;
  CHECK(gaplab_config_parse("[solver]\np = x\n", &c) == GAPLAB_ERR_CONFIG);
  CHECK(c == nullptr);
  CHECK(std::string(gaplab_last_error()).find("solver.p") != std::string::npos);
  CHECK(gaplab_config_parse(nullptr, &c) == GAPLAB_ERR_INVALID_ARGUMENT);
  CHECK(gaplab_config_load("/nonexistent.ini", &c) == GAPLAB_ERR_IO);
}

TEST_CASE("set validates before committing") {
  Config c(kSmall);
  char* v = nullptr;
  CHECK(gaplab_config_set(c.h, "solver.grid_ns", "7") == GAPLAB_ERR_CONFIG);
  REQUIRE(gaplab_config_get(c.h, "solver.grid_ns", &v) == GAPLAB_OK);
  CHECK(take(v) == "16");
  CHECK(gaplab_config_set(c.h, "solver.grid_ns", "20") == GAPLAB_OK);
  REQUIRE(gaplab_config_get(c.h, "solver.grid_ns", &v) == GAPLAB_OK);
  CHECK(take(v) == "20");
  char* h = nullptr;
  REQUIRE(gaplab_config_hash(c.h, &h) == GAPLAB_OK);
  CHECK(take(h).size() == 64);
}

TEST_CASE("solve through the C interface") {
  Config c(kSmall);
  gaplab_field* f = nullptr;
  REQUIRE(gaplab_solve(c.h, &f) == GAPLAB_OK);
  int conv = 0;
  CHECK(gaplab_field_converged(f, &conv) == GAPLAB_OK);
  CHECK(conv == 1);
  size_t n = 0;
  CHECK(gaplab_field_size(f, &n) == GAPLAB_OK);
  CHECK(n == 17 * 9);
  std::vector<double> vals(n);
  CHECK(gaplab_field_values(f, vals.data(), vals.size()) == GAPLAB_OK);
  double g = 0.0;
  CHECK(gaplab_field_max_grad(f, &g) == GAPLAB_OK);
  CHECK(g > 1.0);
  char* summary = nullptr;
  REQUIRE(gaplab_field_summary(f, &summary) == GAPLAB_OK);
  CHECK(take(summary).find("\"max_grad\"") != std::string::npos);
  gaplab_field_free(f);
  CHECK(gaplab_field_size(nullptr, &n) == GAPLAB_ERR_INVALID_ARGUMENT);
}

TEST_CASE("tables, fits and plots") {
  Config c("[geometry]\nepsilon = 1e-2\n[solver]\ngrid_ns = 16\ngrid_nt = 8\n[sweep]\n"
           "resolution_rule = false\nepsilons = 1e-1, 3e-2, 1e-2, 3e-3, 1e-3\n");
  gaplab_table* t = nullptr;
  REQUIRE(gaplab_sweep(c.h, &t) == GAPLAB_OK);
  size_t rows = 0;
  CHECK(gaplab_table_rows(t, &rows) == GAPLAB_OK);
  CHECK(rows == 5);
  char* csv = nullptr;
  REQUIRE(gaplab_table_csv(t, &csv) == GAPLAB_OK);
  std::string text = take(csv);
  gaplab_table* back = nullptr;
  REQUIRE(gaplab_table_parse_csv(text.c_str(), &back) == GAPLAB_OK);
  REQUIRE(gaplab_table_csv(back, &csv) == GAPLAB_OK);
  CHECK(take(csv) == text);
  char* fit = nullptr;
  REQUIRE(gaplab_table_fit(back, c.h, &fit) == GAPLAB_OK);
  CHECK(take(fit).find("\"slope\"") != std::string::npos);
  char *svg = nullptr, *pcsv = nullptr;
  REQUIRE(gaplab_table_plot(back, c.h, &svg, &pcsv) == GAPLAB_OK);
  CHECK(take(svg).rfind("<svg", 0) == 0);
  CHECK(!take(pcsv).empty());
  gaplab_table_free(back);
  gaplab_table_free(t);

  gaplab_table* few = nullptr;
  std::string head = text.substr(0, text.find('\n') + 1);
  REQUIRE(gaplab_table_parse_csv(head.c_str(), &few) == GAPLAB_OK);
  CHECK(gaplab_table_fit(few, c.h, &fit) == GAPLAB_ERR_INVALID_ARGUMENT);
  gaplab_table_free(few);
}

TEST_CASE("certify and manifest") {
  Config c("[geometry]\nkind = quadratic\nepsilon = 1e-4\nupper_matrix = 1\nlower_matrix = -1\n"
           "[barrier]\nvariant = supersolution_v\np = 5\ndelta = 0.5\ngamma = 0.3\nsamples = 2000\n");
  char* j = nullptr;
  REQUIRE(gaplab_certify(c.h, &j) == GAPLAB_OK);
  CHECK(take(j).find("\"violation_count\": 0") != std::string::npos);
  REQUIRE(gaplab_config_set(c.h, "barrier.gamma", "0.5") == GAPLAB_OK);
  CHECK(gaplab_certify(c.h, &j) == GAPLAB_ERR_INVARIANT);
  CHECK(std::string(gaplab_last_error()).find("gamma") != std::string::npos);
  REQUIRE(gaplab_manifest(c.h, "certify", &j) == GAPLAB_OK);
  CHECK(take(j).find("\"config_hash\"") != std::string::npos);
}
