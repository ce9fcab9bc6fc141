#include <doctest.h>

#include <string>

#include "gaplab/config.hpp"
#include "gaplab/error.hpp"

using namespace gaplab;

namespace {

std::string message_of(const std::string& text) {
  try {
    RunConfig::parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) { return s.find(part) != std::string::npos; }

const char* kSample = R"(# disks at p = 5
[geometry]
kind = disks
epsilon = 1e-3

[solver]
p = 5
grid_ns = 32
continuation = 2:1e-2, 5:1e-10

[sweep]
epsilons = 1e-2, 1e-3, 1e-4
workers = 2

[barrier]
variant = supersolution_v
gamma = 0.3

[output]
dir = results
)";

}  // namespace

TEST_CASE("parse a complete configuration") {
  RunConfig c = RunConfig::parse(kSample);
  CHECK(c.geometry.kind == "disks");
  CHECK(c.geometry.epsilon == 1e-3);
  CHECK(c.solver.p == 5.0);
  CHECK(c.solver.grid_ns == 32);
  REQUIRE(c.solver.continuation.size() == 2);
  CHECK(c.solver.continuation[1].eta == 1e-10);
  CHECK(c.sweep.epsilons == std::vector<double>{1e-2, 1e-3, 1e-4});
  CHECK(c.sweep.workers == 2);
  CHECK(c.barrier.spec.variant == BarrierVariant::Supersolution);
  CHECK(c.output.dir == "results");
  CHECK(c.geometry.build().kind == "disks");
}

TEST_CASE("defaults") {
  RunConfig c = RunConfig::parse("");
  CHECK(c.solver.dirichlet == "x1");
  CHECK(c.solver.eta == 1e-10);
  CHECK(c.barrier.certify.seed == 0);
  CHECK(c.transform.seed == 0);
  CHECK(c.sweep.window_delta == 0.25);
}

TEST_CASE("errors name the offending key") {
  CHECK(contains(message_of("[solver]\np = abc\n"), "solver.p"));
  CHECK(contains(message_of("[solver]\ngrid_ns = 12.5\n"), "solver.grid_ns"));
  CHECK(contains(message_of("[solver]\nbogus = 1\n"), "unknown key 'solver.bogus'"));
  CHECK(contains(message_of("[nosuch]\nx = 1\n"), "nosuch.x"));
  CHECK(contains(message_of("[geometry]\nkind = ellipses\n"), "geometry.kind"));
  CHECK(contains(message_of("[geometry]\nepsilon = 2\n"), "geometry.epsilon"));
  CHECK(contains(message_of("[geometry]\nkind = quadratic\nupper_matrix = 1, 2, 3\n"), "geometry.upper_matrix"));
  CHECK(contains(message_of("[sweep]\nepsilons = 1e-2, 1e-2\n"), "sweep.epsilons"));
  CHECK(contains(message_of("[solver]\ncontinuation = 2:1e-2, 3\n"), "solver.continuation"));
  CHECK(contains(message_of("p = 2\n"), "inside a section"));
  CHECK(contains(message_of("[solver\np = 2\n"), "malformed"));
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.ini"), IoError);
}

TEST_CASE("quadratic and polynomial geometries from keys") {
  RunConfig c = RunConfig::parse(
      "[geometry]\nkind = quadratic\ndim = 3\nupper_matrix = 1, 0, 0, 2\nlower_matrix = -1, 0, 0, -1\n");
  GapGeometry g = c.geometry.build();
  CHECK(g.dim == 3);
  CHECK(*g.kappa2 == doctest::Approx(2.0));
  RunConfig p = RunConfig::parse("[geometry]\nkind = polynomial\nupper_coeffs = 0.5, 0.1\nlower_coeffs = -0.5\n");
  CHECK(p.geometry.build().kind == "polynomial");
}

TEST_CASE("set, get and revalidation") {
  RunConfig c;
  c.set("solver.p", "3.5");
  CHECK(c.get("solver.p") == "3.5");
  CHECK_THROWS_AS(c.set("solver.nope", "1"), ConfigError);
  CHECK_THROWS_AS(c.get("solver.nope"), ConfigError);
  for (const std::string& k : RunConfig::keys()) CHECK_NOTHROW(c.get(k));
}

TEST_CASE("to_ini reproduces the configuration") {
  RunConfig c = RunConfig::parse(kSample);
  RunConfig back = RunConfig::parse(c.to_ini());
  CHECK(back.canonical() == c.canonical());
  CHECK(back.to_ini() == c.to_ini());
}

TEST_CASE("hash follows result-affecting keys only") {
  RunConfig a = RunConfig::parse(kSample);
  RunConfig b = a;
  b.set("output.dir", "elsewhere");
  b.set("sweep.workers", "7");
  b.set("output.title", "other");
  CHECK(a.hash() == b.hash());
  b.set("solver.grid_nt", "20");
  CHECK(a.hash() != b.hash());
  RunConfig c = a;
  c.set("barrier.seed", "1");
  CHECK(a.hash() != c.hash());
  CHECK(a.hash().size() == 64);
  CHECK(a.hash() == sha256_hex(a.canonical()));
}

TEST_CASE("sha256 known digests") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("barrier spec takes missing constants from the geometry") {
  RunConfig c = RunConfig::parse("[geometry]\nkind = quadratic\nupper_matrix = 2\nlower_matrix = -3\n");
  GapGeometry g = c.geometry.build();
  BarrierSpec s = c.barrier_spec(g);
  CHECK(s.kappa1 == doctest::Approx(2.0));
  CHECK(s.kappa2 == doctest::Approx(3.0));
  CHECK(s.epsilon == g.epsilon);
  c.set("barrier.kappa1", "1.5");
  CHECK(c.barrier_spec(g).kappa1 == 1.5);
}
