#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "chemoflow/cli.hpp"
#include "chemoflow/config.hpp"
#include "chemoflow/io.hpp"
#include "chemoflow/rng.hpp"

using namespace chemoflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "chemoflow_cli_io" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "chemoflow");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("splitmix64 reference outputs") {
  SplitMix64 g(1234567);
  const std::uint64_t expect[] = {6457827717110365317ULL, 3203168211198807973ULL, 9817491932198370423ULL,
                                  4593380528125082431ULL, 16408922859458223821ULL};
  for (std::uint64_t k = 0; k < 5; ++k) {
    CHECK(g.next() == expect[k]);
    CHECK(SplitMix64::at(1234567, k) == expect[k]);
  }
  CHECK(SplitMix64::at(0, 0) == 0xE220A8397B1DCDAFULL);
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double u = SplitMix64::uniform_at(99, k);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("example1 preset parameters") {
  const RunConfig c = parse_config("preset = \"example1\"\n");
  const ModelParams& p = c.model;
  CHECK(p.a1 == 10.0);
  CHECK(p.a2 == 0.1);
  CHECK(p.b1 == 2.0);
  CHECK(p.b2 == 2.0);
  CHECK(p.c1 == 0.4);
  CHECK(p.c2 == 0.01);
  CHECK(p.d1 == 1.0);
  CHECK(p.d2 == 1.0);
  CHECK(p.alpha1 == 1.0);
  CHECK(p.alpha2 == 1.0);
  CHECK(p.beta1 == 20.0);
  CHECK(p.beta2 == 100.0);
  CHECK(p.chemo1.coefficient == 2.0);
  CHECK(p.chemo2.coefficient == -0.8);
  CHECK(c.grid.nx == 256);
  CHECK(c.output.snapshot_times == std::vector<double>{0.01, 0.05, 0.075, 0.15});
}

TEST_CASE("example3 preset parameters and initial data") {
  const RunConfig c = preset("example3");
  CHECK(c.model.a1 == 0.61);
  CHECK(c.model.a2 == 0.52);
  CHECK(c.model.b1 == 0.4575);
  CHECK(c.model.b2 == 0.31);
  CHECK(c.model.c1 == 9.5);
  CHECK(c.model.c2 == 8.2);
  CHECK(c.model.f2_coupling_sign == -1);
  CHECK(c.initial.kind == InitialCondition::Kind::Stationary);
  RunConfig small = c;
  small.grid.nx = small.grid.ny = 8;
  const Mesh m(small.grid);
  const MacroState s = initial_state(m, small);
  const auto star = stationary_state(c.model);
  CHECK(s.n1.minCoeff() >= star.n1);
  CHECK(s.n1.maxCoeff() < star.n1 + 1e-3);
  // The perturbation is reproducible from the seed alone.
  const auto idx = static_cast<std::uint64_t>(m.linear(m.fluid_cell(5)));
  CHECK(s.n2[5] == star.n2 + 1e-3 * SplitMix64::uniform_at(small.seed, 64 + idx));
}

TEST_CASE("test presets") {
  const RunConfig t1 = preset("test1"), t2 = preset("test2");
  CHECK(t1.model.grad_phi == Eigen::Vector2d(0.0, 0.0));
  CHECK(t2.model.grad_phi == Eigen::Vector2d(0.0, -1.0));
  CHECK(t2.fluid_enabled);
  CHECK(t2.grid.nx == 128);
  CHECK(t2.grid.ny == 64);
  CHECK(t2.grid.obstacles.size() == 2);
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}

TEST_CASE("config files") {
  SUBCASE("missing file") { CHECK_THROWS_AS(load_config("/nonexistent/run.toml"), ConfigError); }
  SUBCASE("explicit overrides on a preset base") {
    const RunConfig c = parse_config(R"(preset = "example1"
seed = 42
t_end = 0.02
[grid]
nx = 32
ny = 16
[model]
kappa2 = 0.0
[output]
format = "pgm"
snapshot_interval = 0.01
)");
    CHECK(c.seed == 42);
    CHECK(c.grid.nx == 32);
    CHECK(c.grid.ny == 16);
    CHECK(c.model.chemo2.coefficient == 0.0);
    CHECK(c.model.chemo1.coefficient == 2.0);
    CHECK(c.output.format == SnapshotFormat::Pgm);
    const auto times = c.snapshot_schedule();
    CHECK(times == std::vector<double>{0.0, 0.01, 0.02});
  }
  SUBCASE("section presets") {
    const RunConfig c = parse_config("[model]\npreset = \"example3\"\n[grid]\nnx = 4\nny = 4\n");
    CHECK(c.model.c1 == 9.5);
    CHECK(c.grid.nx == 4);
    CHECK_THROWS_AS(parse_config("[model]\npreset = \"example3\"\na1 = 2.0\n"), ConfigError);
  }
  SUBCASE("obstacles and pockets") {
    const RunConfig c = parse_config(R"(
[grid]
nx = 20
ny = 8
lx = 10.0
ly = 4.0
[[grid.obstacles]]
lo = [2.0, 0.8]
hi = [3.0, 2.0]
tag = 5
[[grid.obstacles]]
shape = "circle"
center = [6.0, 2.6]
radius = 0.5
tag = 6
[initial]
kind = "pockets"
[[initial.pockets]]
center = [1.0, 1.2]
radius = 0.4
amplitude = [1.0, 0.0]
)");
    REQUIRE(c.grid.obstacles.size() == 2);
    CHECK(c.grid.obstacles[1].shape == Obstacle::Shape::Circle);
    CHECK(c.grid.obstacles[1].tag == BoundaryTag::Obstacle2);
    REQUIRE(c.initial.pockets.size() == 1);
    CHECK(c.initial.pockets[0].amplitude1 == 1.0);
  }
  SUBCASE("unknown keys are rejected with their location") {
    try {
      parse_config("preset = \"example1\"\n[model]\na1 = 1.0\nfoo = 2\n", "run.toml");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("model.foo") != std::string::npos);
      CHECK(msg.find("run.toml:4") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[nothing]\n"), ConfigError);
  }
  SUBCASE("parse errors carry the line number") {
    try {
      parse_config("preset = \"example1\"\n\n[grid\nnx = 3\n", "bad.toml");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("bad.toml:3") != std::string::npos);
    }
  }
  SUBCASE("validation names the field") {
    try {
      parse_config("[model]\nd1 = -1.0\n");
      FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("d1") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("[grid]\nnx = \"ten\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[kinetic]\neps = [0.1, 0.2]\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[output]\nfields = [\"speed\"]\n"), ConfigError);
  }
  SUBCASE("load from disk") {
    const fs::path dir = scratch("load");
    std::ofstream(dir / "run.toml") << "preset = \"example2\"\n";
    const RunConfig c = load_config(dir / "run.toml");
    CHECK(c.model.chemo2.coefficient == 0.0);
  }
}

TEST_CASE("resolved config serializes completely") {
  const nlohmann::json j = to_json(preset("test2"));
  CHECK(j["model"]["grad_phi"][1] == -1.0);
  CHECK(j["grid"]["obstacles"].size() == 2);
  CHECK(j["fluid"]["enabled"] == true);
  CHECK(j["seed"] == 0);
}

TEST_CASE("csv snapshots") {
  const fs::path dir = scratch("csv");
  SnapshotRecord r{0.5, "n1", 2, 2, {0.0, 0.0, 0.0, 0.0}};
  write_snapshot(r, SnapshotFormat::Csv, dir / "z.csv");
  CHECK(slurp(dir / "z.csv") == "# t=0.5 field=n1 nx=2 ny=2\n0,0\n0,0\n");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  SnapshotRecord big{0.1 + 0.2, "w2", 7, 5, {}};
  for (int k = 0; k < 35; ++k) big.values.push_back(u(rng) * std::pow(10.0, k % 9 - 4));
  write_snapshot(big, SnapshotFormat::Csv, dir / "r.csv");
  const SnapshotRecord back = read_snapshot_csv(dir / "r.csv");
  CHECK(back.time == big.time);
  CHECK(back.field == "w2");
  CHECK(back.nx == 7);
  CHECK(back.ny == 5);
  REQUIRE(back.values.size() == big.values.size());
  CHECK(std::memcmp(back.values.data(), big.values.data(), sizeof(double) * 35) == 0);
}

TEST_CASE("pgm snapshots") {
  const fs::path dir = scratch("pgm");
  SnapshotRecord c{1.0, "n2", 3, 2, {4.0, 4.0, 4.0, 4.0, 4.0, 4.0}};
  write_snapshot(c, SnapshotFormat::Pgm, dir / "c.pgm");
  const std::string flat = slurp(dir / "c.pgm");
  const std::string head = "P5\n# min=4 max=4\n3 2\n255\n";
  REQUIRE(flat.size() == head.size() + 6);
  CHECK(flat.substr(0, head.size()) == head);
  for (std::size_t k = head.size(); k < flat.size(); ++k) CHECK(flat[k] == '\0');

  SnapshotRecord ramp{1.0, "n2", 2, 2, {0.0, 1.0, 2.0, 4.0}};
  write_snapshot(ramp, SnapshotFormat::Pgm, dir / "r.pgm");
  const std::string img = slurp(dir / "r.pgm");
  const std::string h2 = "P5\n# min=0 max=4\n2 2\n255\n";
  REQUIRE(img.size() == h2.size() + 4);
  const auto* px = reinterpret_cast<const unsigned char*>(img.data() + h2.size());
  // top image row is j = ny - 1
  CHECK(px[0] == 128);
  CHECK(px[1] == 255);
  CHECK(px[2] == 0);
  CHECK(px[3] == 64);
}

TEST_CASE("snapshot records are validated") {
  const fs::path dir = scratch("bad");
  SnapshotRecord r{0.0, "n1", 2, 2, {1.0, 2.0, 3.0}};
  CHECK_THROWS_AS(write_snapshot(r, SnapshotFormat::Csv, dir / "a.csv"), std::invalid_argument);
  r.values.push_back(std::nan(""));
  CHECK_THROWS_AS(write_snapshot(r, SnapshotFormat::Csv, dir / "a.csv"), std::invalid_argument);
  CHECK_THROWS_AS(parse_format("vtk"), std::invalid_argument);
  CHECK(snapshot_filename("n1", 3, SnapshotFormat::Csv) == "n1_0003.csv");
}

TEST_CASE("field records scatter fluid values onto the grid") {
  GridSpec g;
  g.nx = 4;
  g.ny = 4;
  g.obstacles = {Obstacle::rectangle({0.5, 0.5}, {1.0, 1.0})};
  const Mesh m(g);
  const Eigen::VectorXd v = Eigen::VectorXd::Constant(m.fluid_count(), 2.0);
  const SnapshotRecord r = field_record(m, v, 0.0, "n1");
  CHECK(r.values.size() == 16);
  CHECK(r.values[3 + 4 * 3] == 0.0);
  CHECK(r.values[0] == 2.0);
}

TEST_CASE("diagnostics csv") {
  const fs::path dir = scratch("diag");
  {
    DiagnosticsWriter w(dir / "d.csv", true);
    Diagnostics d;
    d.t = 0.5;
    d.dt = 0.25;
    d.mass = {1.0, 2.0};
    w.write(d, 3.0, 1e-12, -0.5);
    CHECK_THROWS_AS(w.write(d), std::logic_error);
  }
  std::istringstream in(slurp(dir / "d.csv"));
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  CHECK(header ==
        "t,dt,mass1,mass2,min1,min2,max1,max2,l2_1,l2_2,newton_iterations,gmres_iterations,residual,"
        "kinetic_energy,max_divergence,vertical_momentum");
  CHECK(row == "0.5,0.25,1,2,0,0,0,0,0,0,0,0,0,3,9.9999999999999998e-13,-0.5");
}

TEST_CASE("command line") {
  SUBCASE("usage errors exit 2") {
    CHECK(cli({"run", "--preset", "example1", "--bogus"}) == 2);
    CHECK(cli({"run"}) == 2);
    CHECK(cli({}) == 2);
    CHECK(cli({"run", "--preset", "unknown"}) == 2);
    CHECK(cli({"run", "--config", "/nonexistent.toml"}) == 2);
    CHECK(cli({"run", "--preset", "example1", "--nx", "0"}) == 2);
    CHECK(cli({"--help"}) == 0);
  }
  SUBCASE("run writes snapshots, diagnostics and metadata") {
    const fs::path dir = scratch("run");
    CHECK(cli({"run", "--preset", "example1", "--nx", "16", "--ny", "16", "--t-end", "0.05", "--seed", "9",
               "--out-dir", dir.string()}) == 0);
    for (int k = 0; k < 2; ++k)
      for (const char* f : {"n1", "n2", "w1", "w2"}) CHECK(fs::exists(dir / snapshot_filename(f, k, SnapshotFormat::Csv)));
    CHECK_FALSE(fs::exists(dir / "n1_0002.csv"));
    const auto meta = nlohmann::json::parse(slurp(dir / "metadata.json"));
    CHECK(meta["seed"] == 9);
    CHECK(meta["config"]["grid"]["nx"] == 16);
    CHECK(meta["status"] == "ok");
    CHECK(meta.contains("version"));
    const SnapshotRecord r = read_snapshot_csv(dir / "n1_0001.csv");
    CHECK(r.time == 0.05);
  }
  SUBCASE("repeated runs are bitwise identical") {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    for (const auto& d : {a, b})
      CHECK(cli({"run", "--preset", "example3", "--nx", "16", "--ny", "16", "--t-end", "0.002", "--seed", "3",
                 "--out-dir", d.string()}) == 0);
    for (const auto& e : fs::directory_iterator(a)) {
      const std::string name = e.path().filename().string();
      if (name == "metadata.json") continue;
      CHECK_MESSAGE(slurp(e.path()) == slurp(b / name), name);
    }
  }
  SUBCASE("fluid-coupled run") {
    const fs::path dir = scratch("fluid");
    CHECK(cli({"run", "--preset", "test2", "--nx", "32", "--ny", "16", "--t-end", "0.1", "--format", "pgm",
               "--out-dir", dir.string()}) == 0);
    const auto meta = nlohmann::json::parse(slurp(dir / "metadata.json"));
    CHECK(meta["config"]["model"]["grad_phi"][1] == -1.0);
    std::istringstream diag(slurp(dir / "diagnostics.csv"));
    std::string header;
    std::getline(diag, header);
    CHECK(header.find("vertical_momentum") != std::string::npos);
  }
  SUBCASE("solver failure exits 1") {
    const fs::path dir = scratch("fail");
    std::ofstream(dir / "run.toml") << "preset = \"example1\"\n[grid]\nnx = 8\nny = 8\n[step]\n"
                                       "newton_max_iters = 1\nnewton_abs_tol = 1e-300\nnewton_rel_tol = 1e-300\n"
                                       "max_dt_halvings = 1\n";
    CHECK(cli({"run", "--config", (dir / "run.toml").string(), "--out-dir", dir.string()}) == 1);
    const auto meta = nlohmann::json::parse(slurp(dir / "metadata.json"));
    CHECK(meta["status"] == "failed");
  }
  SUBCASE("check subcommand") {
    CHECK(cli({"check", "--preset", "example1", "--nx", "16", "--ny", "16", "--steps", "5"}) == 0);
    CHECK(cli({"check", "--preset", "test1", "--nx", "32", "--ny", "16", "--steps", "3"}) == 0);
  }
  SUBCASE("kinetic study") {
    const fs::path dir = scratch("kinetic");
    std::ofstream(dir / "k.toml") << "[kinetic]\neps = [0.4, 0.2]\ncells = 50\nt_end = 0.05\n";
    CHECK(cli({"kinetic-study", "--config", (dir / "k.toml").string(), "--out-dir", dir.string()}) == 0);
    std::istringstream in(slurp(dir / "convergence.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "eps,error,ratio");
  }
}
