#include "chemoflow/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <toml.hpp>

namespace chemoflow {

namespace {

using linalg::PreconditionerKind;

std::string where(const std::string& source, const toml::node* n) {
  if (!n) return source;
  return source + ":" + std::to_string(n->source().begin.line);
}

class Section {
 public:
  Section(const toml::table* t, std::string name, const std::string& source)
      : t_(t), name_(std::move(name)), source_(source) {}

  bool present() const { return t_ != nullptr; }

  const toml::node* raw(const std::string& key) {
    if (!t_) return nullptr;
    seen_.insert(key);
    return t_->get(key);
  }

  [[noreturn]] void fail(const toml::node* n, const std::string& key, const std::string& what) const {
    throw ConfigError("config " + where(source_, n) + ": " + qualified(key) + ": " + what);
  }

  std::string qualified(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  bool number(const std::string& key, double& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    if (auto v = n->value<double>(); v && (n->is_floating_point() || n->is_integer())) {
      out = *v;
      return true;
    }
    fail(n, key, "expected a number");
  }

  bool integer(const std::string& key, int& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    if (!n->is_integer()) fail(n, key, "expected an integer");
    const auto v = n->value<std::int64_t>().value();
    if (v < INT32_MIN || v > INT32_MAX) fail(n, key, "integer out of range");
    out = static_cast<int>(v);
    return true;
  }

  bool seed(const std::string& key, std::uint64_t& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    if (!n->is_integer() || n->value<std::int64_t>().value() < 0) fail(n, key, "expected a non-negative integer");
    out = static_cast<std::uint64_t>(n->value<std::int64_t>().value());
    return true;
  }

  bool boolean(const std::string& key, bool& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    if (!n->is_boolean()) fail(n, key, "expected true or false");
    out = n->value<bool>().value();
    return true;
  }

  bool string(const std::string& key, std::string& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    if (!n->is_string()) fail(n, key, "expected a string");
    out = n->value<std::string>().value();
    return true;
  }

  bool numbers(const std::string& key, std::vector<double>& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    const toml::array* a = n->as_array();
    if (!a) fail(n, key, "expected an array of numbers");
    out.clear();
    for (const toml::node& e : *a) {
      auto v = e.value<double>();
      if (!v || !(e.is_floating_point() || e.is_integer())) fail(&e, key, "expected an array of numbers");
      out.push_back(*v);
    }
    return true;
  }

  bool pair(const std::string& key, double& a, double& b) {
    std::vector<double> v;
    if (!numbers(key, v)) return false;
    if (v.size() != 2) fail(raw(key), key, "expected exactly two numbers");
    a = v[0];
    b = v[1];
    return true;
  }

  bool vec2(const std::string& key, Vec2& out) { return pair(key, out.x(), out.y()); }

  bool strings(const std::string& key, std::vector<std::string>& out) {
    const toml::node* n = raw(key);
    if (!n) return false;
    const toml::array* a = n->as_array();
    if (!a) fail(n, key, "expected an array of strings");
    out.clear();
    for (const toml::node& e : *a) {
      if (!e.is_string()) fail(&e, key, "expected an array of strings");
      out.push_back(e.value<std::string>().value());
    }
    return true;
  }

  /// Array of tables, each handed to `fn` as its own Section.
  template <typename Fn>
  bool tables(const std::string& key, Fn fn) {
    const toml::node* n = raw(key);
    if (!n) return false;
    const toml::array* a = n->as_array();
    if (!a) fail(n, key, "expected an array of tables");
    int idx = 0;
    for (const toml::node& e : *a) {
      const toml::table* t = e.as_table();
      if (!t) fail(&e, key, "expected an array of tables");
      Section sub(t, qualified(key) + "[" + std::to_string(idx++) + "]", source_);
      fn(sub);
      sub.finish();
    }
    return true;
  }

  void finish() const {
    if (!t_) return;
    for (auto&& [k, v] : *t_) {
      const std::string key(k.str());
      if (!seen_.count(key)) fail(&v, key, "unknown key");
    }
  }

  /// A section consisting of only `preset = "<name>"`.
  std::optional<std::string> section_preset() {
    if (!t_ || !t_->contains("preset")) return std::nullopt;
    std::string name;
    string("preset", name);
    if (t_->size() != 1) fail(t_->get("preset"), "preset", "a section preset excludes explicit keys");
    return name;
  }

 private:
  const toml::table* t_;
  std::string name_;
  const std::string& source_;
  std::set<std::string> seen_;
};

PreconditionerKind parse_pre(Section& s, const std::string& key, PreconditionerKind fallback) {
  std::string v;
  if (!s.string(key, v)) return fallback;
  if (v == "none") return PreconditionerKind::None;
  if (v == "jacobi") return PreconditionerKind::Jacobi;
  if (v == "ilut") return PreconditionerKind::Ilut;
  if (v == "lu") return PreconditionerKind::Lu;
  s.fail(s.raw(key), key, "expected one of none, jacobi, ilut, lu");
}

std::string pre_name(PreconditionerKind k) {
  switch (k) {
    case PreconditionerKind::None: return "none";
    case PreconditionerKind::Jacobi: return "jacobi";
    case PreconditionerKind::Ilut: return "ilut";
    case PreconditionerKind::Lu: return "lu";
  }
  return "none";
}

ChemoLaw::Kind parse_law(Section& s, const std::string& key, ChemoLaw::Kind fallback) {
  std::string v;
  if (!s.string(key, v)) return fallback;
  if (v == "linear") return ChemoLaw::Kind::Linear;
  if (v == "constant") return ChemoLaw::Kind::Constant;
  s.fail(s.raw(key), key, "expected linear or constant");
}

void read_grid(Section& s, GridSpec& g) {
  s.integer("nx", g.nx);
  s.integer("ny", g.ny);
  s.number("lx", g.lx);
  s.number("ly", g.ly);
  s.vec2("origin", g.origin);
  std::vector<Obstacle> obs;
  if (s.tables("obstacles", [&](Section& o) {
        Obstacle ob;
        std::string shape = "rectangle";
        o.string("shape", shape);
        int tag = 5;
        o.integer("tag", tag);
        if (tag != 5 && tag != 6) o.fail(o.raw("tag"), "tag", "obstacle tag must be 5 or 6");
        ob.tag = static_cast<BoundaryTag>(tag);
        if (shape == "rectangle") {
          ob.shape = Obstacle::Shape::Rectangle;
          if (!o.vec2("lo", ob.lo) || !o.vec2("hi", ob.hi)) o.fail(nullptr, "lo", "rectangle needs lo and hi");
        } else if (shape == "circle") {
          ob.shape = Obstacle::Shape::Circle;
          if (!o.vec2("center", ob.center) || !o.number("radius", ob.radius))
            o.fail(nullptr, "center", "circle needs center and radius");
        } else {
          o.fail(o.raw("shape"), "shape", "expected rectangle or circle");
        }
        obs.push_back(ob);
      }))
    g.obstacles = std::move(obs);
}

void read_model(Section& s, ModelParams& p) {
  s.number("a1", p.a1);
  s.number("a2", p.a2);
  s.number("b1", p.b1);
  s.number("b2", p.b2);
  s.number("c1", p.c1);
  s.number("c2", p.c2);
  s.number("d1", p.d1);
  s.number("d2", p.d2);
  s.number("kappa1", p.chemo1.coefficient);
  s.number("kappa2", p.chemo2.coefficient);
  p.chemo1.kind = parse_law(s, "chemo_law1", p.chemo1.kind);
  p.chemo2.kind = parse_law(s, "chemo_law2", p.chemo2.kind);
  s.number("alpha1", p.alpha1);
  s.number("alpha2", p.alpha2);
  s.number("beta1", p.beta1);
  s.number("beta2", p.beta2);
  s.number("nu", p.nu);
  s.number("k_conv", p.k_conv);
  s.pair("grad_phi", p.grad_phi.x(), p.grad_phi.y());
  s.integer("f2_coupling_sign", p.f2_coupling_sign);
}

void read_step(Section& s, StepConfig& c) {
  s.number("dt", c.dt);
  std::string reaction;
  if (s.string("reaction", reaction)) {
    if (reaction == "implicit") c.reaction = ReactionMode::Implicit;
    else if (reaction == "explicit") c.reaction = ReactionMode::Explicit;
    else s.fail(s.raw("reaction"), "reaction", "expected implicit or explicit");
  }
  s.boolean("obstacle_dirichlet", c.obstacle_dirichlet);
  s.boolean("literal_chemical_sign", c.literal_chemical_sign);
  s.integer("max_dt_halvings", c.max_dt_halvings);
  s.number("newton_abs_tol", c.newton.abs_tol);
  s.number("newton_rel_tol", c.newton.rel_tol);
  s.integer("newton_max_iters", c.newton.max_iters);
  s.integer("line_search_halvings", c.newton.max_halvings);
  std::string damping;
  if (s.string("damping", damping)) {
    if (damping == "none") c.newton.damping = linalg::Damping::None;
    else if (damping == "backtracking") c.newton.damping = linalg::Damping::Backtracking;
    else s.fail(s.raw("damping"), "damping", "expected none or backtracking");
  }
  s.number("krylov_rtol", c.krylov.rtol);
  s.integer("krylov_max_iters", c.krylov.max_iters);
  s.integer("krylov_restart", c.krylov.restart);
  c.krylov.preconditioner = parse_pre(s, "preconditioner", c.krylov.preconditioner);
  s.number("chemical_rtol", c.chemical_krylov.rtol);
  s.integer("chemical_max_iters", c.chemical_krylov.max_iters);
  s.integer("chemical_restart", c.chemical_krylov.restart);
  c.chemical_krylov.preconditioner = parse_pre(s, "chemical_preconditioner", c.chemical_krylov.preconditioner);
}

void read_initial(Section& s, InitialCondition& ic) {
  std::string kind;
  if (s.string("kind", kind)) {
    if (kind == "uniform") ic.kind = InitialCondition::Kind::Uniform;
    else if (kind == "pockets") ic.kind = InitialCondition::Kind::Pockets;
    else if (kind == "stationary") ic.kind = InitialCondition::Kind::Stationary;
    else s.fail(s.raw("kind"), "kind", "expected uniform, pockets or stationary");
  }
  s.pair("background", ic.background1, ic.background2);
  s.number("perturbation", ic.perturbation);
  std::vector<Pocket> pockets;
  if (s.tables("pockets", [&](Section& p) {
        Pocket pk;
        p.vec2("center", pk.center);
        p.number("radius", pk.radius);
        p.pair("amplitude", pk.amplitude1, pk.amplitude2);
        pockets.push_back(pk);
      }))
    ic.pockets = std::move(pockets);
}

void read_fluid(Section& s, RunConfig& c) {
  s.boolean("enabled", c.fluid_enabled);
  s.number("inflow_scale", c.fluid.inflow_scale);
  s.number("poisson_rtol", c.fluid.poisson.rtol);
  s.number("viscous_rtol", c.fluid.viscous.rtol);
  c.fluid.poisson.preconditioner = parse_pre(s, "poisson_preconditioner", c.fluid.poisson.preconditioner);
  c.fluid.viscous.preconditioner = parse_pre(s, "viscous_preconditioner", c.fluid.viscous.preconditioner);
}

void read_kinetic(Section& s, KineticStudyConfig& k) {
  s.numbers("eps", k.eps);
  s.integer("cells", k.cells);
  s.number("length", k.length);
  s.number("dt", k.dt);
  s.number("t_end", k.t_end);
  s.number("r", k.r);
  s.number("sigma1", k.sigma1);
  s.number("sigma2", k.sigma2);
}

void read_output(Section& s, OutputConfig& o) {
  s.string("out_dir", o.out_dir);
  std::string fmt;
  if (s.string("format", fmt)) {
    try {
      o.format = parse_format(fmt);
    } catch (const std::invalid_argument& e) {
      s.fail(s.raw("format"), "format", e.what());
    }
  }
  s.numbers("snapshot_times", o.snapshot_times);
  s.number("snapshot_interval", o.snapshot_interval);
  s.strings("fields", o.fields);
}

}  // namespace

void RunConfig::validate() const {
  try {
    Mesh probe(grid);
    model.validate();
    step.validate();
    if (fluid_enabled) {
      fluid.validate();
      if (fluid.dt != step.dt) throw std::invalid_argument("fluid.dt must equal step.dt");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(t_end > 0.0) || !std::isfinite(t_end)) throw ConfigError("config: t_end must be > 0");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (initial.kind == InitialCondition::Kind::Stationary && initial.perturbation < 0.0)
    throw ConfigError("config: initial.perturbation must be >= 0");
  for (const Pocket& p : initial.pockets)
    if (!(p.radius > 0.0)) throw ConfigError("config: initial.pockets radius must be > 0");
  if (output.snapshot_interval < 0.0) throw ConfigError("config: output.snapshot_interval must be >= 0");
  static const std::set<std::string> known{"n1", "n2", "w1", "w2", "speed", "u", "v", "p"};
  for (const auto& f : output.fields) {
    if (!known.count(f)) throw ConfigError("config: output.fields: unknown field '" + f + "'");
    if (!fluid_enabled && (f == "speed" || f == "u" || f == "v" || f == "p"))
      throw ConfigError("config: output.fields: '" + f + "' needs the fluid section enabled");
  }
  if (kinetic.eps.empty()) throw ConfigError("config: kinetic.eps must not be empty");
  for (std::size_t i = 0; i < kinetic.eps.size(); ++i) {
    if (!(kinetic.eps[i] > 0.0)) throw ConfigError("config: kinetic.eps entries must be > 0");
    if (i && !(kinetic.eps[i] < kinetic.eps[i - 1])) throw ConfigError("config: kinetic.eps must decrease");
  }
  if (kinetic.cells < 3) throw ConfigError("config: kinetic.cells must be >= 3");
  if (!(kinetic.dt > 0.0) || !(kinetic.t_end > 0.0) || !(kinetic.length > 0.0) || !(kinetic.r > 0.0) ||
      !(kinetic.sigma1 > 0.0) || !(kinetic.sigma2 > 0.0))
    throw ConfigError("config: kinetic dt, t_end, length, r, sigma must be > 0");
}

std::vector<double> RunConfig::snapshot_schedule() const {
  std::vector<double> out;
  for (double t : output.snapshot_times)
    if (t >= 0.0 && t <= t_end) out.push_back(t);
  if (output.snapshot_interval > 0.0) {
    const auto count = static_cast<long>(std::floor(t_end / output.snapshot_interval + 1e-9));
    for (long k = 0; k <= count; ++k) out.push_back(std::min(t_end, k * output.snapshot_interval));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)); }),
            out.end());
  return out;
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config " << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": "
        << e.description();
    throw ConfigError(msg.str());
  }

  Section top(&root, "", source);
  std::string base;
  RunConfig cfg;
  if (top.string("preset", base)) cfg = preset(base);
  cfg.preset = base;

  auto section = [&](const char* name) {
    const toml::node* n = top.raw(name);
    if (n && !n->is_table()) top.fail(n, name, "expected a table");
    return Section(n ? n->as_table() : nullptr, name, source);
  };

  {
    Section s = section("grid");
    if (auto p = s.section_preset()) cfg.grid = preset(*p).grid;
    else read_grid(s, cfg.grid);
    s.finish();
  }
  {
    Section s = section("model");
    if (auto p = s.section_preset()) cfg.model = preset(*p).model;
    else read_model(s, cfg.model);
    s.finish();
  }
  {
    Section s = section("step");
    if (auto p = s.section_preset()) cfg.step = preset(*p).step;
    else read_step(s, cfg.step);
    s.finish();
  }
  {
    Section s = section("initial");
    if (auto p = s.section_preset()) cfg.initial = preset(*p).initial;
    else read_initial(s, cfg.initial);
    s.finish();
  }
  {
    Section s = section("fluid");
    if (auto p = s.section_preset()) {
      const RunConfig src = preset(*p);
      cfg.fluid = src.fluid;
      cfg.fluid_enabled = src.fluid_enabled;
    } else {
      read_fluid(s, cfg);
    }
    s.finish();
  }
  {
    Section s = section("kinetic");
    if (auto p = s.section_preset()) cfg.kinetic = preset(*p).kinetic;
    else read_kinetic(s, cfg.kinetic);
    s.finish();
  }
  {
    Section s = section("output");
    if (auto p = s.section_preset()) cfg.output = preset(*p).output;
    else read_output(s, cfg.output);
    s.finish();
  }
  top.number("t_end", cfg.t_end);
  top.seed("seed", cfg.seed);
  top.integer("threads", cfg.threads);
  top.finish();

  cfg.fluid.dt = cfg.step.dt;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  json obstacles = json::array();
  for (const auto& o : c.grid.obstacles) {
    json j{{"shape", o.shape == Obstacle::Shape::Rectangle ? "rectangle" : "circle"},
           {"tag", static_cast<int>(o.tag)}};
    if (o.shape == Obstacle::Shape::Rectangle) {
      j["lo"] = {o.lo.x(), o.lo.y()};
      j["hi"] = {o.hi.x(), o.hi.y()};
    } else {
      j["center"] = {o.center.x(), o.center.y()};
      j["radius"] = o.radius;
    }
    obstacles.push_back(j);
  }
  const ModelParams& m = c.model;
  auto law = [](const ChemoLaw& l) { return l.kind == ChemoLaw::Kind::Linear ? "linear" : "constant"; };
  json pockets = json::array();
  for (const auto& p : c.initial.pockets)
    pockets.push_back({{"center", {p.center.x(), p.center.y()}},
                       {"radius", p.radius},
                       {"amplitude", {p.amplitude1, p.amplitude2}}});
  const char* kinds[] = {"uniform", "pockets", "stationary"};
  return json{
      {"preset", c.preset},
      {"seed", c.seed},
      {"threads", c.threads},
      {"t_end", c.t_end},
      {"grid",
       {{"nx", c.grid.nx},
        {"ny", c.grid.ny},
        {"lx", c.grid.lx},
        {"ly", c.grid.ly},
        {"origin", {c.grid.origin.x(), c.grid.origin.y()}},
        {"obstacles", obstacles}}},
      {"model",
       {{"a1", m.a1}, {"a2", m.a2}, {"b1", m.b1}, {"b2", m.b2}, {"c1", m.c1}, {"c2", m.c2},
        {"d1", m.d1}, {"d2", m.d2},
        {"kappa1", m.chemo1.coefficient}, {"kappa2", m.chemo2.coefficient},
        {"chemo_law1", law(m.chemo1)}, {"chemo_law2", law(m.chemo2)},
        {"alpha1", m.alpha1}, {"alpha2", m.alpha2}, {"beta1", m.beta1}, {"beta2", m.beta2},
        {"nu", m.nu}, {"k_conv", m.k_conv}, {"grad_phi", {m.grad_phi.x(), m.grad_phi.y()}},
        {"f2_coupling_sign", m.f2_coupling_sign}}},
      {"step",
       {{"dt", c.step.dt},
        {"reaction", c.step.reaction == ReactionMode::Implicit ? "implicit" : "explicit"},
        {"obstacle_dirichlet", c.step.obstacle_dirichlet},
        {"literal_chemical_sign", c.step.literal_chemical_sign},
        {"max_dt_halvings", c.step.max_dt_halvings},
        {"newton_abs_tol", c.step.newton.abs_tol},
        {"newton_rel_tol", c.step.newton.rel_tol},
        {"newton_max_iters", c.step.newton.max_iters},
        {"damping", c.step.newton.damping == linalg::Damping::None ? "none" : "backtracking"},
        {"line_search_halvings", c.step.newton.max_halvings},
        {"krylov_rtol", c.step.krylov.rtol},
        {"krylov_max_iters", c.step.krylov.max_iters},
        {"krylov_restart", c.step.krylov.restart},
        {"preconditioner", pre_name(c.step.krylov.preconditioner)},
        {"chemical_rtol", c.step.chemical_krylov.rtol},
        {"chemical_max_iters", c.step.chemical_krylov.max_iters},
        {"chemical_restart", c.step.chemical_krylov.restart},
        {"chemical_preconditioner", pre_name(c.step.chemical_krylov.preconditioner)}}},
      {"initial",
       {{"kind", kinds[static_cast<int>(c.initial.kind)]},
        {"background", {c.initial.background1, c.initial.background2}},
        {"perturbation", c.initial.perturbation},
        {"pockets", pockets}}},
      {"fluid",
       {{"enabled", c.fluid_enabled},
        {"inflow_scale", c.fluid.inflow_scale},
        {"poisson_rtol", c.fluid.poisson.rtol},
        {"viscous_rtol", c.fluid.viscous.rtol},
        {"poisson_preconditioner", pre_name(c.fluid.poisson.preconditioner)},
        {"viscous_preconditioner", pre_name(c.fluid.viscous.preconditioner)}}},
      {"kinetic",
       {{"eps", c.kinetic.eps},
        {"cells", c.kinetic.cells},
        {"length", c.kinetic.length},
        {"dt", c.kinetic.dt},
        {"t_end", c.kinetic.t_end},
        {"r", c.kinetic.r},
        {"sigma1", c.kinetic.sigma1},
        {"sigma2", c.kinetic.sigma2}}},
      {"output",
       {{"out_dir", c.output.out_dir},
        {"format", to_string(c.output.format)},
        {"snapshot_times", c.output.snapshot_times},
        {"snapshot_interval", c.output.snapshot_interval},
        {"fields", c.output.fields}}},
  };
}

}  // namespace chemoflow
