#include "kpoqa/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "kpoqa/error.hpp"

namespace kpoqa {

namespace {

using nlohmann::json;

int line_at(const std::string& text, std::size_t pos) {
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(std::min(pos, text.size())), '\n'));
}

// Walks the object keys of a path through the raw text to find a line to blame.
int line_of(const std::string& text, const std::vector<std::string>& keys) {
  std::size_t pos = 0;
  for (const auto& k : keys) {
    const std::size_t f = text.find("\"" + k + "\"", pos);
    if (f == std::string::npos) break;
    pos = f;
  }
  return line_at(text, pos);
}

class Node {
 public:
  Node(const json& value, const std::string& text, const std::string& origin, std::vector<std::string> path)
      : value_(value), text_(text), origin_(origin), path_(std::move(path)) {}

  [[noreturn]] void fail(const std::string& message) const {
    std::ostringstream os;
    os << origin_ << ":" << line_of(text_, path_) << ": " << (path_.empty() ? "<root>" : pointer()) << ": "
       << message;
    throw ConfigError(os.str());
  }

  std::string pointer() const {
    std::string p;
    for (const auto& k : path_) p += "/" + k;
    return p;
  }

  const json& value() const { return value_; }

  bool has(const std::string& key) const {
    require_object();
    return value_.contains(key) && !value_.at(key).is_null();
  }

  Node child(const std::string& key) {
    require_object();
    seen_.insert(key);
    auto p = path_;
    p.push_back(key);
    if (!value_.contains(key)) Node(empty(), text_, origin_, p).fail("missing required key");
    return Node(value_.at(key), text_, origin_, p);
  }

  std::optional<Node> optional(const std::string& key) {
    require_object();
    seen_.insert(key);
    if (!value_.contains(key) || value_.at(key).is_null()) return std::nullopt;
    auto p = path_;
    p.push_back(key);
    return Node(value_.at(key), text_, origin_, p);
  }

  Node element(std::size_t i) const {
    auto p = path_;
    p.push_back(std::to_string(i));
    return Node(value_.at(i), text_, origin_, p);
  }

  std::size_t size() const {
    if (!value_.is_array()) fail("expected an array");
    return value_.size();
  }

  double number() const {
    if (!value_.is_number()) fail("expected a number");
    const double v = value_.get<double>();
    if (!std::isfinite(v)) fail("must be finite");
    return v;
  }

  long integer() const {
    if (!value_.is_number_integer()) fail("expected an integer");
    return value_.get<long>();
  }

  bool boolean() const {
    if (!value_.is_boolean()) fail("expected true or false");
    return value_.get<bool>();
  }

  std::string string() const {
    if (!value_.is_string()) fail("expected a string");
    return value_.get<std::string>();
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (std::size_t i = 0; i < size(); ++i) out.push_back(element(i).number());
    return out;
  }

  LevelPair level_pair() const {
    if (size() != 2) fail("expected two level indices");
    LevelPair p{};
    for (std::size_t i = 0; i < 2; ++i) {
      const long v = element(i).integer();
      if (v < 0) element(i).fail("level index must be non-negative");
      p[i] = static_cast<int>(v);
    }
    return p;
  }

  /// Rejects keys that were never read.
  void finish() const {
    require_object();
    for (auto it = value_.begin(); it != value_.end(); ++it) {
      if (!seen_.count(it.key())) {
        auto p = path_;
        p.push_back(it.key());
        Node(it.value(), text_, origin_, p).fail("unknown key");
      }
    }
  }

 private:
  static const json& empty() {
    static const json e;
    return e;
  }
  void require_object() const {
    if (!value_.is_object()) fail("expected an object");
  }

  const json& value_;
  const std::string& text_;
  const std::string& origin_;
  std::vector<std::string> path_;
  std::set<std::string> seen_;
};

double get(Node& parent, const std::string& key, double fallback) {
  auto n = parent.optional(key);
  return n ? n->number() : fallback;
}

bool get(Node& parent, const std::string& key, bool fallback) {
  auto n = parent.optional(key);
  return n ? n->boolean() : fallback;
}

double positive(Node& parent, const std::string& key, double fallback) {
  auto n = parent.optional(key);
  if (!n) return fallback;
  const double v = n->number();
  if (!(v > 0.0)) n->fail("must be positive");
  return v;
}

long bounded_int(Node& parent, const std::string& key, long fallback, long lo) {
  auto n = parent.optional(key);
  if (!n) return fallback;
  const long v = n->integer();
  if (v < lo) n->fail("must be at least " + std::to_string(lo));
  return v;
}

Method parse_method(const Node& n) {
  const std::string s = n.string();
  if (s == "rk4") return Method::rk4;
  if (s == "split_exponential") return Method::split_exponential;
  n.fail("method must be \"rk4\" or \"split_exponential\"");
}

const char* method_name(Method m) { return m == Method::rk4 ? "rk4" : "split_exponential"; }

IntegratorConfig parse_integrator(Node& n, double default_dt) {
  IntegratorConfig cfg;
  cfg.dt = default_dt;
  if (auto m = n.optional("method")) cfg.method = parse_method(*m);
  cfg.dt = positive(n, "dt", cfg.dt);
  cfg.warn_ratio = positive(n, "warn_ratio", cfg.warn_ratio);
  return cfg;
}

GridSpec parse_grid(Node& n, bool exclusive) {
  GridSpec g;
  g.start = n.child("start").number();
  g.stop = n.child("stop").number();
  g.count = static_cast<std::size_t>(bounded_int(n, "count", 1, 1));
  if (g.count > 1 && !(g.stop > g.start)) n.fail("stop must exceed start");
  if (exclusive && g.start < 0.0) n.fail("tau grid must start at or after 0");
  return g;
}

void parse_model(Node n, RunConfig& c) {
  KpoNetworkParams& p = c.params;
  p.chi = n.child("chi").numbers();
  const std::size_t k = p.chi.size();
  if (k == 0) n.child("chi").fail("need at least one mode");
  auto per_mode = [&](const std::string& key) {
    auto node = n.optional(key);
    if (!node) return std::vector<double>(k, 0.0);
    std::vector<double> v = node->numbers();
    if (v.size() != k) node->fail("expected " + std::to_string(k) + " entries (one per mode)");
    return v;
  };
  p.detuning = per_mode("detuning");
  p.pump = per_mode("pump");
  p.coherent_drive = per_mode("coherent_drive");
  p.gamma = get(n, "gamma", 0.0);
  if (p.gamma < 0.0) n.child("gamma").fail("decay rate must be non-negative");
  for (std::size_t j = 0; j < k; ++j)
    if (!(p.chi[j] > 0.0)) n.child("chi").element(j).fail("Kerr coefficient must be positive");

  p.coupling = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  if (auto cl = n.optional("coupling")) {
    for (std::size_t e = 0; e < cl->size(); ++e) {
      Node entry = cl->element(e);
      const long i = entry.child("i").integer(), j = entry.child("j").integer();
      if (i < 0 || j < 0 || i >= static_cast<long>(k) || j >= static_cast<long>(k))
        entry.fail("mode index out of range");
      if (i == j) entry.fail("coupling must connect two different modes");
      const cplx value(entry.child("re").number(), get(entry, "im", 0.0));
      entry.finish();
      p.coupling(i, j) += value;
      p.coupling(j, i) += std::conj(value);
    }
  }

  auto cuts = n.child("cutoffs");
  for (std::size_t j = 0; j < cuts.size(); ++j) {
    const long v = cuts.element(j).integer();
    if (v < 2) cuts.element(j).fail("cutoff must be at least 2");
    c.cutoffs.push_back(static_cast<int>(v));
  }
  if (c.cutoffs.size() != k) cuts.fail("expected " + std::to_string(k) + " cutoffs (one per mode)");
  n.finish();
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    n.fail(e.what());
  }
}

void parse_schedule(Node n, RunConfig& c) {
  const double t_ann = positive(n, "t_ann", 500.0);
  const bool has_a = n.has("a_s1"), has_s = n.has("s1");
  if (has_a == has_s) n.fail("give exactly one of \"a_s1\" and \"s1\"");
  if (has_a) {
    auto a = n.child("a_s1");
    const double v = a.number();
    if (!(v > 0.0 && v < 1.0)) a.fail("A(s1) must lie in (0, 1)");
    c.schedule = ProtocolSchedule::with_frozen_a(v, t_ann);
    n.optional("s1");
  } else {
    auto s = n.child("s1");
    const double v = s.number();
    if (!(v > 0.0 && v < 1.0)) s.fail("s1 must lie in (0, 1)");
    c.schedule.t_ann = t_ann;
    c.schedule.s1 = v;
    n.optional("a_s1");
  }
  c.schedule.lambda = get(n, "lambda", 0.0);
  n.finish();
}

void parse_protocol(Node n, RunConfig& c) {
  ProtocolOptions& o = c.protocol;
  o.open_system = get(n, "open_system", false);
  if (auto init = n.optional("initial_state")) {
    const std::string s = init->string();
    if (s == "vacuum")
      o.initial = InitialState::vacuum;
    else if (s == "driver_ground")
      o.initial = InitialState::driver_ground;
    else
      init->fail("initial_state must be \"vacuum\" or \"driver_ground\"");
  }
  o.energy_window = get(n, "energy_window", 0.0);
  if (o.energy_window < 0.0) n.child("energy_window").fail("must be non-negative");
  if (auto a = n.optional("anneal")) {
    o.anneal = parse_integrator(*a, o.anneal.dt);
    a->finish();
  }
  o.anneal.sample_stride = 0;
  if (auto d = n.optional("drive")) {
    o.drive = parse_integrator(*d, o.drive.dt);
    o.steps_per_period = static_cast<int>(bounded_int(*d, "steps_per_period", o.steps_per_period, 0));
    o.step_ratio = get(*d, "step_ratio", o.step_ratio);
    if (o.step_ratio < 0.0) d->child("step_ratio").fail("must be non-negative");
    d->finish();
  }
  n.finish();
}

}  // namespace

std::vector<double> RunConfig::omega_grid(double gap) const {
  const double scale = omega_in_gap_units ? gap : 1.0;
  return linspace(omega.start * scale, omega.stop * scale, omega.count);
}

std::vector<double> RunConfig::tau_grid() const { return uniform_grid(tau.start, tau.stop, tau.count); }

ExtractionOptions RunConfig::extraction(std::vector<double> predicted) const {
  ExtractionOptions e;
  if (omega_max) e.omega_max = *omega_max;
  if (banded) e.predicted = std::move(predicted);
  e.band_fraction = band_fraction;
  e.band_bins = band_bins;
  e.floor = band_floor;
  return e;
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << origin << ":" << line_at(text, e.byte > 0 ? e.byte - 1 : 0) << ": syntax error: " << e.what();
    throw ConfigError(os.str());
  }
  RunConfig c;
  Node root(doc, text, origin, {});
  if (auto n = root.optional("name")) c.name = n->string();
  parse_model(root.child("model"), c);
  parse_schedule(root.child("schedule"), c);

  c.level = static_cast<int>(bounded_int(root, "level", 1, 1));
  c.band_levels = {0, c.level};

  if (auto obs = root.optional("observable")) {
    c.observable.kind = obs->child("kind").string();
    c.observable.mode = static_cast<int>(bounded_int(*obs, "mode", 0, 0));
    const auto& k = c.observable.kind;
    if (k != "n" && k != "x" && k != "p" && k != "n_total" && k != "parity")
      obs->child("kind").fail("kind must be one of n, x, p, n_total, parity");
    if (c.observable.mode >= c.params.modes()) obs->child("mode").fail("mode index out of range");
    obs->finish();
  }
  if (auto p = root.optional("protocol")) parse_protocol(*p, c);

  {
    auto grids = root.child("grids");
    auto om = grids.child("omega");
    c.omega = parse_grid(om, false);
    if (auto sc = om.optional("scale")) {
      const std::string s = sc->string();
      if (s != "gap" && s != "absolute") sc->fail("scale must be \"gap\" or \"absolute\"");
      c.omega_in_gap_units = s == "gap";
    }
    if (!(c.omega.start > 0.0)) om.child("start").fail("drive frequency must be positive");
    om.finish();
    auto tau = grids.child("tau");
    c.tau = parse_grid(tau, true);
    tau.finish();
    grids.finish();
  }

  if (auto s = root.optional("spectrum")) {
    c.spectrum.subtract_mean = get(*s, "subtract_mean", c.spectrum.subtract_mean);
    c.spectrum.hann_window = get(*s, "hann_window", c.spectrum.hann_window);
    c.spectrum.pad = static_cast<int>(bounded_int(*s, "pad", c.spectrum.pad, 1));
    s->finish();
  }
  if (auto e = root.optional("extraction")) {
    c.banded = get(*e, "banded", c.banded);
    if (auto b = e->optional("band_levels")) c.band_levels = b->level_pair();
    c.band_fraction = get(*e, "band_fraction", c.band_fraction);
    c.band_bins = get(*e, "band_bins", c.band_bins);
    c.band_floor = get(*e, "floor", c.band_floor);
    if (c.band_fraction < 0.0 || c.band_bins < 0.0 || c.band_floor < 0.0 || c.band_floor >= 1.0)
      e->fail("band parameters must be non-negative and floor below 1");
    if (auto m = e->optional("omega_max")) c.omega_max = m->number();
    e->finish();
  }
  if (auto o = root.optional("overlays")) {
    if (auto p = o->optional("pair")) c.pair_overlay = p->level_pair();
    if (auto p = o->optional("two_photon")) c.two_photon_overlay = p->level_pair();
    o->finish();
  }
  if (auto cv = root.optional("convergence")) {
    c.convergence_increment = static_cast<int>(bounded_int(*cv, "increment", c.convergence_increment, 1));
    c.convergence_tol = positive(*cv, "tol", c.convergence_tol);
    cv->finish();
  }
  c.threads = static_cast<int>(bounded_int(root, "threads", c.threads, 1));
  if (auto s = root.optional("seed")) {
    const long v = s->integer();
    if (v < 0) s->fail("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(v);
  }
  root.finish();

  for (int lvl : c.band_levels)
    if (lvl >= FockSpace(c.cutoffs).dim()) root.fail("band level index exceeds the Hilbert-space dimension");
  if (c.level >= FockSpace(c.cutoffs).dim()) root.fail("level exceeds the Hilbert-space dimension");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

json to_json(const RunConfig& c) {
  const KpoNetworkParams& p = c.params;
  json coupling = json::array();
  for (Eigen::Index i = 0; i < p.coupling.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (p.coupling(i, j) != cplx(0.0))
        coupling.push_back({{"i", i}, {"j", j}, {"re", p.coupling(i, j).real()}, {"im", p.coupling(i, j).imag()}});
  auto integrator = [](const IntegratorConfig& cfg) {
    return json{{"method", method_name(cfg.method)}, {"dt", cfg.dt}, {"warn_ratio", cfg.warn_ratio}};
  };
  json drive = integrator(c.protocol.drive);
  drive["steps_per_period"] = c.protocol.steps_per_period;
  drive["step_ratio"] = c.protocol.step_ratio;

  json j;
  j["name"] = c.name;
  j["model"] = {{"chi", p.chi},           {"detuning", p.detuning}, {"pump", p.pump},
                {"coherent_drive", p.coherent_drive}, {"coupling", coupling}, {"gamma", p.gamma},
                {"cutoffs", c.cutoffs}};
  j["schedule"] = {{"t_ann", c.schedule.t_ann}, {"s1", c.schedule.s1}, {"lambda", c.schedule.lambda}};
  j["level"] = c.level;
  j["observable"] = {{"kind", c.observable.kind}, {"mode", c.observable.mode}};
  j["protocol"] = {{"open_system", c.protocol.open_system},
                   {"initial_state", c.protocol.initial == InitialState::vacuum ? "vacuum" : "driver_ground"},
                   {"energy_window", c.protocol.energy_window},
                   {"anneal", integrator(c.protocol.anneal)},
                   {"drive", drive}};
  j["grids"] = {
      {"omega",
       {{"start", c.omega.start}, {"stop", c.omega.stop}, {"count", c.omega.count},
        {"scale", c.omega_in_gap_units ? "gap" : "absolute"}}},
      {"tau", {{"start", c.tau.start}, {"stop", c.tau.stop}, {"count", c.tau.count}}}};
  j["spectrum"] = {{"subtract_mean", c.spectrum.subtract_mean},
                   {"hann_window", c.spectrum.hann_window},
                   {"pad", c.spectrum.pad}};
  j["extraction"] = {{"banded", c.banded},
                     {"band_levels", c.band_levels},
                     {"band_fraction", c.band_fraction},
                     {"band_bins", c.band_bins},
                     {"floor", c.band_floor},
                     {"omega_max", c.omega_max ? json(*c.omega_max) : json(nullptr)}};
  json overlays = json::object();
  if (c.pair_overlay) overlays["pair"] = *c.pair_overlay;
  if (c.two_photon_overlay) overlays["two_photon"] = *c.two_photon_overlay;
  j["overlays"] = overlays;
  j["convergence"] = {{"increment", c.convergence_increment}, {"tol", c.convergence_tol}};
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  return j;
}

}  // namespace kpoqa
