#include "persist/model.hpp"

#include <cmath>

#include "persist/error.hpp"
#include "persist/json_io.hpp"

namespace persist {

bool DomainSpec::contains(std::span<const double> x, bool positive_cone) const {
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (positive_cone) {
      // the lower box edge only caps where sampling may start; trajectories
      // remain valid anywhere in the open positive orthant below the cap
      if (!(x[i] > 0.0 && x[i] <= hi[i])) return false;
    } else {
      if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
    }
  }
  return true;
}

bool DomainSpec::working_contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] >= working_lo[i] && x[i] <= working_hi[i])) return false;
  return true;
}

Vec DomainSpec::working_center() const {
  Vec c(working_lo.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (working_lo[i] + working_hi[i]);
  return c;
}

double DomainSpec::working_boundary_distance(std::span<const double> x) const {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i)
    d = std::min({d, x[i] - working_lo[i], working_hi[i] - x[i]});
  return d;
}

namespace {

std::vector<std::string> slot_names(int n) {
  std::vector<std::string> names;
  names.reserve(n + 1);
  for (int i = 1; i <= n; ++i) names.push_back("x" + std::to_string(i));
  names.push_back("eps");
  return names;
}

}  // namespace

SystemDef::SystemDef(std::string name, int n, std::vector<std::string> component_sources,
                     double eps0, DomainSpec domain, bool positive_cone,
                     std::map<std::string, double> params)
    : name_(std::move(name)),
      n_(n),
      component_sources_(std::move(component_sources)),
      eps0_(eps0),
      domain_(std::move(domain)),
      positive_cone_(positive_cone),
      params_(std::move(params)) {
  if (n_ < 1) throw ModelError("dimension must be positive");
  if (!(eps0_ > 0.0)) throw ModelError("eps0 must be positive");
  if (static_cast<int>(component_sources_.size()) != n_)
    throw ModelError("expected " + std::to_string(n_) + " components, got " +
                     std::to_string(component_sources_.size()));
  auto check_box = [&](const Vec& v, const char* what) {
    if (static_cast<int>(v.size()) != n_)
      throw ModelError(std::string(what) + " must have dimension " + std::to_string(n_));
  };
  check_box(domain_.lo, "domain.lo");
  check_box(domain_.hi, "domain.hi");
  check_box(domain_.working_lo, "domain.working_lo");
  check_box(domain_.working_hi, "domain.working_hi");
  for (int i = 0; i < n_; ++i) {
    if (!(domain_.lo[i] < domain_.hi[i]))
      throw ModelError("domain.lo must be strictly below domain.hi");
    if (domain_.working_lo[i] < domain_.lo[i] || domain_.working_hi[i] > domain_.hi[i] ||
        !(domain_.working_lo[i] < domain_.working_hi[i]))
      throw ModelError("working compact must be a non-degenerate box inside the domain");
    if (positive_cone_ && domain_.lo[i] < 0.0)
      throw ModelError("positive-cone domain must lie in the positive orthant");
  }

  std::vector<std::string> declared = slot_names(n_);
  for (const auto& [k, v] : params_) declared.push_back(k);

  const auto slots = slot_names(n_);
  components_.reserve(n_);
  for (const std::string& src : component_sources_) {
    expr::Ast a = expr::parse(src, &declared);
    components_.push_back(expr::substitute(a, params_));
  }
  jacobian_entries_.reserve(static_cast<std::size_t>(n_) * n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      jacobian_entries_.push_back(expr::differentiate(components_[i], "x" + std::to_string(j + 1)));

  component_tapes_.reserve(n_);
  for (const auto& a : components_) component_tapes_.emplace_back(a, slots);
  jacobian_tapes_.reserve(jacobian_entries_.size());
  for (const auto& a : jacobian_entries_) jacobian_tapes_.emplace_back(a, slots);
}

void SystemDef::check_args(std::span<const double> x, double eps) const {
  if (static_cast<int>(x.size()) != n_) throw ModelError("state has wrong dimension");
  if (!(std::abs(eps) <= eps0_))
    throw ModelError("eps " + format_double(eps) + " outside [-eps0, eps0] with eps0 = " +
                     format_double(eps0_));
  for (double v : x)
    if (!std::isfinite(v)) throw ModelError("non-finite state");
}

void SystemDef::eval_field(std::span<const double> x, double eps, std::span<double> out) const {
  check_args(x, eps);
  static thread_local std::vector<double> slots;
  slots.assign(x.begin(), x.end());
  slots.push_back(eps);
  for (int i = 0; i < n_; ++i) out[i] = component_tapes_[i].eval(slots);
}

Vec SystemDef::eval_field(const Vec& x, double eps) const {
  Vec out(n_);
  eval_field(std::span<const double>(x), eps, out);
  return out;
}

Matrix SystemDef::jacobian(const Vec& x, double eps) const {
  check_args(x, eps);
  static thread_local std::vector<double> slots;
  slots.assign(x.begin(), x.end());
  slots.push_back(eps);
  Matrix m(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      m(i, j) = jacobian_tapes_[static_cast<std::size_t>(i) * n_ + j].eval(slots);
  return m;
}

bool SystemDef::structurally_equal(const SystemDef& other) const {
  if (name_ != other.name_ || n_ != other.n_ || eps0_ != other.eps0_ ||
      positive_cone_ != other.positive_cone_ || params_ != other.params_)
    return false;
  if (domain_.lo != other.domain_.lo || domain_.hi != other.domain_.hi ||
      domain_.working_lo != other.domain_.working_lo ||
      domain_.working_hi != other.domain_.working_hi)
    return false;
  for (int i = 0; i < n_; ++i)
    if (!expr::structurally_equal(components_[i], other.components_[i])) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

namespace {

Vec json_vec(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ModelError(what + " must be an array of numbers");
  Vec v;
  v.reserve(j.size());
  for (const auto& e : j) {
    if (!e.is_number()) throw ModelError(what + " must be an array of numbers");
    v.push_back(e.get<double>());
  }
  return v;
}

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ModelError("unknown key '" + it.key() + "' in " + where);
  }
}

const Json& require_key(const Json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ModelError("missing required field '" + std::string(key) + "' in " + where);
  return *it;
}

}  // namespace

SystemDef load_model(const std::string& json_text) {
  Json j = parse_json(json_text, "model");
  if (!j.is_object()) throw ModelError("model file must be a JSON object");
  reject_unknown_keys(
      j, {"format", "name", "n", "components", "eps0", "domain", "positive_cone", "params"},
      "model");
  const int format = require_key(j, "format", "model").get<int>();
  if (format != 1) throw ModelError("unsupported model format " + std::to_string(format));
  const std::string name = require_key(j, "name", "model").get<std::string>();
  const int n = require_key(j, "n", "model").get<int>();
  const Json& jc = require_key(j, "components", "model");
  if (!jc.is_array()) throw ModelError("components must be an array of expression strings");
  std::vector<std::string> components;
  for (const auto& e : jc) components.push_back(e.get<std::string>());
  const double eps0 = require_key(j, "eps0", "model").get<double>();

  const Json& jd = require_key(j, "domain", "model");
  reject_unknown_keys(jd, {"lo", "hi", "working_lo", "working_hi"}, "domain");
  DomainSpec dom;
  dom.lo = json_vec(require_key(jd, "lo", "domain"), "domain.lo");
  dom.hi = json_vec(require_key(jd, "hi", "domain"), "domain.hi");
  dom.working_lo = json_vec(require_key(jd, "working_lo", "domain"), "domain.working_lo");
  dom.working_hi = json_vec(require_key(jd, "working_hi", "domain"), "domain.working_hi");

  const bool positive_cone = j.value("positive_cone", false);
  std::map<std::string, double> params;
  if (auto it = j.find("params"); it != j.end()) {
    if (!it->is_object()) throw ModelError("params must be an object");
    for (auto p = it->begin(); p != it->end(); ++p) params[p.key()] = p->get<double>();
  }

  return SystemDef(name, n, std::move(components), eps0, std::move(dom), positive_cone,
                   std::move(params));
}

SystemDef load_model_file(const std::string& path) { return load_model(read_text_file(path)); }

std::string save_model(const SystemDef& sys) {
  Json j;
  j["format"] = 1;
  j["name"] = sys.name();
  j["n"] = sys.dim();
  j["components"] = sys.component_sources();
  j["eps0"] = sys.eps0();
  Json jd;
  jd["lo"] = sys.domain().lo;
  jd["hi"] = sys.domain().hi;
  jd["working_lo"] = sys.domain().working_lo;
  jd["working_hi"] = sys.domain().working_hi;
  j["domain"] = jd;
  j["positive_cone"] = sys.positive_cone();
  Json jp = Json::object();
  for (const auto& [k, v] : sys.params()) jp[k] = v;
  j["params"] = jp;
  return dump_json(j);
}

// ---------------------------------------------------------------------------
// Builtin registry
// ---------------------------------------------------------------------------

namespace {

struct BuiltinEntry {
  const char* name;
  const char* json;
};

// Test systems with closed-form equilibria/solutions used throughout the
// test suites. Kept as model-file text so builtins exercise the loader.
constexpr BuiltinEntry kBuiltins[] = {
    {"linear1d", R"json({
      "format": 1, "name": "linear1d", "n": 1,
      "components": ["-x1 + eps"],
      "eps0": 0.5,
      "domain": {"lo": [-10], "hi": [10], "working_lo": [-10], "working_hi": [10]},
      "positive_cone": false, "params": {}
    })json"},
    {"linear_nd", R"json({
      "format": 1, "name": "linear_nd", "n": 2,
      "components": ["-x1 + eps", "-2*x2 + eps"],
      "eps0": 0.5,
      "domain": {"lo": [-10, -10], "hi": [10, 10], "working_lo": [-10, -10], "working_hi": [10, 10]},
      "positive_cone": false, "params": {}
    })json"},
    {"logistic", R"json({
      "format": 1, "name": "logistic", "n": 1,
      "components": ["x1*(1 - x1) - eps*x1"],
      "eps0": 0.5,
      "domain": {"lo": [0.001], "hi": [5], "working_lo": [0.1], "working_hi": [2]},
      "positive_cone": true, "params": {}
    })json"},
    {"gradient2d", R"json({
      "format": 1, "name": "gradient2d", "n": 2,
      "components": ["-x1 - x1^3 + eps", "-2*x2 + eps*x1"],
      "eps0": 0.5,
      "domain": {"lo": [-5, -5], "hi": [5, 5], "working_lo": [-5, -5], "working_hi": [5, 5]},
      "positive_cone": false, "params": {}
    })json"},
    {"chemostat", R"json({
      "format": 1, "name": "chemostat", "n": 2,
      "components": ["(s_in - x1)*D - m*x1*x2/(a + x1)", "x2*(m*x1/(a + x1) - D - eps)"],
      "eps0": 0.2,
      "domain": {"lo": [0.001, 0.001], "hi": [8, 8], "working_lo": [0.1, 0.1], "working_hi": [2.5, 2.5]},
      "positive_cone": true,
      "params": {"D": 1, "m": 2, "a": 1, "s_in": 2}
    })json"},
    {"center", R"json({
      "format": 1, "name": "center", "n": 2,
      "components": ["x2", "-x1"],
      "eps0": 0.5,
      "domain": {"lo": [-5, -5], "hi": [5, 5], "working_lo": [-5, -5], "working_hi": [5, 5]},
      "positive_cone": false, "params": {}
    })json"},
};

}  // namespace

SystemDef builtin_model(const std::string& name) {
  for (const auto& e : kBuiltins)
    if (name == e.name) return load_model(e.json);
  throw ModelError("unknown builtin model '" + name + "'");
}

std::vector<std::string> builtin_model_names() {
  std::vector<std::string> names;
  for (const auto& e : kBuiltins) names.emplace_back(e.name);
  return names;
}

SystemDef resolve_model(const std::string& reference) {
  constexpr const char* prefix = "builtin:";
  if (reference.rfind(prefix, 0) == 0) return builtin_model(reference.substr(8));
  return load_model_file(reference);
}

}  // namespace persist
