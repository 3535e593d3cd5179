#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "persist/expr.hpp"
#include "persist/linalg.hpp"

namespace persist {

// Axis-aligned state-space description. `lo`/`hi` bound the region the
// vector field is taken on; `working_lo`/`working_hi` delimit the bounded
// compact K that every sampled quantifier ("for all starts", "for all
// bounded sets") is evaluated over. K must sit inside the outer box.
struct DomainSpec {
  Vec lo, hi;
  Vec working_lo, working_hi;

  bool contains(std::span<const double> x, bool positive_cone) const;
  bool working_contains(std::span<const double> x) const;
  Vec working_center() const;
  // Euclidean distance from an interior point to the working-box boundary.
  double working_boundary_distance(std::span<const double> x) const;
};

// A parameterized vector field x' = f(x, eps) with |eps| <= eps0. Component
// expressions reference x1..xn and eps; named parameters are substituted by
// their literal values when the definition is built, so evaluation depends
// on eps alone. Immutable after construction.
class SystemDef {
 public:
  SystemDef(std::string name, int n, std::vector<std::string> component_sources,
            double eps0, DomainSpec domain, bool positive_cone,
            std::map<std::string, double> params);

  const std::string& name() const { return name_; }
  int dim() const { return n_; }
  double eps0() const { return eps0_; }
  const DomainSpec& domain() const { return domain_; }
  bool positive_cone() const { return positive_cone_; }
  const std::vector<std::string>& component_sources() const { return component_sources_; }
  const std::vector<expr::Ast>& components() const { return components_; }
  const std::map<std::string, double>& params() const { return params_; }

  // f(x, eps). Throws ModelError when |eps| > eps0, EvalError on domain
  // violations inside a component expression.
  void eval_field(std::span<const double> x, double eps, std::span<double> out) const;
  Vec eval_field(const Vec& x, double eps) const;

  // Entry (i,j) = d f_i / d x_j at (x, eps), from the symbolic derivatives
  // prepared at load time.
  Matrix jacobian(const Vec& x, double eps) const;

  bool structurally_equal(const SystemDef& other) const;

 private:
  void check_args(std::span<const double> x, double eps) const;

  std::string name_;
  int n_;
  std::vector<std::string> component_sources_;
  std::vector<expr::Ast> components_;            // params substituted
  std::vector<expr::Ast> jacobian_entries_;      // row-major n*n
  std::vector<expr::Tape> component_tapes_;
  std::vector<expr::Tape> jacobian_tapes_;
  double eps0_;
  DomainSpec domain_;
  bool positive_cone_;
  std::map<std::string, double> params_;
};

// Model file schema (format 1): JSON object with
//   format, name, n, components (array of expression strings), eps0,
//   domain {lo, hi, working_lo, working_hi}, positive_cone, params.
// Unknown keys are rejected.
SystemDef load_model(const std::string& json_text);
SystemDef load_model_file(const std::string& path);
std::string save_model(const SystemDef& sys);

// Builtin registry of test systems with known closed-form behaviour.
SystemDef builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

// Resolves "builtin:NAME" against the registry, anything else as a path.
SystemDef resolve_model(const std::string& reference);

}  // namespace persist
